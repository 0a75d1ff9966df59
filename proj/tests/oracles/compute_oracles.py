"""Independent oracles for values frozen into the C++ tests.

Run with: python3 tests/oracles/compute_oracles.py
Uses mpmath for the series and scipy quadrature (algebraic-weight QUADPACK
rules) for the singular double integrals. Shares no code with the library.
"""
import math

import mpmath as mp
from scipy import integrate

mp.mp.dps = 40


def rho(j, H):
    a = lambda x: abs(mp.mpf(x)) ** (2 * H)
    num = -a(j - 2) + 4 * a(j - 1) - 6 * a(j) + 4 * a(j + 1) - a(j + 2)
    return num / (2 * (4 - mp.mpf(2) ** (2 * H)))


def rho_tilde(j, H):
    a = lambda x: abs(mp.mpf(x)) ** (2 * H)
    num = (-a(j - 3) + 2 * a(j - 2) + a(j - 1) - 4 * a(j) + a(j + 1)
           + 2 * a(j + 2) - a(j + 3))
    return num / (2 * (4 - mp.mpf(2) ** (2 * H)) * mp.mpf(2) ** H)


def series(term, H):
    # direct sum to J, then the j^{4H-8} tail via Euler-Maclaurin (mpmath nsum)
    J = 2000
    head = term(0, H) ** 2 + 2 * mp.fsum(term(j, H) ** 2 for j in range(1, J + 1))
    tail = 2 * mp.nsum(lambda j: term(j, H) ** 2, [J + 1, mp.inf])
    return head + tail


def singular_outer(g, H):
    # int_0^1 u^{2H-2} g(u) du with the algebraic singularity handled by QUADPACK
    val, _ = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(2 * H - 2, 0.0),
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def main():
    H = mp.mpf("0.85")
    print("fbm_covariance(2,3,0.75) =", mp.mpf(0.5) * (mp.mpf(2) ** 1.5 + mp.mpf(3) ** 1.5 - 1))
    print("rho(1,0.5) =", rho(1, mp.mpf("0.5")))
    print("rho_tilde(0,0.5) =", rho_tilde(0, mp.mpf("0.5")))
    print("rho(1,0.85) =", rho(1, H), " rho(50,0.85) =", rho(50, H))
    print("rho_tilde(1,0.85) =", rho_tilde(1, H), " rho_tilde(50,0.85) =", rho_tilde(50, H))
    s1 = 2 * series(rho, H)
    s2 = series(rho_tilde, H)
    print("sigma1_sq(0.85) =", s1)
    print("sigma2_sq(0.85) =", s2)
    print("sigma_star_star_sq(0.85) =", 1.5 * s1 - 2 * s2)

    L = mp.quad(lambda y: mp.e ** (-(mp.sin(y) + mp.cos(y))), [0, mp.pi, 2 * mp.pi])
    print("L =", L, " 2*pi*I0(sqrt2) =", 2 * mp.pi * mp.besseli(0, mp.sqrt(2)))
    print("variable sigma(0) =", L / (2 * mp.pi) * mp.e)

    h = 0.85
    c = h * (2 * h - 1)
    # E[xi_1^2], constant-sigma model, lambda = 0, theta = 1:
    # 2c int_0^1 u^{2H-2} int_0^{1-u} e^{(1-s-u)/2} e^{(1-s)/2} ds du, inner in closed form
    inner = lambda u: math.exp(1 - u / 2) * (1 - math.exp(-(1 - u)))
    print("E[xi_1^2] constant model =", 2 * c * singular_outer(inner, h))

    # M_bar, constant-sigma model, lambda = 0, theta = 1, T = 1.
    # v(s) = int_s^1 (t/2)e^{t/2} e^{(t-s)/2} dt = (1-s)e^{s/2}/2
    info = integrate.quad(lambda t: (t / 2 * math.exp(t / 2)) ** 2, 0, 1, epsabs=1e-15)[0]
    v = lambda s: (1 - s) * math.exp(s / 2) / 2
    mid_inner = lambda u: integrate.quad(lambda s: v(s) * v(s + u), 0, 1 - u, epsabs=1e-15)[0]
    mid = 2 * c * singular_outer(mid_inner, h)
    # Brownian part per unit lambda^2 (Sigma_Phi = theta x / sqrt2, x = e^{s/2}):
    bm = integrate.quad(lambda s: (v(s) * math.exp(s / 2) / math.sqrt(2)) ** 2, 0, 1, epsabs=1e-15)[0]
    Mbar = mid / info ** 2
    print("info =", info, " middle =", mid, " M_bar =", Mbar, " lambda^2 coefficient =", bm / info ** 2)
    print("sqrt(0.1 M_bar) =", math.sqrt(0.1 * Mbar), " sqrt(0.01 M_bar) =", math.sqrt(0.01 * Mbar))

    # TFE contrast: constant model, theta0 = 1 noiseless, theta = 1.1, n = 10, T = 1
    U = mp.fsum((mp.e ** (mp.mpf(k) / 20) - mp.e ** (mp.mpf("1.1") * k / 20)) ** 2 for k in range(1, 11))
    print("tfe contrast example =", U)


if __name__ == "__main__":
    main()
