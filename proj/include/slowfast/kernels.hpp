#pragma once

// Hot loops with a serial reference and an OpenMP version. Both produce
// bit-identical results: parallel work is split over independent outputs and
// no reduction crosses threads.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/fbm.hpp"
#include "slowfast/random.hpp"

namespace slowfast {

enum class Execution { serial, parallel };

/// Block Gram matrix of the fBm part of the fluctuation covariance.
///
/// `B` is m x (mt * cells): block column a is the m x mt factor of cell a.
/// Cells are grouped into `intervals` equal runs. Returns the
/// (intervals * m) square matrix whose (i, l) block is
///   sum_{a in I_i} sum_{b in I_l} gamma[|a - b|] B_a B_b^T.
Eigen::MatrixXd interval_gram_serial(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                                     std::size_t intervals);
Eigen::MatrixXd interval_gram_omp(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                                  std::size_t intervals);
Eigen::MatrixXd interval_gram(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                              std::size_t intervals, Execution exec);

/// `count` independent paths; path r draws from `stream.derive(r)`.
std::vector<FbmPath> sample_fbm_batch_serial(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                             std::size_t components = 1);
std::vector<FbmPath> sample_fbm_batch_omp(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                          std::size_t components = 1);
std::vector<FbmPath> sample_fbm_batch(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                      std::size_t components, Execution exec);

}  // namespace slowfast
