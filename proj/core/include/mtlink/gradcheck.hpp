#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtlink/tensor.hpp"

namespace mtlink {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
  std::size_t n_checked = 0;
};

/// Relative error with a floored denominator so that near-zero gradient pairs
/// compare on an absolute scale instead of amplifying finite-difference noise.
inline double rel_err(double analytic, double fd, double denom_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), denom_floor});
  return std::abs(analytic - fd) / denom;
}

/// Central finite differences against already-populated analytic gradients.
/// `loss_value` must re-run the forward pass against the current parameter
/// values. Parameters are perturbed in place and restored.
GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<double()>& loss_value, double h,
                                        double denom_floor);

/// Same check restricted to `n_probes` randomly chosen coordinates per
/// parameter (full sweep when n_probes == 0).
GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<double()>& loss_value, double h,
                                        double denom_floor, std::size_t n_probes, Rng& rng);

}  // namespace mtlink
