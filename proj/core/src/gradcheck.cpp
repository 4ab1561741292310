#include "mtlink/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mtlink {

namespace {

GradCheckResult run_check(const std::vector<std::pair<std::string, Tensor>>& params,
                          const std::function<double()>& loss_value, double h, double denom_floor,
                          std::size_t n_probes, Rng* rng) {
  GradCheckResult res;
  // Parameters that never reached the loss carry an all-zero gradient.
  const std::vector<double> no_grad;
  for (const auto& [name, param] : params) {
    Tensor p = param;
    auto vals = p.values_mut();
    const std::span<const double> analytic = p.has_grad() ? p.grad() : no_grad;
    auto analytic_at = [&](std::size_t i) { return analytic.empty() ? 0.0 : analytic[i]; };

    std::vector<std::size_t> probe_idx;
    if (n_probes == 0 || n_probes >= vals.size()) {
      probe_idx.resize(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) probe_idx[i] = i;
    } else {
      for (std::size_t i = 0; i < n_probes; ++i)
        probe_idx.push_back(static_cast<std::size_t>(
            rng->uniform_int(0, static_cast<std::int64_t>(vals.size()) - 1)));
    }

    for (std::size_t i : probe_idx) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double lp = loss_value();
      vals[i] = saved - h;
      const double lm = loss_value();
      vals[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double err = rel_err(analytic_at(i), fd, denom_floor);
      ++res.n_checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = name;
        res.worst_index = i;
        res.worst_analytic = analytic_at(i);
        res.worst_fd = fd;
      }
    }
  }
  return res;
}

}  // namespace

GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<double()>& loss_value, double h,
                                        double denom_floor) {
  return run_check(params, loss_value, h, denom_floor, 0, nullptr);
}

GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<double()>& loss_value, double h,
                                        double denom_floor, std::size_t n_probes, Rng& rng) {
  return run_check(params, loss_value, h, denom_floor, n_probes, &rng);
}

}  // namespace mtlink
