#include "entmlm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "entmlm/rng.hpp"

namespace entmlm {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const LossFn& loss_fn, std::span<Parameter* const> params,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  for (Parameter* p : params) p->zero_grad();
  const double base = loss_fn(true);
  if (!std::isfinite(base)) {
    report.diagnostic = "loss is non-finite at the unperturbed parameters";
    return report;
  }

  // Flatten (param, index) coordinates; copy analytic grads before perturbing.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::vector<Tensor> analytic;
  for (std::size_t p = 0; p < params.size(); ++p) {
    analytic.push_back(params[p]->grad);
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  }
  if (coords.size() > options.samples) {
    Rng rng = make_rng(options.seed, "gradcheck");
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
    std::sort(coords.begin(), coords.end());
  }

  for (auto [p, i] : coords) {
    double& theta = params[p]->value[i];
    const double saved = theta;
    theta = saved + options.step;
    const double plus = loss_fn(false);
    theta = saved - options.step;
    const double minus = loss_fn(false);
    theta = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      report.diagnostic = "loss became non-finite when perturbing " + params[p]->name + "[" +
                          std::to_string(i) + "]";
      report.passed = false;
      return report;
    }
    GradCheckEntry e;
    e.param = params[p]->name;
    e.index = i;
    e.analytic = analytic[p][i];
    e.numeric = (plus - minus) / (2.0 * options.step);
    e.rel_error = relative_error(e.analytic, e.numeric, options.abs_floor);
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace entmlm
