#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "entmlm/tensor.hpp"

namespace entmlm {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 200;  // coordinates checked; all of them if fewer exist
  std::uint64_t seed = 0;
  // Denominator floor for the relative error, so that coordinates whose true
  // gradient is zero are judged on absolute agreement.
  double abs_floor = 1e-6;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string diagnostic;  // set when the loss went non-finite
};

/// Evaluates the loss at the current parameter values. When `with_grad` is true it
/// must also accumulate d(loss)/d(param) into every Parameter::grad.
using LossFn = std::function<double(bool with_grad)>;

/// Compares analytic gradients against central differences
/// (f(θ+h) − f(θ−h)) / 2h at randomly sampled coordinates.
GradCheckReport check_gradients(const LossFn& loss_fn, std::span<Parameter* const> params,
                                const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace entmlm
