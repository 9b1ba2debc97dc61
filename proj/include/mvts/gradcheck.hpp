#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvts/tensor.hpp"

namespace mvts {

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_abs_error = 0.0;
  // max|analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞); 0 when both
  // gradients vanish (below 1e-10).
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  double step = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  std::vector<std::string> failing() const;
};

using NamedTensor = std::pair<std::string, Tensor<double>>;

/// Compare reverse-mode gradients of a deterministic scalar objective against
/// central differences with the given step. `params` are perturbed in place
/// and restored.
GradCheckReport gradient_check(const std::function<Tensor<double>()>& objective,
                               std::vector<NamedTensor> params, double tolerance, double step = 1e-4);

/// Throws Error naming the first failing tensor.
void require_passed(const GradCheckReport& report);

}  // namespace mvts
