#include "mvts/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mvts/error.hpp"

namespace mvts {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> names;
  for (const auto& e : entries)
    if (!e.passed) names.push_back(e.name);
  return names;
}

GradCheckReport gradient_check(const std::function<Tensor<double>()>& objective,
                               std::vector<NamedTensor> params, double tolerance, double step) {
  for (auto& [name, tensor] : params) {
    tensor.set_requires_grad(true);
    tensor.zero_grad();
  }
  objective().backward();

  GradCheckReport report;
  report.tolerance = tolerance;
  report.step = step;
  for (auto& [name, tensor] : params) {
    std::vector<double> analytic(tensor.size(), 0.0);
    if (tensor.has_grad()) std::copy(tensor.grad().begin(), tensor.grad().end(), analytic.begin());

    GradCheckEntry entry;
    entry.name = name;
    entry.elements = tensor.size();
    double scale = 0.0;
    {
      NoGradGuard no_grad;
      auto values = tensor.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double plus = objective().item();
        values[i] = saved - step;
        const double minus = objective().item();
        values[i] = saved;
        const double numeric = (plus - minus) / (2.0 * step);
        entry.max_abs_error = std::max(entry.max_abs_error, std::abs(numeric - analytic[i]));
        scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
      }
    }
    entry.max_rel_error = scale < 1e-10 ? 0.0 : entry.max_abs_error / scale;
    entry.passed = entry.max_rel_error <= tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

void require_passed(const GradCheckReport& report) {
  for (const auto& e : report.entries) {
    if (!e.passed) {
      throw Error(ErrorCategory::runtime, "gradient check failed for '" + e.name + "': relative error " +
                                              std::to_string(e.max_rel_error) + " > " +
                                              std::to_string(report.tolerance));
    }
  }
}

}  // namespace mvts
