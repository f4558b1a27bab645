#include "wsss/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wsss/error.hpp"

namespace wsss {

namespace {

double evaluate_scalar(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const Tensor y = f();
  if (y.numel() != 1) {
    throw ContractError("gradcheck: function is not scalar-valued");
  }
  return y.item();
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& f,
                          std::vector<Tensor> inputs,
                          const GradcheckOptions& options) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor y = f();
  if (y.numel() != 1) {
    throw ContractError("gradcheck: function is not scalar-valued");
  }
  GradcheckReport report;
  std::vector<std::vector<double>> analytic;
  if (y.requires_grad()) {
    backward(y);
    for (const Tensor& t : inputs) analytic.push_back(t.grad());
  } else {
    for (const Tensor& t : inputs) analytic.emplace_back(t.numel(), 0.0);
  }

  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto values = inputs[p].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      // Fourth-order central stencil; the plain two-point difference leaves
      // an O(h^2) error that swamps small gradients at h = 1e-3.
      const double h = options.step;
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return evaluate_scalar(f);
      };
      const double up2 = at(2 * h), up1 = at(h), down1 = at(-h), down2 = at(-2 * h);
      values[i] = saved;

      const double numeric = (-up2 + 8.0 * up1 - 8.0 * down1 + down2) / (12.0 * h);
      const double a = analytic[p][i];
      const double abs_err = std::abs(a - numeric);
      const double magnitude = std::max(std::abs(a), std::abs(numeric));
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      ++report.checked;
      bool ok;
      if (magnitude < options.abs_floor) {
        ok = abs_err <= options.abs_tol;
      } else {
        const double rel = abs_err / magnitude;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ok = rel <= options.rel_tol;
      }
      if (!ok) ++report.failures;
    }
    inputs[p].zero_grad();
  }
  report.passed = report.failures == 0;
  return report;
}

GradcheckReport gradcheck(const std::function<Tensor(const Tensor&)>& f,
                          const Tensor& x, const GradcheckOptions& options) {
  Tensor input = x.detach();
  return gradcheck([&] { return f(input); }, {input}, options);
}

}  // namespace wsss
