#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "wsss/tensor.hpp"

namespace wsss {

struct GradcheckOptions {
  double step = 1e-3;
  double rel_tol = 1e-4;
  // Entries whose analytic and numeric magnitudes are both below abs_floor
  // are judged by absolute error against abs_tol instead.
  double abs_floor = 1e-6;
  double abs_tol = 1e-7;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  bool passed = true;
};

// Compares tape gradients of a scalar function against central finite
// differences, perturbing every entry of every listed input in place.
GradcheckReport gradcheck(const std::function<Tensor()>& f,
                          std::vector<Tensor> inputs,
                          const GradcheckOptions& options = {});

// Single-input form: f is evaluated on (a copy of) x.
GradcheckReport gradcheck(const std::function<Tensor(const Tensor&)>& f,
                          const Tensor& x, const GradcheckOptions& options = {});

}  // namespace wsss
