// Central finite-difference verification of reverse-mode gradients.
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmv/graph.hpp"

namespace mmv {

// Builds a scalar loss from graph-bound copies of the probe points.
using GraphFn = std::function<Tensor(Graph&, std::span<const Tensor>)>;

struct GradCheckLeaf {
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double fd_at_worst = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::vector<GradCheckLeaf> leaves;
  std::string message;  // set on hard failure (non-finite value, non-scalar loss)

  explicit operator bool() const { return pass; }
};

// Compares analytic gradients against (L(x+h) - L(x-h)) / 2h per coordinate,
// h = step * max(1, |x_i|). Relative error is |a - fd| / max(|a|, |fd|, floor);
// the floor turns the comparison into an absolute check near zero, which keeps
// float32 forward-evaluation noise from dominating. Non-finite values anywhere
// fail with their location.
GradCheckReport grad_check(const GraphFn& f, std::span<const Tensor> points, float step,
                           float rtol, float floor = 1e-2f);

GradCheckReport grad_check(const GraphFn& f, const Tensor& point, float step, float rtol,
                           float floor = 1e-2f);

}  // namespace mmv
