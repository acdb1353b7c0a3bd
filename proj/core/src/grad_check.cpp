#include "mmv/grad_check.hpp"

#include <cmath>

namespace mmv {

namespace {

double eval_loss(const GraphFn& f, const std::vector<Tensor>& points, std::string& err) {
  Graph g;
  std::vector<Tensor> bound;
  bound.reserve(points.size());
  for (const Tensor& p : points) {
    Tensor t = Tensor::from(p.shape(), p.values(), false);
    bound.push_back(g.leaf(t));
  }
  Tensor loss = f(g, bound);
  if (loss.size() != 1) {
    err = "loss is not scalar, shape " + shape_str(loss.shape());
    return 0.0;
  }
  float v = loss.item();
  if (!std::isfinite(v)) err = "non-finite loss value";
  return v;
}

}  // namespace

GradCheckReport grad_check(const GraphFn& f, std::span<const Tensor> points, float step,
                           float rtol, float floor) {
  GradCheckReport report;
  report.leaves.resize(points.size());

  // Analytic pass.
  Graph g;
  std::vector<Tensor> bound;
  bound.reserve(points.size());
  for (const Tensor& p : points) {
    bound.push_back(g.leaf(Tensor::from(p.shape(), p.values(), true)));
  }
  Tensor loss = f(g, bound);
  if (loss.size() != 1) {
    report.message = "loss is not scalar, shape " + shape_str(loss.shape());
    return report;
  }
  if (!std::isfinite(loss.item())) {
    report.message = "non-finite loss at the probe point";
    return report;
  }
  g.backward(loss);
  std::vector<std::vector<float>> analytic;
  analytic.reserve(points.size());
  for (const Tensor& b : bound) {
    auto gr = g.grad(b);
    analytic.emplace_back(gr.begin(), gr.end());
  }

  // Finite-difference pass, one coordinate at a time.
  std::vector<Tensor> work(points.begin(), points.end());
  for (std::size_t leaf = 0; leaf < points.size(); ++leaf) {
    const auto base = points[leaf].values();
    GradCheckLeaf& lr = report.leaves[leaf];
    for (std::size_t i = 0; i < base.size(); ++i) {
      const float a = analytic[leaf][i];
      if (!std::isfinite(a)) {
        report.message = "non-finite analytic gradient at leaf " + std::to_string(leaf) +
                         " coord " + std::to_string(i);
        return report;
      }
      const double h = static_cast<double>(step) * std::max(1.0, std::fabs(static_cast<double>(base[i])));
      std::vector<float> perturbed(base.begin(), base.end());
      std::string err;

      const float x_up = static_cast<float>(base[i] + h);
      const float x_down = static_cast<float>(base[i] - h);
      perturbed[i] = x_up;
      work[leaf] = Tensor::from(points[leaf].shape(), perturbed, false);
      const double up = eval_loss(f, work, err);
      if (!err.empty()) {
        report.message = err + " at leaf " + std::to_string(leaf) + " coord +" + std::to_string(i);
        return report;
      }
      perturbed[i] = x_down;
      work[leaf] = Tensor::from(points[leaf].shape(), perturbed, false);
      const double down = eval_loss(f, work, err);
      if (!err.empty()) {
        report.message = err + " at leaf " + std::to_string(leaf) + " coord -" + std::to_string(i);
        return report;
      }

      // The step the float32 input actually realized, not the one requested.
      const double h_eff = (static_cast<double>(x_up) - static_cast<double>(x_down)) / 2.0;
      const double fd = (up - down) / (2.0 * h_eff);
      const double denom =
          std::max({std::fabs(static_cast<double>(a)), std::fabs(fd), static_cast<double>(floor)});
      const double rel = std::fabs(static_cast<double>(a) - fd) / denom;
      if (rel > lr.max_rel_err) {
        lr.max_rel_err = rel;
        lr.worst_coord = i;
        lr.analytic_at_worst = a;
        lr.fd_at_worst = fd;
      }
    }
    work[leaf] = points[leaf];
    report.max_rel_err = std::max(report.max_rel_err, lr.max_rel_err);
  }

  report.pass = report.max_rel_err <= static_cast<double>(rtol);
  return report;
}

GradCheckReport grad_check(const GraphFn& f, const Tensor& point, float step, float rtol,
                           float floor) {
  return grad_check(f, std::span<const Tensor>(&point, 1), step, rtol, floor);
}

}  // namespace mmv
