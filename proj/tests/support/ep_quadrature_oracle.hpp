// Quadrature oracle for the Epps-Pulley statistic: evaluates
//   N * integral |phi_N(t) - e^{-t^2/2}|^2 phi(t) dt
// directly from the defining integral, with phi_N the empirical
// characteristic function and phi the standard normal density. Composite
// Simpson over t in [-8, 8]; the integrand is O(e^{-t^2/2}) outside.
#pragma once

#include <cmath>
#include <span>

namespace mmv::testing {

inline double ep_statistic_quadrature(std::span<const float> x, int panels = 4000) {
  const double lo = -8.0, hi = 8.0;
  const double h = (hi - lo) / panels;
  const double inv_sqrt_2pi = 0.3989422804014327;
  auto integrand = [&](double t) {
    double re = 0.0, im = 0.0;
    for (float xi : x) {
      re += std::cos(t * xi);
      im += std::sin(t * xi);
    }
    re /= static_cast<double>(x.size());
    im /= static_cast<double>(x.size());
    const double target = std::exp(-t * t / 2.0);
    const double dr = re - target;
    return (dr * dr + im * im) * inv_sqrt_2pi * std::exp(-t * t / 2.0);
  };
  double acc = integrand(lo) + integrand(hi);
  for (int i = 1; i < panels; ++i) {
    acc += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  }
  return static_cast<double>(x.size()) * acc * h / 3.0;
}

}  // namespace mmv::testing
