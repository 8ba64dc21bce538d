#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace driftbench {

// Central finite difference of a scalar function along one coordinate.
inline double fd_partial(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, std::size_t i, double h = 1e-5) {
  x[i] += h;
  const double up = f(x);
  x[i] -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline double rel_error(double analytic, double numeric, double floor = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Max relative error between an analytic gradient and central differences.
inline double max_grad_rel_error(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x,
                                 const std::vector<double>& analytic, double h = 1e-5,
                                 double floor = 1e-8) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = fd_partial(f, x, i, h);
    worst = std::max(worst, rel_error(analytic[i], numeric, floor));
  }
  return worst;
}

}  // namespace driftbench
