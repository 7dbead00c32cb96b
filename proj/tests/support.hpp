#pragma once

// Shared helpers for the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace testing_support {

// Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1) (probabilists' weights),
// from the eigen-decomposition of the Jacobi matrix (Golub-Welsch).
struct Quadrature {
  std::vector<double> nodes, weights;
};

inline Quadrature gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (int i = 0; i < n; ++i) {
    q.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    q.weights.push_back(v0 * v0);
  }
  return q;
}

// Fraction of coordinates whose analytic and central-difference derivatives
// agree to relative error `tol`. Pairs that are both below `floor` count as
// agreeing.
inline double fd_agreement(std::span<double> x, std::span<const double> analytic,
                           const std::function<double()>& f, double step, double tol,
                           double floor = 1e-9) {
  int good = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    const double fd = (up - down) / (2.0 * step);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    if (scale < floor || std::abs(fd - analytic[i]) / scale < tol) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(x.size());
}

// Same check with the fourth-order five-point stencil. Allows a larger step,
// which keeps cancellation error below tiny gradients.
inline double fd_agreement_4th(std::span<double> x, std::span<const double> analytic,
                               const std::function<double()>& f, double step, double tol,
                               double floor = 1e-9) {
  int good = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    double v[4];
    const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
    for (int k = 0; k < 4; ++k) {
      x[i] = keep + offsets[k] * step;
      v[k] = f();
    }
    x[i] = keep;
    const double fd = (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * step);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    if (scale < floor || std::abs(fd - analytic[i]) / scale < tol) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(x.size());
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testing_support
