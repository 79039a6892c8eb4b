#pragma once

#include <random>

#include "kioc/common.hpp"

namespace kioc::test {

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

inline Vector gaussian(Index n, std::mt19937_64& rng, double scale = 1.0) {
  return gaussian(n, 1, rng, scale);
}

template <typename F>
Matrix central_jacobian(F&& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Index j = 0; j < x.size(); ++j) {
    Vector xp = x;
    Vector xm = x;
    xp(j) += h;
    xm(j) -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

inline double rel_err(const Matrix& approx, const Matrix& exact) {
  return (approx - exact).norm() / std::max(exact.norm(), 1e-12);
}

}  // namespace kioc::test
