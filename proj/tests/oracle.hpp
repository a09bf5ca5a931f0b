#ifndef DIRACFLOW_TESTS_ORACLE_HPP
#define DIRACFLOW_TESTS_ORACLE_HPP

// Small-n Hermitian eigenvalue oracle that shares no code with Eigen: the
// number of eigenvalues below x equals the number of negative pivots of the
// LDL* factorization of A - x I (Sylvester inertia), and bisection on that
// count pins down every eigenvalue.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Matrix = std::vector<std::vector<cplx>>;

inline int count_below(const Matrix& a, double x) {
  const std::size_t n = a.size();
  Matrix m = a;
  for (std::size_t i = 0; i < n; ++i) m[i][i] -= x;
  int neg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double piv = m[k][k].real();
    if (piv == 0.0) piv = -std::numeric_limits<double>::min();  // x sits on an eigenvalue of a leading block
    if (piv < 0.0) ++neg;
    for (std::size_t i = k + 1; i < n; ++i) {
      const cplx l = m[i][k] / piv;
      for (std::size_t j = k + 1; j < n; ++j) m[i][j] -= l * std::conj(m[j][k]);
    }
  }
  return neg;
}

inline std::vector<double> eigenvalues(const Matrix& a, double tol = 1e-13) {
  const std::size_t n = a.size();
  double bound = 0.0;  // Gershgorin
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += std::abs(a[i][j]);
    bound = std::max(bound, r);
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double lo = -bound - 1.0, hi = bound + 1.0;  // count_below(lo) <= k < count_below(hi)
    while (hi - lo > tol * std::max(1.0, bound)) {
      const double mid = 0.5 * (lo + hi);
      if (count_below(a, mid) > static_cast<int>(k)) hi = mid;
      else lo = mid;
    }
    out[k] = 0.5 * (lo + hi);
  }
  return out;
}

inline Matrix random_hermitian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix a(n, std::vector<cplx>(n));
  for (std::size_t i = 0; i < n; ++i) {
    a[i][i] = g(rng);
    for (std::size_t j = i + 1; j < n; ++j) {
      a[i][j] = cplx(g(rng), g(rng)) / std::sqrt(2.0);
      a[j][i] = std::conj(a[i][j]);
    }
  }
  return a;
}

}  // namespace oracle

#endif
