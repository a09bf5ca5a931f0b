#ifndef DIRACFLOW_EIGENSOLVER_HPP
#define DIRACFLOW_EIGENSOLVER_HPP

// Hermitian operators and their spectra.
//
// Dense matrices go through Householder tridiagonalization + implicit QR
// (Eigen::SelfAdjointEigenSolver). Large sparse lattice operators use a
// shift-invert Lanczos solver restricted to a spectral window, with the window
// count certified by Sylvester inertia of LDL^H factorizations.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diracflow/error.hpp"

namespace diracflow {

using cplx = std::complex<double>;
using DenseMatrix = Eigen::MatrixXcd;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::ColMajor, std::int64_t>;

struct OperatorMeta {
  std::string backend;     // "radial", "lattice", "synthetic", ...
  double t = 0.0;
  double resolution = 0.0; // radial N or lattice cells per diameter
  std::string note;
};

namespace detail {

inline double max_abs(const DenseMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double max_abs(const SparseMatrix& m) {
  double r = 0.0;
  for (std::int64_t k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) r = std::max(r, std::abs(it.value()));
  return r;
}

inline double hermiticity_defect(const DenseMatrix& m) {
  return m.size() ? (m - m.adjoint()).cwiseAbs().maxCoeff() : 0.0;
}

inline double hermiticity_defect(const SparseMatrix& m) {
  SparseMatrix d = m - SparseMatrix(m.adjoint());
  return max_abs(d);
}

}  // namespace detail

// Finite-dimensional self-adjoint matrix. Immutable after construction.
class HermitianOperator {
 public:
  static HermitianOperator from_dense(DenseMatrix m, OperatorMeta meta = {}) {
    return HermitianOperator(Storage{std::move(m)}, std::move(meta));
  }
  static HermitianOperator from_sparse(SparseMatrix m, OperatorMeta meta = {}) {
    m.makeCompressed();
    return HermitianOperator(Storage{std::move(m)}, std::move(meta));
  }

  std::int64_t dimension() const {
    return std::visit([](const auto& m) { return static_cast<std::int64_t>(m.rows()); }, storage_);
  }
  bool is_sparse() const { return std::holds_alternative<SparseMatrix>(storage_); }
  const OperatorMeta& meta() const { return meta_; }

  DenseMatrix dense() const {
    if (auto* d = std::get_if<DenseMatrix>(&storage_)) return *d;
    return DenseMatrix(std::get<SparseMatrix>(storage_));
  }
  SparseMatrix sparse() const {
    if (auto* s = std::get_if<SparseMatrix>(&storage_)) return *s;
    return std::get<DenseMatrix>(storage_).sparseView();
  }
  const SparseMatrix* sparse_ptr() const { return std::get_if<SparseMatrix>(&storage_); }
  const DenseMatrix* dense_ptr() const { return std::get_if<DenseMatrix>(&storage_); }

  double max_abs() const {
    return std::visit([](const auto& m) { return detail::max_abs(m); }, storage_);
  }
  // max|H - H^dagger| relative to max|H|.
  double hermiticity_defect() const {
    const double scale = max_abs();
    const double d = std::visit([](const auto& m) { return detail::hermiticity_defect(m); }, storage_);
    return scale > 0.0 ? d / scale : d;
  }

 private:
  using Storage = std::variant<DenseMatrix, SparseMatrix>;

  HermitianOperator(Storage s, OperatorMeta meta) : storage_(std::move(s)), meta_(std::move(meta)) {
    const std::int64_t n = dimension();
    const std::int64_t cols = std::visit([](const auto& m) { return static_cast<std::int64_t>(m.cols()); }, storage_);
    require(n == cols, ErrorKind::Assembly, "operator matrix is not square");
    require(n % 2 == 0, ErrorKind::Assembly, "operator dimension must be even (two spinor components)");
    const double defect = hermiticity_defect();
    require(defect <= 1e-12, ErrorKind::Assembly,
            "operator is not Hermitian: relative defect " + std::to_string(defect));
  }

  Storage storage_;
  OperatorMeta meta_;
};

// Ascending eigenvalues of a Hermitian operator (dense path).
inline std::vector<double> eigh(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h.dense(), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::Assembly, "dense eigensolver did not converge");
  const Eigen::VectorXd& ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

struct EigenPairs {
  std::vector<double> values;
  DenseMatrix vectors;  // columns
};

// The k eigenpairs of smallest |lambda|, ordered by ascending eigenvalue.
inline EigenPairs eigh_lowest(const HermitianOperator& h, int k) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h.dense(), Eigen::ComputeEigenvectors);
  require(es.info() == Eigen::Success, ErrorKind::Assembly, "dense eigensolver did not converge");
  const auto n = static_cast<int>(es.eigenvalues().size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[b]); });
  idx.resize(static_cast<std::size_t>(std::min(k, n)));
  std::sort(idx.begin(), idx.end());
  EigenPairs out;
  out.vectors.resize(es.eigenvectors().rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.values.push_back(es.eigenvalues()[idx[c]]);
    out.vectors.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(idx[c]);
  }
  return out;
}

// Eigenvalues of the real symmetric tridiagonal matrix with the given diagonal
// and sub-diagonal, ascending.
inline std::vector<double> tridiagonal_eigenvalues(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::Assembly, "tridiagonal eigensolver did not converge");
  const Eigen::VectorXd& ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

// ---------------------------------------------------------------------------
// Spectrum samples

struct SampleMeta {
  std::string backend;
  double resolution = 0.0;   // radial N or lattice cells per diameter
  double spacing = 0.0;      // lattice h (physical units); 0 for radial
  int channel_lo = 0;        // radial channel range
  int channel_hi = -1;
  bool filtered = false;     // lattice: only domain-localized states kept
  std::string note;
};

// Sorted eigenvalues within the closed window [-window, window] at parameter t.
struct SpectrumSample {
  double t = 0.0;
  double window = 0.0;
  std::vector<double> eigenvalues;
  std::int64_t count_below = 0;  // eigenvalues < -window
  SampleMeta meta;
};

// Window is closed: eigenvalues equal to +-window are kept.
inline SpectrumSample make_window_sample(const std::vector<double>& ascending, double window, double t = 0.0) {
  require(window > 0.0, ErrorKind::Precondition, "window half-width must be positive");
  SpectrumSample s;
  s.t = t;
  s.window = window;
  auto lo = std::lower_bound(ascending.begin(), ascending.end(), -window);
  auto hi = std::upper_bound(ascending.begin(), ascending.end(), window);
  s.count_below = lo - ascending.begin();
  s.eigenvalues.assign(lo, hi);
  return s;
}

inline SpectrumSample spectrum_window(const HermitianOperator& h, double window) {
  SpectrumSample s = make_window_sample(eigh(h), window, h.meta().t);
  s.meta.backend = h.meta().backend;
  s.meta.resolution = h.meta().resolution;
  return s;
}

// ---------------------------------------------------------------------------
// Sparse windowed solver: shift-invert Lanczos with full reorthogonalization
// and locking, certified by inertia counts.

struct WindowSolveOptions {
  double residual_tol = 1e-9;     // ||H y - lambda y|| <= tol * ||H||_inf
  int max_restarts = 8;
  int min_steps = 30;
  int max_steps = 600;
  std::uint64_t seed = 0x5eedULL;
  bool certify_count = true;       // compare with inertia of H - hi and H - lo
};

struct WindowEigs {
  std::vector<double> values;   // ascending, within [lo, hi]
  DenseMatrix vectors;          // matching columns
  std::int64_t count_below = 0; // eigenvalues < lo (from inertia), -1 if not certified
  int restarts = 0;
};

namespace detail {

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<std::int64_t>>;

inline SparseMatrix shifted(const SparseMatrix& h, double shift) {
  SparseMatrix id(h.rows(), h.cols());
  id.setIdentity();
  SparseMatrix a = h - shift * id;
  a.makeCompressed();
  return a;
}

// Number of negative eigenvalues of h - shift (Sylvester inertia of LDL^H).
inline std::int64_t negative_count(const SparseMatrix& h, double shift) {
  Ldlt ldlt(shifted(h, shift));
  require(ldlt.info() == Eigen::Success, ErrorKind::Assembly, "LDL^H factorization failed for inertia count");
  const auto d = ldlt.vectorD();
  std::int64_t neg = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) neg += (d[i].real() < 0.0);
  return neg;
}

inline double inf_norm(const SparseMatrix& h) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(h.rows());
  for (std::int64_t k = 0; k < h.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(h, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

}  // namespace detail

inline WindowEigs sparse_window(const SparseMatrix& h, double lo, double hi, const WindowSolveOptions& opt = {}) {
  require(hi > lo, ErrorKind::Precondition, "empty spectral window");
  const std::int64_t n = h.rows();
  const double half = 0.5 * (hi - lo);
  // Off-center shift keeps H - shift away from exact singularity for spectra symmetric about the center.
  const double shift = 0.5 * (lo + hi) + 0.0173 * half;
  detail::Ldlt op(detail::shifted(h, shift));
  require(op.info() == Eigen::Success, ErrorKind::Assembly, "LDL^H factorization of shifted operator failed");
  const double hnorm = std::max(detail::inf_norm(h), 1e-300);

  std::int64_t expected = -1;
  std::int64_t below = -1;
  if (opt.certify_count) {
    below = detail::negative_count(h, lo);
    expected = detail::negative_count(h, hi) - below;
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss;
  std::vector<Eigen::VectorXcd> locked;
  std::vector<double> locked_vals;

  auto project_out = [&](Eigen::VectorXcd& w, const std::vector<Eigen::VectorXcd>& basis) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q * q.dot(w);
  };

  WindowEigs out;
  const std::int64_t max_dim = n - 1;
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    out.restarts = restart;
    if (expected >= 0 && static_cast<std::int64_t>(locked.size()) >= expected) break;
    if (static_cast<std::int64_t>(locked.size()) >= n) break;

    Eigen::VectorXcd q(n);
    for (std::int64_t i = 0; i < n; ++i) q[i] = cplx(gauss(rng), gauss(rng));
    project_out(q, locked);
    q.normalize();

    std::vector<Eigen::VectorXcd> basis;
    std::vector<double> alpha, beta;
    bool found_new = false;
    const int step_cap = static_cast<int>(std::min<std::int64_t>(opt.max_steps, max_dim - static_cast<std::int64_t>(locked.size())));
    int last_window_count = -1;
    for (int j = 0; j < std::max(step_cap, 1); ++j) {
      basis.push_back(q);
      Eigen::VectorXcd w = op.solve(q);
      const double a = basis.back().dot(w).real();
      alpha.push_back(a);
      w -= a * basis.back();
      if (j > 0) w -= beta.back() * basis[basis.size() - 2];
      project_out(w, locked);
      project_out(w, basis);
      const double b = w.norm();

      const int m = static_cast<int>(alpha.size());
      const bool breakdown = b < 1e-13 * std::abs(a) || b == 0.0;
      const bool check = breakdown || m == step_cap || (m >= opt.min_steps && m % 10 == 0);
      if (check) {
        Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
        Eigen::VectorXd e = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1))
                                  : Eigen::VectorXd();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ts;
        ts.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
        // Ritz values theta -> lambda = shift + 1/theta.
        int in_window = 0, converged_in_window = 0;
        const double pad = 0.25 * half;
        for (int i = 0; i < m; ++i) {
          const double theta = ts.eigenvalues()[i];
          if (theta == 0.0) continue;
          const double lam = shift + 1.0 / theta;
          if (lam < lo - pad || lam > hi + pad) continue;
          ++in_window;
          const double est = b * std::abs(ts.eigenvectors()(m - 1, i));
          if (est <= 1e-10 * std::abs(theta)) ++converged_in_window;
        }
        const bool done = breakdown || m == step_cap ||
                          (in_window == converged_in_window && in_window == last_window_count);
        last_window_count = in_window;
        if (done) {
          for (int i = 0; i < m; ++i) {
            const double theta = ts.eigenvalues()[i];
            if (theta == 0.0) continue;
            const double lam0 = shift + 1.0 / theta;
            if (lam0 < lo - pad || lam0 > hi + pad) continue;
            Eigen::VectorXcd y = Eigen::VectorXcd::Zero(n);
            for (int c = 0; c < m; ++c) y += ts.eigenvectors()(c, i) * basis[static_cast<std::size_t>(c)];
            project_out(y, locked);
            const double yn = y.norm();
            if (yn < 0.5) continue;  // duplicate of a locked vector
            y /= yn;
            Eigen::VectorXcd hy = h * y;
            const double lam = y.dot(hy).real();
            const double res = (hy - lam * y).norm();
            if (res > opt.residual_tol * hnorm) continue;
            if (lam < lo || lam > hi) continue;
            locked.push_back(std::move(y));
            locked_vals.push_back(lam);
            found_new = true;
          }
          break;
        }
      }
      if (breakdown) break;
      beta.push_back(b);
      q = w / b;
    }
    if (!opt.certify_count && !found_new && restart > 0) break;
    if (!opt.certify_count && restart >= 1 && !found_new) break;
  }

  if (expected >= 0)
    require(static_cast<std::int64_t>(locked.size()) == expected, ErrorKind::Inconclusive,
            "windowed eigensolver found " + std::to_string(locked.size()) + " eigenvalues in [" +
                std::to_string(lo) + ", " + std::to_string(hi) + "] but inertia gives " + std::to_string(expected));

  std::vector<std::size_t> order(locked.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return locked_vals[a] < locked_vals[b]; });
  out.vectors.resize(n, static_cast<Eigen::Index>(order.size()));
  for (std::size_t c = 0; c < order.size(); ++c) {
    out.values.push_back(locked_vals[order[c]]);
    out.vectors.col(static_cast<Eigen::Index>(c)) = locked[order[c]];
  }
  out.count_below = below;
  return out;
}

// Largest k eigenpairs of a Hermitian positive semidefinite operator given by
// its action, Lanczos with full reorthogonalization. Used on inverse Gram
// operators, where the wanted end of the spectrum is well separated.
template <class Apply>
EigenPairs lanczos_top(Apply apply, std::int64_t n, int k, double tol = 1e-12, std::uint64_t seed = 0x5eedULL) {
  require(k >= 1 && k <= n, ErrorKind::Precondition, "lanczos_top needs 1 <= k <= n");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXcd q(n);
  for (std::int64_t i = 0; i < n; ++i) q[i] = cplx(gauss(rng), gauss(rng));
  q.normalize();
  std::vector<Eigen::VectorXcd> basis;
  std::vector<double> alpha, beta;
  const int cap = static_cast<int>(std::min<std::int64_t>(n, std::max(12 * k, 300)));
  for (int j = 0; j < cap; ++j) {
    basis.push_back(q);
    Eigen::VectorXcd w = apply(q);
    const double a = q.dot(w).real();
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) w -= b * b.dot(w);
    const double bnorm = w.norm();
    const int m = static_cast<int>(alpha.size());
    const bool last = bnorm <= 1e-14 * std::abs(a) || m == cap;
    if (m >= k && (last || (m >= 2 * k + 10 && m % 5 == 0))) {
      Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd e = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1)) : Eigen::VectorXd();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ts;
      ts.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
      const double top = std::abs(ts.eigenvalues()[m - 1]);
      bool ok = true;
      for (int i = m - k; i < m; ++i) ok = ok && bnorm * std::abs(ts.eigenvectors()(m - 1, i)) <= tol * top;
      if (ok || last) {
        EigenPairs out;
        out.vectors.resize(n, k);
        for (int c = 0; c < k; ++c) {
          const int i = m - 1 - c;  // descending
          Eigen::VectorXcd y = Eigen::VectorXcd::Zero(n);
          for (int r = 0; r < m; ++r) y += ts.eigenvectors()(r, i) * basis[static_cast<std::size_t>(r)];
          y.normalize();
          out.values.push_back(ts.eigenvalues()[i]);
          out.vectors.col(c) = y;
        }
        return out;
      }
    }
    if (last) break;
    beta.push_back(bnorm);
    q = w / bnorm;
  }
  fail(ErrorKind::Inconclusive, "Lanczos did not converge");
}

}  // namespace diracflow

#endif
