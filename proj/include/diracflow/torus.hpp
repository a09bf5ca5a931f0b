#ifndef DIRACFLOW_TORUS_HPP
#define DIRACFLOW_TORUS_HPP

// Discrete d/dt + A(t) on X x S^1.
//
//   (L u)_i = (u_{i+1} - u_i) / dt + F(H(t_i)) u_i,   i = 0..N_t-1,
//   u_{N_t} = C u_0,
//
// with C the clutching unitary (the gauge transformation mu). F is an odd
// monotone spectral map applied to every H(t_i): it keeps the sign of each
// eigenvalue, hence the spectral flow, and bounds the spectrum below 2/dt,
// where the forward difference would otherwise produce a second zero of the
// temporal symbol.
//
// A finite square L has index zero: every kernel vector is paired with a
// cokernel vector. The truncation that makes L finite (channel wrap for the
// radial backend, the wall region for the lattice) hosts the partner modes.
// The index is therefore read off the near-kernel singular triplets as
//   sum_k w(v_k) - sum_k w(u_k),
// w the weight on the physical region, v and u right and left singular vectors.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "diracflow/domain.hpp"
#include "diracflow/eigensolver.hpp"
#include "diracflow/error.hpp"
#include "diracflow/gauge.hpp"
#include "diracflow/lattice.hpp"
#include "diracflow/radial.hpp"

namespace diracflow {

using TorusMatrix = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;

struct TorusOperator {
  TorusMatrix L;
  std::int64_t n = 0;           // spatial dimension
  int N_t = 0;
  double dt = 0.0;
  std::vector<char> physical;   // per spatial dof
  std::string backend;
};

struct TorusOptions {
  int N_t = 24;
  std::int64_t cap = 100000;
  bool twisted = true;          // clutch with mu; false closes periodically with the identity
  bool reversed = false;        // traverse t from 1 to 0 (clutch with mu^{-1})
  double compress = 0.5;        // radial: F(x) = x / sqrt(1 + (x dt / compress)^2)
  double scale_bound = 1.0;     // lattice: F(x) = kappa x with kappa ||H|| dt <= scale_bound
  int radial_N = 48;
  double a_max = 5.0;           // radial channels with |j + 1/2| <= a_max * max(1, |w|)
};

// Generic assembly from per-time spatial blocks F_i (n x n) and the closure C.
inline TorusOperator assemble_torus_blocks(const std::vector<TorusMatrix>& F, const TorusMatrix& C,
                                           std::vector<char> physical, std::int64_t cap, std::string backend) {
  const int nt = static_cast<int>(F.size());
  require(nt >= 8, ErrorKind::Precondition, "torus needs N_t >= 8");
  const std::int64_t n = F.front().rows();
  require(n * nt <= cap, ErrorKind::Size,
          "torus dimension " + std::to_string(n * nt) + " exceeds cap " + std::to_string(cap) +
              "; lower the resolution or N_t");
  require(static_cast<std::int64_t>(physical.size()) == n, ErrorKind::Assembly, "physical mask size mismatch");
  const double dt = 1.0 / nt;
  std::vector<Eigen::Triplet<cplx, int>> trip;
  for (int i = 0; i < nt; ++i) {
    const int row0 = static_cast<int>(i * n);
    require(F[static_cast<std::size_t>(i)].rows() == n && F[static_cast<std::size_t>(i)].cols() == n,
            ErrorKind::Assembly, "torus block size mismatch");
    for (int k = 0; k < F[static_cast<std::size_t>(i)].outerSize(); ++k)
      for (TorusMatrix::InnerIterator it(F[static_cast<std::size_t>(i)], k); it; ++it)
        trip.emplace_back(row0 + it.row(), row0 + it.col(), it.value());
    for (int r = 0; r < n; ++r) trip.emplace_back(row0 + r, row0 + r, -1.0 / dt);
    if (i + 1 < nt) {
      for (int r = 0; r < n; ++r) trip.emplace_back(row0 + r, row0 + static_cast<int>(n) + r, 1.0 / dt);
    } else {
      for (int k = 0; k < C.outerSize(); ++k)
        for (TorusMatrix::InnerIterator it(C, k); it; ++it)
          trip.emplace_back(row0 + it.row(), it.col(), it.value() / dt);
    }
  }
  TorusOperator T;
  T.n = n;
  T.N_t = nt;
  T.dt = dt;
  T.L.resize(static_cast<int>(n * nt), static_cast<int>(n * nt));
  T.L.setFromTriplets(trip.begin(), trip.end());
  T.L.makeCompressed();
  T.physical = std::move(physical);
  T.backend = std::move(backend);
  return T;
}

// ---------------------------------------------------------------------------
// Radial backend: block-diagonal in channels, the clutching shifts j by w.

inline TorusOperator assemble_torus_radial(const DomainSpec& d, const GaugeSpec& g, const TorusOptions& opt) {
  const AnnulusGeometry geo = annulus_geometry(d, g);
  const int nt = opt.N_t;
  const double dt = 1.0 / nt;
  const int aw = std::abs(geo.w);
  // Each clutching chain visits every |w|-th channel, so the ring grows with |w|
  // to keep the same number of periods between a crossing and the wrap.
  const double reach = opt.a_max * std::max(1, aw);
  const int jlo = static_cast<int>(std::ceil(-reach - 0.5));
  const int jhi = static_cast<int>(std::floor(reach - 0.5));
  const int nc = jhi - jlo + 1;
  require(nc > 2 * (aw + 1), ErrorKind::Precondition, "channel ring too short for this winding");
  const int b = 2 * opt.radial_N;
  const std::int64_t n = static_cast<std::int64_t>(b) * nc;
  require(n * nt <= opt.cap, ErrorKind::Size,
          "torus dimension " + std::to_string(n * nt) + " exceeds cap " + std::to_string(opt.cap));

  std::vector<TorusMatrix> F;
  for (int i = 0; i < nt; ++i) {
    const double t = opt.reversed ? 1.0 - static_cast<double>(i) / nt : static_cast<double>(i) / nt;
    std::vector<Eigen::Triplet<cplx, int>> trip;
    for (int k = 0; k < nc; ++k) {
      ChannelSpec c{jlo + k, t, geo.w, opt.radial_N, geo.r_inner, geo.r_outer, g.schedule};
      const ChannelTridiagonal m = channel_tridiagonal(c, geo.b_in, geo.b_out);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(m.diag, m.sub, Eigen::ComputeEigenvectors);
      Eigen::VectorXd fx = es.eigenvalues();
      for (Eigen::Index q = 0; q < fx.size(); ++q) fx[q] = fx[q] / std::sqrt(1.0 + std::pow(fx[q] * dt / opt.compress, 2));
      const Eigen::MatrixXd blk = es.eigenvectors() * fx.asDiagonal() * es.eigenvectors().transpose();
      for (int r = 0; r < b; ++r)
        for (int s = 0; s < b; ++s)
          if (blk(r, s) != 0.0) trip.emplace_back(k * b + r, k * b + s, blk(r, s));
    }
    TorusMatrix Fi(static_cast<int>(n), static_cast<int>(n));
    Fi.setFromTriplets(trip.begin(), trip.end());
    F.push_back(std::move(Fi));
  }
  // (C u)_k = u_{k - w}: mu moves channel j to j + w. Reversed traversal clutches with mu^{-1}.
  const int shift = opt.twisted ? (opt.reversed ? -geo.w : geo.w) : 0;
  std::vector<Eigen::Triplet<cplx, int>> ct;
  for (int k = 0; k < nc; ++k) {
    const int src = ((k - shift) % nc + nc) % nc;
    for (int r = 0; r < b; ++r) ct.emplace_back(k * b + r, src * b + r, 1.0);
  }
  TorusMatrix C(static_cast<int>(n), static_cast<int>(n));
  C.setFromTriplets(ct.begin(), ct.end());
  std::vector<char> phys(static_cast<std::size_t>(n), 0);
  for (int k = aw + 1; k < nc - aw - 1; ++k)
    for (int r = 0; r < b; ++r) phys[static_cast<std::size_t>(k * b + r)] = 1;
  return assemble_torus_blocks(F, C, std::move(phys), opt.cap, "radial");
}

// ---------------------------------------------------------------------------
// Lattice backend: site transformation by mu, linear spectral map.

inline TorusOperator assemble_torus_lattice(const LatticeModel& m, const GaugeSpec& g, const TorusOptions& opt) {
  const int nt = opt.N_t;
  const double dt = 1.0 / nt;
  const std::int64_t n = 2 * static_cast<std::int64_t>(m.mask.nx()) * m.mask.ny();
  require(n * nt <= opt.cap, ErrorKind::Size,
          "torus dimension " + std::to_string(n * nt) + " exceeds cap " + std::to_string(opt.cap));
  std::vector<TorusMatrix> F;
  for (int i = 0; i < nt; ++i) {
    const double t = opt.reversed ? 1.0 - static_cast<double>(i) / nt : static_cast<double>(i) / nt;
    const HermitianOperator h = lattice_operator(m, g, t);
    SparseMatrix hs = *h.sparse_ptr() / m.params.h;
    const double norm = detail::inf_norm(hs);
    const double kappa = std::min(1.0, opt.scale_bound / (norm * dt));
    SparseMatrix scaled = kappa * hs;
    TorusMatrix Fi = scaled;
    F.push_back(std::move(Fi));
  }
  std::vector<Eigen::Triplet<cplx, int>> ct;
  for (int j = 0; j < m.mask.ny(); ++j)
    for (int i = 0; i < m.mask.nx(); ++i) {
      cplx mu{1.0, 0.0};
      if (opt.twisted) {
        mu = mu_eval(g, m.domain, m.mask.center(i, j));
        if (opt.reversed) mu = std::conj(mu);
      }
      const int c = static_cast<int>(m.mask.index(i, j));
      ct.emplace_back(2 * c, 2 * c, mu);
      ct.emplace_back(2 * c + 1, 2 * c + 1, mu);
    }
  TorusMatrix C(static_cast<int>(n), static_cast<int>(n));
  C.setFromTriplets(ct.begin(), ct.end());
  std::vector<char> phys(static_cast<std::size_t>(n), 0);
  for (std::size_t c = 0; c < m.zone.size(); ++c) phys[2 * c] = phys[2 * c + 1] = m.zone[c];
  return assemble_torus_blocks(F, C, std::move(phys), opt.cap, "lattice");
}

// ---------------------------------------------------------------------------
// Index

struct SingularTriplets {
  std::vector<double> values;  // ascending
  Eigen::MatrixXcd right;      // columns v_k
  Eigen::MatrixXcd left;       // columns u_k, L v_k = s_k u_k
};

inline SingularTriplets smallest_singular(const TorusMatrix& L, int k) {
  // COLAMD loses accuracy silently on the longer cyclic chains; AMD does not.
  Eigen::SparseLU<TorusMatrix, Eigen::AMDOrdering<int>> lu;
  lu.compute(L);
  require(lu.info() == Eigen::Success, ErrorKind::Assembly, "sparse LU of the torus operator failed");
  const std::int64_t n = L.rows();
  {
    // Normwise backward error of one solve; a near-kernel makes y large, so the
    // plain residual is not the right yardstick.
    double lnorm = 0.0;
    for (int c = 0; c < L.outerSize(); ++c) {
      for (TorusMatrix::InnerIterator it(L, c); it; ++it) lnorm = std::max(lnorm, std::abs(it.value()));
    }
    const Eigen::VectorXcd probe = Eigen::VectorXcd::Ones(n);
    const Eigen::VectorXcd y = lu.solve(probe);
    const double berr = (L * y - probe).norm() / (lnorm * y.norm() + probe.norm());
    require(berr < 1e-10, ErrorKind::Singularity,
            "sparse LU of the torus operator is inaccurate (backward error " + std::to_string(berr) + ")");
  }
  auto apply = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd {
    Eigen::VectorXcd y = lu.adjoint().solve(x);
    return lu.solve(y);
  };
  const EigenPairs top = lanczos_top(apply, n, k, 1e-12);
  SingularTriplets s;
  s.right.resize(n, k);
  s.left.resize(n, k);
  std::vector<std::pair<double, int>> order;
  std::vector<Eigen::VectorXcd> lv;
  for (int c = 0; c < k; ++c) {
    const Eigen::VectorXcd v = top.vectors.col(c);
    const Eigen::VectorXcd lvv = L * v;
    order.push_back({lvv.norm(), c});
    lv.push_back(lvv);
  }
  std::sort(order.begin(), order.end());
  for (int c = 0; c < k; ++c) {
    const auto [sv, idx] = order[static_cast<std::size_t>(c)];
    s.values.push_back(sv);
    s.right.col(c) = top.vectors.col(idx);
    s.left.col(c) = sv > 0.0 ? Eigen::VectorXcd(lv[static_cast<std::size_t>(idx)] / sv) : Eigen::VectorXcd(lv[static_cast<std::size_t>(idx)]);
  }
  return s;
}

struct IndexResult {
  int index = 0;
  int kernel_size = 0;
  bool inconclusive = false;
  double gap_ratio = 0.0;
  double right_physical = 0.0;  // summed physical weight of near-kernel right vectors
  double left_physical = 0.0;
  std::vector<double> singular_values;
  std::string diagnostics;
};

inline double physical_weight(const TorusOperator& T, const Eigen::Ref<const Eigen::VectorXcd>& v) {
  double in = 0.0, all = 0.0;
  for (std::int64_t r = 0; r < v.size(); ++r) {
    const double w = std::norm(v[r]);
    all += w;
    if (T.physical[static_cast<std::size_t>(r % T.n)]) in += w;
  }
  return all > 0.0 ? in / all : 0.0;
}

inline IndexResult index_count(const TorusOperator& T, double svd_gap_factor = 50.0, int probe = 8) {
  IndexResult r;
  const SingularTriplets s = smallest_singular(T.L, probe);
  r.singular_values = s.values;
  int k = 0;
  double best = 0.0;
  for (int i = 0; i + 1 < probe; ++i) {
    const double ratio = s.values[static_cast<std::size_t>(i + 1)] / std::max(s.values[static_cast<std::size_t>(i)], 1e-300);
    if (ratio > best) {
      best = ratio;
      k = i + 1;
    }
  }
  if (best < svd_gap_factor) {
    // No gap inside the probed profile: the kernel is empty unless the whole
    // profile sits at rounding level.
    double lmax = 0.0;
    for (int c = 0; c < T.L.outerSize(); ++c)
      for (TorusMatrix::InnerIterator it(T.L, c); it; ++it) lmax = std::max(lmax, std::abs(it.value()));
    const double floor = 1e-13 * lmax * std::sqrt(static_cast<double>(T.L.rows()));
    k = 0;
    r.gap_ratio = s.values.front() / floor;
    if (r.gap_ratio < svd_gap_factor) {
      r.inconclusive = true;
      r.diagnostics = "no clear gap in the singular-value profile";
      return r;
    }
  } else {
    r.gap_ratio = best;
  }
  r.kernel_size = k;
  for (int c = 0; c < k; ++c) {
    r.right_physical += physical_weight(T, s.right.col(c));
    r.left_physical += physical_weight(T, s.left.col(c));
  }
  const double idx = r.right_physical - r.left_physical;
  r.index = static_cast<int>(std::lround(idx));
  if (std::abs(idx - r.index) > 0.25) {
    r.inconclusive = true;
    r.diagnostics = "near-kernel vectors are not cleanly localized (weight difference " + std::to_string(idx) + ")";
  }
  return r;
}

inline TorusOperator adjoint(const TorusOperator& T) {
  TorusOperator a = T;
  a.L = TorusMatrix(T.L.adjoint());
  a.L.makeCompressed();
  return a;
}

}  // namespace diracflow

#endif
