#ifndef DIRACFLOW_RADIAL_HPP
#define DIRACFLOW_RADIAL_HPP

// Angular-momentum reduction on a concentric annulus r_inner < r < r_outer.
//
// With u1 = f(r) e^{i j theta}, u2 = g(r) e^{i (j+1) theta} and the flat
// variables f~ = sqrt(r) f, g~ = sqrt(r) g, the flux-shifted operator reduces to
//
//   H_a = [[0, -i (d/dr + a/r)], [-i (d/dr - a/r), 0]],   a = j + 1/2 - s(t) w,
//
// with  i f~ = B_out g~  at r_outer and  -i f~ = B_in g~  at r_inner.
// See docs/radial_reduction.md.
//
// Discretization: nodes r_i = r_inner + i*delta, i = 0..N. The upper-right
// block uses the forward difference (last row zero), the lower-left block the
// backward difference (first row zero). The Hermitian part of that matrix is
// compressed onto the subspace satisfying both boundary conditions, which
// leaves 2N unknowns and an exactly Hermitian matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "diracflow/domain.hpp"
#include "diracflow/eigensolver.hpp"
#include "diracflow/error.hpp"
#include "diracflow/gauge.hpp"

namespace diracflow {

struct ChannelSpec {
  int j = 0;
  double t = 0.0;
  int w = 0;
  int N = 64;
  double r_inner = 1.0;
  double r_outer = 2.0;
  Schedule schedule{};

  double a() const { return j + 0.5 - schedule(t) * w; }
  double delta() const { return (r_outer - r_inner) / N; }
  double node(int i) const { return r_inner + i * delta(); }
};

inline void validate(const ChannelSpec& c) {
  require(c.N >= 32, ErrorKind::Resolution, "radial grid needs N >= 32, got " + std::to_string(c.N));
  require(c.r_inner > 0.0 && c.r_outer > c.r_inner, ErrorKind::InvalidGeometry,
          "channel radii must satisfy 0 < r_inner < r_outer");
}

// Symmetric tridiagonal form of one channel. Unknown order along the chain:
// x0, q1, f1, q2, f2, ..., q_{N-1}, f_{N-1}, xN where q = -i g and x0, xN are
// the boundary unknowns left after imposing the boundary conditions.
struct ChannelTridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd sub;
};

inline ChannelTridiagonal channel_tridiagonal(const ChannelSpec& c, double b_in, double b_out) {
  validate(c);
  require(b_in != 0.0 && b_out != 0.0, ErrorKind::InvalidBoundaryData, "B must be nonzero");
  const int N = c.N;
  const double dl = c.delta();
  const double a = c.a();
  const double nu0 = std::sqrt(1.0 + 1.0 / (b_in * b_in));
  const double nuN = std::sqrt(1.0 + 1.0 / (b_out * b_out));
  ChannelTridiagonal m;
  m.diag = Eigen::VectorXd::Zero(2 * N);
  m.sub = Eigen::VectorXd::Zero(2 * N - 1);
  m.diag[0] = (1.0 / dl - 2.0 * a / c.node(0)) / (b_in + 1.0 / b_in);
  m.diag[2 * N - 1] = (-1.0 / dl + 2.0 * a / c.node(N)) / (b_out + 1.0 / b_out);
  m.sub[0] = 1.0 / (dl * nu0);
  for (int i = 1; i < N; ++i) {
    m.sub[2 * i - 1] = -1.0 / dl + a / c.node(i);        // q_i -- f_i
    if (i < N - 1) m.sub[2 * i] = 1.0 / dl;              // f_i -- q_{i+1}
  }
  m.sub[2 * N - 2] = 1.0 / (dl * b_out * nuN);           // f_{N-1} -- xN
  return m;
}

inline std::vector<double> channel_eigenvalues(const ChannelSpec& c, double b_in, double b_out) {
  const ChannelTridiagonal m = channel_tridiagonal(c, b_in, b_out);
  return tridiagonal_eigenvalues(m.diag, m.sub);
}

// Reference assembly in the original complex unknowns (f~, g~): builds the full
// paired-stencil matrix on all 2(N+1) nodal values, takes its Hermitian part
// and compresses it with an orthonormal basis of the boundary-condition
// subspace. Basis order: x0, f_1..f_{N-1}, g_1..g_{N-1}, xN.
inline HermitianOperator channel_operator(const ChannelSpec& c, double b_in, double b_out) {
  validate(c);
  require(b_in != 0.0 && b_out != 0.0, ErrorKind::InvalidBoundaryData, "B must be nonzero");
  const int N = c.N;
  const int np = N + 1;
  const double dl = c.delta();
  const double a = c.a();
  const cplx I{0.0, 1.0};
  DenseMatrix full = DenseMatrix::Zero(2 * np, 2 * np);  // [f_0..f_N, g_0..g_N]
  for (int i = 0; i < np; ++i) {
    const double ar = a / c.node(i);
    // f rows: -i (D+ g + a/r g)
    if (i < N) {
      full(i, np + i) += -I * (-1.0 / dl);
      full(i, np + i + 1) += -I * (1.0 / dl);
    }
    full(i, np + i) += -I * ar;
    // g rows: -i (D- f - a/r f)
    if (i > 0) {
      full(np + i, i) += -I * (1.0 / dl);
      full(np + i, i - 1) += -I * (-1.0 / dl);
    }
    full(np + i, i) += I * ar;
  }
  const DenseMatrix herm = 0.5 * (full + full.adjoint());

  DenseMatrix phi = DenseMatrix::Zero(2 * np, 2 * N);
  const double nu0 = std::sqrt(1.0 + 1.0 / (b_in * b_in));
  const double nuN = std::sqrt(1.0 + 1.0 / (b_out * b_out));
  phi(0, 0) = 1.0 / nu0;
  phi(np + 0, 0) = -I / (b_in * nu0);           // g0 = -i f0 / B_in
  for (int i = 1; i < N; ++i) {
    phi(i, i) = 1.0;                            // f_i
    phi(np + i, (N - 1) + i) = 1.0;             // g_i
  }
  phi(N, 2 * N - 1) = 1.0 / nuN;
  phi(np + N, 2 * N - 1) = I / (b_out * nuN);   // gN = i fN / B_out
  DenseMatrix red = phi.adjoint() * herm * phi;
  red = 0.5 * (red + red.adjoint());  // exact symmetry against rounding in the triple product
  OperatorMeta meta{"radial", c.t, static_cast<double>(N), "j=" + std::to_string(c.j)};
  return HermitianOperator::from_dense(std::move(red), std::move(meta));
}

// ---------------------------------------------------------------------------
// Whole-annulus spectra

struct ChannelRange {
  int lo = 0;
  int hi = -1;
  bool empty() const { return hi < lo; }
};

// Channels with |a| <= a_max at parameter value s (flux fraction).
inline ChannelRange channels_within(double a_max, double s, int w) {
  const double shift = s * w - 0.5;
  return {static_cast<int>(std::ceil(shift - a_max)), static_cast<int>(std::floor(shift + a_max))};
}

// Channels with |a| <= a_max somewhere along s in [0, 1]. Keeping one range for
// the whole family makes count_below comparable between samples.
inline ChannelRange channels_for_family(double a_max, int w) {
  const ChannelRange at0 = channels_within(a_max, 0.0, w);
  const ChannelRange at1 = channels_within(a_max, 1.0, w);
  return {std::min(at0.lo, at1.lo), std::max(at0.hi, at1.hi)};
}

inline double default_a_max(double window, double r_outer) { return 2.0 * window * r_outer + 4.0; }

// Edge states on a boundary with value B move at 2|B| / (1 + B^2) times the bulk
// speed, so |B| far from 1 packs more channels into the window.
inline double default_a_max(double window, double r_outer, double b_in, double b_out) {
  auto slow = [](double b) { return (1.0 + b * b) / (2.0 * std::abs(b)); };
  return 2.0 * window * r_outer * std::max(slow(b_in), slow(b_out)) + 4.0;
}

struct AnnulusGeometry {
  double r_inner;
  double r_outer;
  double b_in;
  double b_out;
  int w;
};

inline AnnulusGeometry annulus_geometry(const DomainSpec& d, const GaugeSpec& g) {
  require(d.hole_count() == 1, ErrorKind::InvalidGeometry, "radial backend needs exactly one hole");
  const Hole& h = d.hole(1);
  require(distance(h.circle.center, d.outer().center) == 0.0, ErrorKind::InvalidGeometry,
          "radial backend needs a concentric annulus");
  validate(g, d);
  return {h.circle.radius, d.outer().radius, h.b.value(), d.outer_b().value(), g.winding(1)};
}

struct RadialOptions {
  int N = 256;
  double window = 1.5;
  double a_max = 0.0;           // 0 selects default_a_max(window, r_outer, b_in, b_out)
  ChannelRange channels{0, -1}; // explicit range; empty selects channels_for_family(a_max, w)
};

inline SpectrumSample assemble_annulus_spectrum(const DomainSpec& d, const GaugeSpec& g, double t,
                                                const RadialOptions& opt) {
  require(opt.window > 0.0, ErrorKind::Precondition, "window must be positive");
  const AnnulusGeometry geo = annulus_geometry(d, g);
  const double a_max = opt.a_max > 0.0 ? opt.a_max : default_a_max(opt.window, geo.r_outer, geo.b_in, geo.b_out);
  const ChannelRange range = opt.channels.empty() ? channels_for_family(a_max, geo.w) : opt.channels;
  require(!range.empty(), ErrorKind::Precondition, "empty channel range");

  struct Tagged {
    double value;
    int channel;
  };
  std::vector<Tagged> merged;
  std::int64_t below = 0;
  double min_extreme = std::numeric_limits<double>::infinity();
  for (int j = range.lo; j <= range.hi; ++j) {
    ChannelSpec c{j, t, geo.w, opt.N, geo.r_inner, geo.r_outer, g.schedule};
    const std::vector<double> ev = channel_eigenvalues(c, geo.b_in, geo.b_out);
    if (j == range.lo || j == range.hi) {
      for (double v : ev) min_extreme = std::min(min_extreme, std::abs(v));
    }
    for (double v : ev) {
      if (v < -opt.window) ++below;
      else if (v <= opt.window) merged.push_back({v, j});
    }
  }
  require(min_extreme > 2.0 * opt.window, ErrorKind::ChannelTruncation,
          "extreme channel of [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
              "] has |lambda| = " + std::to_string(min_extreme) + " <= 2 * window = " +
              std::to_string(2.0 * opt.window));
  std::stable_sort(merged.begin(), merged.end(), [](const Tagged& x, const Tagged& y) { return x.value < y.value; });

  SpectrumSample out;
  out.t = t;
  out.window = opt.window;
  out.count_below = below;
  for (const Tagged& x : merged) out.eigenvalues.push_back(x.value);
  out.meta.backend = "radial";
  out.meta.resolution = opt.N;
  out.meta.channel_lo = range.lo;
  out.meta.channel_hi = range.hi;
  return out;
}

}  // namespace diracflow

#endif
