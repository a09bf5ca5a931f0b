#ifndef DIRACFLOW_LATTICE_HPP
#define DIRACFLOW_LATTICE_HPP

// Wilson-Dirac lattice Hamiltonian on the rasterized box, in lattice units:
//
//   H = sum_x psi_x^+ (m_x + 4 r) sigma_z psi_x
//     + sum_{x, mu} [ psi_x^+ T_mu U*_{x,mu} psi_{x+mu} + h.c. ],
//   T_x = -(i/2) sigma_x - r sigma_z,   T_y = -(i/2) sigma_y - r sigma_z,
//
// U_{x,mu} the link phase of LinkField. In momentum space (m constant, U = 1)
//   H(k) = sin kx sigma_x + sin ky sigma_y + (m + 2 r (2 - cos kx - cos ky)) sigma_z,
// so the doublers at k = (pi,0), (0,pi), (pi,pi) carry mass m + 4r, m + 4r, m + 8r.
// Physical eigenvalues are lattice eigenvalues divided by h.
//
// Holes are filled completely with wall mass and the exterior is kept for a
// margin of cells around the outer circle. A negative wall mass sits in the
// Chern phase of the regulator (-4r < m < 0): its far edge and any flux core
// inside it carry in-gap states. Those are removed from samples by keeping
// only eigenvectors localized on the domain plus a thin wall layer.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "diracflow/domain.hpp"
#include "diracflow/eigensolver.hpp"
#include "diracflow/error.hpp"
#include "diracflow/gauge.hpp"
#include "diracflow/radial.hpp"

namespace diracflow {

// Which wall-mass sign realizes B > 0. Zero means "not calibrated".
struct WallSignMap {
  int positive_b_wall = 0;

  bool calibrated() const { return positive_b_wall == 1 || positive_b_wall == -1; }
  int wall_for(int b_sign) const {
    require(calibrated(), ErrorKind::Calibration, "wall signs are not calibrated");
    return b_sign > 0 ? positive_b_wall : -positive_b_wall;
  }
  friend bool operator==(const WallSignMap&, const WallSignMap&) = default;
};

struct LatticeParams {
  double h = 0.05;
  double r_wilson = 1.0;
  double m_wall = 1.0;
  double window = 0.3;          // lattice units
  int exterior_sign = 1;        // wall mass sign outside the outer circle
  std::vector<int> hole_signs;  // wall mass sign inside hole k (index k-1)
  int margin_trivial = 6;       // exterior cells kept beyond the outer circle
  int margin_topological = 16;
  double zone_cells = 3.0;      // wall layer counted as part of the domain
  double zone_weight = 0.5;     // minimum eigenvector weight on the domain zone
};

inline void validate(const LatticeParams& p) {
  require(p.h > 0.0, ErrorKind::Precondition, "lattice spacing must be positive");
  require(p.r_wilson > 0.0, ErrorKind::Precondition, "r_wilson must be positive");
  require(p.m_wall > 0.0 && p.m_wall < 2.0 * p.r_wilson, ErrorKind::Precondition,
          "need 0 < M_wall < 2 r_wilson");
  require(p.window > 0.0 && p.window < 0.5 * p.m_wall, ErrorKind::Precondition, "need 0 < window < M_wall / 2");
  require(p.exterior_sign == 1 || p.exterior_sign == -1, ErrorKind::Precondition, "exterior sign must be +-1");
  for (int s : p.hole_signs) require(s == 1 || s == -1, ErrorKind::Precondition, "hole sign must be +-1");
}

// Fills the wall signs of p from the domain's B signs through the calibration map.
inline LatticeParams with_wall_signs(LatticeParams p, const DomainSpec& d, const WallSignMap& map) {
  p.exterior_sign = map.wall_for(d.outer_b().sign);
  p.hole_signs.clear();
  for (const Hole& h : d.holes()) p.hole_signs.push_back(map.wall_for(h.b.sign));
  return p;
}

inline double cell_mass(const CellTag& tag, const LatticeParams& p) {
  switch (tag.kind) {
    case CellKind::Interior: return 0.0;
    case CellKind::Exterior: return p.exterior_sign * p.m_wall;
    case CellKind::Hole: return p.hole_signs.at(static_cast<std::size_t>(tag.hole - 1)) * p.m_wall;
  }
  return 0.0;
}

// Generic Wilson assembly on an nx x ny box. mass(i,j) in lattice units;
// xlink(i,j) is the phase of the link (i,j)->(i+1,j) (i+1 taken mod nx when
// periodic), likewise ylink.
template <class MassFn, class XLinkFn, class YLinkFn>
SparseMatrix assemble_wilson(int nx, int ny, double r, bool periodic, MassFn mass, XLinkFn xlink, YLinkFn ylink) {
  using Triplet = Eigen::Triplet<cplx, std::int64_t>;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(nx) * ny * 18);
  const cplx I{0.0, 1.0};
  auto dof = [&](int i, int j, int s) { return 2 * (static_cast<std::int64_t>(j) * nx + i) + s; };
  // T_x = [[-r, -i/2], [-i/2, r]],  T_y = [[-r, -1/2], [1/2, r]]
  const cplx tx[2][2] = {{-r, -0.5 * I}, {-0.5 * I, r}};
  const cplx ty[2][2] = {{-r, -0.5}, {0.5, r}};
  auto hop = [&](std::int64_t a0, std::int64_t b0, const cplx (&t)[2][2], cplx u) {
    const cplx c = std::conj(u);
    for (int s = 0; s < 2; ++s)
      for (int q = 0; q < 2; ++q) {
        const cplx v = t[s][q] * c;
        if (v == cplx{}) continue;
        trip.emplace_back(a0 + s, b0 + q, v);
        trip.emplace_back(b0 + q, a0 + s, std::conj(v));
      }
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double d = mass(i, j) + 4.0 * r;
      trip.emplace_back(dof(i, j, 0), dof(i, j, 0), d);
      trip.emplace_back(dof(i, j, 1), dof(i, j, 1), -d);
      if (i + 1 < nx || periodic) hop(dof(i, j, 0), dof((i + 1) % nx, j, 0), tx, xlink(i, j));
      if (j + 1 < ny || periodic) hop(dof(i, j, 0), dof(i, (j + 1) % ny, 0), ty, ylink(i, j));
    }
  const std::int64_t n = 2 * static_cast<std::int64_t>(nx) * ny;
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

inline HermitianOperator assemble_hamiltonian(const GridMask& mask, const LinkField& links, const LatticeParams& p) {
  validate(p);
  require(links.nx == mask.nx() && links.ny == mask.ny(), ErrorKind::Assembly, "link field and mask grids differ");
  int max_hole = 0;
  for (int j = 0; j < mask.ny(); ++j)
    for (int i = 0; i < mask.nx(); ++i)
      if (mask.tag(i, j).kind == CellKind::Hole) max_hole = std::max(max_hole, mask.tag(i, j).hole);
  require(static_cast<int>(p.hole_signs.size()) >= max_hole, ErrorKind::Assembly,
          "mask has hole cells without a wall sign");
  SparseMatrix m = assemble_wilson(
      mask.nx(), mask.ny(), p.r_wilson, false, [&](int i, int j) { return cell_mass(mask.tag(i, j), p); },
      [&](int i, int j) { return links.x_link(i, j); }, [&](int i, int j) { return links.y_link(i, j); });
  OperatorMeta meta{"lattice", links.t, 0.0, ""};
  return HermitianOperator::from_sparse(std::move(m), std::move(meta));
}

// ---------------------------------------------------------------------------
// Domain-level model

struct LatticeModel {
  DomainSpec domain;          // hole centers nudged off the grid lines
  GridMask mask;
  LatticeParams params;
  std::vector<char> zone;     // per cell: counted as domain for localization
};

inline int cells_per_diameter(const DomainSpec& d, double h) {
  return static_cast<int>(std::lround(2.0 * d.outer().radius / h));
}

inline LatticeModel build_lattice_model(const DomainSpec& d, const LatticeParams& p) {
  validate(p);
  require(static_cast<int>(p.hole_signs.size()) == d.hole_count(), ErrorKind::Precondition,
          "one wall sign per hole is required");
  const int margin = p.exterior_sign > 0 ? p.margin_trivial : p.margin_topological;
  GridMask probe = rasterize(d, p.h, margin);
  DomainSpec nudged = nudge_hole_centers(d, probe);
  GridMask mask = rasterize(nudged, p.h, margin);
  std::vector<char> zone(static_cast<std::size_t>(mask.nx()) * mask.ny(), 0);
  for (int j = 0; j < mask.ny(); ++j)
    for (int i = 0; i < mask.nx(); ++i)
      zone[mask.index(i, j)] =
          mask.interior(i, j) || distance_to_boundary(nudged, mask.center(i, j)) <= p.zone_cells * p.h;
  return {std::move(nudged), std::move(mask), p, std::move(zone)};
}

inline HermitianOperator lattice_operator(const LatticeModel& m, const GaugeSpec& g, double t) {
  const LinkField links = link_phases(g, m.domain, m.mask, t);
  HermitianOperator op = assemble_hamiltonian(m.mask, links, m.params);
  OperatorMeta meta = op.meta();
  meta.resolution = cells_per_diameter(m.domain, m.params.h);
  return HermitianOperator::from_sparse(*op.sparse_ptr(), meta);
}

inline double zone_weight(const LatticeModel& m, const Eigen::Ref<const Eigen::VectorXcd>& v) {
  double in = 0.0, all = 0.0;
  for (std::size_t c = 0; c < m.zone.size(); ++c) {
    const double w = std::norm(v[2 * static_cast<Eigen::Index>(c)]) + std::norm(v[2 * static_cast<Eigen::Index>(c) + 1]);
    all += w;
    if (m.zone[c]) in += w;
  }
  return all > 0.0 ? in / all : 0.0;
}

struct LatticeSampleDetail {
  SpectrumSample sample;
  std::vector<double> rejected;  // window eigenvalues localized away from the domain (physical units)
};

// Window half-width is in physical units; it is capped at params.window / h.
inline LatticeSampleDetail lattice_sample(const LatticeModel& m, const GaugeSpec& g, double t, double window,
                                          const WindowSolveOptions& opt = {}) {
  const double lam = std::min(window, m.params.window / m.params.h);
  require(lam > 0.0, ErrorKind::Precondition, "window must be positive");
  const HermitianOperator op = lattice_operator(m, g, t);
  const double lat = lam * m.params.h;
  const WindowEigs we = sparse_window(*op.sparse_ptr(), -lat, lat, opt);
  LatticeSampleDetail out;
  out.sample.t = t;
  out.sample.window = lam;
  out.sample.count_below = we.count_below;
  for (std::size_t k = 0; k < we.values.size(); ++k) {
    const double v = we.values[k] / m.params.h;
    if (zone_weight(m, we.vectors.col(static_cast<Eigen::Index>(k))) >= m.params.zone_weight)
      out.sample.eigenvalues.push_back(v);
    else
      out.rejected.push_back(v);
  }
  out.sample.meta.backend = "lattice";
  out.sample.meta.resolution = cells_per_diameter(m.domain, m.params.h);
  out.sample.meta.spacing = m.params.h;
  out.sample.meta.filtered = true;
  return out;
}

inline SpectrumSample lattice_spectrum(const DomainSpec& d, const GaugeSpec& g, const LatticeParams& p, double t,
                                       double window) {
  validate(g, d);
  return lattice_sample(build_lattice_model(d, p), g, t, window).sample;
}

// The k domain eigenvalues of smallest |lambda| (physical units), widening the
// window until enough are found.
inline std::vector<double> lattice_low_modes(const LatticeModel& m, const GaugeSpec& g, double t, int k,
                                             double start_window) {
  double win = start_window;
  const double cap = m.params.window / m.params.h;
  for (;;) {
    SpectrumSample s = lattice_sample(m, g, t, win).sample;
    if (static_cast<int>(s.eigenvalues.size()) >= k || win >= cap) {
      std::vector<double> v = s.eigenvalues;
      std::sort(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
      if (static_cast<int>(v.size()) > k) v.resize(static_cast<std::size_t>(k));
      require(static_cast<int>(v.size()) == k, ErrorKind::Resolution,
              "lattice window holds fewer than " + std::to_string(k) + " domain eigenvalues");
      return v;
    }
    win = std::min(2.0 * win, cap);
  }
}

inline std::vector<double> radial_low_modes(const DomainSpec& d, const GaugeSpec& g, double t, int k, int N) {
  double win = 1.0;
  for (;;) {
    RadialOptions ro;
    ro.N = N;
    ro.window = win;
    std::vector<double> v = assemble_annulus_spectrum(d, g, t, ro).eigenvalues;
    if (static_cast<int>(v.size()) >= k) {
      std::sort(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
      v.resize(static_cast<std::size_t>(k));
      return v;
    }
    win *= 2.0;
  }
}

// Sorted-value least-squares mismatch of two equally sized mode sets.
inline double mode_mismatch(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

struct CalibrationOptions {
  double t = 0.25;             // quarter flux: the +B and -B spectra are far from mirror images
  int modes = 6;
  int radial_N = 256;
  double decisive_ratio = 2.5; // losing assignment must be this much worse
  LatticeParams base{};
};

struct CalibrationRecord {
  int wall_sign;
  int w;
  double mismatch_pos;  // against radial B = (+1, +1)
  double mismatch_neg;  // against radial B = (-1, -1)
};

struct Calibration {
  WallSignMap map;
  std::vector<CalibrationRecord> records;
};

// Annulus r1 < r < r2 with spacing h = (r2 - r1) / N. Uniform wall patterns of
// each sign are matched against the radial spectra for uniform B of each sign
// at w = -1 and w = +1.
inline Calibration wall_sign_calibration(double r1, double r2, int N, const CalibrationOptions& opt = {}) {
  require(N >= 48, ErrorKind::Resolution, "wall calibration needs N >= 48 cells across the annulus");
  const double h = (r2 - r1) / N;
  Calibration cal;
  int assigned[2] = {0, 0};  // index 0: wall -1, index 1: wall +1
  for (int wall : {-1, 1}) {
    for (int w : {-1, 1}) {
      const DomainSpec pos = build_annulus(r1, r2, {1, 1.0}, {1, 1.0});
      const DomainSpec neg = build_annulus(r1, r2, {-1, 1.0}, {-1, 1.0});
      GaugeSpec g;
      g.windings[1] = w;
      LatticeParams p = opt.base;
      p.h = h;
      p.exterior_sign = wall;
      p.hole_signs = {wall};
      const LatticeModel model = build_lattice_model(pos, p);
      const std::vector<double> lat = lattice_low_modes(model, g, opt.t, opt.modes, 4.0 / (r2 - r1));
      const double mp = mode_mismatch(lat, radial_low_modes(pos, g, opt.t, opt.modes, opt.radial_N));
      const double mn = mode_mismatch(lat, radial_low_modes(neg, g, opt.t, opt.modes, opt.radial_N));
      cal.records.push_back({wall, w, mp, mn});
      int b = 0;
      if (mp * opt.decisive_ratio <= mn) b = 1;
      else if (mn * opt.decisive_ratio <= mp) b = -1;
      require(b != 0, ErrorKind::Calibration,
              "wall sign " + std::to_string(wall) + ", w = " + std::to_string(w) +
                  ": no decisive B sign (mismatch " + std::to_string(mp) + " vs " + std::to_string(mn) + ")");
      int& slot = assigned[wall > 0 ? 1 : 0];
      require(slot == 0 || slot == b, ErrorKind::Calibration, "wall sign mapping differs between w = -1 and w = 1");
      slot = b;
    }
  }
  require(assigned[0] == -assigned[1], ErrorKind::Calibration, "both wall signs map to the same B sign");
  cal.map.positive_b_wall = assigned[1] > 0 ? 1 : -1;
  return cal;
}

}  // namespace diracflow

#endif
