#ifndef DIRACFLOW_GAUGE_HPP
#define DIRACFLOW_GAUGE_HPP

// Gauge data for flux insertion through the holes: the unit-modulus function
// mu(p) = prod_k ((p - c_k)/|p - c_k|)^{w_k}, its winding numbers on boundary
// circles, the topological prediction for the spectral flow, and the lattice
// link phases of the interpolating vector potential A_t = s(t) sum_k w_k grad theta_k.

#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "diracflow/domain.hpp"
#include "diracflow/error.hpp"

namespace diracflow {

enum class ScheduleKind { Linear, Quadratic, PiecewiseRamp };

// Monotone reparametrization s: [0,1] -> [0,1] with s(0) = 0, s(1) = 1.
struct Schedule {
  ScheduleKind kind = ScheduleKind::Linear;
  // PiecewiseRamp: flat at 0 until ramp_start, linear up to ramp_end, flat at 1 after.
  double ramp_start = 0.25;
  double ramp_end = 0.75;

  double operator()(double t) const {
    switch (kind) {
      case ScheduleKind::Linear: return t;
      case ScheduleKind::Quadratic: return t * t;
      case ScheduleKind::PiecewiseRamp:
        if (t <= ramp_start) return 0.0;
        if (t >= ramp_end) return 1.0;
        return (t - ramp_start) / (ramp_end - ramp_start);
    }
    return t;
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Quadratic: return "quadratic";
    case ScheduleKind::PiecewiseRamp: return "ramp";
  }
  return "linear";
}

struct GaugeSpec {
  std::map<int, int> windings;  // hole index -> w_k; absent holes have w = 0
  Schedule schedule;

  int winding(int hole) const {
    auto it = windings.find(hole);
    return it == windings.end() ? 0 : it->second;
  }

  int total_abs() const {
    int s = 0;
    for (auto [k, w] : windings) s += std::abs(w);
    return s;
  }

  GaugeSpec negated() const {
    GaugeSpec g = *this;
    for (auto& [k, w] : g.windings) w = -w;
    return g;
  }

  friend GaugeSpec operator+(const GaugeSpec& a, const GaugeSpec& b) {
    GaugeSpec g = a;
    for (auto [k, w] : b.windings) g.windings[k] += w;
    return g;
  }
};

inline void validate(const GaugeSpec& g, const DomainSpec& d) {
  for (auto [k, w] : g.windings)
    require(k >= 1 && k <= d.hole_count(), ErrorKind::Precondition,
            "winding given for nonexistent hole " + std::to_string(k));
}

inline cplx mu_eval(const GaugeSpec& g, const DomainSpec& d, Vec2 p) {
  cplx mu{1.0, 0.0};
  for (auto [k, w] : g.windings) {
    if (w == 0) continue;
    const Vec2 r = p - d.hole(k).circle.center;
    const double n = r.norm();
    require(n > 0.0, ErrorKind::Singularity, "mu evaluated at the center of hole " + std::to_string(k));
    const cplx z{r.x / n, r.y / n};
    mu *= w > 0 ? std::pow(z, w) : std::pow(std::conj(z), -w);
  }
  return mu;
}

// Sum of principal-value phase increments of mu along the component,
// traversed with the domain on the left, divided by 2 pi.
inline int winding_number(const GaugeSpec& g, const DomainSpec& d, const BoundaryComponent& c,
                          int n_samples) {
  require(n_samples >= 8 * (1 + g.total_abs()), ErrorKind::Precondition,
          "winding_number needs at least 8 (1 + sum |w|) samples");
  double total = 0.0;
  cplx prev = mu_eval(g, d, c.point(0.0));
  for (int i = 1; i <= n_samples; ++i) {
    const cplx cur = mu_eval(g, d, c.point(static_cast<double>(i % n_samples) / n_samples));
    total += std::arg(cur / prev);
    prev = cur;
  }
  const double turns = total / (2.0 * std::numbers::pi);
  const double rounded = std::round(turns);
  require(std::abs(turns - rounded) < 0.01, ErrorKind::Undersampling,
          "winding sum " + std::to_string(turns) + " is not close to an integer");
  return static_cast<int>(rounded);
}

inline int default_winding_samples(const GaugeSpec& g) { return 64 * (1 + g.total_abs()); }

// Winding of mu over the part of the boundary where B > 0.
inline int predicted_sf(const GaugeSpec& g, const DomainSpec& d) {
  validate(g, d);
  int sf = 0;
  for (const BoundaryComponent& c : positive_boundary(d)) sf += winding_number(g, d, c, default_winding_samples(g));
  return sf;
}

// ---------------------------------------------------------------------------
// Lattice link phases

// Phase on every nearest-neighbour link of a GridMask's full box. The x-link
// from cell (i,j) to (i+1,j) is stored at x_links[j*(nx-1)+i]; the y-link from
// (i,j) to (i,j+1) at y_links[j*nx+i]. Each entry is
// exp(i s(t) sum_k w_k dtheta_k) with dtheta_k the principal-value angle
// increment of the link as seen from hole center k.
struct LinkField {
  double t = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<cplx> x_links;
  std::vector<cplx> y_links;

  cplx x_link(int i, int j) const { return x_links[static_cast<std::size_t>(j) * (nx - 1) + i]; }
  cplx y_link(int i, int j) const { return y_links[static_cast<std::size_t>(j) * nx + i]; }

  // Product of link phases around the plaquette with lower-left cell (i,j), counterclockwise.
  cplx plaquette(int i, int j) const {
    return x_link(i, j) * y_link(i + 1, j) * std::conj(x_link(i, j + 1)) * std::conj(y_link(i, j));
  }
};

inline double angle_increment(Vec2 center, Vec2 from, Vec2 to) {
  const Vec2 a = from - center;
  const Vec2 b = to - center;
  // arg(b / a) in (-pi, pi]
  return std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
}

namespace detail {
inline bool on_link_lines(const GridMask& m, Vec2 p, double tol) {
  const double fx = (p.x - m.x0()) / m.spacing() - 0.5;
  const double fy = (p.y - m.y0()) / m.spacing() - 0.5;
  return std::abs(fx - std::round(fx)) < tol || std::abs(fy - std::round(fy)) < tol;
}
}  // namespace detail

// Returns d with every hole center that lies on a grid line through cell
// centers (hence possibly on a link or a site) moved by h/7 in x and y.
inline DomainSpec nudge_hole_centers(const DomainSpec& d, const GridMask& m) {
  std::vector<Vec2> centers;
  bool moved = false;
  for (const Hole& h : d.holes()) {
    Vec2 c = h.circle.center;
    if (detail::on_link_lines(m, c, 1e-6)) {
      c = c + Vec2{m.spacing() / 7.0, m.spacing() / 7.0};
      moved = true;
    }
    centers.push_back(c);
  }
  return moved ? d.with_hole_centers(std::move(centers)) : d;
}

inline LinkField link_phases(const GaugeSpec& g, const DomainSpec& d, const GridMask& mask, double t) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::Precondition, "t must lie in [0,1]");
  validate(g, d);
  for (auto [k, w] : g.windings)
    require(w == 0 || !detail::on_link_lines(mask, d.hole(k).circle.center, 1e-9), ErrorKind::Singularity,
            "hole " + std::to_string(k) + " center lies on a grid link line; nudge it off the grid");
  const double s = g.schedule(t);
  LinkField f;
  f.t = t;
  f.nx = mask.nx();
  f.ny = mask.ny();
  f.x_links.assign(static_cast<std::size_t>(mask.nx() - 1) * mask.ny(), cplx{1.0, 0.0});
  f.y_links.assign(static_cast<std::size_t>(mask.nx()) * (mask.ny() - 1), cplx{1.0, 0.0});
  if (s == 0.0) return f;
  auto phase = [&](Vec2 a, Vec2 b) {
    double acc = 0.0;
    for (auto [k, w] : g.windings)
      if (w != 0) acc += w * angle_increment(d.hole(k).circle.center, a, b);
    return std::polar(1.0, s * acc);
  };
  for (int j = 0; j < mask.ny(); ++j)
    for (int i = 0; i + 1 < mask.nx(); ++i)
      f.x_links[static_cast<std::size_t>(j) * (mask.nx() - 1) + i] = phase(mask.center(i, j), mask.center(i + 1, j));
  for (int j = 0; j + 1 < mask.ny(); ++j)
    for (int i = 0; i < mask.nx(); ++i)
      f.y_links[static_cast<std::size_t>(j) * mask.nx() + i] = phase(mask.center(i, j), mask.center(i, j + 1));
  return f;
}

}  // namespace diracflow

#endif
