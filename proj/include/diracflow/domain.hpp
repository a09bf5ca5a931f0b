#ifndef DIRACFLOW_DOMAIN_HPP
#define DIRACFLOW_DOMAIN_HPP

// Multiply-connected planar domains bounded by circles: one outer circle and
// k disjoint circular holes. Each boundary circle carries the constant B of the
// local condition (n_y - i n_x) u1 = B u2, stored as sign and magnitude.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "diracflow/error.hpp"

namespace diracflow {

using cplx = std::complex<double>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

struct Circle {
  Vec2 center;
  double radius = 0.0;

  bool contains(Vec2 p) const { return distance(p, center) < radius; }
};

// B on one boundary circle. Sign must be +1 or -1, magnitude > 0.
struct BoundaryData {
  int sign = 1;
  double magnitude = 1.0;

  double value() const { return sign * magnitude; }
  friend bool operator==(const BoundaryData&, const BoundaryData&) = default;
};

inline void validate(const BoundaryData& b) {
  require(b.sign == 1 || b.sign == -1, ErrorKind::InvalidBoundaryData,
          "B sign must be +1 or -1, got " + std::to_string(b.sign));
  require(b.magnitude > 0.0 && std::isfinite(b.magnitude), ErrorKind::InvalidBoundaryData,
          "B magnitude must be positive (B is nonvanishing)");
}

struct Hole {
  Circle circle;
  BoundaryData b;
};

// Holes are indexed 1..m-1 in the order stored; index 0 is the outer circle.
class DomainSpec {
 public:
  DomainSpec(Circle outer, BoundaryData outer_b, std::vector<Hole> holes)
      : outer_(outer), outer_b_(outer_b), holes_(std::move(holes)) {
    validate_geometry();
  }

  const Circle& outer() const { return outer_; }
  const BoundaryData& outer_b() const { return outer_b_; }
  const std::vector<Hole>& holes() const { return holes_; }
  const Hole& hole(int k) const { return holes_.at(static_cast<std::size_t>(k - 1)); }
  int hole_count() const { return static_cast<int>(holes_.size()); }
  // m: number of boundary components.
  int component_count() const { return 1 + hole_count(); }

  bool contains(Vec2 p) const {
    if (!outer_.contains(p)) return false;
    return std::none_of(holes_.begin(), holes_.end(),
                        [&](const Hole& h) { return distance(p, h.circle.center) <= h.circle.radius; });
  }

  // Smallest geometric separation: hole radii, hole-to-outer gaps, hole-to-hole gaps.
  double min_clearance() const {
    double c = outer_.radius;
    for (std::size_t i = 0; i < holes_.size(); ++i) {
      const Circle& a = holes_[i].circle;
      c = std::min(c, a.radius);
      c = std::min(c, outer_.radius - distance(a.center, outer_.center) - a.radius);
      for (std::size_t j = i + 1; j < holes_.size(); ++j) {
        const Circle& b = holes_[j].circle;
        c = std::min(c, distance(a.center, b.center) - a.radius - b.radius);
      }
    }
    return c;
  }

  double area() const {
    double a = std::numbers::pi * outer_.radius * outer_.radius;
    for (const Hole& h : holes_) a -= std::numbers::pi * h.circle.radius * h.circle.radius;
    return a;
  }

  DomainSpec with_hole_centers(std::vector<Vec2> centers) const {
    std::vector<Hole> hs = holes_;
    for (std::size_t i = 0; i < hs.size(); ++i) hs[i].circle.center = centers.at(i);
    return DomainSpec(outer_, outer_b_, std::move(hs));
  }

  DomainSpec with_b_scaled(double factor) const {
    BoundaryData ob = outer_b_;
    ob.magnitude *= factor;
    std::vector<Hole> hs = holes_;
    for (Hole& h : hs) h.b.magnitude *= factor;
    return DomainSpec(outer_, ob, std::move(hs));
  }

 private:
  void validate_geometry() const {
    require(outer_.radius > 0.0 && std::isfinite(outer_.radius), ErrorKind::InvalidGeometry,
            "outer radius must be positive");
    validate(outer_b_);
    for (std::size_t i = 0; i < holes_.size(); ++i) {
      const Circle& a = holes_[i].circle;
      validate(holes_[i].b);
      require(a.radius > 0.0, ErrorKind::InvalidGeometry,
              "hole " + std::to_string(i + 1) + " radius must be positive");
      require(distance(a.center, outer_.center) + a.radius < outer_.radius, ErrorKind::InvalidGeometry,
              "hole " + std::to_string(i + 1) + " is not strictly inside the outer disk");
      for (std::size_t j = i + 1; j < holes_.size(); ++j) {
        const Circle& b = holes_[j].circle;
        require(distance(a.center, b.center) > a.radius + b.radius, ErrorKind::InvalidGeometry,
                "holes " + std::to_string(i + 1) + " and " + std::to_string(j + 1) + " overlap");
      }
    }
  }

  Circle outer_;
  BoundaryData outer_b_;
  std::vector<Hole> holes_;
};

inline DomainSpec build_disk(double radius, BoundaryData b) {
  return DomainSpec(Circle{{0.0, 0.0}, radius}, b, {});
}

inline DomainSpec build_annulus(double r_inner, double r_outer, BoundaryData b_in, BoundaryData b_out) {
  require(r_inner > 0.0 && r_outer > r_inner, ErrorKind::InvalidGeometry,
          "annulus needs 0 < r_inner < r_outer, got r_inner=" + std::to_string(r_inner) +
              " r_outer=" + std::to_string(r_outer));
  return DomainSpec(Circle{{0.0, 0.0}, r_outer}, b_out, {Hole{Circle{{0.0, 0.0}, r_inner}, b_in}});
}

// ---------------------------------------------------------------------------
// Boundary components

enum class ComponentKind { Outer, Hole };
enum class Orientation { CounterClockwise, Clockwise };

struct BoundaryComponent {
  int id = 0;  // 0 = outer, k = hole k
  ComponentKind kind = ComponentKind::Outer;
  Circle circle;
  BoundaryData b;
  // Domain stays to the left: outer circle ccw, holes cw.
  Orientation orientation = Orientation::CounterClockwise;

  bool positive() const { return b.sign > 0; }

  // Point at parameter s in [0,1) traversed with the domain-left orientation.
  Vec2 point(double s) const {
    double phi = 2.0 * std::numbers::pi * s;
    if (orientation == Orientation::Clockwise) phi = -phi;
    return circle.center + circle.radius * Vec2{std::cos(phi), std::sin(phi)};
  }

  // Unit normal pointing into the domain at the given boundary point.
  Vec2 inward_normal(Vec2 p) const {
    Vec2 r = p - circle.center;
    double n = r.norm();
    Vec2 radial{r.x / n, r.y / n};
    return kind == ComponentKind::Outer ? Vec2{-radial.x, -radial.y} : radial;
  }
};

inline std::vector<BoundaryComponent> boundary_components(const DomainSpec& d) {
  std::vector<BoundaryComponent> out;
  out.reserve(static_cast<std::size_t>(d.component_count()));
  out.push_back({0, ComponentKind::Outer, d.outer(), d.outer_b(), Orientation::CounterClockwise});
  for (int k = 1; k <= d.hole_count(); ++k) {
    const Hole& h = d.hole(k);
    out.push_back({k, ComponentKind::Hole, h.circle, h.b, Orientation::Clockwise});
  }
  return out;
}

// Components where B > 0.
inline std::vector<BoundaryComponent> positive_boundary(const DomainSpec& d) {
  std::vector<BoundaryComponent> all = boundary_components(d);
  std::erase_if(all, [](const BoundaryComponent& c) { return !c.positive(); });
  return all;
}

// |<v, sigma(n) v>| for the spanning vector v = (1, (n_y - i n_x)/B) of the
// boundary fiber, with sigma(xi) = [[0, xi_x - i xi_y], [xi_x + i xi_y, 0]] the
// principal symbol of the operator. Vanishes identically for real B.
inline double check_admissibility(Vec2 n, double b) {
  require(b != 0.0 && std::isfinite(b), ErrorKind::InvalidBoundaryData, "B must be nonzero");
  require(std::abs(n.norm() - 1.0) < 1e-12, ErrorKind::Precondition, "normal must have unit length");
  const cplx i{0.0, 1.0};
  const cplx v1{1.0, 0.0};
  const cplx v2 = (n.y - i * n.x) / b;
  const cplx s12 = n.x - i * n.y;
  const cplx s21 = n.x + i * n.y;
  // sigma(n) v
  const cplx w1 = s12 * v2;
  const cplx w2 = s21 * v1;
  return std::abs(std::conj(v1) * w1 + std::conj(v2) * w2);
}

// ---------------------------------------------------------------------------
// Grid rasterization

enum class CellKind : unsigned char { Interior, Exterior, Hole };

struct CellTag {
  CellKind kind = CellKind::Exterior;
  int hole = 0;  // hole index when kind == Hole

  friend bool operator==(const CellTag&, const CellTag&) = default;
};

// Square grid of cells with spacing h. Cell (i, j) has its center at
// (x0 + (i + 1/2) h, y0 + (j + 1/2) h) and is tagged by the region containing
// that center.
class GridMask {
 public:
  GridMask(double h, double x0, double y0, int nx, int ny, std::vector<CellTag> tags)
      : h_(h), x0_(x0), y0_(y0), nx_(nx), ny_(ny), tags_(std::move(tags)) {}

  double spacing() const { return h_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double x0() const { return x0_; }
  double y0() const { return y0_; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
  const CellTag& tag(int i, int j) const { return tags_[index(i, j)]; }
  Vec2 center(int i, int j) const { return {x0_ + (i + 0.5) * h_, y0_ + (j + 0.5) * h_}; }
  bool interior(int i, int j) const { return tag(i, j).kind == CellKind::Interior; }

  std::size_t count(CellKind k) const {
    return static_cast<std::size_t>(
        std::count_if(tags_.begin(), tags_.end(), [k](const CellTag& t) { return t.kind == k; }));
  }
  std::size_t interior_count() const { return count(CellKind::Interior); }

  bool same_grid(const GridMask& o) const {
    return h_ == o.h_ && x0_ == o.x0_ && y0_ == o.y0_ && nx_ == o.nx_ && ny_ == o.ny_;
  }

 private:
  double h_;
  double x0_, y0_;
  int nx_, ny_;
  std::vector<CellTag> tags_;
};

inline CellTag classify(const DomainSpec& d, Vec2 p) {
  for (int k = 1; k <= d.hole_count(); ++k)
    if (distance(p, d.hole(k).circle.center) <= d.hole(k).circle.radius) return {CellKind::Hole, k};
  if (d.outer().contains(p)) return {CellKind::Interior, 0};
  return {CellKind::Exterior, 0};
}

// Rasterize with `margin_cells` extra rows of cells around the outer circle's
// bounding box. The grid is anchored so that the outer center sits on a cell
// corner.
inline GridMask rasterize(const DomainSpec& d, double h, int margin_cells = 0) {
  require(h > 0.0 && std::isfinite(h), ErrorKind::Resolution, "grid spacing must be positive");
  require(h < d.min_clearance() / 4.0, ErrorKind::Resolution,
          "spacing h=" + std::to_string(h) + " too coarse: need h < min clearance / 4 = " +
              std::to_string(d.min_clearance() / 4.0));
  require(margin_cells >= 0, ErrorKind::Precondition, "margin must be non-negative");
  const Vec2 c = d.outer().center;
  const int half = static_cast<int>(std::ceil(d.outer().radius / h)) + margin_cells;
  const int n = 2 * half;
  const double x0 = c.x - half * h;
  const double y0 = c.y - half * h;
  std::vector<CellTag> tags(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      tags[static_cast<std::size_t>(j) * n + i] = classify(d, {x0 + (i + 0.5) * h, y0 + (j + 0.5) * h});
  return GridMask(h, x0, y0, n, n, std::move(tags));
}

// Number of edge-connected components among interior cells.
inline int interior_components(const GridMask& g) {
  std::vector<int> label(static_cast<std::size_t>(g.nx()) * g.ny(), -1);
  std::vector<std::pair<int, int>> stack;
  int comps = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (!g.interior(i, j) || label[g.index(i, j)] >= 0) continue;
      stack.push_back({i, j});
      label[g.index(i, j)] = comps;
      while (!stack.empty()) {
        auto [a, b] = stack.back();
        stack.pop_back();
        const int di[4] = {1, -1, 0, 0};
        const int dj[4] = {0, 0, 1, -1};
        for (int q = 0; q < 4; ++q) {
          int u = a + di[q], v = b + dj[q];
          if (u < 0 || v < 0 || u >= g.nx() || v >= g.ny()) continue;
          if (!g.interior(u, v) || label[g.index(u, v)] >= 0) continue;
          label[g.index(u, v)] = comps;
          stack.push_back({u, v});
        }
      }
      ++comps;
    }
  return comps;
}

// Distance from p to the nearest boundary circle of d.
inline double distance_to_boundary(const DomainSpec& d, Vec2 p) {
  double best = std::abs(distance(p, d.outer().center) - d.outer().radius);
  for (const Hole& h : d.holes())
    best = std::min(best, std::abs(distance(p, h.circle.center) - h.circle.radius));
  return best;
}

}  // namespace diracflow

#endif
