#ifndef DIRACFLOW_FLOW_HPP
#define DIRACFLOW_FLOW_HPP

// Spectral flow of a sampled one-parameter family.
//
// Ladder form: a partition 0 = t_0 < ... < t_{n+1} = 1 and levels
// gamma_1..gamma_{n+1} with gamma_1 = gamma_{n+1} <= 0, each gamma_j at least
// gap_margin away from every sampled eigenvalue on [t_{j-1}, t_j]; then
//   sf = sum_{j=1..n} m_j sign(gamma_j - gamma_{j+1}),
// m_j the number of eigenvalues of the sample at t_j between the two levels.
//
// Tracking form: nearest-neighbour matching of eigenvalues between
// consecutive samples, counting sign changes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "diracflow/eigensolver.hpp"
#include "diracflow/error.hpp"

namespace diracflow {

struct FlowOptions {
  double gap_margin = 1e-3;   // same units as the sampled eigenvalues
  double tol_mult = 1e-6;
  int max_depth = 12;
  int initial_samples = 17;   // including both endpoints
  double level_reach = 0.5;   // |gamma| <= level_reach * window
  int workers = 1;
  bool tracking = true;
  // Interior initial samples sit this fraction of a step past the uniform grid,
  // so that symmetric parameter values such as t = 1/2 are never sampled.
  double grid_offset = 0.0381966;
};

struct GammaLadder {
  std::vector<double> t;      // t_0 .. t_{n+1}
  std::vector<double> gamma;  // gamma_1 .. gamma_{n+1}
  std::size_t intervals() const { return gamma.size(); }
};

struct RefinementRequest {
  double t_lo = 0.0;
  double t_hi = 1.0;
  std::string reason;
  bool resolvable = true;  // false when refining t cannot help
};

struct LadderOutcome {
  std::optional<GammaLadder> ladder;
  std::optional<RefinementRequest> request;
};

struct Crossing {
  double t = 0.0;
  int direction = 0;
};

struct FlowResult {
  int sf = 0;
  std::vector<int> m;                 // m_1 .. m_n
  std::vector<Crossing> crossings;    // from tracking
  bool tracking_complete = false;
  int tracking_sf = 0;
  GammaLadder ladder;
  int predicted = 0;
  bool agreement = false;
  bool inconclusive = false;
  int refinement_depth = 0;
  double epsilon = 0.0;               // endpoint shift: the family A(t) + epsilon was counted
  double endpoint_defect = 0.0;       // max entrywise |spec(0) - spec(1)|
  std::size_t samples = 0;
  double narrowest_gap = std::numeric_limits<double>::infinity();
  double narrowest_gap_t = 0.0;
  std::string diagnostics;
};

// ---------------------------------------------------------------------------
// Level sets

namespace detail {

struct Span {
  double lo, hi;
};

// Closed sub-intervals of [-reach, reach] at distance >= margin from all values.
inline std::vector<Span> allowed_levels(const std::vector<double>& ev, double margin, double reach) {
  std::vector<Span> out;
  double cur = -reach;
  for (double v : ev) {
    const double lo = v - margin, hi = v + margin;
    if (hi < cur) continue;
    if (lo > reach) break;
    if (lo > cur) out.push_back({cur, std::min(lo, reach)});
    cur = std::max(cur, hi);
  }
  if (cur < reach) out.push_back({cur, reach});
  // drop degenerate pieces that only touch a forbidden zone
  std::erase_if(out, [](const Span& s) { return s.hi <= s.lo; });
  return out;
}

inline std::vector<Span> intersect(const std::vector<Span>& a, const std::vector<Span>& b) {
  std::vector<Span> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].lo, b[j].lo), hi = std::min(a[i].hi, b[j].hi);
    if (hi > lo) out.push_back({lo, hi});
    (a[i].hi < b[j].hi) ? ++i : ++j;
  }
  return out;
}

inline std::int64_t count_below_level(const SpectrumSample& s, double level) {
  return s.count_below + std::count_if(s.eigenvalues.begin(), s.eigenvalues.end(), [&](double v) { return v < level; });
}

inline std::vector<Span> subtract(const std::vector<Span>& s, double lo, double hi) {
  std::vector<Span> out;
  for (const Span& p : s) {
    if (p.hi <= lo || p.lo >= hi) {
      out.push_back(p);
      continue;
    }
    if (p.lo < lo) out.push_back({p.lo, lo});
    if (p.hi > hi) out.push_back({hi, p.hi});
  }
  return out;
}

inline double neighbour_gap(const std::vector<double>& ev, std::size_t i) {
  double g = std::numeric_limits<double>::infinity();
  if (i > 0) g = std::min(g, ev[i] - ev[i - 1]);
  if (i + 1 < ev.size()) g = std::min(g, ev[i + 1] - ev[i]);
  return g;
}

inline std::size_t nearest(const std::vector<double>& ev, double x) {
  auto it = std::lower_bound(ev.begin(), ev.end(), x);
  std::size_t i = static_cast<std::size_t>(it - ev.begin());
  if (i == ev.size()) return i - 1;
  if (i > 0 && std::abs(ev[i - 1] - x) <= std::abs(ev[i] - x)) return i - 1;
  return i;
}

// Eigenvalues that cross each other (exactly, when the operator splits into
// independent blocks) defeat nearest matching at any step size. Such a group
// is matched as a whole: the k-th smallest member is a continuous function of
// t, so the groups at a and b pair up in sorted order. Starting from a[i] and
// b[j], the group absorbs every eigenvalue within its own width until stable.
// It is accepted when both ends hold the same number of members and each
// sorted pair moves by at most half the distance to the nearest non-member.
struct Cluster {
  std::size_t a0 = 0, a1 = 0, b0 = 0, b1 = 0;  // half-open member ranges
  double lo = 0.0, hi = 0.0;
  double shift = 0.0;  // largest move of a sorted pair
};

inline std::optional<Cluster> match_cluster(const std::vector<double>& a, const std::vector<double>& b,
                                            std::size_t i, std::size_t j) {
  Cluster c{i, i + 1, j, j + 1, std::min(a[i], b[j]), std::max(a[i], b[j]), 0.0};
  for (;;) {
    const double pad = c.hi - c.lo;
    auto lo_of = [&](const std::vector<double>& v) {
      return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), c.lo - pad) - v.begin());
    };
    auto hi_of = [&](const std::vector<double>& v) {
      return static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), c.hi + pad) - v.begin());
    };
    const Cluster n{lo_of(a), hi_of(a), lo_of(b), hi_of(b), c.lo, c.hi, 0.0};
    if (n.a0 == c.a0 && n.a1 == c.a1 && n.b0 == c.b0 && n.b1 == c.b1) break;
    c = n;
    if (c.a1 > c.a0) c.lo = std::min(c.lo, a[c.a0]), c.hi = std::max(c.hi, a[c.a1 - 1]);
    if (c.b1 > c.b0) c.lo = std::min(c.lo, b[c.b0]), c.hi = std::max(c.hi, b[c.b1 - 1]);
  }
  if (c.a1 - c.a0 != c.b1 - c.b0) return std::nullopt;
  for (std::size_t k = 0; k < c.a1 - c.a0; ++k) c.shift = std::max(c.shift, std::abs(b[c.b0 + k] - a[c.a0 + k]));
  double outer = std::numeric_limits<double>::infinity();
  if (c.a0 > 0) outer = std::min(outer, c.lo - a[c.a0 - 1]);
  if (c.b0 > 0) outer = std::min(outer, c.lo - b[c.b0 - 1]);
  if (c.a1 < a.size()) outer = std::min(outer, a[c.a1] - c.hi);
  if (c.b1 < b.size()) outer = std::min(outer, b[c.b1] - c.hi);
  if (c.shift > 0.5 * outer) return std::nullopt;
  return c;
}

// Levels usable on the whole step from a to b: allowed at both samples and not
// crossed in between.
//
// Complete spectra (count_below covers everything below the window) compare
// the number of eigenvalues below the level at both ends. Inside one
// intersected span neither sample has an eigenvalue, so that number is
// constant there and one probe per span decides.
//
// Filtered spectra drop eigenvalues that still enter count_below, so there the
// eigenvalues within reach are matched one-to-one instead, and every matched
// pair blocks the range it sweeps. A pair too close to its neighbours is
// matched as a cluster that blocks its whole hull. An unresolved step (an
// unmatched eigenvalue, or a cluster moving too far) yields no levels.
inline std::vector<Span> step_levels(const SpectrumSample& a, const SpectrumSample& b, double margin, double reach) {
  std::vector<Span> both = intersect(allowed_levels(a.eigenvalues, margin, reach),
                                     allowed_levels(b.eigenvalues, margin, reach));
  if (!a.meta.filtered && !b.meta.filtered) {
    std::erase_if(both, [&](const Span& p) {
      const double mid = 0.5 * (p.lo + p.hi);
      return count_below_level(a, mid) != count_below_level(b, mid);
    });
    return both;
  }
  const std::vector<double>& ea = a.eigenvalues;
  const std::vector<double>& eb = b.eigenvalues;
  const double band = reach + margin;
  std::vector<char> hit(eb.size(), 0), done(ea.size(), 0);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (done[i]) continue;
    if (eb.empty()) {
      if (std::abs(ea[i]) <= band) return {};
      continue;
    }
    const std::size_t j = nearest(eb, ea[i]);
    const bool outside = std::abs(ea[i]) > band;
    if (outside && std::abs(eb[j]) > band) continue;
    const double step = std::abs(eb[j] - ea[i]);
    const bool clean = step <= 0.5 * std::min(neighbour_gap(ea, i), neighbour_gap(eb, j)) && nearest(ea, eb[j]) == i;
    if (!clean) {
      // An eigenvalue beyond the band may just have left the window; whatever
      // enters the band instead stays unmatched below.
      if (outside) continue;
      const std::optional<Cluster> c = match_cluster(ea, eb, i, j);
      if (!c) return {};
      for (std::size_t k = c->a0; k < c->a1; ++k) done[k] = 1;
      for (std::size_t k = c->b0; k < c->b1; ++k) hit[k] = 1;
      both = subtract(both, c->lo - margin, c->hi + margin);
      continue;
    }
    hit[j] = 1;
    both = subtract(both, std::min(ea[i], eb[j]) - margin, std::max(ea[i], eb[j]) + margin);
  }
  for (std::size_t j = 0; j < eb.size(); ++j) {
    if (std::abs(eb[j]) <= band && !hit[j]) return {};
  }
  return both;
}

inline bool contains(const std::vector<Span>& s, double x) {
  return std::any_of(s.begin(), s.end(), [&](const Span& p) { return p.lo <= x && x <= p.hi; });
}

inline double closest_to_zero(const std::vector<Span>& s) {
  double best = std::numeric_limits<double>::infinity();
  for (const Span& p : s) {
    const double c = std::clamp(0.0, p.lo, p.hi);
    if (std::abs(c) < std::abs(best)) best = c;
  }
  return best;
}

inline std::vector<double> shifted(const std::vector<double>& ev, double z) {
  std::vector<double> out(ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) out[i] = ev[i] - z;
  return out;
}

inline void check_samples(const std::vector<SpectrumSample>& s) {
  require(s.size() >= 2, ErrorKind::Precondition, "need at least the two endpoint samples");
  require(s.front().t == 0.0 && s.back().t == 1.0, ErrorKind::Precondition, "samples must include t = 0 and t = 1");
  for (std::size_t i = 1; i < s.size(); ++i)
    require(s[i].t > s[i - 1].t, ErrorKind::Precondition, "samples must be strictly increasing in t");
}

inline double window_of(const std::vector<SpectrumSample>& s) {
  double w = std::numeric_limits<double>::infinity();
  for (const SpectrumSample& x : s) w = std::min(w, x.window > 0.0 ? x.window : std::numeric_limits<double>::infinity());
  return std::isfinite(w) ? w : 1.0;
}

}  // namespace detail

// Level at which the endpoint spectra are counted. Zero unless an endpoint
// eigenvalue lies within gap_margin of zero; then the level moves to the middle
// of the gap below the near-zero cluster (the family is shifted by epsilon = -level).
inline double endpoint_level(const std::vector<SpectrumSample>& s, double gap_margin) {
  std::vector<double> ev = s.front().eigenvalues;
  ev.insert(ev.end(), s.back().eigenvalues.begin(), s.back().eigenvalues.end());
  std::sort(ev.begin(), ev.end());
  double near_lo = std::numeric_limits<double>::infinity();
  for (double v : ev)
    if (std::abs(v) < gap_margin) near_lo = std::min(near_lo, v);
  if (!std::isfinite(near_lo)) return 0.0;
  double below = -detail::window_of(s);
  for (double v : ev)
    if (v < near_lo - gap_margin) below = std::max(below, v);
  return 0.5 * (below + near_lo);
}

// Greedy ladder on samples whose eigenvalues are already shifted so that the
// counting level is zero. Intervals are extended as far as a common level
// exists; levels are chosen closest to zero.
inline LadderOutcome build_ladder(const std::vector<SpectrumSample>& samples, double gap_margin,
                                  double level_reach = 0.5) {
  detail::check_samples(samples);
  const double reach = level_reach * detail::window_of(samples);
  const std::size_t last = samples.size() - 1;
  std::vector<detail::Span> end_lo = detail::allowed_levels(samples[0].eigenvalues, gap_margin, reach);
  std::vector<detail::Span> end_hi = detail::allowed_levels(samples[last].eigenvalues, gap_margin, reach);
  // step[k] covers samples k and k+1
  std::vector<std::vector<detail::Span>> step(last);
  for (std::size_t k = 0; k < last; ++k) step[k] = detail::step_levels(samples[k], samples[k + 1], gap_margin, reach);

  LadderOutcome out;
  auto request = [&](std::size_t i, std::size_t j, const std::string& why) {
    out.request = RefinementRequest{samples[i].t, samples[j].t, why};
    return out;
  };

  // g* = 0 requires both endpoint spectra to keep gap_margin from zero.
  const double gstar = 0.0;
  if (!detail::contains(end_lo, gstar) || !detail::contains(end_hi, gstar)) {
    request(0, last, "an endpoint eigenvalue lies within gap_margin of the counting level");
    out.request->resolvable = false;
    return out;
  }

  // First interval: level g*, extended maximally.
  std::size_t e0 = 0;
  while (e0 < last && detail::contains(step[e0], gstar)) ++e0;
  GammaLadder lad;
  lad.t.push_back(samples[0].t);
  if (e0 == last) {
    lad.t.push_back(samples[last].t);
    lad.gamma.push_back(gstar);
    out.ladder = std::move(lad);
    return out;
  }
  // k*: first sample from which g* stays usable up to t = 1.
  std::size_t kstar = last;
  while (kstar > 0 && detail::contains(step[kstar - 1], gstar)) --kstar;

  if (e0 == 0) return request(0, 1, "the counting level is blocked right after t = 0");
  if (kstar == last) return request(last - 1, last, "the counting level is blocked right before t = 1");
  lad.gamma.push_back(gstar);
  std::size_t s = e0;
  lad.t.push_back(samples[s].t);
  while (s < kstar) {
    std::vector<detail::Span> cur = step[s];
    if (cur.empty()) return request(s, s + 1, "no level of width 2*gap_margin persists across this step");
    std::size_t e = s + 1;
    while (e < kstar) {
      std::vector<detail::Span> nxt = detail::intersect(cur, step[e]);
      if (nxt.empty()) break;
      cur = std::move(nxt);
      ++e;
    }
    lad.gamma.push_back(detail::closest_to_zero(cur));
    lad.t.push_back(samples[e].t);
    s = e;
  }
  lad.gamma.push_back(gstar);
  lad.t.push_back(samples[last].t);
  out.ladder = std::move(lad);
  return out;
}

// Eigenvalue count strictly between two levels at one sample, counting clusters
// (values within tol of each other) by their size. A cluster within tol of a
// level invalidates the count.
inline std::optional<int> count_between(const std::vector<double>& ev, double a, double b, double tol) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  int m = 0;
  for (double v : ev) {
    if (std::abs(v - lo) <= tol || std::abs(v - hi) <= tol) return std::nullopt;
    if (v > lo && v < hi) ++m;
  }
  return m;
}

inline std::optional<FlowResult> spectral_flow(const std::vector<SpectrumSample>& samples, const GammaLadder& lad,
                                               double tol_mult = 1e-6) {
  detail::check_samples(samples);
  std::map<double, const SpectrumSample*> at;
  for (const SpectrumSample& s : samples) at[s.t] = &s;
  FlowResult r;
  r.ladder = lad;
  const std::size_t n = lad.gamma.size() - 1;
  for (std::size_t j = 0; j < n; ++j) {
    auto it = at.find(lad.t[j + 1]);
    require(it != at.end(), ErrorKind::Precondition, "ladder partition point has no sample");
    const std::optional<int> mj = count_between(it->second->eigenvalues, lad.gamma[j], lad.gamma[j + 1], tol_mult);
    if (!mj) return std::nullopt;
    r.m.push_back(*mj);
    const double diff = lad.gamma[j] - lad.gamma[j + 1];
    r.sf += *mj * (diff > 0 ? 1 : diff < 0 ? -1 : 0);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Tracking

struct TrackingOutcome {
  bool complete = false;
  int sf = 0;
  std::vector<Crossing> crossings;
  std::optional<RefinementRequest> request;
};


// Matches eigenvalues within |lambda| <= band between consecutive samples. A
// step is accepted when each match moves by at most half the neighbour gap
// on both sides, or belongs to a resolved cluster, and the matching is
// one-to-one.
inline TrackingOutcome track_crossings(const std::vector<SpectrumSample>& samples, double band) {
  detail::check_samples(samples);
  TrackingOutcome out;
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    const std::vector<double>& a = samples[k].eigenvalues;
    const std::vector<double>& b = samples[k + 1].eigenvalues;
    auto bad = [&](const std::string& why) {
      out.request = RefinementRequest{samples[k].t, samples[k + 1].t, why};
      return out;
    };
    std::vector<int> used(b.size(), 0), done(a.size(), 0);
    int matched_inner = 0;
    auto pair = [&](std::size_t i, std::size_t j) {
      if (std::abs(b[j]) <= 0.5 * band) ++matched_inner;
      const bool neg_a = a[i] < 0.0, neg_b = b[j] < 0.0;
      if (neg_a != neg_b) {
        const double f = a[i] / (a[i] - b[j]);
        out.crossings.push_back({samples[k].t + f * (samples[k + 1].t - samples[k].t), neg_a ? 1 : -1});
        out.sf += neg_a ? 1 : -1;
      }
    };
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (done[i] || std::abs(a[i]) > band) continue;
      if (b.empty()) return bad("eigenvalue disappeared");
      const std::size_t j = detail::nearest(b, a[i]);
      const double step = std::abs(b[j] - a[i]);
      const double limit = 0.5 * std::min(detail::neighbour_gap(a, i), detail::neighbour_gap(b, j));
      if (step > 0.5 * band) return bad("eigenvalue step exceeds half the band");
      if (step <= limit) {
        if (used[j]++) return bad("ambiguous eigenvalue matching");
        pair(i, j);
        continue;
      }
      // Crossing eigenvalues pair up in sorted order; the zero crossings of
      // the group do not depend on which branch is which.
      const std::optional<detail::Cluster> c = detail::match_cluster(a, b, i, j);
      if (!c || c->shift > 0.5 * band) return bad("eigenvalue step exceeds half the neighbour gap");
      for (std::size_t m = 0; m < c->a1 - c->a0; ++m) {
        if (used[c->b0 + m]++) return bad("ambiguous eigenvalue matching");
        done[c->a0 + m] = 1;
        pair(c->a0 + m, c->b0 + m);
      }
    }
    int inner_b = 0;
    for (double v : b) inner_b += std::abs(v) <= 0.5 * band;
    if (inner_b != matched_inner) return bad("an eigenvalue entered the tracking band from nowhere");
  }
  out.complete = true;
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive driver

using Sampler = std::function<SpectrumSample(double t)>;

namespace detail {

inline std::vector<SpectrumSample> sample_many(const Sampler& f, const std::vector<double>& ts, int workers) {
  std::vector<SpectrumSample> out(ts.size());
  if (workers <= 1 || ts.size() <= 1) {
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] = f(ts[i]);
    return out;
  }
  std::size_t next = 0;
  while (next < ts.size()) {
    std::vector<std::future<SpectrumSample>> batch;
    for (int w = 0; w < workers && next < ts.size(); ++w, ++next)
      batch.push_back(std::async(std::launch::async, f, ts[next]));
    for (std::size_t b = 0; b < batch.size(); ++b) out[next - batch.size() + b] = batch[b].get();
  }
  return out;
}

inline double endpoint_defect(const SpectrumSample& a, const SpectrumSample& b) {
  if (a.eigenvalues.size() != b.eigenvalues.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.eigenvalues.size(); ++i) d = std::max(d, std::abs(a.eigenvalues[i] - b.eigenvalues[i]));
  return d;
}

}  // namespace detail

struct FlowRun {
  FlowResult result;
  std::vector<SpectrumSample> samples;  // every sample taken, ascending in t
};

inline FlowRun run_flow_samples(const Sampler& sampler, int predicted, const FlowOptions& opt = {}) {
  require(opt.initial_samples >= 2, ErrorKind::Precondition, "need at least two initial samples");
  std::vector<double> ts;
  require(opt.grid_offset >= 0.0 && opt.grid_offset < 0.5, ErrorKind::Precondition, "grid_offset must lie in [0, 0.5)");
  for (int i = 0; i < opt.initial_samples; ++i) {
    const bool interior = i > 0 && i + 1 < opt.initial_samples;
    ts.push_back((i + (interior ? opt.grid_offset : 0.0)) / (opt.initial_samples - 1));
  }
  std::map<double, SpectrumSample> cache;
  for (SpectrumSample& s : detail::sample_many(sampler, ts, opt.workers)) cache[s.t] = std::move(s);

  const double base_step = 1.0 / (opt.initial_samples - 1);
  const double min_step = base_step * std::ldexp(1.0, -opt.max_depth);
  auto splittable = [&](const RefinementRequest& r) {
    std::vector<double> mids;
    if (!r.resolvable) return mids;
    auto it = cache.lower_bound(r.t_lo);
    for (; it != cache.end() && it->first < r.t_hi; ++it) {
      auto nx = std::next(it);
      if (nx == cache.end()) break;
      if (nx->first - it->first > min_step * (1.0 + 1e-9)) mids.push_back(0.5 * (it->first + nx->first));
    }
    return mids;
  };

  FlowResult result;
  bool tracking_active = opt.tracking;
  TrackingOutcome tr;
  for (;;) {
    std::vector<SpectrumSample> raw;
    for (auto& [t, s] : cache) raw.push_back(s);
    const double level = endpoint_level(raw, opt.gap_margin);
    std::vector<SpectrumSample> sh = raw;
    for (SpectrumSample& s : sh) s.eigenvalues = detail::shifted(s.eigenvalues, level);

    std::vector<double> add;
    if (tracking_active) {
      tr = track_crossings(sh, opt.level_reach * detail::window_of(sh));
      if (!tr.complete) {
        add = splittable(*tr.request);
        if (add.empty()) tracking_active = false;  // keep the incomplete outcome for the record
      }
    }
    if (add.empty()) {
      const LadderOutcome lo = build_ladder(sh, opt.gap_margin, opt.level_reach);
      std::optional<RefinementRequest> req = lo.request;
      std::optional<FlowResult> fr;
      if (!req) {
        fr = spectral_flow(sh, *lo.ladder, opt.tol_mult);
        if (!fr) req = RefinementRequest{0.0, 1.0, "eigenvalue within tol_mult of a ladder level"};
      }
      if (fr) {
        result = std::move(*fr);
        result.epsilon = -level;
        break;
      }
      add = splittable(*req);
      if (add.empty()) {
        result.inconclusive = true;
        std::ostringstream os;
        os << "no valid ladder on [" << req->t_lo << ", " << req->t_hi << "]: " << req->reason;
        result.diagnostics = os.str();
        result.epsilon = -level;
        break;
      }
    }
    for (SpectrumSample& s : detail::sample_many(sampler, add, opt.workers)) cache[s.t] = std::move(s);
  }
  if (opt.tracking) {
    result.crossings = tr.crossings;
    result.tracking_complete = tr.complete;
    result.tracking_sf = tr.sf;
  }
  int depth = 0;
  for (auto it = cache.begin(); std::next(it) != cache.end(); ++it)
    depth = std::max(depth, static_cast<int>(std::lround(std::log2(base_step / (std::next(it)->first - it->first)))));
  result.refinement_depth = depth;
  result.samples = cache.size();
  result.predicted = predicted;
  result.endpoint_defect = detail::endpoint_defect(cache.begin()->second, cache.rbegin()->second);
  for (auto& [t, s] : cache)
    for (double v : s.eigenvalues)
      if (std::abs(v + result.epsilon) < result.narrowest_gap) {
        result.narrowest_gap = std::abs(v + result.epsilon);
        result.narrowest_gap_t = t;
      }
  result.agreement = !result.inconclusive && result.sf == predicted;
  if (!result.inconclusive && result.tracking_complete && result.tracking_sf != result.sf)
    result.diagnostics = "tracking count " + std::to_string(result.tracking_sf) + " differs from ladder count";
  if (opt.tracking && !result.tracking_complete && tr.request)
    result.diagnostics += (result.diagnostics.empty() ? "" : "; ") + std::string("tracking incomplete on [") +
                          std::to_string(tr.request->t_lo) + ", " + std::to_string(tr.request->t_hi) +
                          "]: " + tr.request->reason;
  FlowRun run;
  run.result = std::move(result);
  for (auto& [t, s] : cache) run.samples.push_back(std::move(s));
  return run;
}

inline FlowResult run_flow(const Sampler& sampler, int predicted, const FlowOptions& opt = {}) {
  return run_flow_samples(sampler, predicted, opt).result;
}

}  // namespace diracflow

#endif
