#ifndef DIRACFLOW_HARNESS_HPP
#define DIRACFLOW_HARNESS_HPP

// Experiment configs, sweep expansion, artifact persistence and reports.
//
// Config files are JSON; configs/config.schema.json documents every key.
// Per row (one config on one backend) the runner writes
//   <out>/<id>.<backend>.spectrum.csv   t, eig_1..eig_K ascending in the window
//   <out>/<id>.<backend>.flow.json      flow record, including the row's config
// and the sweep writes <out>/report.csv and <out>/report.txt.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "diracflow/domain.hpp"
#include "diracflow/error.hpp"
#include "diracflow/flow.hpp"
#include "diracflow/gauge.hpp"
#include "diracflow/lattice.hpp"
#include "diracflow/radial.hpp"
#include "diracflow/torus.hpp"

namespace diracflow {

using json = nlohmann::json;

inline constexpr int kExitAgree = 0;
inline constexpr int kExitDisagree = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitUsage = 3;

// Below this many cells per outer diameter the wall-sign calibration and the
// zone filter are not trusted.
inline constexpr int kMinLatticeCells = 48;

enum class Backend { Radial, Lattice, Both };

inline std::string to_string(Backend b) {
  switch (b) {
    case Backend::Radial: return "radial";
    case Backend::Lattice: return "lattice";
    case Backend::Both: return "both";
  }
  return "radial";
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "radial") return Backend::Radial;
  if (s == "lattice") return Backend::Lattice;
  if (s == "both") return Backend::Both;
  fail(ErrorKind::Parse, "backend must be radial, lattice or both, got \"" + s + "\"");
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "quadratic") return ScheduleKind::Quadratic;
  if (s == "ramp") return ScheduleKind::PiecewiseRamp;
  fail(ErrorKind::Parse, "schedule kind must be linear, quadratic or ramp, got \"" + s + "\"");
}

struct HoleConfig {
  Vec2 center;
  double radius = 0.0;
  BoundaryData b;
  int winding = 0;
};

struct LatticeConfig {
  double r_wilson = 1.0;
  double m_wall = 1.0;
  double window = 0.3;  // lattice units
};

struct FlowConfig {
  int initial_samples = 17;
  int max_depth = 12;
  double gap_margin = 1e-3;
  bool tracking = true;
  // Repeat the measurement at twice the resolution; a changed sf makes the row inconclusive.
  bool confirm_refinement = true;
};

struct TorusConfig {
  bool enabled = false;
  bool twisted = true;
};

// Every listed axis multiplies the row count; an empty axis keeps the base value.
struct SweepSpec {
  std::vector<std::vector<int>> windings;  // one winding per hole
  std::vector<std::vector<int>> signs;     // outer sign, then one per hole
  std::vector<Schedule> schedules;
  std::vector<double> b_scales;

  bool empty() const { return windings.empty() && signs.empty() && schedules.empty() && b_scales.empty(); }
};

struct ExperimentConfig {
  std::string name = "experiment";
  Circle outer{{0.0, 0.0}, 2.0};
  BoundaryData outer_b{1, 1.0};
  std::vector<HoleConfig> holes;
  Backend backend = Backend::Radial;
  int radial_n = 256;
  int lattice_cells = 96;  // per outer diameter
  int torus_nt = 24;
  int torus_radial_n = 48;
  double window = 1.5;     // Lambda, physical units
  Schedule schedule;
  LatticeConfig lattice;
  FlowConfig flow;
  TorusConfig torus;
  std::uint64_t seed = 1;
  std::string output = "out";
  SweepSpec sweep;

  DomainSpec domain() const {
    std::vector<Hole> hs;
    for (const HoleConfig& h : holes) hs.push_back(Hole{Circle{h.center, h.radius}, h.b});
    return DomainSpec(outer, outer_b, std::move(hs));
  }

  GaugeSpec gauge() const {
    GaugeSpec g;
    for (std::size_t k = 0; k < holes.size(); ++k) g.windings[static_cast<int>(k) + 1] = holes[k].winding;
    g.schedule = schedule;
    return g;
  }
};

// ---------------------------------------------------------------------------
// Serialization

inline json schedule_to_json(const Schedule& s) {
  return json{{"kind", to_string(s.kind)}, {"ramp_start", s.ramp_start}, {"ramp_end", s.ramp_end}};
}

inline json to_json(const ExperimentConfig& c) {
  json holes = json::array();
  for (const HoleConfig& h : c.holes)
    holes.push_back({{"center", {h.center.x, h.center.y}},
                     {"radius", h.radius},
                     {"b", {{"sign", h.b.sign}, {"magnitude", h.b.magnitude}}},
                     {"winding", h.winding}});
  json j;
  j["name"] = c.name;
  j["domain"] = {{"outer",
                  {{"center", {c.outer.center.x, c.outer.center.y}},
                   {"radius", c.outer.radius},
                   {"b", {{"sign", c.outer_b.sign}, {"magnitude", c.outer_b.magnitude}}}}},
                 {"holes", holes}};
  j["backend"] = to_string(c.backend);
  j["resolution"] = {{"radial_n", c.radial_n},
                     {"lattice_cells", c.lattice_cells},
                     {"torus_nt", c.torus_nt},
                     {"torus_radial_n", c.torus_radial_n}};
  j["window"] = c.window;
  j["schedule"] = schedule_to_json(c.schedule);
  j["lattice"] = {{"r_wilson", c.lattice.r_wilson}, {"m_wall", c.lattice.m_wall}, {"window", c.lattice.window}};
  j["flow"] = {{"initial_samples", c.flow.initial_samples},
               {"max_depth", c.flow.max_depth},
               {"gap_margin", c.flow.gap_margin},
               {"tracking", c.flow.tracking},
               {"confirm_refinement", c.flow.confirm_refinement}};
  j["torus"] = {{"enabled", c.torus.enabled}, {"twisted", c.torus.twisted}};
  j["seed"] = c.seed;
  j["output"] = c.output;
  if (!c.sweep.empty()) {
    json sw = json::object();
    if (!c.sweep.windings.empty()) sw["windings"] = c.sweep.windings;
    if (!c.sweep.signs.empty()) sw["signs"] = c.sweep.signs;
    if (!c.sweep.schedules.empty()) {
      json ss = json::array();
      for (const Schedule& s : c.sweep.schedules) ss.push_back(schedule_to_json(s));
      sw["schedules"] = ss;
    }
    if (!c.sweep.b_scales.empty()) sw["b_scales"] = c.sweep.b_scales;
    j["sweep"] = sw;
  }
  return j;
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

namespace detail {

inline int line_of_key(const std::string& text, const std::string& key) {
  const std::size_t at = text.find("\"" + key + "\"");
  if (at == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
}

// Reads one JSON object, remembering which keys were consumed so that the
// rest can be rejected as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, const std::string& text)
      : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail(ErrorKind::Parse, where() + ": expected an object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return fallback;
    try {
      return it->template get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::Parse, at(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  const json* child(const std::string& key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const {
    const int line = line_of_key(text_, key);
    return key_path(key) + (line > 0 ? " (line " + std::to_string(line) + ")" : "");
  }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        fail(ErrorKind::Parse, "unknown key \"" + it.key() + "\" at " + at(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  const std::string& text_;
  std::vector<std::string> seen_;
};

inline Vec2 read_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail(ErrorKind::Parse, path + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline BoundaryData read_b(const json* j, const std::string& path, const std::string& text) {
  if (!j) return {};
  ObjectReader r(*j, path, text);
  BoundaryData b{r.get<int>("sign", 1), r.get<double>("magnitude", 1.0)};
  r.finish();
  if (b.sign != 1 && b.sign != -1) fail(ErrorKind::Parse, path + ".sign must be +1 or -1");
  if (!(b.magnitude > 0.0)) fail(ErrorKind::Parse, path + ".magnitude must be positive");
  return b;
}

inline Schedule read_schedule(const json& j, const std::string& path, const std::string& text) {
  Schedule s;
  if (j.is_string()) {
    s.kind = schedule_kind_from_string(j.get<std::string>());
    return s;
  }
  ObjectReader r(j, path, text);
  s.kind = schedule_kind_from_string(r.get<std::string>("kind", "linear"));
  s.ramp_start = r.get<double>("ramp_start", s.ramp_start);
  s.ramp_end = r.get<double>("ramp_end", s.ramp_end);
  r.finish();
  if (!(0.0 <= s.ramp_start && s.ramp_start < s.ramp_end && s.ramp_end <= 1.0))
    fail(ErrorKind::Parse, path + ": need 0 <= ramp_start < ramp_end <= 1");
  return s;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Parse, what); };
  if (c.name.empty()) bad("name must not be empty");
  if (c.radial_n < 32) bad("resolution.radial_n must be >= 32");
  if (c.lattice_cells < 1) bad("resolution.lattice_cells must be positive");
  if (c.torus_nt < 8) bad("resolution.torus_nt must be >= 8");
  if (c.torus_radial_n < 32) bad("resolution.torus_radial_n must be >= 32");
  if (!(c.window > 0.0)) bad("window must be positive");
  if (c.flow.initial_samples < 3) bad("flow.initial_samples must be >= 3");
  if (c.flow.max_depth < 0 || c.flow.max_depth > 30) bad("flow.max_depth must lie in [0, 30]");
  if (!(c.flow.gap_margin > 0.0)) bad("flow.gap_margin must be positive");
  const std::size_t nh = c.holes.size();
  for (std::size_t i = 0; i < c.sweep.windings.size(); ++i)
    if (c.sweep.windings[i].size() != nh)
      bad("sweep.windings[" + std::to_string(i) + "] needs one winding per hole (" + std::to_string(nh) + ")");
  for (std::size_t i = 0; i < c.sweep.signs.size(); ++i) {
    if (c.sweep.signs[i].size() != nh + 1)
      bad("sweep.signs[" + std::to_string(i) + "] needs the outer sign plus one per hole (" +
          std::to_string(nh + 1) + ")");
    for (int s : c.sweep.signs[i])
      if (s != 1 && s != -1) bad("sweep.signs entries must be +1 or -1");
  }
  for (double x : c.sweep.b_scales)
    if (!(x > 0.0)) bad("sweep.b_scales entries must be positive");
  (void)c.domain();  // geometry checks
}

inline ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("malformed config: ") + e.what());
  }
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader r(root, "", text);
  c.name = r.get<std::string>("name", c.name);

  if (const json* d = r.child("domain")) {
    ObjectReader rd(*d, "domain", text);
    if (const json* o = rd.child("outer")) {
      ObjectReader ro(*o, "domain.outer", text);
      if (const json* p = ro.child("center")) c.outer.center = detail::read_point(*p, "domain.outer.center");
      c.outer.radius = ro.get<double>("radius", c.outer.radius);
      c.outer_b = detail::read_b(ro.child("b"), "domain.outer.b", text);
      ro.finish();
    }
    if (const json* hs = rd.child("holes")) {
      if (!hs->is_array()) fail(ErrorKind::Parse, "domain.holes: expected an array");
      for (std::size_t k = 0; k < hs->size(); ++k) {
        const std::string path = "domain.holes[" + std::to_string(k) + "]";
        ObjectReader rh((*hs)[k], path, text);
        HoleConfig h;
        const json* p = rh.child("center");
        if (!p) fail(ErrorKind::Parse, path + ".center is required");
        h.center = detail::read_point(*p, path + ".center");
        h.radius = rh.get<double>("radius", 0.0);
        h.b = detail::read_b(rh.child("b"), path + ".b", text);
        h.winding = rh.get<int>("winding", 0);
        rh.finish();
        c.holes.push_back(h);
      }
    }
    rd.finish();
  }
  c.backend = backend_from_string(r.get<std::string>("backend", to_string(c.backend)));
  if (const json* res = r.child("resolution")) {
    ObjectReader rr(*res, "resolution", text);
    c.radial_n = rr.get<int>("radial_n", c.radial_n);
    c.lattice_cells = rr.get<int>("lattice_cells", c.lattice_cells);
    c.torus_nt = rr.get<int>("torus_nt", c.torus_nt);
    c.torus_radial_n = rr.get<int>("torus_radial_n", c.torus_radial_n);
    rr.finish();
  }
  c.window = r.get<double>("window", c.window);
  if (const json* s = r.child("schedule")) c.schedule = detail::read_schedule(*s, "schedule", text);
  if (const json* l = r.child("lattice")) {
    ObjectReader rl(*l, "lattice", text);
    c.lattice.r_wilson = rl.get<double>("r_wilson", c.lattice.r_wilson);
    c.lattice.m_wall = rl.get<double>("m_wall", c.lattice.m_wall);
    c.lattice.window = rl.get<double>("window", c.lattice.window);
    rl.finish();
  }
  if (const json* f = r.child("flow")) {
    ObjectReader rf(*f, "flow", text);
    c.flow.initial_samples = rf.get<int>("initial_samples", c.flow.initial_samples);
    c.flow.max_depth = rf.get<int>("max_depth", c.flow.max_depth);
    c.flow.gap_margin = rf.get<double>("gap_margin", c.flow.gap_margin);
    c.flow.tracking = rf.get<bool>("tracking", c.flow.tracking);
    c.flow.confirm_refinement = rf.get<bool>("confirm_refinement", c.flow.confirm_refinement);
    rf.finish();
  }
  if (const json* t = r.child("torus")) {
    ObjectReader rt(*t, "torus", text);
    c.torus.enabled = rt.get<bool>("enabled", c.torus.enabled);
    c.torus.twisted = rt.get<bool>("twisted", c.torus.twisted);
    rt.finish();
  }
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.output = r.get<std::string>("output", c.output);
  if (const json* sw = r.child("sweep")) {
    ObjectReader rs(*sw, "sweep", text);
    c.sweep.windings = rs.get<std::vector<std::vector<int>>>("windings", {});
    c.sweep.signs = rs.get<std::vector<std::vector<int>>>("signs", {});
    if (const json* ss = rs.child("schedules")) {
      if (!ss->is_array()) fail(ErrorKind::Parse, "sweep.schedules: expected an array");
      for (std::size_t k = 0; k < ss->size(); ++k)
        c.sweep.schedules.push_back(detail::read_schedule((*ss)[k], "sweep.schedules[" + std::to_string(k) + "]", text));
    }
    c.sweep.b_scales = rs.get<std::vector<double>>("b_scales", {});
    rs.finish();
  }
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::Io, "cannot read config " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Sweep expansion

inline std::string sign_code(int s) { return s > 0 ? "p" : "m"; }

inline std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> out{base};
  out.front().sweep = {};
  auto multiply = [&](auto n, auto apply) {
    if (n == 0) return;
    std::vector<ExperimentConfig> next;
    for (const ExperimentConfig& c : out)
      for (std::size_t i = 0; i < n; ++i) {
        ExperimentConfig x = c;
        apply(x, i);
        next.push_back(std::move(x));
      }
    out = std::move(next);
  };
  const SweepSpec& sw = base.sweep;
  multiply(sw.windings.size(), [&](ExperimentConfig& x, std::size_t i) {
    std::string tag = "-w";
    for (std::size_t k = 0; k < x.holes.size(); ++k) {
      x.holes[k].winding = sw.windings[i][k];
      tag += (k ? "." : "") + std::to_string(sw.windings[i][k]);
    }
    x.name += tag;
  });
  multiply(sw.signs.size(), [&](ExperimentConfig& x, std::size_t i) {
    std::string tag = "-b";
    x.outer_b.sign = sw.signs[i][0];
    tag += sign_code(sw.signs[i][0]);
    for (std::size_t k = 0; k < x.holes.size(); ++k) {
      x.holes[k].b.sign = sw.signs[i][k + 1];
      tag += sign_code(sw.signs[i][k + 1]);
    }
    x.name += tag;
  });
  multiply(sw.schedules.size(), [&](ExperimentConfig& x, std::size_t i) {
    x.schedule = sw.schedules[i];
    x.name += "-" + to_string(x.schedule.kind);
  });
  multiply(sw.b_scales.size(), [&](ExperimentConfig& x, std::size_t i) {
    const double f = sw.b_scales[i];
    x.outer_b.magnitude *= f;
    for (HoleConfig& h : x.holes) h.b.magnitude *= f;
    std::ostringstream os;
    os << "-x" << f;
    x.name += os.str();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Prediction

struct ComponentPrediction {
  int id = 0;
  int b_sign = 1;
  int winding = 0;  // winding of mu along the domain-left orientation
};

struct Prediction {
  std::vector<ComponentPrediction> components;
  int total = 0;
};

inline Prediction predict(const ExperimentConfig& c) {
  const DomainSpec d = c.domain();
  const GaugeSpec g = c.gauge();
  Prediction p;
  for (const BoundaryComponent& bc : boundary_components(d))
    p.components.push_back({bc.id, bc.b.sign, winding_number(g, d, bc, default_winding_samples(g))});
  p.total = predicted_sf(g, d);
  return p;
}

// ---------------------------------------------------------------------------
// Rows

struct FlowRow {
  std::string id;
  std::string backend;
  int predicted = 0;
  std::optional<int> measured;
  bool agreement = false;
  bool inconclusive = false;
  int crossings = 0;
  int refinement_depth = 0;
  double runtime = 0.0;  // seconds
  int resolution = 0;
  std::optional<int> torus_index;
  std::optional<int> refined;  // sf at twice the resolution, when that run was conclusive
  std::string error;     // empty unless the row failed
  std::string note;      // why a row is inconclusive

  std::string status() const {
    if (!error.empty()) return "FAILED";
    if (inconclusive) return "INCONCLUSIVE";
    return agreement ? "agree" : "DISAGREE";
  }
};

struct FlowReport {
  std::vector<FlowRow> rows;

  int agree() const { return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const FlowRow& r) { return r.status() == "agree"; })); }
  int disagree() const { return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const FlowRow& r) { return r.status() == "DISAGREE"; })); }
  int unresolved() const { return static_cast<int>(rows.size()) - agree() - disagree(); }

  std::string summary() const {
    std::ostringstream os;
    os << agree() << "/" << rows.size() << " agree";
    if (disagree()) os << ", " << disagree() << " disagree";
    if (unresolved()) os << ", " << unresolved() << " inconclusive or failed";
    return os.str();
  }

  int exit_code() const {
    if (disagree()) return kExitDisagree;
    if (unresolved()) return kExitInconclusive;
    return kExitAgree;
  }

  void sort() {
    std::sort(rows.begin(), rows.end(),
              [](const FlowRow& a, const FlowRow& b) { return std::tie(a.id, a.backend) < std::tie(b.id, b.backend); });
  }
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  return s;
}

// Ragged rows are padded with empty fields to the widest sample.
inline std::string spectrum_csv(const std::vector<SpectrumSample>& samples, const std::string& backend, double window) {
  std::size_t width = 0;
  for (const SpectrumSample& s : samples) width = std::max(width, s.eigenvalues.size());
  std::ostringstream os;
  os << "# backend=" << backend << " window=" << format_number(window) << "\n";
  os << "t";
  for (std::size_t k = 1; k <= width; ++k) os << ",eig_" << k;
  os << "\n";
  for (const SpectrumSample& s : samples) {
    os << format_number(s.t);
    for (std::size_t k = 0; k < width; ++k) {
      os << ",";
      if (k < s.eigenvalues.size()) os << format_number(s.eigenvalues[k]);
    }
    os << "\n";
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + p.string());
}

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json flow_record(const FlowRow& row, const ExperimentConfig& cfg, const FlowResult* fr, const json& torus) {
  json j;
  j["id"] = row.id;
  j["backend"] = row.backend;
  j["config"] = to_json(cfg);
  j["predicted"] = row.predicted;
  j["measured"] = row.measured ? json(*row.measured) : json(nullptr);
  j["agreement"] = row.agreement;
  j["inconclusive"] = row.inconclusive;
  j["crossings"] = row.crossings;
  j["refinement_depth"] = row.refinement_depth;
  j["runtime_s"] = row.runtime;
  j["resolution"] = row.resolution;
  j["error"] = row.error;
  j["refined"] = row.refined ? json(*row.refined) : json(nullptr);
  j["note"] = row.note;
  if (fr) {
    json cr = json::array();
    for (const Crossing& c : fr->crossings) cr.push_back({{"t", c.t}, {"direction", c.direction}});
    j["flow"] = {{"sf", fr->sf},
                 {"m", fr->m},
                 {"ladder", {{"t", fr->ladder.t}, {"gamma", fr->ladder.gamma}}},
                 {"crossings", cr},
                 {"tracking_complete", fr->tracking_complete},
                 {"tracking_sf", fr->tracking_sf},
                 {"epsilon", fr->epsilon},
                 {"endpoint_defect", nullable(fr->endpoint_defect)},
                 {"samples", fr->samples},
                 {"narrowest_gap", nullable(fr->narrowest_gap)},
                 {"narrowest_gap_t", fr->narrowest_gap_t},
                 {"diagnostics", fr->diagnostics}};
  }
  if (!torus.is_null()) j["torus"] = torus;
  return j;
}

// ---------------------------------------------------------------------------
// Calibration cache

struct CalibrationGeometry {
  double r_inner = 0.5;
  double r_outer = 1.5;
  int cells = kMinLatticeCells;  // across the annulus width
};

namespace detail {

inline std::mutex& calibration_mutex() {
  static std::mutex m;
  return m;
}

inline std::map<std::pair<double, double>, WallSignMap>& calibration_cache() {
  static std::map<std::pair<double, double>, WallSignMap> c;
  return c;
}

}  // namespace detail

// Wall-sign map for the given Wilson parameters: taken from the process cache,
// else from <out>/calibration.json when its parameters match, else computed and
// written there.
inline WallSignMap calibrated_wall_signs(const LatticeConfig& lc, const std::filesystem::path& out) {
  std::lock_guard<std::mutex> lock(detail::calibration_mutex());
  auto& cache = detail::calibration_cache();
  const auto key = std::make_pair(lc.r_wilson, lc.m_wall);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::filesystem::path file = out / "calibration.json";
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    json j;
    try {
      in >> j;
      if (j.at("r_wilson").get<double>() == lc.r_wilson && j.at("m_wall").get<double>() == lc.m_wall) {
        WallSignMap m{j.at("positive_b_wall").get<int>()};
        if (m.calibrated()) {
          cache[key] = m;
          return m;
        }
      }
    } catch (const json::exception&) {
      // stale or foreign file: recalibrate below
    }
  }
  CalibrationOptions opt;
  opt.base.r_wilson = lc.r_wilson;
  opt.base.m_wall = lc.m_wall;
  opt.base.window = lc.window;
  const CalibrationGeometry geo;
  const Calibration cal = wall_sign_calibration(geo.r_inner, geo.r_outer, geo.cells, opt);
  json rec = json::array();
  for (const CalibrationRecord& r : cal.records)
    rec.push_back({{"wall_sign", r.wall_sign}, {"w", r.w}, {"mismatch_pos", r.mismatch_pos}, {"mismatch_neg", r.mismatch_neg}});
  json j{{"r_wilson", lc.r_wilson},
         {"m_wall", lc.m_wall},
         {"positive_b_wall", cal.map.positive_b_wall},
         {"annulus", {geo.r_inner, geo.r_outer}},
         {"cells", geo.cells},
         {"records", rec}};
  std::filesystem::create_directories(out);
  write_text(file, j.dump(2) + "\n");
  cache[key] = cal.map;
  return cal.map;
}

// ---------------------------------------------------------------------------
// Running one row

inline int worker_count() {
  const char* env = std::getenv("DIRACFLOW_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  require(end && *end == '\0' && n >= 1 && n <= 256, ErrorKind::Parse,
          std::string("DIRACFLOW_WORKERS must be an integer in [1, 256], got \"") + env + "\"");
  return static_cast<int>(n);
}

struct RowRun {
  FlowRow row;
  std::optional<FlowRun> flow;
  json torus;  // null unless the torus check ran
};

inline double lattice_spacing(const ExperimentConfig& c) { return 2.0 * c.outer.radius / c.lattice_cells; }

inline LatticeParams lattice_params(const ExperimentConfig& c, const WallSignMap& map) {
  LatticeParams p;
  p.h = lattice_spacing(c);
  p.r_wilson = c.lattice.r_wilson;
  p.m_wall = c.lattice.m_wall;
  p.window = c.lattice.window;
  return with_wall_signs(p, c.domain(), map);
}

inline FlowOptions flow_options(const ExperimentConfig& c, Backend b, int workers) {
  FlowOptions fo;
  fo.initial_samples = c.flow.initial_samples;
  fo.max_depth = c.flow.max_depth;
  fo.tracking = c.flow.tracking;
  fo.workers = workers;
  // lattice eigenvalues are physical (divided by h), so the margin scales with 1/h
  fo.gap_margin = b == Backend::Lattice ? c.flow.gap_margin / lattice_spacing(c) : c.flow.gap_margin;
  return fo;
}

inline json torus_record(const IndexResult& ir, const TorusOperator& T) {
  return {{"index", ir.index},
          {"kernel_size", ir.kernel_size},
          {"gap_ratio", nullable(ir.gap_ratio)},
          {"inconclusive", ir.inconclusive},
          {"singular_values", ir.singular_values},
          {"dimension", T.L.rows()},
          {"n_t", T.N_t},
          {"diagnostics", ir.diagnostics}};
}

// Runs one config (no sweep) on one concrete backend. Module errors become a
// failure entry on the row; nothing is thrown for them.
inline RowRun run_row(const ExperimentConfig& cfg, Backend backend, const std::filesystem::path& out, int workers = 1) {
  require(backend != Backend::Both, ErrorKind::Precondition, "run_row needs a concrete backend");
  RowRun rr;
  FlowRow& row = rr.row;
  row.id = cfg.name;
  row.backend = to_string(backend);
  row.resolution = backend == Backend::Radial ? cfg.radial_n : cfg.lattice_cells;
  const auto start = std::chrono::steady_clock::now();
  try {
    const DomainSpec d = cfg.domain();
    const GaugeSpec g = cfg.gauge();
    row.predicted = predicted_sf(g, d);
    if (backend == Backend::Radial) {
      (void)annulus_geometry(d, g);
    } else {
      require(cfg.lattice_cells >= kMinLatticeCells, ErrorKind::Resolution,
              "lattice resolution " + std::to_string(cfg.lattice_cells) + " cells per diameter is below the calibration minimum " +
                  std::to_string(kMinLatticeCells));
    }
    const std::optional<WallSignMap> map =
        backend == Backend::Lattice ? std::optional(calibrated_wall_signs(cfg.lattice, out)) : std::nullopt;

    // One flow measurement of cfg at the given resolution (radial N or lattice cells).
    auto measure = [&](int resolution, std::optional<LatticeModel>& model) {
      ExperimentConfig c = cfg;
      Sampler sampler;
      if (backend == Backend::Radial) {
        c.radial_n = resolution;
        RadialOptions ro;
        ro.N = resolution;
        ro.window = c.window;
        sampler = [d, g, ro](double t) { return assemble_annulus_spectrum(d, g, t, ro); };
      } else {
        c.lattice_cells = resolution;
        model = build_lattice_model(d, lattice_params(c, *map));
        WindowSolveOptions wo;
        wo.seed = c.seed;
        const LatticeModel* m = &*model;
        const double window = c.window;
        sampler = [m, g, window, wo](double t) { return lattice_sample(*m, g, t, window, wo).sample; };
      }
      return run_flow_samples(sampler, row.predicted, flow_options(c, backend, workers));
    };

    std::optional<LatticeModel> model;
    rr.flow = measure(row.resolution, model);
    const FlowResult& fr = rr.flow->result;
    row.measured = fr.sf;
    row.agreement = fr.agreement;
    row.inconclusive = fr.inconclusive;
    row.crossings = static_cast<int>(fr.crossings.size());
    row.refinement_depth = fr.refinement_depth;
    if (fr.inconclusive) row.note = fr.diagnostics;

    if (cfg.flow.confirm_refinement && !row.inconclusive) {
      std::optional<LatticeModel> fine_model;
      const FlowResult fine = measure(2 * row.resolution, fine_model).result;
      if (fine.inconclusive) {
        row.inconclusive = true;
        row.note = "refinement run at resolution " + std::to_string(2 * row.resolution) + " was inconclusive: " + fine.diagnostics;
      } else {
        row.refined = fine.sf;
        if (fine.sf != fr.sf) {
          row.inconclusive = true;
          row.note = "sf changed from " + std::to_string(fr.sf) + " to " + std::to_string(fine.sf) +
                     " under refinement to resolution " + std::to_string(2 * row.resolution);
        }
      }
    }
    if (row.inconclusive) {
      row.measured.reset();
      row.agreement = false;
    }

    if (cfg.torus.enabled) {
      try {
        TorusOptions to;
        to.N_t = cfg.torus_nt;
        to.radial_N = cfg.torus_radial_n;
        to.twisted = cfg.torus.twisted;
        const TorusOperator T = backend == Backend::Radial ? assemble_torus_radial(d, g, to) : assemble_torus_lattice(*model, g, to);
        const IndexResult ir = index_count(T);
        rr.torus = torus_record(ir, T);
        if (!ir.inconclusive) row.torus_index = ir.index;
      } catch (const Error& e) {
        rr.torus = {{"error", e.what()}};
      }
    }
  } catch (const Error& e) {
    row.error = e.what();
    row.measured.reset();
    row.agreement = false;
  }
  row.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rr;
}

inline void persist_row(const RowRun& rr, const ExperimentConfig& cfg, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const std::string stem = file_stem(rr.row.id) + "." + rr.row.backend;
  if (rr.flow) write_text(out / (stem + ".spectrum.csv"), spectrum_csv(rr.flow->samples, rr.row.backend, cfg.window));
  const FlowResult* fr = rr.flow ? &rr.flow->result : nullptr;
  write_text(out / (stem + ".flow.json"), flow_record(rr.row, cfg, fr, rr.torus).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Reports

inline std::string report_csv(const FlowReport& rep) {
  std::ostringstream os;
  os << "id,backend,predicted,measured,agreement,inconclusive,crossings,refinement_depth,resolution,refined,torus_index,status\n";
  for (const FlowRow& r : rep.rows) {
    os << r.id << "," << r.backend << "," << r.predicted << "," << (r.measured ? std::to_string(*r.measured) : "") << ","
       << (r.agreement ? "true" : "false") << "," << (r.inconclusive ? "true" : "false") << "," << r.crossings << ","
       << r.refinement_depth << "," << r.resolution << "," << (r.refined ? std::to_string(*r.refined) : "") << ","
       << (r.torus_index ? std::to_string(*r.torus_index) : "") << ","
       << r.status() << "\n";
  }
  return os.str();
}

inline std::string report_text(const FlowReport& rep) {
  std::size_t wid = 2;
  for (const FlowRow& r : rep.rows) wid = std::max(wid, r.id.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-7s  %4s  %4s  %-12s  %5s  %5s  %5s  %9s  %5s\n", static_cast<int>(wid), "id",
                "backend", "pred", "meas", "status", "cross", "depth", "res", "runtime_s", "torus");
  os << buf;
  for (const FlowRow& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %-7s  %4d  %4s  %-12s  %5d  %5d  %5d  %9.2f  %5s\n", static_cast<int>(wid), r.id.c_str(),
                  r.backend.c_str(), r.predicted, r.measured ? std::to_string(*r.measured).c_str() : "-", r.status().c_str(),
                  r.crossings, r.refinement_depth, r.resolution, r.runtime,
                  r.torus_index ? std::to_string(*r.torus_index).c_str() : "-");
    os << buf;
  }
  for (const FlowRow& r : rep.rows)
    if (!r.error.empty()) os << "  " << r.id << " [" << r.backend << "]: " << r.error << "\n";
    else if (!r.note.empty()) os << "  " << r.id << " [" << r.backend << "]: " << r.note << "\n";
  os << rep.summary() << "\n";
  return os.str();
}

inline void write_report(const FlowReport& rep, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_text(out / "report.csv", report_csv(rep));
  write_text(out / "report.txt", report_text(rep));
}

inline FlowRow row_from_record(const json& j, const std::string& source) {
  FlowRow r;
  try {
    r.id = j.at("id").get<std::string>();
    r.backend = j.at("backend").get<std::string>();
    r.predicted = j.at("predicted").get<int>();
    if (!j.at("measured").is_null()) r.measured = j.at("measured").get<int>();
    r.agreement = j.at("agreement").get<bool>();
    r.inconclusive = j.at("inconclusive").get<bool>();
    r.crossings = j.at("crossings").get<int>();
    r.refinement_depth = j.at("refinement_depth").get<int>();
    r.runtime = j.at("runtime_s").get<double>();
    r.resolution = j.at("resolution").get<int>();
    r.error = j.at("error").get<std::string>();
    if (j.contains("refined") && !j["refined"].is_null()) r.refined = j["refined"].get<int>();
    r.note = j.value("note", std::string());
    if (j.contains("torus") && j["torus"].contains("index") && !j["torus"].at("inconclusive").get<bool>())
      r.torus_index = j["torus"].at("index").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, source + ": malformed flow record (" + e.what() + ")");
  }
  // Self-audit: the stored prediction must be recomputable from the stored config.
  const ExperimentConfig cfg = parse_config(j.at("config").dump());
  const int again = predicted_sf(cfg.gauge(), cfg.domain());
  require(again == r.predicted, ErrorKind::Parse,
          source + ": self-audit failed, stored predicted " + std::to_string(r.predicted) + " but the config gives " +
              std::to_string(again));
  return r;
}

// Loads every *.flow.json under the given directories (or single files).
inline FlowReport load_report(const std::vector<std::filesystem::path>& paths) {
  FlowReport rep;
  for (const std::filesystem::path& p : paths) {
    if (!std::filesystem::exists(p)) fail(ErrorKind::Io, "no such path " + p.string());
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(p)) {
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 10 && name.ends_with(".flow.json")) files.push_back(e.path());
      }
      if (files.empty()) fail(ErrorKind::Io, "no flow records in " + p.string());
    } else {
      files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      if (!in) fail(ErrorKind::Io, "cannot read " + f.string());
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        fail(ErrorKind::Parse, f.string() + ": " + e.what());
      }
      rep.rows.push_back(row_from_record(j, f.string()));
    }
  }
  rep.sort();
  return rep;
}

// ---------------------------------------------------------------------------
// Experiments

inline std::vector<Backend> concrete_backends(Backend b) {
  if (b == Backend::Both) return {Backend::Radial, Backend::Lattice};
  return {b};
}

// Expands the sweep, runs every (config, backend) row in a pool of `workers`
// threads, persists per-row artifacts and the report under cfg.output.
inline FlowReport run_experiment(const ExperimentConfig& cfg, int workers = 1) {
  const std::filesystem::path out = cfg.output;
  std::filesystem::create_directories(out);
  const std::vector<ExperimentConfig> rows = expand_sweep(cfg);
  std::vector<std::pair<std::size_t, Backend>> jobs;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Backend b : concrete_backends(rows[i].backend)) jobs.emplace_back(i, b);

  // Calibrate once up front so pool threads only read the cache.
  bool any_lattice = false;
  for (const auto& [i, b] : jobs) any_lattice |= b == Backend::Lattice && rows[i].lattice_cells >= kMinLatticeCells;
  std::string calibration_error;
  if (any_lattice) {
    try {
      (void)calibrated_wall_signs(cfg.lattice, out);
    } catch (const Error& e) {
      calibration_error = e.what();
    }
  }

  std::vector<FlowRow> done(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const auto& [i, b] = jobs[k];
      if (b == Backend::Lattice && !calibration_error.empty() && rows[i].lattice_cells >= kMinLatticeCells) {
        FlowRow r;
        r.id = rows[i].name;
        r.backend = to_string(b);
        r.resolution = rows[i].lattice_cells;
        r.predicted = predicted_sf(rows[i].gauge(), rows[i].domain());
        r.error = calibration_error;
        RowRun rr{r, std::nullopt, json()};
        persist_row(rr, rows[i], out);
        done[k] = r;
        continue;
      }
      const RowRun rr = run_row(rows[i], b, out, 1);
      persist_row(rr, rows[i], out);
      done[k] = rr.row;
    }
  };
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < nw; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  FlowReport rep;
  rep.rows = std::move(done);
  rep.sort();
  write_report(rep, out);
  return rep;
}

// ---------------------------------------------------------------------------
// Torus check: index against the measured flow on the same backend

struct TorusCheck {
  std::optional<IndexResult> index;
  std::int64_t dimension = 0;
  FlowRow flow;
  std::string error;

  bool conclusive() const { return error.empty() && index && !index->inconclusive && flow.measured.has_value(); }
  int exit_code() const {
    if (!conclusive()) return kExitInconclusive;
    return index->index == *flow.measured ? kExitAgree : kExitDisagree;
  }
};

inline TorusCheck torus_check(const ExperimentConfig& cfg, Backend backend) {
  TorusCheck tc;
  ExperimentConfig c = cfg;
  c.torus.enabled = false;
  const std::filesystem::path out = cfg.output;
  const RowRun rr = run_row(c, backend, out, worker_count());
  tc.flow = rr.row;
  try {
    const DomainSpec d = cfg.domain();
    const GaugeSpec g = cfg.gauge();
    TorusOptions to;
    to.N_t = cfg.torus_nt;
    to.radial_N = cfg.torus_radial_n;
    to.twisted = cfg.torus.twisted;
    std::optional<TorusOperator> T;
    if (backend == Backend::Radial) {
      T = assemble_torus_radial(d, g, to);
    } else {
      require(cfg.lattice_cells >= kMinLatticeCells, ErrorKind::Resolution, "lattice resolution below the calibration minimum");
      const LatticeModel m = build_lattice_model(d, lattice_params(cfg, calibrated_wall_signs(cfg.lattice, out)));
      T = assemble_torus_lattice(m, g, to);
    }
    tc.dimension = T->L.rows();
    tc.index = index_count(*T);
  } catch (const Error& e) {
    tc.error = e.what();
  }
  return tc;
}

}  // namespace diracflow

#endif
