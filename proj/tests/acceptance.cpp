// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [output_dir] [--only 1,2,9]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diracflow/harness.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"

using namespace diracflow;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path g_out;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string sf_string(const std::optional<int>& v) { return v ? std::to_string(*v) : "-"; }

ExperimentConfig annulus_config(const std::string& name, double r_in, double r_out, int s_in, int s_out, int w) {
  ExperimentConfig c;
  c.name = name;
  c.outer = Circle{{0.0, 0.0}, r_out};
  c.outer_b = {s_out, 1.0};
  c.holes = {HoleConfig{{0.0, 0.0}, r_in, {s_in, 1.0}, w}};
  c.output = (g_out / name).string();
  return c;
}

// Rows that are not "agree", one per line.
std::string row_problems(const FlowReport& rep) {
  std::ostringstream os;
  for (const FlowRow& r : rep.rows)
    if (r.status() != "agree")
      os << "\n    " << r.id << " [" << r.backend << "] predicted " << r.predicted << " measured " << sf_string(r.measured)
         << " refined " << sf_string(r.refined) << " " << r.status() << (r.error.empty() ? r.note : r.error);
  return os.str();
}

// ---------------------------------------------------------------------------

Verdict admissibility() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> logb(-3.0, 3.0);
  std::bernoulli_distribution coin;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double th = angle(rng);
    const Vec2 radial{std::cos(th), std::sin(th)};
    // inward normal: toward the center on the outer circle, away from it on the hole
    const Vec2 n = k % 2 == 0 ? -1.0 * radial : radial;
    const double b = (coin(rng) ? 1.0 : -1.0) * std::pow(10.0, logb(rng));
    worst = std::max(worst, check_admissibility(n, b));
  }
  return {worst < 1e-12, fmt("max defect %.3g over 1000 points", worst)};
}

Verdict dip_and_return() {
  const FlowResult r = run_flow(synthetic::dip_and_return, -1);
  const bool ok = !r.inconclusive && r.sf == -1 && r.tracking_complete && r.tracking_sf == -1;
  return {ok, fmt("ladder sf %d, tracking sf %d (%zu crossings)", r.sf, r.tracking_sf, r.crossings.size())};
}

FlowReport g_annulus16, g_twohole, g_invariance[3];

Verdict annulus16() {
  ExperimentConfig c = annulus_config("annulus16", 1.0, 2.0, 1, 1, 1);
  c.sweep.windings = {{-2}, {-1}, {1}, {2}};
  c.sweep.signs = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const auto t0 = std::chrono::steady_clock::now();
  g_annulus16 = run_experiment(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {g_annulus16.exit_code() == kExitAgree,
          fmt("radial N=256: %s, %.0f s", g_annulus16.summary().c_str(), secs) + row_problems(g_annulus16)};
}

Verdict cross_validation() {
  const DomainSpec d = build_annulus(0.5, 1.5, {-1, 1.0}, {1, 1.0});
  GaugeSpec g;
  g.windings[1] = 1;
  const double t = 0.25;
  std::vector<double> ref = radial_low_modes(d, g, t, 6, 256);
  std::sort(ref.begin(), ref.end());
  const WallSignMap map = calibrated_wall_signs(LatticeConfig{}, g_out / "calibration");
  double err[2] = {0.0, 0.0};
  const int cells[2] = {96, 192};
  for (int k = 0; k < 2; ++k) {
    LatticeParams p;
    p.h = 3.0 / cells[k];
    const LatticeModel m = build_lattice_model(d, with_wall_signs(p, d, map));
    std::vector<double> lat = lattice_low_modes(m, g, t, 6, 1.0);
    std::sort(lat.begin(), lat.end());
    for (std::size_t i = 0; i < 6; ++i) err[k] = std::max(err[k], std::abs(lat[i] - ref[i]) / std::abs(ref[i]));
  }
  const double ratio = err[0] / err[1];
  return {err[0] <= 0.05 && ratio >= 1.5,
          fmt("max relative error %.4f at 96 cells, %.4f at 192, ratio %.2f", err[0], err[1], ratio)};
}

Verdict two_hole() {
  ExperimentConfig c;
  c.name = "twohole";
  c.outer = Circle{{0.0, 0.0}, 2.0};
  c.holes = {HoleConfig{{-1.0, 0.0}, 0.6, {1, 1.0}, 0}, HoleConfig{{1.0, 0.0}, 0.6, {1, 1.0}, 0}};
  c.backend = Backend::Lattice;
  c.lattice_cells = 96;
  c.sweep.windings = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  c.sweep.signs = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}};
  c.output = (g_out / "twohole").string();
  const auto t0 = std::chrono::steady_clock::now();
  g_twohole = run_experiment(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool stable = true;
  for (const FlowRow& r : g_twohole.rows) stable &= r.refined.has_value() && r.refined == r.measured;
  return {g_twohole.exit_code() == kExitAgree && stable,
          fmt("lattice 96 cells, refined at 192: %s, %.0f s", g_twohole.summary().c_str(), secs) +
              row_problems(g_twohole)};
}

Verdict invariance() {
  const std::vector<std::vector<int>> windings = {{1}, {-2}};
  const std::vector<std::vector<int>> signs = {{1, -1}, {-1, 1}};
  const char* names[3] = {"base", "quadratic", "scaled"};
  for (int v = 0; v < 3; ++v) {
    ExperimentConfig c = annulus_config(std::string("invariance-") + names[v], 1.0, 2.0, 1, 1, 1);
    c.sweep.windings = windings;
    c.sweep.signs = signs;
    if (v == 1) c.schedule.kind = ScheduleKind::Quadratic;
    if (v == 2) c.sweep.b_scales = {10.0};
    g_invariance[v] = run_experiment(c);
  }
  bool ok = true;
  std::ostringstream os;
  for (std::size_t k = 0; k < g_invariance[0].rows.size(); ++k) {
    const FlowRow& b = g_invariance[0].rows[k];
    const FlowRow& q = g_invariance[1].rows[k];
    const FlowRow& s = g_invariance[2].rows[k];
    ok &= b.measured.has_value() && q.measured == b.measured && s.measured == b.measured;
    os << (k ? ", " : "") << sf_string(b.measured) << "/" << sf_string(q.measured) << "/" << sf_string(s.measured);
  }
  ok &= g_invariance[0].rows.size() == 4;
  return {ok, "sf linear/t^2/x10 per case: " + os.str()};
}

// Endpoint defects of every conclusive run on record.
Verdict endpoints() {
  double worst[2] = {0.0, 0.0};
  int runs[2] = {0, 0};
  bool missing = false;
  for (const auto& e : fs::recursive_directory_iterator(g_out)) {
    const std::string name = e.path().filename().string();
    if (!e.is_regular_file() || !name.ends_with(".flow.json")) continue;
    std::ifstream in(e.path());
    const json j = json::parse(in);
    if (j.at("measured").is_null() || !j.contains("flow")) continue;
    const int b = j.at("backend") == "radial" ? 0 : 1;
    const json& def = j["flow"].at("endpoint_defect");
    if (def.is_null()) {
      missing = true;
      continue;
    }
    worst[b] = std::max(worst[b], def.get<double>());
    ++runs[b];
  }
  const bool ok = !missing && runs[0] > 0 && runs[1] > 0 && worst[0] < 1e-9 && worst[1] < 1e-9;
  return {ok, fmt("radial max %.3g over %d runs, lattice max %.3g over %d runs%s", worst[0], runs[0], worst[1], runs[1],
                  missing ? ", some defect not computed" : "")};
}

Verdict torus() {
  ExperimentConfig c = annulus_config("torus", 1.0, 2.0, -1, 1, 1);
  c.radial_n = 48;
  c.torus_radial_n = 48;
  std::vector<TorusCheck> checks;
  std::ostringstream os;
  bool ok = true;
  for (int nt : {24, 48}) {
    c.torus_nt = nt;
    const TorusCheck tc = torus_check(c, Backend::Radial);
    checks.push_back(tc);
    ok &= tc.conclusive() && tc.index->index == *tc.flow.measured && tc.index->index == 1 && tc.index->gap_ratio >= 50.0;
    os << (nt == 24 ? "" : "; ") << "N_t=" << nt << ": index " << (tc.index ? std::to_string(tc.index->index) : "-")
       << ", measured sf " << sf_string(tc.flow.measured) << ", gap ratio "
       << (tc.index ? fmt("%.3g", tc.index->gap_ratio) : "-") << (tc.error.empty() ? "" : " " + tc.error);
  }
  ok &= checks[0].index && checks[1].index && checks[0].index->index == checks[1].index->index;
  return {ok, os.str()};
}

DenseMatrix to_eigen(const oracle::Matrix& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  DenseMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

Verdict eigensolver() {
  std::mt19937_64 rng(9);
  double oracle_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const oracle::Matrix a = oracle::random_hermitian(12, rng);
    const std::vector<double> ref = oracle::eigenvalues(a);
    const std::vector<double> ev = eigh(HermitianOperator::from_dense(to_eigen(a)));
    for (std::size_t k = 0; k < ev.size(); ++k) oracle_err = std::max(oracle_err, std::abs(ev[k] - ref[k]));
  }
  double trace_err = 0.0, unitary_err = 0.0;
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 100; ++trial) {
    const DenseMatrix h = to_eigen(oracle::random_hermitian(12, rng));
    const std::vector<double> ev = eigh(HermitianOperator::from_dense(h));
    double sum = 0.0;
    for (double v : ev) sum += v;
    const double scale = std::max(std::abs(ev.front()), std::abs(ev.back()));
    trace_err = std::max(trace_err, std::abs(sum - h.trace().real()) / std::max(1.0, scale));
    DenseMatrix z(12, 12);
    for (Eigen::Index i = 0; i < 12; ++i)
      for (Eigen::Index j = 0; j < 12; ++j) z(i, j) = cplx(gauss(rng), gauss(rng));
    const DenseMatrix u = Eigen::HouseholderQR<DenseMatrix>(z).householderQ();
    DenseMatrix c = u * h * u.adjoint();
    c = 0.5 * (c + c.adjoint());
    const std::vector<double> ec = eigh(HermitianOperator::from_dense(c));
    for (std::size_t k = 0; k < ev.size(); ++k) unitary_err = std::max(unitary_err, std::abs(ec[k] - ev[k]) / scale);
  }
  return {oracle_err < 1e-8 && trace_err < 1e-8 && unitary_err < 1e-8,
          fmt("oracle %.2g (100 matrices), trace %.2g, unitary %.2g (100 instances)", oracle_err, trace_err,
              unitary_err)};
}

}  // namespace

int main(int argc, char** argv) {
  g_out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      g_out = a;
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, admissibility}, {2, dip_and_return}, {3, annulus16}, {4, cross_validation}, {5, two_hole},
      {7, invariance},    {6, endpoints},      {8, torus},     {9, eigensolver}};
  const char* titles[10] = {"",
                            "admissibility of the boundary condition",
                            "three-curve synthetic family",
                            "annulus sweep, 16 cases",
                            "radial/lattice cross-validation",
                            "two-hole disk, unit coefficients",
                            "endpoint isospectrality",
                            "schedule and magnitude invariance",
                            "torus index versus flow",
                            "dense eigensolver against oracle"};
  std::map<int, Verdict> results;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results[id] = v;
    std::printf("[%d] %-40s %s  (%.1f s)\n    %s\n", id, titles[id], v.pass ? "PASS" : "FAIL", secs, v.detail.c_str());
    std::fflush(stdout);
  }

  std::printf("\nsummary\n");
  int failed = 0;
  for (const auto& [id, v] : results) {
    std::printf("criterion %d: %s\n", id, v.pass ? "PASS" : "FAIL");
    failed += !v.pass;
  }
  std::printf("%zu criteria, %d failed\n", results.size(), failed);
  return failed ? 1 : 0;
}
