// Command-line front end: predict, flow, sweep, torus, report.
//
// Exit codes: 0 all rows agree, 1 some row disagrees, 2 inconclusive or
// failed rows, 3 usage or config error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diracflow/harness.hpp"

namespace {

using namespace diracflow;

struct Overrides {
  std::string config;
  std::string out;
  std::string backend;
  int resolution = 0;
  int tsamples = 0;
  int max_depth = -1;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (overrides the config)");
  sub->add_option("--backend", o.backend, "radial, lattice or both")->check(CLI::IsMember({"radial", "lattice", "both"}));
  sub->add_option("--resolution", o.resolution, "radial N or lattice cells per diameter")->check(CLI::PositiveNumber);
  sub->add_option("--tsamples", o.tsamples, "initial t samples (torus: N_t)")->check(CLI::PositiveNumber);
  sub->add_option("--max-depth", o.max_depth, "maximum refinement depth")->check(CLI::NonNegativeNumber);
}

ExperimentConfig configured(const Overrides& o, bool torus = false) {
  ExperimentConfig c = load_config(o.config);
  if (!o.out.empty()) c.output = o.out;
  if (!o.backend.empty()) c.backend = backend_from_string(o.backend);
  if (o.resolution > 0) {
    if (torus) {
      c.torus_radial_n = o.resolution;
      c.lattice_cells = o.resolution;
    } else {
      if (c.backend != Backend::Lattice) c.radial_n = o.resolution;
      if (c.backend != Backend::Radial) c.lattice_cells = o.resolution;
    }
  }
  if (o.tsamples > 0) (torus ? c.torus_nt : c.flow.initial_samples) = o.tsamples;
  if (o.max_depth >= 0) c.flow.max_depth = o.max_depth;
  validate(c);
  return c;
}

int cmd_predict(const Overrides& o) {
  const ExperimentConfig base = configured(o);
  for (const ExperimentConfig& c : expand_sweep(base)) {
    const Prediction p = predict(c);
    std::cout << c.name << ": predicted sf = " << p.total << "\n";
    for (const ComponentPrediction& k : p.components) {
      std::cout << "  " << (k.id == 0 ? std::string("outer") : "hole " + std::to_string(k.id)) << "  B "
                << (k.b_sign > 0 ? "+" : "-") << "  winding " << k.winding << (k.b_sign > 0 ? "  (counted)" : "")
                << "\n";
    }
  }
  return kExitAgree;
}

int cmd_flow(const Overrides& o, bool sweep) {
  ExperimentConfig c = configured(o);
  if (!sweep) c.sweep = {};
  const FlowReport rep = run_experiment(c, sweep ? worker_count() : 1);
  std::cout << report_text(rep);
  std::cout << "artifacts in " << c.output << "\n";
  return rep.exit_code();
}

int cmd_torus(const Overrides& o) {
  const ExperimentConfig c = configured(o, true);
  const Backend b = c.backend == Backend::Both ? Backend::Radial : c.backend;
  const TorusCheck tc = torus_check(c, b);
  std::cout << c.name << " [" << to_string(b) << "]\n";
  std::cout << "  predicted sf     " << tc.flow.predicted << "\n";
  std::cout << "  measured sf      " << (tc.flow.measured ? std::to_string(*tc.flow.measured) : "-") << "\n";
  if (!tc.flow.error.empty()) std::cout << "  flow error       " << tc.flow.error << "\n";
  if (tc.index) {
    std::cout << "  torus index      " << tc.index->index << (tc.index->inconclusive ? "  (inconclusive)" : "") << "\n";
    std::cout << "  kernel size      " << tc.index->kernel_size << "\n";
    std::cout << "  gap ratio        " << tc.index->gap_ratio << "\n";
    std::cout << "  dimension        " << tc.dimension << "  (N_t = " << c.torus_nt << ")\n";
    std::cout << "  singular values ";
    for (double s : tc.index->singular_values) std::cout << " " << s;
    std::cout << "\n";
    if (!tc.index->diagnostics.empty()) std::cout << "  note             " << tc.index->diagnostics << "\n";
  }
  if (!tc.error.empty()) std::cout << "  torus error      " << tc.error << "\n";
  const int code = tc.exit_code();
  std::cout << (code == kExitAgree ? "index = measured sf" : code == kExitDisagree ? "index != measured sf" : "inconclusive")
            << "\n";
  return code;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
  const FlowReport rep = load_report(ps);
  if (!out.empty()) write_report(rep, out);
  std::cout << report_text(rep);
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral flow of Dirac operators on planar domains under gauge transformations"};
  app.require_subcommand(1);

  Overrides po, fo, so, to;
  add_common(app.add_subcommand("predict", "topological prediction only"), po);
  add_common(app.add_subcommand("flow", "measure the spectral flow of one config"), fo);
  add_common(app.add_subcommand("sweep", "expand the config's sweep and measure every row"), so);
  add_common(app.add_subcommand("torus", "index of the clutched operator on the torus"), to);
  auto* rep = app.add_subcommand("report", "summarize flow records");
  std::vector<std::string> report_paths;
  std::string report_out;
  rep->add_option("paths", report_paths, "artifact directories or flow.json files")->required();
  rep->add_option("--out", report_out, "also write report.csv and report.txt here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand("predict")) return cmd_predict(po);
    if (app.got_subcommand("flow")) return cmd_flow(fo, false);
    if (app.got_subcommand("sweep")) return cmd_flow(so, true);
    if (app.got_subcommand("torus")) return cmd_torus(to);
    if (app.got_subcommand("report")) return cmd_report(report_paths, report_out);
  } catch (const diracflow::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
