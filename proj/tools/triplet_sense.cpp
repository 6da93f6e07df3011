#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "triplet/workbench.hpp"

using namespace triplet;
using namespace triplet::wb;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  bool json = false;
};

RunConfig load(const Common& o) {
  RunConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else if (!o.preset.empty()) {
    c = config_preset(o.preset);
  }
  if (!o.config.empty() && !o.preset.empty()) throw UsageError("--config and --preset are mutually exclusive");
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  c.validate();
  return c;
}

void say(const Common& o, const std::string& text) {
  if (!o.quiet && !o.json) std::cout << text << "\n";
}

void emit_json(const Common& o, const Json& j) {
  if (o.json) std::cout << j.dump(2) << "\n";
}

void write_svg(const fs::path& path, const std::string& title, const Dataset& d) {
  const auto& cols = kind_columns(d.kind);
  const std::size_t y = d.kind == DatasetKind::OrientationPoints ? 4 : 1;
  Series s{cols[y], {}, d.columns[y], d.kind != DatasetKind::Spectrum && d.kind != DatasetKind::Trace};
  if (d.kind == DatasetKind::OrientationPoints) {
    for (std::size_t i = 0; i < d.rows(); ++i) s.x.push_back(static_cast<double>(i));
  } else {
    s.x = d.columns[0];
  }
  const std::string xl = d.kind == DatasetKind::OrientationPoints ? "point index" : cols[0];
  write_file_atomic(path, svg_plot(title, xl, cols[y], {s}));
}

fs::path dataset_path(const RunConfig& c, const std::string& stem) { return fs::path(c.out_dir) / (stem + ".csv"); }

int cmd_generate(const Common& o, const std::string& sub) {
  const DatasetKind k = parse_kind(sub);
  RunConfig c = load(o);
  const Dataset d = generate(k, c);
  const fs::path p = dataset_path(c, sub);
  write_dataset(d, p);
  if (c.svg) write_svg(fs::path(c.out_dir) / (sub + ".svg"), sub, d);
  say(o, "wrote " + p.string() + " (" + std::to_string(d.rows()) + " rows)");
  emit_json(o, {{"path", p.string()}, {"rows", d.rows()}, {"kind", sub}});
  return kExitOk;
}

int cmd_simulate(const Common& o, const std::string& sub) {
  RunConfig c = load(o);
  c.sigma = 0.0;
  c.counts_scale.reset();
  if (sub == "levels") {
    const auto es = sublevels(c.model, c.field);
    Json j;
    j["energies_mhz"] = es.energies;
    for (const auto& t : transition_table_isotropic(c.model, c.field))
      j["transitions"].push_back({{"pair", pair_name(t.pair)}, {"freq_mhz", t.frequency_mhz}, {"amplitude", t.amplitude}});
    if (!o.quiet) std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  DatasetKind k;
  if (sub == "cw-odmr") {
    k = DatasetKind::Spectrum;
    c.hold_mhz.reset();
  } else if (sub == "double-resonance") {
    k = DatasetKind::Spectrum;
    if (!c.hold_mhz) c.hold_mhz = 1433.0;
  } else if (sub == "coherence" || sub == "eseem" || sub == "rabi") {
    k = DatasetKind::Trace;
    c.trace.sequence = sub == "coherence" ? "cpmg" : sub;
  } else {
    throw UsageError("unknown simulation '" + sub + "' (valid: cw-odmr, double-resonance, coherence, eseem, rabi, levels)");
  }
  const Dataset d = generate(k, c);
  const fs::path p = dataset_path(c, sub);
  write_dataset(d, p);
  if (c.svg) write_svg(fs::path(c.out_dir) / (sub + ".svg"), sub, d);
  say(o, "wrote " + p.string() + " (" + std::to_string(d.rows()) + " rows)");
  emit_json(o, {{"path", p.string()}, {"rows", d.rows()}, {"simulation", sub}});
  return kExitOk;
}

int cmd_fit(const Common& o, const std::string& sub, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw UsageError("fit: at least one --input is required");
  RunConfig c = load(o);
  std::vector<Dataset> data;
  for (const auto& in : inputs) data.push_back(read_dataset(in));
  const FitOutput f = run_fit(sub, data, c);

  const fs::path dir(c.out_dir);
  write_file_atomic(dir / ("fit_" + sub + ".json"), f.report.dump(2) + "\n");
  std::string csv = "x,data,model\n" + f.x_label + "," + f.y_label + "," + f.y_label + "\n";
  for (std::size_t i = 0; i < f.x.size(); ++i)
    csv += format_number(f.x[i]) + "," + format_number(f.data[i]) + "," + format_number(f.model[i]) + "\n";
  write_file_atomic(dir / ("fit_" + sub + "_overlay.csv"), csv);
  if (c.svg)
    write_file_atomic(dir / ("fit_" + sub + ".svg"),
                      svg_plot("fit " + sub, f.x_label, f.y_label,
                               {Series{"data", f.x, f.data, true}, Series{"model", f.x, f.model, false}}));

  if (!o.quiet && !o.json) {
    for (std::size_t i = 0; i < f.result.names.size(); ++i)
      std::cout << f.result.names[i] << " = " << format_number(f.result.values(static_cast<Eigen::Index>(i)))
                << " +- " << format_number(f.result.sigma(f.result.names[i])) << "\n";
    for (const auto& w : f.result.warnings) std::cout << "warning: " << w << "\n";
  }
  emit_json(o, f.report);
  if (!f.result.converged) {
    std::cerr << "fit did not converge: " << f.result.diagnostic << "\n";
    return kExitFit;
  }
  return kExitOk;
}

int cmd_sense(const Common& o, const std::string& sub, double shift, const std::string& pair,
              const std::vector<double>& direction, double bmax) {
  if (sub != "invert-field") throw UsageError("unknown sense command '" + sub + "' (valid: invert-field)");
  if (direction.size() != 3) throw UsageError("--direction expects x,y,z");
  RunConfig c = load(o);
  SublevelPair p;
  try {
    p = parse_pair(pair);
  } catch (const Error&) {
    throw UsageError("--pair: unknown transition pair '" + pair + "' (use xy, yz or xz)");
  }
  const Eigen::Vector3d dir(direction[0], direction[1], direction[2]);
  const double b = invert_field(shift, p, c.model, dir, bmax);
  say(o, "field_mt = " + format_number(b));
  emit_json(o, {{"field_mt", b}, {"pair", pair_name(p)}, {"shift_mhz", shift}});
  return kExitOk;
}

int cmd_reproduce(const Common& o, const std::string& sub) {
  const std::uint64_t seed = o.seed.value_or(1);
  std::vector<std::string> ids;
  if (sub == "all") {
    ids = reproduce_ids();
  } else {
    ids = {sub};
  }
  bool all_pass = true;
  Json summary = Json::array();
  for (const auto& id : ids) {
    const ReproduceReport r = reproduce(id, seed);
    all_pass = all_pass && r.pass();
    Json rep;
    rep["id"] = id;
    rep["seed"] = seed;
    rep["result"] = r.pass() ? "PASS" : "FAIL";
    for (const auto& c : r.checks) rep["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    rep["metrics"] = r.metrics;
    if (!o.out.empty()) {
      const fs::path dir = fs::path(o.out) / id;
      for (const auto& [name, d] : r.datasets) {
        write_dataset(d, dir / (name + ".csv"));
        write_svg(dir / (name + ".svg"), id + " " + name, d);
      }
      write_file_atomic(dir / "report.json", rep.dump(2) + "\n");
    }
    if (!o.json) {
      std::cout << (r.pass() ? "PASS " : "FAIL ") << id << "\n";
      if (!o.quiet)
        for (const auto& c : r.checks)
          std::cout << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail << "\n";
    }
    summary.push_back(rep);
  }
  emit_json(o, summary);
  return all_pass ? kExitOk : kExitReproduceFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triplet spin simulation, inversion and reproduction workbench"};
  app.require_subcommand(1);
  Common o;
  std::string sub;
  std::vector<std::string> inputs;
  double shift = 0.0, bmax = 10.0;
  std::string pair = "xy";
  std::vector<double> direction{0, 0, 1};

  auto common = [&](CLI::App* s) {
    s->add_option("sub", sub, "subcommand")->required();
    s->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    s->add_option("--preset", o.preset, "built-in configuration preset");
    s->add_option("--seed", o.seed, "RNG seed (u64)");
    s->add_option("--out", o.out, "output directory");
    s->add_flag("--quiet", o.quiet, "suppress informational output");
    s->add_flag("--json", o.json, "print machine-readable JSON");
  };
  auto* gen = app.add_subcommand("generate", "synthetic dataset with seeded noise");
  common(gen);
  auto* sim = app.add_subcommand("simulate", "noiseless forward model");
  common(sim);
  auto* fit = app.add_subcommand("fit", "fit a dataset");
  common(fit);
  fit->add_option("--input", inputs, "dataset CSV (repeat for larmor)");
  auto* sense = app.add_subcommand("sense", "sensing inversions");
  common(sense);
  sense->add_option("--shift-mhz", shift, "measured line shift (MHz)");
  sense->add_option("--pair", pair, "transition pair: xy, yz or xz");
  sense->add_option("--direction", direction, "field direction x,y,z (lab frame)")->delimiter(',')->expected(3);
  sense->add_option("--bmax-mt", bmax, "upper end of the search bracket (mT)");
  auto* rep = app.add_subcommand("reproduce", "figure reproduction with PASS/FAIL");
  common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, sub);
    if (sim->parsed()) return cmd_simulate(o, sub);
    if (fit->parsed()) return cmd_fit(o, sub, inputs);
    if (sense->parsed()) return cmd_sense(o, sub, shift, pair, direction, bmax);
    if (rep->parsed()) return cmd_reproduce(o, sub);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const FitFailure& e) {
    std::cerr << "fit failure: " << e.what() << "\n";
    return kExitFit;
  } catch (const Underdetermined& e) {
    std::cerr << "fit failure: " << e.what() << "\n";
    return kExitFit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
