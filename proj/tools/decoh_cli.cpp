#include "decoh/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace decoh;

namespace {

struct Common {
  std::string config, out, format = "csv";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

struct Outputs {
  std::filesystem::path dir;
  std::string format;

  void text(const std::string& name, const std::string& body) const { write_text((dir / name).string(), body); }
  void report(const std::string& name, const json& j) const { text(name + ".json", j.dump(2) + "\n"); }
  void table(const std::string& name, const std::string& csv) const {
    if (format == "csv") text(name + ".csv", csv);
  }
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config(json{{"schema_version", kSchemaVersion}}) : load_config(c.config);
  if (c.seed) cfg.run.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

int emit_error(const Error& e, int code) {
  json j = {{"error", {{"module", e.module}, {"message", e.what()}}}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decoh: decoherence of interfering wave packets in a thermal phonon bath"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "experiment JSON config");
    s->add_option("--out", c.out, "output directory");
    s->add_option("--seed", c.seed, "Monte Carlo seed (overrides run.seed)");
    s->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
    s->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  };
  std::vector<double> p_mags, eta_seq;
  std::optional<double> tolerance;

  auto* fr = app.add_subcommand("simulate-fringes", "free evolution fringe sweep");
  auto* xs = app.add_subcommand("cross-section", "resolvent against shell cross section");
  auto* lr = app.add_subcommand("ladder-resum", "n = 0 ladder cells and the resummation");
  auto* bz = app.add_subcommand("boltzmann", "linear Boltzmann relaxation");
  auto* vm = app.add_subcommand("validate-model", "dispersion and form-factor assumptions");
  auto* ve = app.add_subcommand("validate-estimates", "estimate probes");
  auto* dc = app.add_subcommand("decoherence", "damped against free pairing");
  auto* va = app.add_subcommand("validate", "full validation suite");
  for (auto* s : {fr, xs, lr, bz, vm, ve, dc, va}) add_common(s);
  xs->add_option("--p-magnitudes", p_mags, "|P| values");
  xs->add_option("--eta-seq", eta_seq, "eta sequence for Richardson extrapolation");
  xs->add_option("--tolerance", tolerance, "relative gap tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    auto cfg = resolve(c);
    if (!p_mags.empty()) cfg.run.p_magnitudes = p_mags;
    if (!eta_seq.empty()) cfg.run.eta_seq = eta_seq;
    if (tolerance) cfg.run.tolerance = *tolerance;
    thread_cap() = c.threads;
    Outputs out{cfg.out_dir, c.format};
    std::filesystem::create_directories(out.dir);

    if (fr->parsed()) {
      auto r = run_fringes(cfg);
      out.table("fringes", r.csv);
      out.report("fringes_report", r.report);
      std::cout << "simulate-fringes: " << r.sweep.points.size() << " points\n";
      return 0;
    }
    if (xs->parsed()) {
      const auto m = make_model(cfg.model);
      json arr = json::array();
      CsvWriter w({"P", "sigma_shell", "sigma_resolvent", "phi_re", "phi_im", "rel_gap", "pass"});
      bool pass = true;
      for (double pm : cfg.run.p_magnitudes) {
        Vec P(m.d, 0.0);
        P[m.d - 1] = pm;
        auto r = cross_section(m, P, cfg.run.eta_seq, cfg.run.tolerance);
        pass = pass && r.pass;
        arr.push_back(to_json(r));
        w.row({fmt17(pm), fmt17(r.sigma_shell), fmt17(r.sigma_resolvent), fmt17(r.phi_P.real()), fmt17(r.phi_P.imag()),
               fmt17(r.rel_gap), r.pass ? "true" : "false"});
      }
      out.table("cross_section", w.str());
      out.report("cross_section", json{{"pass", pass}, {"reports", arr}});
      std::cout << "cross-section: " << (pass ? "pass" : "FAIL") << "\n";
      return pass ? 0 : 2;
    }
    if (lr->parsed()) {
      auto r = run_ladder(cfg);
      out.table("ladder", r.csv);
      out.report("ladder_report", r.report);
      std::cout << "ladder-resum: C_fit " << fmt17(r.C_fit) << "\n";
      return 0;
    }
    if (bz->parsed()) {
      auto r = run_boltzmann_experiment(cfg);
      out.table("boltzmann", r.csv);
      for (auto& F : r.snapshots) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "snapshot_T%.6g", F.T);
        write_density_snapshot(F, (out.dir / stem).string());
      }
      out.report("boltzmann_report", r.report);
      std::cout << "boltzmann: " << r.run.series.size() << " steps\n";
      return 0;
    }
    if (vm->parsed()) {
      auto rep = validate_assumptions(make_model(cfg.model));
      out.report("validate_model", to_json(rep));
      std::cout << "validate-model: " << (rep.pass() ? "pass" : "FAIL") << "\n";
      return rep.pass() ? 0 : 2;
    }
    if (ve->parsed()) {
      require_seed(cfg, "validate-estimates");
      auto rep = probes_report(run_estimate_probes(cfg));
      out.report("validate_estimates", rep);
      const bool pass = rep["pass"].get<bool>();
      std::cout << "validate-estimates: " << (pass ? "pass" : "FAIL") << "\n";
      return pass ? 0 : 2;
    }
    if (dc->parsed()) {
      auto r = run_decoherence_experiment(cfg);
      out.table("decoherence", r.csv);
      out.report("decoherence_report", r.report);
      std::cout << "decoherence: sigma_P " << fmt17(r.sigma_P) << "\n";
      return 0;
    }
    if (va->parsed()) {
      require_seed(cfg, "validate");
      auto v = run_all_validations(cfg);
      out.report("validation", v.report);
      std::cout << "validate: " << (v.pass ? "pass" : "FAIL") << "\n";
      return v.pass ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    return emit_error(e, 3);
  } catch (const ValidationError& e) {
    return emit_error(e, 2);
  } catch (const Error& e) {
    return emit_error(e, 1);
  } catch (const std::exception& e) {
    return emit_error(Error("cli", e.what()), 1);
  }
  return 0;
}
