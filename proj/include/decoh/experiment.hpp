#pragma once

#include "decoh/analysis_checks.hpp"
#include "decoh/boltzmann.hpp"
#include "decoh/ladder.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace decoh {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// --- config -----------------------------------------------------------------------

struct ModelConfig {
  std::string preset = "quadratic-einstein";
  double beta = 1.0, mu = -1.0, omega = 1.0, ff_width = 1.0;
  bool coupling = true;
  int d = 3;
};

struct WavepacketConfig {
  Vec P{0.0, 0.0, 2.0};
  Vec Q{0.0, 0.0, 1.0};
  std::vector<double> epsilon{0.4, 0.2, 0.1, 0.05};
  std::string envelope = "gaussian";
};

struct ObservableConfig {
  std::string preset = "fringe";
  double ptilde_over_p = 1.0;
  double window = 1.0;
  double blind_length = 1.0;
};

struct FringeConfig {
  Vec P{2.0};
  Vec Q{1.0};
  std::vector<double> ratios{0.0, 1.0, -1.0, 0.5};
};

struct BoltzmannConfig {
  double de = 0.125;
  int ne = 96, nc = 32, n_phi = 32;
  double dt = 0.02, T = 5.0;
  bool gain = true;
  std::vector<double> snapshots{0.0, 5.0};
  double bump_center = 2.0, bump_width2 = 0.25;
  long particles = 0;
  std::vector<double> dsmc_times{0.5, 1.0, 2.0};
};

struct ProbeConfig {
  std::string lattice = "full";
  double tolerance_scale = 1.0;
  std::vector<std::string> probes{"uno_m1", "uno_m2", "due", "tre", "upsilon_derivative", "level_sets"};
};

struct RunConfig {
  std::vector<double> T{0.5};
  int K = 20;
  long samples = 100000;
  std::optional<std::uint64_t> seed;
  double tolerance = 1e-3;
  std::vector<double> p_magnitudes{1.5, 2.0, 3.0};
  std::vector<double> eta_seq = default_eta_seq();
  double ladder_epsilon = 0.1;
  int max_total = 4;
  int v_points = 0;   // per-dimension v nodes for the decoherence grid, 0 = smallest Nyquist-safe
  int xi_points = 0;  // per-dimension xi nodes for smooth observables, 0 = 9
  FringeConfig fringe;
  BoltzmannConfig boltzmann;
  ProbeConfig probes;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ModelConfig model;
  WavepacketConfig wavepacket;
  ObservableConfig observable;
  RunConfig run;
  std::string out_dir = "out";
};

namespace detail {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config", where + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("config", "unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config", where + "." + key + ": " + e.what());
  }
}

inline void require_positive(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw ConfigError("config", what + " must not be empty");
  for (double x : v)
    if (!(x > 0.0)) throw ConfigError("config", what + " entries must be positive");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::allow_keys;
  using detail::read;
  ExperimentConfig c;
  allow_keys(j, "config", {"schema_version", "model", "wavepacket", "observable", "run", "output"});
  if (!j.contains("schema_version")) throw ConfigError("config", "missing schema_version");
  read(j, "schema_version", c.schema_version, "config");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("config", "unsupported schema_version " + std::to_string(c.schema_version));
  if (j.contains("model")) {
    const auto& m = j["model"];
    allow_keys(m, "model", {"preset", "beta", "mu", "omega", "ff_width", "coupling", "d"});
    read(m, "preset", c.model.preset, "model");
    read(m, "beta", c.model.beta, "model");
    read(m, "mu", c.model.mu, "model");
    read(m, "omega", c.model.omega, "model");
    read(m, "ff_width", c.model.ff_width, "model");
    read(m, "coupling", c.model.coupling, "model");
    read(m, "d", c.model.d, "model");
    if (c.model.preset != "quadratic-einstein") throw ConfigError("config", "unknown model preset " + c.model.preset);
  }
  if (j.contains("wavepacket")) {
    const auto& w = j["wavepacket"];
    allow_keys(w, "wavepacket", {"P", "Q", "epsilon", "envelope"});
    read(w, "P", c.wavepacket.P, "wavepacket");
    read(w, "Q", c.wavepacket.Q, "wavepacket");
    read(w, "epsilon", c.wavepacket.epsilon, "wavepacket");
    read(w, "envelope", c.wavepacket.envelope, "wavepacket");
    if (c.wavepacket.envelope != "gaussian") throw ConfigError("config", "only the gaussian envelope is supported");
  }
  if (j.contains("observable")) {
    const auto& o = j["observable"];
    allow_keys(o, "observable", {"preset", "ptilde_over_p", "window", "blind_length"});
    read(o, "preset", c.observable.preset, "observable");
    read(o, "ptilde_over_p", c.observable.ptilde_over_p, "observable");
    read(o, "window", c.observable.window, "observable");
    read(o, "blind_length", c.observable.blind_length, "observable");
    const auto& p = c.observable.preset;
    if (p != "fringe" && p != "windowed-fringe" && p != "blind") throw ConfigError("config", "unknown observable preset " + p);
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    allow_keys(r, "run", {"T", "K", "samples", "seed", "tolerance", "p_magnitudes", "eta_seq", "ladder_epsilon", "max_total",
                          "v_points", "xi_points", "fringe", "boltzmann", "probes"});
    read(r, "T", c.run.T, "run");
    read(r, "K", c.run.K, "run");
    read(r, "samples", c.run.samples, "run");
    if (r.contains("seed")) {
      const auto& js = r["seed"];
      if (!js.is_number_integer() || (js.is_number_integer() && !js.is_number_unsigned() && js.get<long long>() < 0))
        throw ConfigError("config", "run.seed must be a non-negative integer");
      c.run.seed = r["seed"].get<std::uint64_t>();
    }
    read(r, "tolerance", c.run.tolerance, "run");
    read(r, "p_magnitudes", c.run.p_magnitudes, "run");
    read(r, "eta_seq", c.run.eta_seq, "run");
    read(r, "ladder_epsilon", c.run.ladder_epsilon, "run");
    read(r, "max_total", c.run.max_total, "run");
    read(r, "v_points", c.run.v_points, "run");
    read(r, "xi_points", c.run.xi_points, "run");
    if (r.contains("fringe")) {
      const auto& f = r["fringe"];
      allow_keys(f, "run.fringe", {"P", "Q", "ratios"});
      read(f, "P", c.run.fringe.P, "run.fringe");
      read(f, "Q", c.run.fringe.Q, "run.fringe");
      read(f, "ratios", c.run.fringe.ratios, "run.fringe");
    }
    if (r.contains("boltzmann")) {
      const auto& b = r["boltzmann"];
      allow_keys(b, "run.boltzmann", {"de", "ne", "nc", "n_phi", "dt", "T", "gain", "snapshots", "bump_center", "bump_width2",
                                      "particles", "dsmc_times"});
      auto& B = c.run.boltzmann;
      read(b, "de", B.de, "run.boltzmann");
      read(b, "ne", B.ne, "run.boltzmann");
      read(b, "nc", B.nc, "run.boltzmann");
      read(b, "n_phi", B.n_phi, "run.boltzmann");
      read(b, "dt", B.dt, "run.boltzmann");
      read(b, "T", B.T, "run.boltzmann");
      read(b, "gain", B.gain, "run.boltzmann");
      read(b, "snapshots", B.snapshots, "run.boltzmann");
      read(b, "bump_center", B.bump_center, "run.boltzmann");
      read(b, "bump_width2", B.bump_width2, "run.boltzmann");
      read(b, "particles", B.particles, "run.boltzmann");
      read(b, "dsmc_times", B.dsmc_times, "run.boltzmann");
      if (B.ne < 2 || B.nc < 2 || !(B.de > 0.0) || !(B.dt > 0.0) || B.T < 0.0)
        throw ConfigError("config", "run.boltzmann grid sizes, de and dt must be positive");
    }
    if (r.contains("probes")) {
      const auto& p = r["probes"];
      allow_keys(p, "run.probes", {"lattice", "tolerance_scale", "probes"});
      read(p, "lattice", c.run.probes.lattice, "run.probes");
      read(p, "tolerance_scale", c.run.probes.tolerance_scale, "run.probes");
      read(p, "probes", c.run.probes.probes, "run.probes");
      if (c.run.probes.lattice != "full" && c.run.probes.lattice != "quick")
        throw ConfigError("config", "run.probes.lattice must be full or quick");
      static const std::set<std::string> known{"uno_m1", "uno_m2", "due", "tre", "upsilon_derivative", "level_sets"};
      for (auto& id : c.run.probes.probes)
        if (!known.count(id)) throw ConfigError("config", "unknown probe " + id);
    }
  }
  if (j.contains("output")) {
    allow_keys(j["output"], "output", {"dir"});
    read(j["output"], "dir", c.out_dir, "output");
  }
  if (static_cast<int>(c.wavepacket.P.size()) != c.model.d || static_cast<int>(c.wavepacket.Q.size()) != c.model.d)
    throw ConfigError("config", "wavepacket P and Q must have model.d components");
  if (c.run.fringe.P.size() != c.run.fringe.Q.size() || c.run.fringe.P.empty())
    throw ConfigError("config", "run.fringe P and Q must have equal, nonzero length");
  detail::require_positive(c.wavepacket.epsilon, "wavepacket.epsilon");
  detail::require_positive(c.run.eta_seq, "run.eta_seq");
  detail::require_positive(c.run.p_magnitudes, "run.p_magnitudes");
  if (c.run.T.empty()) throw ConfigError("config", "run.T must not be empty");
  if (c.run.K < 0 || c.run.K > 30) throw ConfigError("config", "run.K must lie in [0, 30]");
  if (!(c.run.tolerance > 0.0)) throw ConfigError("config", "run.tolerance must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return parse_config(j);
}

inline std::uint64_t require_seed(const ExperimentConfig& c, const std::string& what) {
  if (!c.run.seed) throw ConfigError("config", what + " is a Monte Carlo run and needs run.seed or --seed");
  return *c.run.seed;
}

inline DispersionModel make_model(const ModelConfig& mc) {
  auto m = quadratic_einstein(mc.beta, mc.mu, mc.omega, mc.ff_width, mc.d);
  return mc.coupling ? m : without_coupling(m);
}

inline WavePacketSpec make_spec(const ExperimentConfig& c, double eps) {
  WavePacketSpec s;
  s.d = c.model.d;
  s.P = c.wavepacket.P;
  s.Q = c.wavepacket.Q;
  s.epsilon = eps;
  return s;
}

inline TwoScaleObservable make_observable(const ExperimentConfig& c) {
  const Vec Pt = scale(c.wavepacket.P, c.observable.ptilde_over_p);
  const auto& p = c.observable.preset;
  if (p == "fringe") return fringe_observable(Pt, c.wavepacket.P);
  if (p == "windowed-fringe") return windowed_fringe_observable(Pt, c.wavepacket.P, c.observable.window);
  return blind_observable(c.model.d, c.observable.blind_length);
}

inline ProbeLattice make_probe_lattice(const ExperimentConfig& c) {
  ProbeLattice l;
  if (c.run.probes.lattice == "quick") {
    l.p = {0.5, 2.0};
    l.theta = linspace(-0.5, 3.5, 5);
    l.eta = {0.1, 0.01, 0.001};
    l.pu = {0.2, 0.8, 3.0};
    l.theta_decades = {1.0, 10.0, 100.0};
    l.alpha = {0.0, 1.0, 3.0};
    l.v = {0.5, 2.0};
    l.samples = 40000;
  }
  l.tol_scale = c.run.probes.tolerance_scale;
  l.stability *= c.run.probes.tolerance_scale;
  if (c.run.seed) l.seed = *c.run.seed;
  return l;
}

// --- output -----------------------------------------------------------------------

inline std::string fmt17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// RFC-4180: CRLF records, fields with separators, quotes or line breaks are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : ncol_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != ncol_) throw Error("cli", "csv row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote(fields[i]);
    }
    out_ << "\r\n";
  }
  void row(const std::vector<double>& v) {
    std::vector<std::string> s;
    for (double x : v) s.push_back(fmt17(x));
    row(s);
  }
  std::string str() const { return out_.str(); }

  static std::string quote(const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char ch : f) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  }

 private:
  std::size_t ncol_;
  std::ostringstream out_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cli", "cannot write " + path);
  f << text;
}

inline json to_json(cplx z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

inline json to_json(const CrossSectionReport& r) {
  json raw = json::array();
  for (auto z : r.raw) raw.push_back(to_json(z));
  return json{{"P", r.P},
              {"phi_P", to_json(r.phi_P)},
              {"sigma_shell", r.sigma_shell},
              {"sigma_resolvent", r.sigma_resolvent},
              {"rel_gap", r.rel_gap},
              {"tolerance", r.tolerance},
              {"eta_sequence", r.eta_sequence},
              {"raw", raw},
              {"extrapolation_residual", r.extrapolation_residual},
              {"cauchy_ok", r.cauchy_ok},
              {"pass", r.pass},
              {"provenance",
               {{"module", "collision"},
                {"route", "sigma_shell: co-area shell quadrature; sigma_resolvent: -2 Im of the Richardson-extrapolated resolvent"},
                {"richardson_stages", 2}}}};
}

inline json to_json(const EstimateProbe& p) {
  json worst = json::object(), metrics = json::object(), checks = json::object();
  for (auto& w : p.worst) worst[w.first] = w.second;
  for (auto& m : p.metrics) metrics[m.first] = m.second;
  for (auto& c : p.checks) checks[c.first] = c.second;
  return json{{"id", p.id},
              {"lattice", p.lattice},
              {"fitted_constant", p.fitted_constant},
              {"refined_constant", p.refined_constant},
              {"refinement_stable", p.refinement_stable},
              {"slope", p.slope},
              {"slope_target", p.slope_target},
              {"slope_tolerance", p.slope_tolerance},
              {"worst_point", worst},
              {"columns", p.columns},
              {"rows", p.rows},
              {"metrics", metrics},
              {"checks", checks},
              {"pass", p.pass},
              {"provenance", {{"module", "analysis_checks"}, {"route", "adaptive Gauss-Kronrod or stratified Monte Carlo"}}}};
}

inline json to_json(const ValidationReport& r) {
  json checks = json::array();
  for (auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"fitted", c.fitted}, {"declared", c.declared}, {"pass", c.pass},
                      {"worst_point", c.worst_point}, {"detail", c.detail}});
  return json{{"pass", r.pass()}, {"checks", checks}, {"provenance", {{"module", "dispersion"}, {"route", "lattice sup ratios"}}}};
}

// --- experiments ------------------------------------------------------------------

struct FringeRun {
  FringeSweep sweep;
  json report;
  std::string csv;
};

inline FringeRun run_fringes(const ExperimentConfig& c) {
  WavePacketSpec s;
  s.d = static_cast<int>(c.run.fringe.P.size());
  s.P = c.run.fringe.P;
  s.Q = c.run.fringe.Q;
  auto mc = c.model;
  mc.d = s.d;
  FringeRun r;
  r.sweep = fringe_sweep(s, make_model(mc), c.wavepacket.epsilon, c.run.fringe.ratios);
  CsvWriter w({"epsilon", "Ptilde_over_P", "re", "im"});
  json pts = json::array();
  for (auto& p : r.sweep.points) {
    w.row(std::vector<double>{p.epsilon, p.ptilde_over_p, p.value.real(), p.value.imag()});
    pts.push_back({{"epsilon", p.epsilon}, {"Ptilde_over_P", p.ptilde_over_p}, {"value", to_json(p.value)}});
  }
  json ex = json::array();
  for (std::size_t k = 0; k < r.sweep.ratios.size(); ++k)
    ex.push_back({{"Ptilde_over_P", r.sweep.ratios[k]}, {"extrapolated", to_json(r.sweep.extrapolated[k])}, {"order", r.sweep.order[k]}});
  r.csv = w.str();
  r.report = {{"points", pts},
              {"extrapolated", ex},
              {"provenance",
               {{"module", "wavepacket"},
                {"route", "FFT free propagation to the overlap time, fringe Fourier coefficient, Richardson in epsilon"},
                {"d", s.d}}}};
  return r;
}

struct DecoherenceRow {
  double epsilon, T;
  cplx damped, free;
  std::optional<cplx> ratio;
  double target;
};

struct DecoherenceResult {
  double sigma_P = 0.0;
  cplx phi;
  std::vector<DecoherenceRow> rows;
  std::vector<ResumTable> resummation;
  json report;
  std::string csv;
};

namespace detail {

inline std::vector<Axis> decoherence_v_axes(const WavePacketSpec& s, int n_req) {
  const double half = 6.0 * s.epsilon;
  const double dv_max = pi * s.epsilon / (2.0 * norm(s.Q) + 2.0 * kEnvelopeWidth);
  int n = n_req > 0 ? n_req : 2 * static_cast<int>(std::ceil(half / dv_max)) + 1;
  return std::vector<Axis>(s.d, Axis::centered(0.0, half, n));
}

inline std::vector<Axis> decoherence_xi_axes(const WavePacketSpec& s, const TwoScaleObservable& J, int n_req) {
  std::vector<Axis> ax;
  if (J.kind == TwoScaleObservable::Kind::fringe) {
    for (int k = 0; k < s.d; ++k) ax.push_back(Axis::point(2.0 * J.Ptilde[k]));
    return ax;
  }
  const int n = n_req > 0 ? n_req : 9;
  const double step = 0.9 * pi * s.epsilon / kEnvelopeWidth;
  for (int k = 0; k < s.d; ++k) ax.push_back(Axis::centered(2.0 * s.P[k], 0.5 * step * (n - 1), n));
  return ax;
}

}  // namespace detail

// Damped against free pairing of the +- component for every epsilon and T, the resummation
// route at each T, the fringe sweep and the cross-section report for P.
inline DecoherenceResult run_decoherence_experiment(const ExperimentConfig& c) {
  DecoherenceResult r;
  const auto m = make_model(c.model);
  const auto J = make_observable(c);
  const bool blind = J.kind == TwoScaleObservable::Kind::blind;
  // the shell cross section needs d >= 2; in d = 1 only the resolvent route is available
  std::optional<CrossSectionReport> xs;
  if (m.zero_coupling()) {
    r.phi = 0.0;
  } else if (m.d >= 2) {
    xs = cross_section(m, c.wavepacket.P, c.run.eta_seq, c.run.tolerance);
    r.phi = xs->phi_P;
  } else {
    r.phi = phi_P(m, c.wavepacket.P, c.run.eta_seq).value;
  }
  r.sigma_P = -2.0 * r.phi.imag();
  CsvWriter w({"epsilon", "T", "damped_re", "damped_im", "free_re", "free_im", "ratio_re", "ratio_im", "target"});
  json rows = json::array();
  for (double eps : c.wavepacket.epsilon) {
    auto s = make_spec(c, eps);
    auto xi = detail::decoherence_xi_axes(s, J, c.run.xi_points);
    auto va = detail::decoherence_v_axes(s, c.run.v_points);
    std::size_t cells = 1;
    for (auto& a : xi) cells *= a.n;
    for (auto& a : va) cells *= a.n;
    if (cells > (std::size_t{1} << 24)) throw ConfigError("config", "decoherence grid exceeds 2^24 cells; lower v_points or xi_points");
    auto W0 = initial_wigner_hat(s, Component::pm, xi, va);
    for (double T : c.run.T) {
      DecoherenceRow row{eps, T, pair(J, evolve_offdiagonal_damped(W0, m, T, r.sigma_P)), pair(J, free_evolve_offdiagonal(W0, m, T)),
                         std::nullopt, std::exp(-T * r.sigma_P)};
      if (!blind && row.free != cplx(0.0)) row.ratio = row.damped / row.free;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      w.row(std::vector<double>{eps, T, row.damped.real(), row.damped.imag(), row.free.real(), row.free.imag(),
                                row.ratio ? row.ratio->real() : nan, row.ratio ? row.ratio->imag() : nan, row.target});
      rows.push_back({{"epsilon", eps},
                      {"T", T},
                      {"damped", to_json(row.damped)},
                      {"free", to_json(row.free)},
                      {"ratio", row.ratio ? to_json(*row.ratio) : json(nullptr)},
                      {"target", row.target},
                      {"v_points", va[0].n}});
      r.rows.push_back(row);
    }
  }
  json resum = json::array();
  if (J.kind == TwoScaleObservable::Kind::fringe && norm(add(J.Ptilde, c.wavepacket.P, -1.0)) == 0.0) {
    auto s = make_spec(c, c.wavepacket.epsilon.back());
    for (double T : c.run.T) {
      auto tab = resum_decoherence(s, m, T, c.run.K, J, r.phi);
      resum.push_back({{"T", T},
                       {"K", c.run.K},
                       {"free", to_json(tab.free)},
                       {"S_K", to_json(tab.rows.back().S)},
                       {"ratio_err", tab.rows.back().ratio_err},
                       {"epsilon", s.epsilon}});
      r.resummation.push_back(std::move(tab));
    }
  }
  auto fr = run_fringes(c);
  r.csv = w.str();
  r.report = {{"observable", J.name},
              {"sigma_P", r.sigma_P},
              {"phi_P", to_json(r.phi)},
              {"ratio_defined", !blind},
              {"rows", rows},
              {"resummation", resum},
              {"fringes", fr.report},
              {"cross_section", xs ? to_json(*xs) : json(nullptr)},
              {"provenance",
               {{"module", "boltzmann+observables"},
                {"route", "pair(J, damped) and pair(J, free) on the +- Wigner grid; sigma_P = -2 Im Phi_P"},
                {"resummation_route", "ladder: double sum of script-form terms up to K"}}}};
  return r;
}

struct LadderRun {
  std::vector<Step1Cell> cells;
  double C_fit = 0.0;
  json report;
  std::string csv;
};

// Propagator-form Monte Carlo cells (m + m~ <= max_total) at one epsilon, the single fitted C,
// and the resummation tables at every T.
inline LadderRun run_ladder(const ExperimentConfig& c) {
  const std::uint64_t seed = require_seed(c, "ladder-resum");
  const auto m = make_model(c.model);
  auto s = make_spec(c, c.run.ladder_epsilon);
  const auto J = fringe_observable(s.P, s.P);
  const cplx phi = m.zero_coupling() ? cplx(0.0) : phi_P(m, s.P, c.run.eta_seq).value;
  const double T = c.run.T.front();
  McOptions mo;
  mo.phi = phi;
  LadderRun r;
  std::uint64_t cell_seed = seed;
  for (int a = 0; a <= c.run.max_total; ++a)
    for (int b = 0; a + b <= c.run.max_total; ++b) {
      auto res = ladder_n0_propagator_mc(s, m, a, b, T / s.epsilon, c.run.samples, cell_seed++, J, mo);
      Step1Cell cell{s.epsilon, a, b, res.value, res.ci_halfwidth};
      r.cells.push_back(cell);
      const int n = a + b;
      if (n > 0) r.C_fit = std::max(r.C_fit, std::pow(std::abs(res.value) * detail::factorial(a) * detail::factorial(b), 1.0 / n) / T);
    }
  CsvWriter w({"m", "m_tilde", "re", "im", "bound", "ci_halfwidth"});
  json cells = json::array();
  for (auto& cell : r.cells) {
    const int n = cell.m + cell.mt;
    cell.bound = std::pow(r.C_fit * T, n) / (detail::factorial(cell.m) * detail::factorial(cell.mt));
    cell.ok = std::abs(cell.value) <= cell.bound * (1.0 + 1e-12) || n == 0;
    w.row(std::vector<double>{double(cell.m), double(cell.mt), cell.value.real(), cell.value.imag(), cell.bound, cell.ci});
    cells.push_back({{"m", cell.m}, {"m_tilde", cell.mt}, {"value", to_json(cell.value)}, {"bound", cell.bound}, {"ci_halfwidth", cell.ci}});
  }
  json resum = json::array();
  for (double t : c.run.T) {
    auto tab = resum_decoherence(s, m, t, c.run.K, J, phi);
    json trows = json::array();
    for (auto& row : tab.rows) trows.push_back({{"K", row.K}, {"S", to_json(row.S)}, {"ratio_err", row.ratio_err}});
    resum.push_back({{"T", t}, {"target_ratio", std::exp(-t * tab.sigma_P)}, {"rows", trows}});
  }
  r.csv = w.str();
  r.report = {{"epsilon", s.epsilon},
              {"T", T},
              {"samples", c.run.samples},
              {"seed", seed},
              {"phi_P", to_json(phi)},
              {"C_fit", r.C_fit},
              {"cells", cells},
              {"resummation", resum},
              {"provenance",
               {{"module", "ladder"},
                {"route", "propagator form by Monte Carlo over the loop energies, exact time-simplex integral"},
                {"bound", "(C_fit T)^(m+m~) / (m! m~!), C_fit = smallest constant covering every cell"}}}};
  return r;
}

struct BoltzmannCliRun {
  BoltzmannRun run;
  std::vector<PhaseSpaceDensity> snapshots;
  json report;
  std::string csv;
};

inline PhaseSpaceDensity boltzmann_initial(const VelocityGrid& g, const BoltzmannConfig& b) {
  return sample_density(g, Axis::point(0.0), [&](double, const Vec& V) {
    const double dz = V[2] - b.bump_center;
    return std::exp(-(V[0] * V[0] + V[1] * V[1] + dz * dz) / (2.0 * b.bump_width2));
  });
}

inline BoltzmannCliRun run_boltzmann_experiment(const ExperimentConfig& c) {
  const auto& b = c.run.boltzmann;
  const auto m = make_model(c.model);
  if (m.d != 3) throw ConfigError("config", "the boltzmann subcommand needs model.d = 3");
  std::optional<std::uint64_t> seed;
  if (b.particles > 0) seed = require_seed(c, "boltzmann with DSMC particles");
  auto g = make_velocity_grid(m, b.de, b.ne, b.nc);
  auto op = build_collision_operator(m, g, true, b.n_phi);
  BoltzmannOptions o;
  o.dt = b.dt;
  o.gain = b.gain;
  BoltzmannCliRun r;
  auto F = boltzmann_initial(g, b);
  std::vector<double> snaps = b.snapshots;
  std::sort(snaps.begin(), snaps.end());
  for (double t : snaps)
    if (t < 0.0 || t > b.T) throw ConfigError("config", "snapshot times must lie in [0, run.boltzmann.T]");
  auto F0 = F;
  r.run = evolve_boltzmann(F0, op, b.T, o);
  for (double t : snaps) r.snapshots.push_back(t == 0.0 ? F0 : evolve_boltzmann(F0, op, t, o).F);
  CsvWriter w({"T", "mass", "kinetic_energy", "anisotropy"});
  for (auto& mo : r.run.series) w.row(std::vector<double>{mo.T, mo.mass, mo.kinetic_energy, mo.anisotropy});
  json dsmc = nullptr;
  if (seed) {
    DsmcOptions d;
    d.particles = b.particles;
    d.seed = *seed;
    auto pts = dsmc_relaxation(m, F0, b.dsmc_times, d);
    dsmc = json::array();
    for (auto& p : pts) {
      auto det = evolve_boltzmann(F0, op, p.T, o);
      const auto& mo = det.series.back();
      double vz = 0.0;
      for (int i = 0; i < g.ne; ++i)
        for (int j = 0; j < g.nc; ++j) vz += det.F.values[g.index(i, j)] * g.measure(i, j) * g.r[i] * g.c[j];
      vz /= mo.mass;
      const double ke = mo.kinetic_energy / mo.mass;
      dsmc.push_back({{"T", p.T},
                      {"kinetic_energy", p.kinetic_energy},
                      {"kinetic_energy_se", p.kinetic_energy_se},
                      {"vz", p.vz},
                      {"vz_se", p.vz_se},
                      {"deterministic_kinetic_energy", ke},
                      {"deterministic_vz", vz},
                      {"agree", std::abs(ke - p.kinetic_energy) < d.z * p.kinetic_energy_se &&
                                    std::abs(vz - p.vz) < d.z * p.vz_se}});
    }
  }
  const double M0 = r.run.series.front().mass, M1 = r.run.series.back().mass;
  r.csv = w.str();
  r.report = {{"grid", {{"de", b.de}, {"ne", b.ne}, {"nc", b.nc}, {"n_phi", b.n_phi}}},
              {"dt", b.dt},
              {"T", b.T},
              {"gain", b.gain},
              {"mass_drift_per_T", b.T > 0.0 ? std::abs(M1 - M0) / M0 / b.T : 0.0},
              {"clipped", r.run.clipped},
              {"most_negative", r.run.most_negative},
              {"max_loss", op.max_loss},
              {"snapshots", snaps},
              {"dsmc", dsmc},
              {"provenance",
               {{"module", "boltzmann"},
                {"route", "energy-uniform axisymmetric velocity grid, Taylor exp(hC) collision step, Strang splitting"},
                {"dsmc", "null-collision thinning, z = 3 standard errors"}}}};
  return r;
}

// Real-valued density snapshot in the complex float64 grid format, imaginary parts zero.
inline void write_density_snapshot(const PhaseSpaceDensity& F, const std::string& stem) {
  WignerGrid w;
  w.values.reserve(F.values.size());
  for (double v : F.values) w.values.emplace_back(v, 0.0);
  write_grid_binary(w, stem + ".bin");
  json side = {{"format", "little-endian float64 (re, im) pairs, imaginary part zero"},
               {"T", F.T},
               {"layout", "row-major (x, energy index, cosine index)"},
               {"x_axis", {{"start", F.X.start}, {"step", F.X.step}, {"n", F.X.n}}},
               {"energy", F.V.e},
               {"cosine", F.V.c},
               {"component", "boltzmann-density"}};
  write_text(stem + ".json", side.dump(2) + "\n");
}

inline std::vector<EstimateProbe> run_estimate_probes(const ExperimentConfig& c) {
  const auto m = make_model(c.model);
  const auto lat = make_probe_lattice(c);
  std::vector<EstimateProbe> out;
  for (auto& id : c.run.probes.probes) {
    if (id == "uno_m1") out.push_back(check_uno(m, 1, lat));
    else if (id == "uno_m2") out.push_back(check_uno(m, 2, lat));
    else if (id == "due") out.push_back(check_due(m, lat));
    else if (id == "tre") out.push_back(check_tre(m, lat));
    else if (id == "upsilon_derivative") out.push_back(check_upsilon_derivative(m, lat));
    else if (id == "level_sets") out.push_back(check_level_sets(m, lat));
  }
  return out;
}

inline json probes_report(const std::vector<EstimateProbe>& ps) {
  json arr = json::array();
  bool pass = true;
  json limited = json::array();
  for (auto& p : ps) {
    arr.push_back(to_json(p));
    pass = pass && p.pass;
    for (auto& c : p.checks)
      if (!c.second) limited.push_back(p.id + "." + c.first);
  }
  return {{"pass", pass}, {"failed_checks", limited}, {"probes", arr}};
}

struct ResidueSweep {
  double max_rel_err = 0.0;
  bool pass = false;
  json report;
};

// Closed form against alpha-quadrature for m in 1..5, t in {0.1, 1, 10}, eta in {1, 0.1, 0.01}.
inline ResidueSweep residue_sweep(double e_val = 0.7, double tol = 1e-6) {
  ResidueSweep r;
  json rows = json::array();
  bool conv = true;
  for (int m = 1; m <= 5; ++m)
    for (double t : {0.1, 1.0, 10.0})
      for (double eta : {1.0, 0.1, 0.01}) {
        const cplx cf = residue_time_integral(e_val, t, eta, m);
        const auto q = residue_time_integral_quadrature(e_val, t, eta, m);
        const double err = std::abs(q.value - cf) / std::abs(cf);
        conv = conv && q.converged;
        r.max_rel_err = std::max(r.max_rel_err, err);
        rows.push_back({{"m", m}, {"t", t}, {"eta", eta}, {"closed", to_json(cf)}, {"quadrature", to_json(q.value)}, {"rel_err", err}});
      }
  r.pass = conv && r.max_rel_err < tol;
  r.report = {{"points", rows.size()},
              {"max_rel_err", r.max_rel_err},
              {"tolerance", tol},
              {"pass", r.pass},
              {"rows", rows},
              {"provenance", {{"module", "ladder"}, {"route", "lifted-contour alpha quadrature vs closed form"}, {"e", e_val}}}};
  return r;
}

struct ValidationSuite {
  bool pass = false;
  json report;
};

// Dispersion validation gates everything else; then the probes, the residue sweep, the
// cross-section gate and the resummation check.
inline ValidationSuite run_all_validations(const ExperimentConfig& c) {
  ValidationSuite v;
  const auto m = make_model(c.model);
  auto disp = validate_assumptions(m);
  v.report["schema_version"] = kSchemaVersion;
  v.report["model"] = {{"name", m.name}, {"beta", c.model.beta}, {"mu", c.model.mu}, {"omega", c.model.omega},
                       {"ff_width", c.model.ff_width}, {"d", m.d}};
  v.report["dispersion"] = to_json(disp);
  if (!disp.pass()) {
    v.report["skipped"] = {"estimates", "residue", "cross_section", "resummation"};
    v.report["pass"] = false;
    return v;
  }
  bool pass = true;
  auto probes = probes_report(run_estimate_probes(c));
  pass = pass && probes["pass"].get<bool>();
  v.report["estimates"] = probes;
  auto res = residue_sweep();
  pass = pass && res.pass;
  v.report["residue"] = res.report;
  json xs = json::array();
  cplx phi_P_main = 0.0;
  for (double pm : c.run.p_magnitudes) {
    Vec P(m.d, 0.0);
    P[m.d - 1] = pm;
    auto r = cross_section(m, P, c.run.eta_seq, c.run.tolerance);
    pass = pass && r.pass;
    xs.push_back(to_json(r));
  }
  v.report["cross_section"] = xs;
  {
    auto s = make_spec(c, c.wavepacket.epsilon.back());
    auto J = fringe_observable(s.P, s.P);
    const cplx phi = m.zero_coupling() ? cplx(0.0) : phi_P(m, s.P, c.run.eta_seq).value;
    json rs = json::array();
    for (double T : c.run.T) {
      auto tab = resum_decoherence(s, m, T, c.run.K, J, phi);
      const bool ok = tab.rows.back().ratio_err < 1e-10;
      pass = pass && ok;
      rs.push_back({{"T", T}, {"K", c.run.K}, {"ratio_err", tab.rows.back().ratio_err}, {"tolerance", 1e-10}, {"pass", ok}});
    }
    v.report["resummation"] = {{"phi_P", to_json(phi)}, {"rows", rs}, {"provenance", {{"module", "ladder"}, {"route", "script-form double sum"}}}};
  }
  v.pass = pass;
  v.report["pass"] = pass;
  return v;
}

}  // namespace decoh
