// Command-line front end: wires JSON configs to the simulation modules and
// writes reproducible CSV/JSON artifacts plus a manifest per run.
//
// Exit codes: 0 success, 2 usage error, 3 validation failure. Failures print
// a machine-readable JSON object {"error": ..., "code": ...} on stderr.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spdcsim/chi2.hpp"
#include "spdcsim/experiment.hpp"
#include "spdcsim/greens.hpp"
#include "spdcsim/json_io.hpp"
#include "spdcsim/polarization.hpp"
#include "spdcsim/tomography.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spdcsim;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
  }
  fs::rename(tmp, path);
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct RunContext {
  std::string command;
  fs::path out_dir;
  json resolved_config = json::object();
  json metrics = json::object();
  std::vector<std::string> artifacts;

  void write_manifest() const {
    json m{{"command", command},       {"version", kVersion},
           {"timestamp", iso_now()},   {"config", resolved_config},
           {"artifacts", artifacts},   {"metrics", metrics}};
    write_text_atomic(out_dir / (command + "_manifest.json"), m.dump(2) + "\n");
  }

  void emit(const std::string& name, const std::string& content) {
    write_text_atomic(out_dir / name, content);
    artifacts.push_back(name);
  }
};

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read " + path);
  json j;
  f >> j;
  return j;
}

// Config-file values fill in options the user did not pass on the command
// line. Flat key table, keys match the long option names without "--".
template <typename T>
void apply_config(const json& cfg, const CLI::Option* opt, const std::string& key, T& var) {
  if (opt->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<T>();
}

IndexTable default_film_table() {
  IndexTable t;
  const double lam[] = {700, 788, 900, 1000, 1200, 1400, 1576, 1800};
  const double n[] = {4.80, 4.50, 4.32, 4.20, 4.10, 4.00, 3.95, 3.90};
  for (int i = 0; i < 8; ++i) {
    t.wavelength_m.push_back(lam[i] * 1e-9);
    t.n.emplace_back(n[i], 0.0);
  }
  return t;
}

LayeredStack load_stack(const std::string& path, double thickness_nm) {
  if (path.empty())
    return LayeredStack::three_layer(default_film_table(), thickness_nm * 1e-9,
                                     Complex(1.45, 0.0));
  return stack_from_json(load_json_file(path));
}

TwoQubitKet named_target(const std::string& name) {
  if (name == "phi_minus") return TwoQubitKet::phi_minus();
  if (name == "phi_plus") return TwoQubitKet::phi_plus();
  if (name == "psi_plus") return TwoQubitKet::psi_plus();
  if (name == "psi_minus") return TwoQubitKet::psi_minus();
  throw std::invalid_argument("unknown target state '" + name + "'");
}

int cmd_state_sweep(RunContext& ctx, int grid) {
  ctx.resolved_config["grid"] = grid;
  if (grid < 2) throw std::invalid_argument("state-sweep: grid must be >= 2");
  std::ostringstream csv;
  csv << "phi_p_deg,concurrence,fidelity_phi_minus,fidelity_psi_plus\n";
  double cmin = 1e300, cmax = -1e300;
  for (int i = 0; i < grid; ++i) {
    const double deg = 360.0 * i / grid;
    const auto rho = density_from_ket(tmd_state(PumpAngle::from_degrees(deg)));
    const double c = concurrence(rho);
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
    csv << fmt_g(deg) << ',' << fmt_g(c) << ','
        << fmt_g(fidelity(rho, TwoQubitKet::phi_minus())) << ','
        << fmt_g(fidelity(rho, TwoQubitKet::psi_plus())) << '\n';
  }
  ctx.emit("state_sweep.csv", csv.str());
  ctx.metrics = {{"min_concurrence", cmin}, {"max_concurrence", cmax}};
  return 0;
}

int cmd_rate_sweep(RunContext& ctx, int grid, double analyzer_deg) {
  ctx.resolved_config["grid"] = grid;
  ctx.resolved_config["analyzer-deg"] = analyzer_deg;
  if (grid < 2) throw std::invalid_argument("rate-sweep: grid must be >= 2");
  struct Mode {
    const char* name;
    AnalyzerConfig cfg;
    double angle_deg;
  };
  const Mode modes[] = {
      {"none", AnalyzerConfig::none(), 0.0},
      {"corotating_parallel", AnalyzerConfig::corotating_parallel(), 0.0},
      {"corotating_perpendicular", AnalyzerConfig::corotating_perpendicular(), 0.0},
      {"fixed", AnalyzerConfig::common_fixed(analyzer_deg * M_PI / 180.0), analyzer_deg}};
  std::ostringstream csv;
  csv << "phi_p_deg,rate,analyzer_mode,analyzer_deg\n";
  for (const Mode& m : modes)
    for (int i = 0; i < grid; ++i) {
      const double deg = 360.0 * i / grid;
      csv << fmt_g(deg) << ','
          << fmt_g(projected_pair_rate(PumpAngle::from_degrees(deg), m.cfg)) << ','
          << m.name << ',' << fmt_g(m.angle_deg) << '\n';
    }
  ctx.emit("rate_sweep.csv", csv.str());
  return 0;
}

int cmd_gf_density_matrix(RunContext& ctx, const std::string& stack_path, double na,
                          double phi_p_deg, double thickness_nm, int n_theta, int n_phi,
                          int n_freq) {
  ctx.resolved_config.update({{"stack", stack_path},
                              {"na", na},
                              {"phi-p-deg", phi_p_deg},
                              {"thickness-nm", thickness_nm},
                              {"n-theta", n_theta},
                              {"n-phi", n_phi},
                              {"n-freq", n_freq}});
  const LayeredStack stack = load_stack(stack_path, thickness_nm);
  PumpField pump;
  pump.phi_p = PumpAngle::from_degrees(phi_p_deg);
  CollectionOptions opts;
  opts.na = na;
  opts.n_theta = n_theta;
  opts.n_phi = n_phi;
  opts.n_freq = n_freq;
  const DensityMatrix rho = source_density_matrix(stack, pump, opts, ChiTensor{});
  json out = density_to_json(rho);
  out["meta"] = {{"na", na},
                 {"phi_p_deg", phi_p_deg},
                 {"thickness_nm", thickness_nm},
                 {"band_nm", {opts.band_min * 1e9, opts.band_max * 1e9}},
                 {"n_theta", n_theta},
                 {"n_phi", n_phi},
                 {"n_freq", n_freq}};
  out["report"] = {{"fidelity_phi_minus", fidelity(rho, TwoQubitKet::phi_minus())},
                   {"fidelity_psi_plus", fidelity(rho, TwoQubitKet::psi_plus())},
                   {"fidelity_tmd_state",
                    fidelity(rho, tmd_state(PumpAngle::from_degrees(phi_p_deg)))},
                   {"concurrence", concurrence(rho)},
                   {"purity", rho.purity()}};
  ctx.emit("gf_density_matrix.json", out.dump(2) + "\n");
  ctx.metrics = out["report"];
  return 0;
}

std::string tomography_csv(const TomographySet& set) {
  std::ostringstream csv;
  csv << "qwp_s_deg,hwp_s_deg,qwp_i_deg,hwp_i_deg,counts,duration_s\n";
  for (const auto& r : set.records) {
    csv << fmt_g(r.setting.qwp_s * 180.0 / M_PI) << ','
        << fmt_g(r.setting.hwp_s * 180.0 / M_PI) << ','
        << fmt_g(r.setting.qwp_i * 180.0 / M_PI) << ','
        << fmt_g(r.setting.hwp_i * 180.0 / M_PI) << ',' << r.counts << ','
        << fmt_g(r.duration_s) << '\n';
  }
  return csv.str();
}

TomographySet tomography_from_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read " + path);
  std::string header;
  if (!std::getline(f, header)) throw std::invalid_argument("empty counts file " + path);
  std::vector<std::string> cols;
  {
    std::stringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  const char* required[] = {"qwp_s_deg", "hwp_s_deg", "qwp_i_deg",
                            "hwp_i_deg", "counts",    "duration_s"};
  std::map<std::string, int> pos;
  for (size_t i = 0; i < cols.size(); ++i) pos[cols[i]] = static_cast<int>(i);
  for (const char* r : required)
    if (!pos.count(r))
      throw std::invalid_argument(std::string("counts file missing column '") + r + "'");
  TomographySet set;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) fields.push_back(c);
    if (fields.size() < cols.size())
      throw std::invalid_argument("counts file row has too few fields: " + line);
    MeasurementRecord rec;
    const double d2r = M_PI / 180.0;
    rec.setting.qwp_s = std::stod(fields[pos["qwp_s_deg"]]) * d2r;
    rec.setting.hwp_s = std::stod(fields[pos["hwp_s_deg"]]) * d2r;
    rec.setting.qwp_i = std::stod(fields[pos["qwp_i_deg"]]) * d2r;
    rec.setting.hwp_i = std::stod(fields[pos["hwp_i_deg"]]) * d2r;
    rec.counts = std::stoll(fields[pos["counts"]]);
    rec.duration_s = std::stod(fields[pos["duration_s"]]);
    set.records.push_back(rec);
  }
  return set;
}

int cmd_tomography_simulate(RunContext& ctx, double phi_p_deg, double n_total,
                            std::int64_t seed) {
  ctx.resolved_config.update(
      {{"phi-p-deg", phi_p_deg}, {"n-total", n_total}, {"seed", seed}});
  const auto rho = density_from_ket(tmd_state(PumpAngle::from_degrees(phi_p_deg)));
  std::optional<std::uint64_t> s;
  if (seed >= 0) s = static_cast<std::uint64_t>(seed);
  const auto set = simulate_counts(rho, TomographySet::canonical(), n_total, s);
  ctx.emit("tomography_counts.csv", tomography_csv(set));
  return 0;
}

int cmd_tomography_reconstruct(RunContext& ctx, const std::string& input,
                               const std::string& method, const std::string& target,
                               int mc_samples, std::int64_t seed) {
  ctx.resolved_config.update({{"input", input},
                              {"method", method},
                              {"target", target},
                              {"mc-samples", mc_samples},
                              {"seed", seed}});
  const TomographySet data = tomography_from_csv(input);
  json out;
  DensityMatrix rho = DensityMatrix::maximally_mixed();
  if (method == "mle") {
    MleOptions opts;
    if (seed >= 0) opts.seed = static_cast<std::uint64_t>(seed);
    const MleResult res = mle_reconstruct(data, opts);
    rho = res.rho;
    out["likelihood"] = res.neg_log_likelihood;
    out["n_iter"] = res.n_iter;
  } else if (method == "linear") {
    // Linear inversion can leave small negative eigenvalues; report it raw
    // and let the physical metrics come from the MLE path.
    const Eigen::Matrix4cd lin = linear_reconstruct(data);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(lin);
    Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
    ev /= ev.sum();
    rho = DensityMatrix(es.eigenvectors() * ev.asDiagonal() *
                        es.eigenvectors().adjoint());
    out["projected"] = true;
  } else {
    throw std::invalid_argument("unknown method '" + method + "' (mle|linear)");
  }
  out.update(density_to_json(rho));
  const double conc = concurrence(rho);
  out["concurrence"] = {{"mean", conc}, {"std", 0.0}};
  out["fidelity_phi_minus"] = fidelity(rho, TwoQubitKet::phi_minus());
  out["fidelity_psi_plus"] = fidelity(rho, TwoQubitKet::psi_plus());
  std::optional<TwoQubitKet> tgt;
  if (target != "none") {
    tgt = named_target(target);
    out["fidelity_target"] = {{"name", target}, {"value", fidelity(rho, *tgt)}};
  }
  if (mc_samples > 0) {
    const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : 0;
    const auto mc_c = monte_carlo_uncertainty(data, mc_samples, Statistic::Concurrence,
                                              std::nullopt, s);
    out["concurrence"] = {{"mean", conc},
                          {"std", mc_c.std},
                          {"excluded", mc_c.excluded},
                          {"formatted", format_pm(conc, mc_c.std)}};
    if (tgt) {
      const auto mc_f =
          monte_carlo_uncertainty(data, mc_samples, Statistic::Fidelity, tgt, s + 1);
      const double fv = out["fidelity_target"]["value"].get<double>();
      out["fidelity_target"]["std"] = mc_f.std;
      out["fidelity_target"]["excluded"] = mc_f.excluded;
      out["fidelity_target"]["formatted"] = format_pm(fv, mc_f.std);
    }
  }
  ctx.emit("tomography_result.json", out.dump(2) + "\n");
  ctx.metrics = {{"concurrence", conc},
                 {"fidelity_phi_minus", out["fidelity_phi_minus"]},
                 {"fidelity_psi_plus", out["fidelity_psi_plus"]}};
  return 0;
}

std::string histogram_csv(const CoincidenceHistogram& h) {
  std::ostringstream csv;
  csv << "delay_ps,counts\n";
  for (size_t i = 0; i < h.counts.size(); ++i)
    csv << fmt_g(h.delays_s[i] * 1e12) << ',' << h.counts[i] << '\n';
  return csv.str();
}

CoincidenceHistogram histogram_from_csv(const std::string& path, double duration_s) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read " + path);
  std::string header;
  if (!std::getline(f, header) || header.rfind("delay_ps,counts", 0) != 0)
    throw std::invalid_argument("histogram file missing 'delay_ps,counts' header");
  CoincidenceHistogram h;
  h.duration_s = duration_s;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("histogram row has no counts field: " + line);
    h.delays_s.push_back(std::stod(line.substr(0, comma)) * 1e-12);
    h.counts.push_back(std::stoll(line.substr(comma + 1)));
  }
  if (h.delays_s.size() < 2)
    throw std::invalid_argument("histogram file needs at least 2 bins");
  h.bin_width_s = h.delays_s[1] - h.delays_s[0];
  return h;
}

int cmd_histogram(RunContext& ctx, double pair_rate, double singles_s, double singles_i,
                  double jitter_ps, double bin_ps, double duration_s, int n_bins,
                  double window_ps, std::int64_t seed) {
  ctx.resolved_config.update({{"pair-rate", pair_rate},
                              {"singles-s", singles_s},
                              {"singles-i", singles_i},
                              {"jitter-ps", jitter_ps},
                              {"bin-ps", bin_ps},
                              {"duration-s", duration_s},
                              {"n-bins", n_bins},
                              {"window-ps", window_ps},
                              {"seed", seed}});
  const auto h = synthesize_histogram(pair_rate, singles_s, singles_i, jitter_ps * 1e-12,
                                      bin_ps * 1e-12, duration_s,
                                      seed >= 0 ? static_cast<std::uint64_t>(seed) : 0,
                                      n_bins);
  ctx.emit("histogram.csv", histogram_csv(h));
  const CarResult c = car(h, window_ps * 1e-12);
  json out{{"car", c.value},
           {"car_std", c.std},
           {"background_limited", c.background_limited},
           {"pair_evidence", pair_evidence(c)}};
  ctx.emit("histogram.json", out.dump(2) + "\n");
  ctx.metrics = out;
  return 0;
}

int cmd_spectrum(RunContext& ctx, const std::string& input, double duration_s,
                 double fiber_km, double dispersion, double lambda_deg,
                 double filter_edge_nm) {
  ctx.resolved_config.update({{"input", input},
                              {"duration-s", duration_s},
                              {"fiber-km", fiber_km},
                              {"dispersion-ps-nm-km", dispersion},
                              {"lambda-deg-nm", lambda_deg},
                              {"filter-edge-nm", filter_edge_nm}});
  const auto h = histogram_from_csv(input, duration_s);
  SpectrometerConfig cfg;
  cfg.fiber_length_km = fiber_km;
  cfg.fiber_length_idler_km = fiber_km;
  cfg.dispersion_ps_nm_km = dispersion;
  cfg.reference_wavelength_nm = lambda_deg;
  const auto filter = [filter_edge_nm](double l) {
    return l >= filter_edge_nm ? 1.0 : 0.0;
  };
  const auto points = spectrum_estimate(h, cfg, filter);
  std::ostringstream csv;
  csv << "lambda_nm,counts_rel,std,flagged\n";
  for (const auto& p : points)
    csv << fmt_g(p.lambda_nm) << ',' << fmt_g(p.counts_rel) << ',' << fmt_g(p.std) << ','
        << (p.flagged ? 1 : 0) << '\n';
  ctx.emit("spectrum.csv", csv.str());
  return 0;
}

int cmd_efficiency(RunContext& ctx, const DetectionBudget& b) {
  ctx.resolved_config.update({{"t-opt", b.t_opt},
                              {"eta-coupl", b.eta_coupl},
                              {"eta-bs", b.eta_bs},
                              {"eta-detec", b.eta_detec},
                              {"eta-lp", b.eta_lp}});
  const double eta = total_efficiency(b);
  json out{{"eta_tot", eta}};
  ctx.emit("efficiency.json", out.dump(2) + "\n");
  ctx.metrics = out;
  return 0;
}

int cmd_report(const fs::path& dir, const fs::path& out_dir) {
  json runs = json::array();
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.size() > 14 && name.substr(name.size() - 14) == "_manifest.json")
        runs.push_back(load_json_file(e.path().string()));
    }
  if (runs.empty())
    throw std::invalid_argument("report: no *_manifest.json files in " + dir.string());
  std::sort(runs.begin(), runs.end(), [](const json& a, const json& b) {
    return a.value("command", "") < b.value("command", "");
  });
  json out{{"version", kVersion}, {"n_runs", runs.size()}, {"runs", runs}};
  write_text_atomic(out_dir / "report.json", out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-pair source simulation and estimation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // let subcommands hand --out/--seed/... back to the app

  std::string config_path, out_str;
  const char* env_out = std::getenv("SPDCSIM_OUT");
  out_str = env_out ? env_out : "out";
  std::int64_t seed = -1;
  int grid = 360;
  app.add_option("--config", config_path, "JSON config file with flat key-value overrides");
  auto* opt_out = app.add_option("--out", out_str, "output directory");
  auto* opt_seed = app.add_option("--seed", seed, "RNG seed (omit for noiseless models)");
  auto* opt_grid = app.add_option("--grid", grid, "sweep grid size / angular resolution");

  auto* sweep = app.add_subcommand("state-sweep",
                                   "concurrence and Bell fidelities vs pump angle");
  auto* rates = app.add_subcommand("rate-sweep", "analyzer rate laws vs pump angle");
  double analyzer_deg = 110.0;
  auto* o_analyzer = rates->add_option("--analyzer-deg", analyzer_deg,
                                       "fixed common analyzer angle, degrees");

  auto* gf = app.add_subcommand("gf-density-matrix",
                                "collection-integrated density matrix from the "
                                "layered-stack Green's function");
  std::string stack_path;
  double na = 0.4, phi_p_deg = 90.0, thickness_nm = 285.0;
  int n_theta = 8, n_phi = 16, n_freq = 1;
  auto* o_stack = gf->add_option("--stack", stack_path, "stack JSON (default built-in)");
  auto* o_na = gf->add_option("--na", na, "collection numerical aperture");
  auto* o_phi = gf->add_option("--phi-p-deg", phi_p_deg, "pump polarization angle");
  auto* o_thick = gf->add_option("--thickness-nm", thickness_nm, "film thickness");
  auto* o_nth = gf->add_option("--n-theta", n_theta, "polar quadrature nodes");
  auto* o_nph = gf->add_option("--n-phi", n_phi, "azimuthal grid points");
  auto* o_nfr = gf->add_option("--n-freq", n_freq, "spectral slices (1 = degenerate)");

  auto* tsim = app.add_subcommand("tomography-simulate",
                                  "synthetic 16-setting coincidence counts");
  double tsim_phi = 90.0, n_total = 1000.0;
  auto* o_tphi = tsim->add_option("--phi-p-deg", tsim_phi, "pump polarization angle");
  auto* o_ntot = tsim->add_option("--n-total", n_total, "mean pairs per setting norm");

  auto* trec = app.add_subcommand("tomography-reconstruct",
                                  "density matrix from a counts CSV");
  std::string trec_input, method = "mle", target = "phi_minus";
  int mc_samples = 0;
  auto* o_input = trec->add_option("--input", trec_input, "counts CSV")->required();
  auto* o_method = trec->add_option("--method", method, "mle|linear");
  auto* o_target = trec->add_option("--target", target,
                                    "fidelity target: phi_minus|phi_plus|psi_plus|"
                                    "psi_minus|none");
  auto* o_mc = trec->add_option("--mc-samples", mc_samples,
                                "Poisson resampling iterations (0 = off)");

  auto* hist = app.add_subcommand("histogram", "synthetic coincidence histogram + CAR");
  double pair_rate = 100.0, singles_s = 20000.0, singles_i = 20000.0;
  double jitter_ps = 40.0, bin_ps = 100.0, duration_s = 60.0, window_ps = 300.0;
  int n_bins = 201;
  auto* o_pr = hist->add_option("--pair-rate", pair_rate, "true pair rate, 1/s");
  auto* o_ss = hist->add_option("--singles-s", singles_s, "signal singles rate, 1/s");
  auto* o_si = hist->add_option("--singles-i", singles_i, "idler singles rate, 1/s");
  auto* o_jit = hist->add_option("--jitter-ps", jitter_ps, "Gaussian timing jitter sigma");
  auto* o_bin = hist->add_option("--bin-ps", bin_ps, "histogram bin width");
  auto* o_dur = hist->add_option("--duration-s", duration_s, "integration time");
  auto* o_nb = hist->add_option("--n-bins", n_bins, "number of delay bins");
  auto* o_win = hist->add_option("--window-ps", window_ps, "CAR peak window");

  auto* spec = app.add_subcommand("spectrum",
                                  "dispersive-fiber spectrum from a histogram CSV");
  std::string spec_input;
  double fiber_km = 1.0, dispersion = 17.0, lambda_deg = 1576.0, filter_edge = 1500.0;
  double spec_duration = 60.0;
  auto* o_sin = spec->add_option("--input", spec_input, "histogram CSV")->required();
  auto* o_sdur = spec->add_option("--duration-s", spec_duration, "integration time");
  auto* o_fib = spec->add_option("--fiber-km", fiber_km, "fiber length per arm");
  auto* o_disp = spec->add_option("--dispersion-ps-nm-km", dispersion, "fiber dispersion");
  auto* o_ldeg = spec->add_option("--lambda-deg-nm", lambda_deg, "degeneracy wavelength");
  auto* o_edge = spec->add_option("--filter-edge-nm", filter_edge, "longpass step edge");

  auto* eff = app.add_subcommand("efficiency", "total detection efficiency budget");
  DetectionBudget budget{0.78, 0.35, 0.45, 0.6, 0.5};
  auto* o_topt = eff->add_option("--t-opt", budget.t_opt, "optics transmission per arm");
  auto* o_ec = eff->add_option("--eta-coupl", budget.eta_coupl, "fiber coupling per arm");
  auto* o_ebs = eff->add_option("--eta-bs", budget.eta_bs, "splitter pair-routing");
  auto* o_ed = eff->add_option("--eta-detec", budget.eta_detec, "detector efficiency");
  auto* o_elp = eff->add_option("--eta-lp", budget.eta_lp, "longpass filter");

  auto* rep = app.add_subcommand("report", "aggregate run manifests into one summary");
  std::string rep_dir;
  auto* o_rdir = rep->add_option("--dir", rep_dir, "directory with manifests "
                                                   "(default: the output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"code", 2}}.dump() << "\n";
    return 2;
  }

  try {
    json cfg = json::object();
    if (!config_path.empty()) cfg = load_json_file(config_path);
    apply_config(cfg, opt_out, "out", out_str);
    apply_config(cfg, opt_seed, "seed", seed);
    apply_config(cfg, opt_grid, "grid", grid);

    RunContext ctx;
    ctx.out_dir = out_str;
    ctx.resolved_config = {{"out", out_str}, {"seed", seed}, {"config", config_path}};

    int rc = 0;
    if (sweep->parsed()) {
      ctx.command = "state_sweep";
      rc = cmd_state_sweep(ctx, grid);
    } else if (rates->parsed()) {
      apply_config(cfg, o_analyzer, "analyzer-deg", analyzer_deg);
      ctx.command = "rate_sweep";
      rc = cmd_rate_sweep(ctx, grid, analyzer_deg);
    } else if (gf->parsed()) {
      apply_config(cfg, o_stack, "stack", stack_path);
      apply_config(cfg, o_na, "na", na);
      apply_config(cfg, o_phi, "phi-p-deg", phi_p_deg);
      apply_config(cfg, o_thick, "thickness-nm", thickness_nm);
      apply_config(cfg, o_nth, "n-theta", n_theta);
      apply_config(cfg, o_nph, "n-phi", n_phi);
      apply_config(cfg, o_nfr, "n-freq", n_freq);
      if (opt_grid->count() || cfg.contains("grid")) n_theta = grid;
      ctx.command = "gf_density_matrix";
      rc = cmd_gf_density_matrix(ctx, stack_path, na, phi_p_deg, thickness_nm, n_theta,
                                 n_phi, n_freq);
    } else if (tsim->parsed()) {
      apply_config(cfg, o_tphi, "phi-p-deg", tsim_phi);
      apply_config(cfg, o_ntot, "n-total", n_total);
      ctx.command = "tomography_simulate";
      rc = cmd_tomography_simulate(ctx, tsim_phi, n_total, seed);
    } else if (trec->parsed()) {
      apply_config(cfg, o_input, "input", trec_input);
      apply_config(cfg, o_method, "method", method);
      apply_config(cfg, o_target, "target", target);
      apply_config(cfg, o_mc, "mc-samples", mc_samples);
      ctx.command = "tomography_reconstruct";
      rc = cmd_tomography_reconstruct(ctx, trec_input, method, target, mc_samples, seed);
    } else if (hist->parsed()) {
      apply_config(cfg, o_pr, "pair-rate", pair_rate);
      apply_config(cfg, o_ss, "singles-s", singles_s);
      apply_config(cfg, o_si, "singles-i", singles_i);
      apply_config(cfg, o_jit, "jitter-ps", jitter_ps);
      apply_config(cfg, o_bin, "bin-ps", bin_ps);
      apply_config(cfg, o_dur, "duration-s", duration_s);
      apply_config(cfg, o_nb, "n-bins", n_bins);
      apply_config(cfg, o_win, "window-ps", window_ps);
      ctx.command = "histogram";
      rc = cmd_histogram(ctx, pair_rate, singles_s, singles_i, jitter_ps, bin_ps,
                         duration_s, n_bins, window_ps, seed);
    } else if (spec->parsed()) {
      apply_config(cfg, o_sin, "input", spec_input);
      apply_config(cfg, o_sdur, "duration-s", spec_duration);
      apply_config(cfg, o_fib, "fiber-km", fiber_km);
      apply_config(cfg, o_disp, "dispersion-ps-nm-km", dispersion);
      apply_config(cfg, o_ldeg, "lambda-deg-nm", lambda_deg);
      apply_config(cfg, o_edge, "filter-edge-nm", filter_edge);
      ctx.command = "spectrum";
      rc = cmd_spectrum(ctx, spec_input, spec_duration, fiber_km, dispersion, lambda_deg,
                        filter_edge);
    } else if (eff->parsed()) {
      apply_config(cfg, o_topt, "t-opt", budget.t_opt);
      apply_config(cfg, o_ec, "eta-coupl", budget.eta_coupl);
      apply_config(cfg, o_ebs, "eta-bs", budget.eta_bs);
      apply_config(cfg, o_ed, "eta-detec", budget.eta_detec);
      apply_config(cfg, o_elp, "eta-lp", budget.eta_lp);
      ctx.command = "efficiency";
      rc = cmd_efficiency(ctx, budget);
    } else if (rep->parsed()) {
      apply_config(cfg, o_rdir, "dir", rep_dir);
      return cmd_report(rep_dir.empty() ? fs::path(out_str) : fs::path(rep_dir),
                        out_str);
    }
    if (rc == 0) ctx.write_manifest();
    return rc;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"code", 3}}.dump() << "\n";
    return 3;
  }
}
