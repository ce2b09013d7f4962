// polent: command-line front end.
//
//   polent state      --phi 90 --delta 0 | --hwp 22.5 --qwp 0
//   polent sweep-hwp  [--start --stop --step] [--simulate --n N]
//   polent sweep-qwp  [--start --stop --step --hwp] [--simulate --n N]
//   polent tomo       --in records.csv | --simulate (--phi --delta | --hwp --qwp) [--n N] [--mc K]
//   polent car        --in sweep.csv | --simulate [--powers ...]
//   polent shg        [--analyzer parallel|perpendicular]
//
// Global: --seed, --config <json>, --out <dir>, --phi-offset.
// Exit codes: 0 success, 1 usage or I/O, 2 numerical non-convergence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "polent/io.hpp"
#include "polent/polent.hpp"

namespace {

using namespace polent;
using io::format_double;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Grid {
  double start = 0.0;
  double stop = 90.0;
  double step = 1.0;

  std::vector<double> values() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw UsageError("grid step must be > 0");
    if (!(start < stop)) throw UsageError("grid start must be < stop");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
  }
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  double phi_offset = 0.0;
  CountingConfig counting = calibrated_config();
  MleOptions mle;
  double counts_per_setting = 1e5;
  int mc_samples = 0;
  Grid hwp_grid{0.0, 90.0, 1.0};
  Grid qwp_grid{0.0, 180.0, 1.0};
  double fixed_hwp = 22.5;
  std::vector<double> powers{2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 65.0};

  std::uint64_t require_seed() const {
    if (!seed) throw UsageError("this command draws random numbers and needs --seed");
    return *seed;
  }
};

// --- config file -----------------------------------------------------------

template <typename F>
void for_each_key(const json& obj, const std::string& where, F&& f) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!f(key, value)) throw UsageError("config: unknown key '" + where + "." + key + "'");
  }
}

void read_grid(const json& j, const std::string& where, Grid& g) {
  for_each_key(j, where, [&](const std::string& k, const json& v) {
    if (k == "start") g.start = v.get<double>();
    else if (k == "stop") g.stop = v.get<double>();
    else if (k == "step") g.step = v.get<double>();
    else return false;
    return true;
  });
}

LikelihoodModel parse_model(const std::string& name) {
  if (name == "poisson") return LikelihoodModel::poisson;
  if (name == "gaussian") return LikelihoodModel::gaussian;
  throw UsageError("likelihood model must be 'poisson' or 'gaussian'");
}

void load_config(const std::string& path, RunConfig& cfg) {
  json root;
  try {
    auto in = io::open_input(path);
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  try {
    for_each_key(root, "", [&](const std::string& k, const json& v) {
      if (k == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (k == "out") {
        cfg.out_dir = v.get<std::string>();
      } else if (k == "phi_offset") {
        cfg.phi_offset = v.get<double>();
      } else if (k == "counting") {
        CountingConfig& c = cfg.counting;
        for_each_key(v, k, [&](const std::string& f, const json& x) {
          if (f == "pair_rate_coeff") c.pair_rate_coeff = x.get<double>();
          else if (f == "singles_coeff_1") c.singles_coeff_1 = x.get<double>();
          else if (f == "singles_coeff_2") c.singles_coeff_2 = x.get<double>();
          else if (f == "dark_rate_1") c.dark_rate_1 = x.get<double>();
          else if (f == "dark_rate_2") c.dark_rate_2 = x.get<double>();
          else if (f == "window_tau") c.window_tau = x.get<double>();
          else if (f == "integration_time") c.integration_time = x.get<double>();
          else if (f == "bin_width") c.bin_width = x.get<double>();
          else if (f == "histogram_bins") c.histogram_bins = x.get<int>();
          else return false;
          return true;
        });
      } else if (k == "tomography") {
        for_each_key(v, k, [&](const std::string& f, const json& x) {
          if (f == "counts_per_setting") cfg.counts_per_setting = x.get<double>();
          else if (f == "mc_samples") cfg.mc_samples = x.get<int>();
          else if (f == "max_iters") cfg.mle.max_iters = x.get<int>();
          else if (f == "tol") cfg.mle.tol = x.get<double>();
          else if (f == "model") cfg.mle.model = parse_model(x.get<std::string>());
          else return false;
          return true;
        });
      } else if (k == "sweep_hwp") {
        read_grid(v, k, cfg.hwp_grid);
      } else if (k == "sweep_qwp") {
        for_each_key(v, k, [&](const std::string& f, const json& x) {
          if (f == "hwp") {
            cfg.fixed_hwp = x.get<double>();
            return true;
          }
          read_grid(json{{f, x}}, k, cfg.qwp_grid);
          return true;
        });
      } else if (k == "car") {
        for_each_key(v, k, [&](const std::string& f, const json& x) {
          if (f != "powers") return false;
          cfg.powers = x.get<std::vector<double>>();
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// --- helpers ---------------------------------------------------------------

std::filesystem::path output_path(const RunConfig& cfg, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  return std::filesystem::path(cfg.out_dir) / name;
}

void write_output(const RunConfig& cfg, const std::string& name, const std::string& text) {
  io::write_text_file(output_path(cfg, name).string(), text);
}

// Runs body(i) for i in [0, n) on worker threads. Each index writes only its
// own slot, so the output order is the grid order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), std::max<std::size_t>(n, 1));
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t b = 0; b < n; b += chunk) {
    jobs.push_back(std::async(std::launch::async, [&, b] {
      for (std::size_t i = b; i < std::min(b + chunk, n); ++i) body(i);
    }));
  }
  for (auto& j : jobs) j.get();
}

JonesVector pump_through_plates(const RunConfig& cfg, std::optional<double> hwp, std::optional<double> qwp) {
  std::vector<WaveplateSetting> plates;
  if (hwp) plates.push_back(WaveplateSetting::hwp(*hwp));
  if (qwp) plates.push_back(WaveplateSetting::qwp(*qwp));
  return apply_waveplates(JonesVector::linear(cfg.phi_offset), plates);
}

const std::vector<std::string>& all_targets() {
  static const std::vector<std::string> names{"phi_minus", "psi_plus", "phi_plus", "psi_minus",
                                              "rr",        "ll",       "hh",       "vv"};
  return names;
}

double pure_fidelity(const TwoQubitPureState& psi, const std::string& target) {
  return std::norm(named_target(target).amplitudes().dot(psi.amplitudes()));
}

struct Simulated {
  bool converged = false;
  MetricsReport metrics;
};

Simulated simulate_point(const TwoQubitPureState& psi, const RunConfig& cfg,
                         const std::vector<std::string>& targets, std::uint64_t seed) {
  const auto recs = simulate_tomography(DensityMatrix(psi), default_settings(), cfg.counts_per_setting, seed);
  const auto res = mle_reconstruct(recs, cfg.mle);
  return {res.converged, evaluate_metrics(res.rho, targets)};
}

// Input mode shared by `state` and `tomo --simulate`.
struct StateInput {
  std::optional<double> phi, delta, hwp, qwp;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--phi", phi, "pump ellipse angle phi_p in degrees (crystal frame)");
    cmd->add_option("--delta", delta, "pump relative phase delta in degrees (crystal frame)");
    cmd->add_option("--hwp", hwp, "pump half-wave plate angle in degrees");
    cmd->add_option("--qwp", qwp, "pump quarter-wave plate angle in degrees");
  }

  JonesVector pump(const RunConfig& cfg) const {
    const bool angles = phi || delta;
    const bool plates = hwp || qwp;
    if (angles == plates) throw UsageError("give exactly one of --phi/--delta or --hwp/--qwp");
    if (angles) {
      if (!phi || !delta) throw UsageError("--phi and --delta go together");
      return pump_from_angles({*phi, *delta});
    }
    if (!hwp || !qwp) throw UsageError("--hwp and --qwp go together");
    return pump_through_plates(cfg, hwp, qwp);
  }

  json describe() const {
    if (phi) return {{"phi", *phi}, {"delta", *delta}};
    return {{"hwp", *hwp}, {"qwp", *qwp}};
  }
};

// --- commands --------------------------------------------------------------

int cmd_state(const RunConfig& cfg, const StateInput& input) {
  const JonesVector pump = input.pump(cfg);
  const TwoQubitPureState psi = biphoton_from_pump(pump);
  const PumpAngles a = pump_angles(pump);
  json fid = json::object();
  for (const auto& name : all_targets()) fid[name] = pure_fidelity(psi, name);
  const json out{{"input", input.describe()},
                 {"pump", {{"phi_p", a.phi_p}, {"delta", a.delta}}},
                 {"amplitudes", io::pure_state_to_json(psi)},
                 {"concurrence", concurrence_pure(psi)},
                 {"fidelities", fid}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

struct SweepColumns {
  std::string angle;
  std::vector<std::string> targets;
};

int run_sweep(const RunConfig& cfg, const std::vector<double>& angles, const SweepColumns& cols,
              const std::function<JonesVector(double)>& pump_at, bool with_phi_p, bool simulate,
              const std::string& file) {
  std::vector<Simulated> sim(simulate ? angles.size() : 0);
  if (simulate) {
    const std::uint64_t seed = cfg.require_seed();
    parallel_for(angles.size(), [&](std::size_t i) {
      sim[i] = simulate_point(biphoton_from_pump(pump_at(angles[i])), cfg, cols.targets, derive_seed(seed, i));
    });
  }

  std::string csv = cols.angle;
  if (with_phi_p) csv += ",phi_p";
  csv += ",concurrence";
  for (const auto& t : cols.targets) csv += ",f_" + t;
  if (simulate) {
    csv += ",sim_concurrence";
    for (const auto& t : cols.targets) csv += ",sim_f_" + t;
    csv += ",sim_converged";
  }
  csv += '\n';

  bool all_converged = true;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const JonesVector pump = pump_at(angles[i]);
    const TwoQubitPureState psi = biphoton_from_pump(pump);
    csv += format_double(angles[i]);
    if (with_phi_p) csv += "," + format_double(PumpAngles::wrap_phi(2.0 * angles[i] + cfg.phi_offset));
    csv += "," + format_double(concurrence_pure(psi));
    for (const auto& t : cols.targets) csv += "," + format_double(pure_fidelity(psi, t));
    if (simulate) {
      csv += "," + format_double(sim[i].metrics.concurrence);
      for (const auto& t : cols.targets) csv += "," + format_double(sim[i].metrics.fidelities.at(t));
      csv += sim[i].converged ? ",1" : ",0";
      all_converged = all_converged && sim[i].converged;
    }
    csv += '\n';
  }
  write_output(cfg, file, csv);
  if (!all_converged) {
    std::cerr << "polent: reconstruction did not converge at one or more sweep points\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sweep_hwp(const RunConfig& cfg, bool simulate) {
  return run_sweep(
      cfg, cfg.hwp_grid.values(), {"hwp_angle", {"phi_minus", "psi_plus"}},
      [&](double a) { return pump_through_plates(cfg, a, std::nullopt); }, true, simulate,
      "sweep_hwp.csv");
}

int cmd_sweep_qwp(const RunConfig& cfg, bool simulate) {
  return run_sweep(
      cfg, cfg.qwp_grid.values(), {"qwp_angle", {"rr", "ll"}},
      [&](double a) { return pump_through_plates(cfg, cfg.fixed_hwp, a); }, false, simulate,
      "sweep_qwp.csv");
}

int cmd_tomo(const RunConfig& cfg, const std::string& in_path, bool simulate, const StateInput& input) {
  if (in_path.empty() == !simulate) throw UsageError("give exactly one of --in or --simulate");
  if (cfg.mc_samples == 1 || cfg.mc_samples < 0) throw UsageError("--mc must be 0 or >= 2");
  if (!(cfg.counts_per_setting > 0.0)) throw UsageError("--n must be > 0");

  std::vector<TomographyRecord> records;
  std::optional<TwoQubitPureState> truth;
  if (simulate) {
    truth = biphoton_from_pump(input.pump(cfg));
    records = simulate_tomography(DensityMatrix(*truth), default_settings(), cfg.counts_per_setting,
                                  derive_seed(cfg.require_seed(), 0));
    write_output(cfg, "records.csv", io::records_to_csv(records));
  } else {
    records = io::read_records(in_path);
  }

  const TomographyResult res = mle_reconstruct(records, cfg.mle);
  MetricsReport metrics;
  if (cfg.mc_samples >= 2) {
    try {
      metrics = mc_error_bars(records, cfg.mc_samples, derive_seed(cfg.require_seed(), 1), default_targets(),
                              cfg.mle);
    } catch (const TomographyError& e) {
      std::cerr << "polent: " << e.what() << '\n';
      return kExitNumerical;
    }
  } else {
    metrics = evaluate_metrics(res.rho);
  }

  json out = io::metrics_to_json(metrics);
  out["converged"] = res.converged;
  out["iterations"] = res.iterations;
  out["log_likelihood"] = res.log_likelihood;
  if (truth) out["fidelity_with_truth"] = fidelity_with_pure(res.rho, *truth);

  write_output(cfg, "density_matrix.json", io::density_to_json(res.rho).dump(2) + "\n");
  write_output(cfg, "metrics.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << '\n';
  if (!res.converged) {
    std::cerr << "polent: maximum-likelihood reconstruction did not converge\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_car(const RunConfig& cfg, const std::string& in_path, bool simulate) {
  if (in_path.empty() == !simulate) throw UsageError("give exactly one of --in or --simulate");
  std::vector<PowerSweepPoint> points;
  if (simulate) {
    points = simulate_power_sweep(cfg.powers, cfg.counting, cfg.require_seed());
    write_output(cfg, "sweep.csv", io::sweep_to_csv(points));
  } else {
    points = io::read_sweep(in_path);
  }

  const double tau = cfg.counting.window_tau;
  const PowerLawFit fit = fit_power_laws(points, tau, cfg.counting);
  if (!(fit.alpha > 0.0)) throw FitError("fitted singles slope product is not positive");

  const json j{{"window_tau", tau},
               {"pair_rate_coeff", fit.pair_rate_coeff},
               {"pair_rate_coeff_err", fit.pair_rate_coeff_err},
               {"alpha", fit.alpha},
               {"alpha_err", fit.alpha_err},
               {"beta", fit.beta},
               {"beta_err", fit.beta_err},
               {"gamma", fit.gamma},
               {"gamma_err", fit.gamma_err},
               {"singles_coeff", fit.config.singles_coeff_1},
               {"dark_rate", fit.config.dark_rate_1},
               {"rate_chi2", fit.rate_chi2},
               {"rate_dof", fit.rate_dof},
               {"car_chi2", fit.car_chi2},
               {"car_dof", fit.car_dof},
               {"rate_residuals", fit.rate_residuals},
               {"car_residuals", fit.car_residuals}};
  write_output(cfg, "car_fit.json", j.dump(2) + "\n");

  // Log-spaced model curve across the measured range.
  const auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                            [](const auto& a, const auto& b) { return a.power < b.power; });
  constexpr int kCurvePoints = 100;
  std::string csv = "power_mw,car_model,car_inverse_power,dark_regime\n";
  for (int i = 0; i < kCurvePoints; ++i) {
    const double p = lo->power * std::pow(hi->power / lo->power, i / static_cast<double>(kCurvePoints - 1));
    const double model = fit.model_car(p, tau);
    const double inverse = fit.pair_rate_coeff / (tau * fit.alpha * p);
    const bool dark = std::abs(model / inverse - 1.0) > 0.1;
    csv += format_double(p) + "," + format_double(model) + "," + format_double(inverse) + (dark ? ",1\n" : ",0\n");
  }
  write_output(cfg, "car_model.csv", csv);
  return kExitOk;
}

int cmd_shg(const RunConfig& cfg, const std::string& analyzer_name) {
  Analyzer analyzer;
  if (analyzer_name == "parallel") analyzer = Analyzer::parallel;
  else if (analyzer_name == "perpendicular") analyzer = Analyzer::perpendicular;
  else throw UsageError("--analyzer must be 'parallel' or 'perpendicular'");

  std::vector<double> intensity;
  for (int deg = 0; deg < 360; ++deg) intensity.push_back(shg_intensity(deg, analyzer));
  const double peak = *std::max_element(intensity.begin(), intensity.end());
  std::string csv = "phi_deg,intensity\n";
  for (int deg = 0; deg < 360; ++deg) {
    csv += std::to_string(deg) + "," + format_double(intensity[static_cast<std::size_t>(deg)] / peak) + "\n";
  }
  write_output(cfg, "shg_" + analyzer_name + ".csv", csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polarization-entangled photon pairs from a C3v nonlinear film: theory, simulation, tomography."};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path, out_dir;
  std::optional<double> phi_offset;
  app.add_option("--seed", seed, "64-bit seed for every random draw");
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default: current directory)");
  app.add_option("--phi-offset", phi_offset, "pump linear polarization before the plates, degrees from x");

  auto* state = app.add_subcommand("state", "print the biphoton state and its metrics as JSON");
  StateInput state_in;
  state_in.add_options(state);

  std::optional<double> start, stop, step, fixed_hwp, n_counts;
  std::optional<int> mc, max_iters;
  std::optional<double> tol;
  std::string model;
  bool simulate = false;
  std::string in_path;

  auto add_grid = [&](CLI::App* cmd) {
    cmd->add_option("--start", start, "first angle, degrees");
    cmd->add_option("--stop", stop, "last angle, degrees");
    cmd->add_option("--step", step, "angle step, degrees");
    cmd->add_flag("--simulate", simulate, "add simulated-tomography columns");
    cmd->add_option("--n", n_counts, "mean counts per setting for simulated tomography");
  };
  auto add_mle = [&](CLI::App* cmd) {
    cmd->add_option("--max-iters", max_iters, "MLE iteration limit");
    cmd->add_option("--tol", tol, "MLE relative tolerance");
    cmd->add_option("--model", model, "likelihood: poisson or gaussian");
  };

  auto* sweep_hwp = app.add_subcommand("sweep-hwp", "linear-pump sweep over the half-wave plate angle");
  add_grid(sweep_hwp);
  add_mle(sweep_hwp);

  auto* sweep_qwp = app.add_subcommand("sweep-qwp", "ellipticity sweep over the quarter-wave plate angle");
  add_grid(sweep_qwp);
  add_mle(sweep_qwp);
  sweep_qwp->add_option("--hwp", fixed_hwp, "fixed half-wave plate angle (default 22.5)");

  auto* tomo = app.add_subcommand("tomo", "maximum-likelihood state reconstruction");
  StateInput tomo_in;
  tomo_in.add_options(tomo);
  tomo->add_option("--in", in_path, "records CSV");
  tomo->add_flag("--simulate", simulate, "simulate counts from the theory state");
  tomo->add_option("--n", n_counts, "mean counts per setting (default 1e5)");
  tomo->add_option("--mc", mc, "Poisson resamples for error bars (0 disables)");
  add_mle(tomo);

  auto* car_cmd = app.add_subcommand("car", "fit pair rate and CAR against pump power");
  std::vector<double> powers;
  car_cmd->add_option("--in", in_path, "power sweep CSV");
  car_cmd->add_flag("--simulate", simulate, "simulate the sweep from the counting model");
  car_cmd->add_option("--powers", powers, "pump powers in mW for --simulate");

  auto* shg = app.add_subcommand("shg", "polarization-resolved second-harmonic intensity");
  std::string analyzer = "parallel";
  shg->add_option("--analyzer", analyzer, "parallel or perpendicular");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config(config_path, cfg);
    if (seed) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (phi_offset) cfg.phi_offset = *phi_offset;
    if (n_counts) cfg.counts_per_setting = *n_counts;
    if (mc) cfg.mc_samples = *mc;
    if (max_iters) cfg.mle.max_iters = *max_iters;
    if (tol) cfg.mle.tol = *tol;
    if (!model.empty()) cfg.mle.model = parse_model(model);
    if (!powers.empty()) cfg.powers = powers;
    if (fixed_hwp) cfg.fixed_hwp = *fixed_hwp;
    cfg.counting.validate();
    Grid& grid = sweep_qwp->parsed() ? cfg.qwp_grid : cfg.hwp_grid;
    if (start) grid.start = *start;
    if (stop) grid.stop = *stop;
    if (step) grid.step = *step;

    if (state->parsed()) return cmd_state(cfg, state_in);
    if (sweep_hwp->parsed()) return cmd_sweep_hwp(cfg, simulate);
    if (sweep_qwp->parsed()) return cmd_sweep_qwp(cfg, simulate);
    if (tomo->parsed()) return cmd_tomo(cfg, in_path, simulate, tomo_in);
    if (car_cmd->parsed()) return cmd_car(cfg, in_path, simulate);
    if (shg->parsed()) return cmd_shg(cfg, analyzer);
  } catch (const FitError& e) {
    std::cerr << "polent: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "polent: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
