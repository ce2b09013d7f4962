// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every tolerance is fixed here.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "polent/io.hpp"
#include "polent/polent.hpp"
#include "test_util.hpp"

using namespace polent;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double fidelity(const TwoQubitPureState& psi, const TwoQubitPureState& target) {
  return std::norm(target.amplitudes().dot(psi.amplitudes()));
}

bool valid_density(const Mat4& m) {
  const bool herm = (m - m.adjoint()).cwiseAbs().maxCoeff() <= DensityTolerance::hermitian;
  const bool trace = std::abs(m.trace() - 1.0) <= DensityTolerance::trace;
  const bool psd = hermitian_eigenvalues(hermitian_part(m)).minCoeff() >= DensityTolerance::min_eigenvalue;
  return herm && trace && psd;
}

JonesVector pump_chain(std::vector<WaveplateSetting> plates) {
  return apply_waveplates(JonesVector::horizontal(), plates);
}

// 1. Bell-state selection rules.
Outcome bell_selection() {
  Outcome o;
  const double fv = fidelity(biphoton_from_pump(JonesVector::vertical()), bell_state(BellState::PhiMinus));
  const double fh = fidelity(biphoton_from_pump(JonesVector::horizontal()), bell_state(BellState::PsiPlus));
  o.require(std::abs(fv - 1.0) <= 1e-10, "F(V pump, Phi-) = " + num(fv));
  o.require(std::abs(fh - 1.0) <= 1e-10, "F(H pump, Psi+) = " + num(fh));
  o.detail = o.pass ? "1-F(Phi-)=" + num(1.0 - fv) + " 1-F(Psi+)=" + num(1.0 - fh) : o.detail;
  return o;
}

// 2. Circular pumps give product states.
Outcome circular_separability() {
  Outcome o;
  const auto from_l = biphoton_from_pump(JonesVector::left_circular());
  const auto from_r = biphoton_from_pump(JonesVector::right_circular());
  const double f_rr = fidelity(from_l, rr_state());
  const double f_ll = fidelity(from_r, ll_state());
  const double c_l = concurrence(DensityMatrix(from_l));
  const double c_r = concurrence(DensityMatrix(from_r));
  o.require(std::abs(f_rr - 1.0) <= 1e-10, "F(LCP, RR) = " + num(f_rr));
  o.require(std::abs(f_ll - 1.0) <= 1e-10, "F(RCP, LL) = " + num(f_ll));
  o.require(c_l <= 1e-9 && concurrence_pure(from_l) <= 1e-9, "C(LCP) = " + num(c_l));
  o.require(c_r <= 1e-9 && concurrence_pure(from_r) <= 1e-9, "C(RCP) = " + num(c_r));
  if (o.pass) o.detail = "C(LCP)=" + num(c_l) + " C(RCP)=" + num(c_r);
  return o;
}

// 3. Linear pump through a rotating HWP.
Outcome linear_sweep() {
  Outcome o;
  double worst_c = 0.0, worst_f = 0.0;
  for (int deg = 0; deg < 360; ++deg) {
    const auto psi = biphoton_from_pump(pump_chain({WaveplateSetting::hwp(deg)}));
    const double phi = deg_to_rad(2.0 * deg);
    const double s2 = std::sin(phi) * std::sin(phi);
    worst_c = std::max({worst_c, std::abs(concurrence(DensityMatrix(psi)) - 1.0),
                        std::abs(concurrence_pure(psi) - 1.0)});
    worst_f = std::max({worst_f, std::abs(fidelity(psi, bell_state(BellState::PhiMinus)) - s2),
                        std::abs(fidelity(psi, bell_state(BellState::PsiPlus)) - (1.0 - s2))});
  }
  o.require(worst_c <= 1e-9, "max |C-1| = " + num(worst_c));
  o.require(worst_f <= 1e-9, "max fidelity error = " + num(worst_f));
  if (o.pass) o.detail = "max |C-1|=" + num(worst_c) + " max |dF|=" + num(worst_f);
  return o;
}

// 4. Ellipticity tuning.
Outcome ellipticity_tuning() {
  Outcome o;
  double worst = 0.0;
  for (int deg = 0; deg < 360; ++deg) {
    const auto psi = state_from_angles({45.0, static_cast<double>(deg)});
    const double expect = std::abs(std::cos(deg_to_rad(deg)));
    worst = std::max({worst, std::abs(concurrence(DensityMatrix(psi)) - expect),
                      std::abs(concurrence_pure(psi) - expect)});
  }
  double cmin = 1.0, cmax = 0.0;
  for (int i = 0; i <= 360; ++i) {
    const double qwp = 0.5 * i;
    const auto psi = biphoton_from_pump(pump_chain({WaveplateSetting::hwp(22.5), WaveplateSetting::qwp(qwp)}));
    const double c = concurrence(DensityMatrix(psi));
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
  }
  o.require(worst <= 1e-9, "max |C - |cos delta|| = " + num(worst));
  o.require(cmin <= 1e-6, "min C = " + num(cmin));
  o.require(cmax >= 1.0 - 1e-6, "max C = " + num(cmax));
  if (o.pass) o.detail = "max dev=" + num(worst) + " chain C in [" + num(cmin) + ", 1-" + num(1.0 - cmax) + "]";
  return o;
}

// 5. Tomography round trip at N = 1e5.
Outcome round_trip() {
  Outcome o;
  polent::testing::Gen gen(20250501);
  std::vector<double> fids;
  int invalid = 0;
  for (int i = 0; i < 50; ++i) {
    const auto psi = gen.pure_state();
    const auto recs = simulate_tomography(DensityMatrix(psi), default_settings(), 1e5, derive_seed(5, i));
    const auto res = mle_reconstruct(recs);
    fids.push_back(fidelity_with_pure(res.rho, psi));
    if (!valid_density(res.rho.matrix())) ++invalid;
  }
  std::sort(fids.begin(), fids.end());
  const double median = 0.5 * (fids[24] + fids[25]);
  o.require(median >= 0.995, "median F = " + num(median));
  o.require(fids.front() >= 0.99, "min F = " + num(fids.front()));
  o.require(invalid == 0, std::to_string(invalid) + " invalid outputs");
  if (o.pass) o.detail = "median F=" + std::to_string(median) + " min F=" + std::to_string(fids.front());
  return o;
}

// 6. MLE under heavy Poisson noise.
Outcome heavy_noise() {
  Outcome o;
  polent::testing::Gen gen(6060);
  int good = 0;
  for (int i = 0; i < 100; ++i) {
    const DensityMatrix rho = i % 2 ? DensityMatrix(gen.pure_state()) : gen.mixed_state();
    const auto recs = simulate_tomography(rho, default_settings(), 100, derive_seed(6, i));
    const auto res = mle_reconstruct(recs);
    if (res.converged && valid_density(res.rho.matrix())) ++good;
  }
  o.require(good == 100, std::to_string(good) + "/100 converged and valid");
  if (o.pass) o.detail = "100/100 converged and valid";
  return o;
}

// 7. Concurrence oracles.
Outcome oracle_equivalence() {
  Outcome o;
  polent::testing::Gen gen(7007);
  double worst_pure = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto psi = gen.pure_state();
    worst_pure = std::max(worst_pure, std::abs(concurrence(DensityMatrix(psi)) - concurrence_pure(psi)));
  }
  double worst_werner = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double p = i / 100.0;
    worst_werner = std::max(worst_werner, std::abs(concurrence(werner_state(p)) - std::max(0.0, (3.0 * p - 1.0) / 2.0)));
  }
  o.require(worst_pure <= 1e-9, "pure vs mixed = " + num(worst_pure));
  o.require(worst_werner <= 1e-9, "Werner = " + num(worst_werner));
  if (o.pass) o.detail = "pure vs mixed " + num(worst_pure) + ", Werner " + num(worst_werner);
  return o;
}

// 8. Counting statistics.
Outcome counting_statistics() {
  Outcome o;
  CountingConfig no_dark = calibrated_config();
  no_dark.dark_rate_1 = no_dark.dark_rate_2 = 0.0;
  double worst_ratio = 0.0;
  for (double p : {0.5, 5.0, 31.0, 65.0, 200.0}) {
    worst_ratio = std::max(worst_ratio, std::abs(car(2.0 * p, no_dark) / car(p, no_dark) - 0.5));
  }
  o.require(worst_ratio <= 1e-12, "car(2P)/car(P) off by " + num(worst_ratio));

  const CountingConfig cfg = calibrated_config();
  o.require(std::abs(car(65.0, cfg) / 1.17e5 - 1.0) <= 1e-9, "car(65 mW) = " + num(car(65.0, cfg)));
  o.require(std::abs(pair_rate(65.0, cfg) / 2.54 - 1.0) <= 1e-12, "pair_rate(65 mW) = " + num(pair_rate(65.0, cfg)));

  // Peak of the 10-minute histogram: Poisson with mean R T + s1 s2 bin T,
  // about 1524.
  const double t = cfg.integration_time;
  const double mean = pair_rate(65.0, cfg) * t +
                      singles_rate(65.0, 1, cfg) * singles_rate(65.0, 2, cfg) * cfg.bin_width * t;
  const double sigma = std::sqrt(mean);
  int inside = 0;
  double sum = 0.0;
  for (int s = 0; s < 100; ++s) {
    const double peak = static_cast<double>(simulate_histogram(65.0, cfg, derive_seed(8, s)).peak());
    sum += peak;
    if (std::abs(peak - mean) <= 3.0 * sigma) ++inside;
  }
  const double avg = sum / 100.0;
  o.require(std::abs(mean - 1524.0) <= 1.0, "expected peak = " + num(mean));
  o.require(inside >= 99, std::to_string(inside) + "/100 peaks within 3 sigma");
  o.require(std::abs(avg - mean) <= 3.0 * sigma / 10.0, "mean peak = " + num(avg));

  // Power-law fit, 100 independent sweeps.
  const std::vector<double> powers{2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 65.0};
  const double alpha = cfg.singles_coeff_1 * cfg.singles_coeff_2;
  const double beta = cfg.singles_coeff_1 * cfg.dark_rate_2 + cfg.singles_coeff_2 * cfg.dark_rate_1;
  const double gamma = cfg.dark_rate_1 * cfg.dark_rate_2;
  int covered[4] = {0, 0, 0, 0};
  for (int s = 0; s < 100; ++s) {
    const auto fit = fit_power_laws(simulate_power_sweep(powers, cfg, derive_seed(88, s)), cfg.window_tau, cfg);
    const double z[4] = {(fit.pair_rate_coeff - cfg.pair_rate_coeff) / fit.pair_rate_coeff_err,
                         (fit.alpha - alpha) / fit.alpha_err, (fit.beta - beta) / fit.beta_err,
                         (fit.gamma - gamma) / fit.gamma_err};
    for (int k = 0; k < 4; ++k)
      if (std::abs(z[k]) <= 3.0) ++covered[k];
  }
  const char* names[4] = {"pair coeff", "alpha", "beta", "gamma"};
  for (int k = 0; k < 4; ++k) {
    o.require(covered[k] >= 99, std::string(names[k]) + " within 3 SE in " + std::to_string(covered[k]) + "/100");
  }
  if (o.pass) {
    o.detail = "peak mean " + num(avg) + " (expect " + num(mean) + "), " + std::to_string(inside) +
               "/100 within 3 sigma; fit within 3 SE: " + std::to_string(covered[0]) + "/" +
               std::to_string(covered[1]) + "/" + std::to_string(covered[2]) + "/" + std::to_string(covered[3]);
  }
  return o;
}

// 9. SHG pattern, checked against a contraction written out here.
Outcome shg_pattern() {
  Outcome o;
  const C3vTensor chi;
  double worst_formula = 0.0, worst_contraction = 0.0;
  std::vector<double> v;
  for (int deg = 0; deg < 360; ++deg) {
    const double phi = deg_to_rad(deg);
    const double e[2] = {std::cos(phi), std::sin(phi)};
    double p[2] = {0.0, 0.0};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) p[i] += chi.component(i, j, k) * e[j] * e[k];
    const double d2 = chi.component(1, 1, 1) * chi.component(1, 1, 1);
    const double par = (p[0] * e[0] + p[1] * e[1]) * (p[0] * e[0] + p[1] * e[1]) / d2;
    const double intensity = shg_intensity(deg, Analyzer::parallel, chi);
    const double s3 = std::sin(3.0 * phi);
    worst_formula = std::max(worst_formula, std::abs(intensity - s3 * s3));
    worst_contraction = std::max(worst_contraction, std::abs(intensity - par));
    v.push_back(intensity);
  }
  int maxima = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > v[(i + 359) % 360] && v[i] >= v[(i + 1) % 360]) ++maxima;
  }
  o.require(worst_formula <= 1e-9, "|I - sin^2 3phi| = " + num(worst_formula));
  o.require(worst_contraction <= 1e-9, "contraction mismatch " + num(worst_contraction));
  o.require(maxima == 6, std::to_string(maxima) + " maxima");
  if (o.pass) o.detail = "max dev " + num(worst_formula) + ", 6 maxima";
  return o;
}

// 10. Byte-identical CLI reruns.
Outcome cli_determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("polent_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"--seed 10 sweep-hwp --step 5 --simulate --n 5000", {"sweep_hwp.csv"}},
      {"--seed 10 sweep-qwp --step 5 --simulate --n 5000", {"sweep_qwp.csv"}},
      {"--seed 10 tomo --simulate --phi 90 --delta 0 --n 10000 --mc 20",
       {"records.csv", "density_matrix.json", "metrics.json"}},
      {"--seed 10 car --simulate", {"sweep.csv", "car_fit.json", "car_model.csv"}},
      {"shg --analyzer parallel", {"shg_parallel.csv"}}};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int compared = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    std::string first_stdout;
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = root / (std::to_string(c) + "_" + std::to_string(run));
      const std::string cmd = std::string(POLENT_CLI) + " --out " + dir.string() + " " + cases[c].first + " >" +
                              (root / "stdout.txt").string() + " 2>&1";
      fs::create_directories(root);
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        o.require(false, "'" + cases[c].first + "' failed");
        break;
      }
      const std::string out = slurp(root / "stdout.txt");
      if (run == 0) {
        first_stdout = out;
        continue;
      }
      o.require(out == first_stdout, "stdout differs for '" + cases[c].first + "'");
      for (const auto& f : cases[c].second) {
        const std::string a = slurp(root / (std::to_string(c) + "_0") / f);
        const std::string b = slurp(dir / f);
        o.require(!a.empty() && a == b, f + " differs");
        ++compared;
      }
    }
  }
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(compared) + " files identical across reruns";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "Bell-state selection rules", 0.1, bell_selection},
      {2, "circular-pump separability", 0.1, circular_separability},
      {3, "linear-pump entanglement sweep", 1.0, linear_sweep},
      {4, "ellipticity tuning", 1.0, ellipticity_tuning},
      {5, "tomography round trip", 60.0, round_trip},
      {6, "MLE validity under heavy noise", 60.0, heavy_noise},
      {7, "concurrence oracle equivalence", 10.0, oracle_equivalence},
      {8, "counting statistics", 30.0, counting_statistics},
      {9, "SHG pattern", 1.0, shg_pattern},
      {10, "CLI determinism", 120.0, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (dt > c.time_limit_s) {
      o.pass = false;
      o.detail += " (took " + num(dt) + " s, limit " + num(c.time_limit_s) + " s)";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s [%.3f s] %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, dt, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
