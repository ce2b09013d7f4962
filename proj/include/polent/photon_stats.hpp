/**
 * @file photon_stats.hpp
 * @brief Photon-counting models: pair rate, singles with dark counts,
 * accidental coincidences, CAR, synthetic coincidence histograms and
 * power-sweep fitting.
 *
 * Detection efficiencies are folded into the pair and singles coefficients.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "polent/random.hpp"
#include "polent/types.hpp"

namespace polent {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CountingConfig {
  double pair_rate_coeff = 0.0;   ///< Hz/mW
  double singles_coeff_1 = 0.0;   ///< Hz/mW
  double singles_coeff_2 = 0.0;   ///< Hz/mW
  double dark_rate_1 = 0.0;       ///< Hz
  double dark_rate_2 = 0.0;       ///< Hz
  double window_tau = 500e-12;    ///< s
  double integration_time = 600;  ///< s
  double bin_width = 500e-12;     ///< s
  int histogram_bins = 101;

  void validate() const {
    const double v[] = {pair_rate_coeff, singles_coeff_1, singles_coeff_2,
                        dark_rate_1,     dark_rate_2,     window_tau,
                        integration_time, bin_width};
    for (double x : v) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw DomainError("CountingConfig: rates and times must be finite and >= 0");
      }
    }
    if (!(bin_width > 0.0)) throw DomainError("CountingConfig: bin_width must be > 0");
    if (window_tau < bin_width) {
      throw DomainError("CountingConfig: window_tau must be >= bin_width");
    }
    if (histogram_bins < 3) {
      throw DomainError("CountingConfig: histogram needs at least 3 bins");
    }
  }
};

/// Symmetric-channel config with car(ref_power) == target_car and
/// pair_rate(ref_power) == ref_pair_rate. Calibrated to match, the singles
/// split between dark and power-dependent counts is a free choice. The default
/// dark rate puts the 10% departure from car ~ 1/P near 20 mW.
inline CountingConfig calibrated_config(double ref_power_mw = 65.0,
                                        double ref_pair_rate_hz = 2.54,
                                        double target_car = 1.17e5,
                                        double dark_rate_hz = 3.0) {
  CountingConfig cfg;
  cfg.pair_rate_coeff = ref_pair_rate_hz / ref_power_mw;
  const double singles =
      std::sqrt(ref_pair_rate_hz / (target_car * cfg.window_tau));
  if (singles <= dark_rate_hz) {
    throw DomainError("calibrated_config: dark rate exceeds required singles rate");
  }
  cfg.dark_rate_1 = cfg.dark_rate_2 = dark_rate_hz;
  cfg.singles_coeff_1 = cfg.singles_coeff_2 =
      (singles - dark_rate_hz) / ref_power_mw;
  return cfg;
}

inline void require_power(double power_mw) {
  if (!(power_mw >= 0.0) || !std::isfinite(power_mw)) {
    throw DomainError("power must be finite and >= 0");
  }
}

inline double pair_rate(double power_mw, const CountingConfig& cfg) {
  require_power(power_mw);
  return cfg.pair_rate_coeff * power_mw;
}

inline double singles_rate(double power_mw, int channel, const CountingConfig& cfg) {
  require_power(power_mw);
  if (channel == 1) return cfg.singles_coeff_1 * power_mw + cfg.dark_rate_1;
  if (channel == 2) return cfg.singles_coeff_2 * power_mw + cfg.dark_rate_2;
  throw DomainError("singles_rate: channel must be 1 or 2");
}

inline double accidental_rate(double s1_hz, double s2_hz, double tau_s) {
  if (s1_hz < 0.0 || s2_hz < 0.0 || tau_s < 0.0) {
    throw DomainError("accidental_rate: arguments must be >= 0");
  }
  return s1_hz * s2_hz * tau_s;
}

/// Coincidence-to-accidental ratio pair_rate / (s1 s2 tau).
inline double car(double power_mw, const CountingConfig& cfg) {
  if (!(power_mw > 0.0) || !std::isfinite(power_mw)) {
    throw DomainError("car: power must be > 0");
  }
  const double acc = accidental_rate(singles_rate(power_mw, 1, cfg),
                                     singles_rate(power_mw, 2, cfg), cfg.window_tau);
  if (acc == 0.0) throw DomainError("car: accidental rate is zero");
  return pair_rate(power_mw, cfg) / acc;
}

/// CAR extrapolated from the power-dominated regime, car ~ 1/P.
inline double car_inverse_power_asymptote(double power_mw, const CountingConfig& cfg) {
  const double alpha = cfg.singles_coeff_1 * cfg.singles_coeff_2;
  if (!(power_mw > 0.0) || alpha == 0.0) {
    throw DomainError("car_inverse_power_asymptote: needs P > 0 and nonzero singles coefficients");
  }
  return cfg.pair_rate_coeff / (cfg.window_tau * alpha * power_mw);
}

struct CoincidenceHistogram {
  double bin_width = 0.0;
  std::vector<std::uint64_t> bins;
  std::size_t zero_delay_bin = 0;

  double delay(std::size_t index) const {
    return (static_cast<double>(index) - static_cast<double>(zero_delay_bin)) *
           bin_width;
  }

  std::uint64_t peak() const { return bins.at(zero_delay_bin); }

  double mean_off_peak() const {
    double sum = 0.0;
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (i != zero_delay_bin) sum += static_cast<double>(bins[i]);
    return sum / static_cast<double>(bins.size() - 1);
  }

  /// (peak - background) / background, with background taken from the
  /// off-peak bins. Converges to car() when bin_width equals the window.
  double estimated_car() const {
    const double bg = mean_off_peak();
    if (bg <= 0.0) throw DomainError("estimated_car: no off-peak counts");
    return (static_cast<double>(peak()) - bg) / bg;
  }
};

/// Expected counts per histogram bin over the integration time.
inline double expected_accidentals_per_bin(double s1_hz, double s2_hz,
                                           const CountingConfig& cfg) {
  return s1_hz * s2_hz * cfg.bin_width * cfg.integration_time;
}

/// Synthetic start-stop histogram: the zero-delay bin holds the true pairs on
/// top of the flat accidental background.
inline CoincidenceHistogram simulate_histogram(double pair_rate_hz, double s1_hz,
                                               double s2_hz, const CountingConfig& cfg,
                                               std::uint64_t seed) {
  cfg.validate();
  if (pair_rate_hz < 0.0 || s1_hz < 0.0 || s2_hz < 0.0) {
    throw DomainError("simulate_histogram: rates must be >= 0");
  }
  Rng rng(seed);
  CoincidenceHistogram h;
  h.bin_width = cfg.bin_width;
  h.bins.resize(static_cast<std::size_t>(cfg.histogram_bins));
  h.zero_delay_bin = h.bins.size() / 2;
  const double background = expected_accidentals_per_bin(s1_hz, s2_hz, cfg);
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    double mean = background;
    if (i == h.zero_delay_bin) mean += pair_rate_hz * cfg.integration_time;
    h.bins[i] = rng.poisson(mean);
  }
  return h;
}

/// Histogram at a pump power, singles taken from the config.
inline CoincidenceHistogram simulate_histogram(double power_mw,
                                               const CountingConfig& cfg,
                                               std::uint64_t seed) {
  return simulate_histogram(pair_rate(power_mw, cfg), singles_rate(power_mw, 1, cfg),
                            singles_rate(power_mw, 2, cfg), cfg, seed);
}

struct PowerSweepPoint {
  double power = 0.0;          ///< mW
  double pair_rate = 0.0;      ///< Hz
  double pair_rate_err = 0.0;  ///< Hz
  double car = 0.0;
  double car_err = 0.0;
};

/// One measured sweep point: histogram for the coincidences, Poisson singles
/// counts for the accidental estimate s1 s2 tau.
inline PowerSweepPoint simulate_sweep_point(double power_mw, const CountingConfig& cfg,
                                            std::uint64_t seed) {
  const CoincidenceHistogram h = simulate_histogram(power_mw, cfg, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  const double t = cfg.integration_time;
  const double n1 = static_cast<double>(rng.poisson(singles_rate(power_mw, 1, cfg) * t));
  const double n2 = static_cast<double>(rng.poisson(singles_rate(power_mw, 2, cfg) * t));
  const double peak = static_cast<double>(h.peak());

  PowerSweepPoint p;
  p.power = power_mw;
  p.pair_rate = std::max(peak - h.mean_off_peak(), 0.0) / t;
  p.pair_rate_err = std::sqrt(std::max(peak, 1.0)) / t;
  const double acc = accidental_rate(n1 / t, n2 / t, cfg.window_tau);
  if (acc > 0.0 && peak > 0.0) {
    p.car = p.pair_rate / acc;
    p.car_err = p.car * std::sqrt(1.0 / peak + 1.0 / std::max(n1, 1.0) +
                                  1.0 / std::max(n2, 1.0));
  }
  return p;
}

inline std::vector<PowerSweepPoint> simulate_power_sweep(std::span<const double> powers_mw,
                                                         const CountingConfig& cfg,
                                                         std::uint64_t seed) {
  std::vector<PowerSweepPoint> out;
  out.reserve(powers_mw.size());
  for (std::size_t i = 0; i < powers_mw.size(); ++i) {
    out.push_back(simulate_sweep_point(powers_mw[i], cfg, derive_seed(seed, i)));
  }
  return out;
}

/// Noise-free sweep straight from the model.
inline std::vector<PowerSweepPoint> model_power_sweep(std::span<const double> powers_mw,
                                                      const CountingConfig& cfg,
                                                      double rel_err = 0.01) {
  std::vector<PowerSweepPoint> out;
  for (double p : powers_mw) {
    PowerSweepPoint pt;
    pt.power = p;
    pt.pair_rate = pair_rate(p, cfg);
    pt.pair_rate_err = rel_err * pt.pair_rate;
    pt.car = car(p, cfg);
    pt.car_err = rel_err * pt.car;
    out.push_back(pt);
  }
  return out;
}

/// Result of fit_power_laws.
///
/// The singles product s1 s2 = alpha P^2 + beta P + gamma enters CAR only as
/// a whole, so alpha = c1 c2, beta = c1 d2 + c2 d1 and gamma = d1 d2 are what
/// the fit identifies. `config` splits them assuming symmetric channels.
struct PowerLawFit {
  CountingConfig config;
  double pair_rate_coeff = 0.0;
  double pair_rate_coeff_err = 0.0;
  double alpha = 0.0, alpha_err = 0.0;
  double beta = 0.0, beta_err = 0.0;
  double gamma = 0.0, gamma_err = 0.0;
  double rate_chi2 = 0.0;
  double car_chi2 = 0.0;
  int rate_dof = 0;
  int car_dof = 0;
  std::vector<double> rate_residuals;  ///< normalized, (obs - model)/err
  std::vector<double> car_residuals;

  double model_car(double power_mw, double tau) const {
    return pair_rate_coeff * power_mw /
           (tau * (alpha * power_mw * power_mw + beta * power_mw + gamma));
  }
};

/// Weighted least squares for the pair-rate slope and the CAR model.
///
/// The rate fit is a line through the origin. The CAR fit is linear in
/// (alpha, beta, gamma) after writing a / (tau CAR) = alpha P + beta + gamma / P.
inline PowerLawFit fit_power_laws(std::span<const PowerSweepPoint> points, double tau,
                                  const CountingConfig& base = CountingConfig{}) {
  if (points.size() < 3) throw FitError("fit_power_laws: need at least 3 points");
  std::vector<double> powers;
  for (const auto& p : points) {
    if (!(p.power > 0.0)) throw FitError("fit_power_laws: powers must be > 0");
    if (!(p.pair_rate_err > 0.0) || !(p.car_err > 0.0) || !(p.car > 0.0)) {
      throw FitError("fit_power_laws: errors and CAR values must be > 0");
    }
    powers.push_back(p.power);
  }
  std::sort(powers.begin(), powers.end());
  if (std::unique(powers.begin(), powers.end()) - powers.begin() < 3) {
    throw FitError("fit_power_laws: need at least 3 distinct powers");
  }

  PowerLawFit fit;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    const double w = 1.0 / (p.pair_rate_err * p.pair_rate_err);
    sxx += w * p.power * p.power;
    sxy += w * p.power * p.pair_rate;
  }
  fit.pair_rate_coeff = sxy / sxx;
  fit.pair_rate_coeff_err = 1.0 / std::sqrt(sxx);
  for (const auto& p : points) {
    const double r = (p.pair_rate - fit.pair_rate_coeff * p.power) / p.pair_rate_err;
    fit.rate_residuals.push_back(r);
    fit.rate_chi2 += r * r;
  }
  fit.rate_dof = static_cast<int>(points.size()) - 1;

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double yi = fit.pair_rate_coeff / (tau * p.car);
    const double sigma = yi * p.car_err / p.car;
    design(i, 0) = p.power / sigma;
    design(i, 1) = 1.0 / sigma;
    design(i, 2) = 1.0 / (p.power * sigma);
    y(i) = yi / sigma;
  }
  const Eigen::Matrix3d normal = design.transpose() * design;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = svd.singularValues();
  if (sv(2) <= 1e-12 * sv(0)) throw FitError("fit_power_laws: degenerate CAR design");
  const Eigen::Vector3d coef = svd.solve(y);
  const Eigen::Matrix3d cov = normal.inverse();
  fit.alpha = coef(0);
  fit.beta = coef(1);
  fit.gamma = coef(2);
  fit.alpha_err = std::sqrt(cov(0, 0));
  fit.beta_err = std::sqrt(cov(1, 1));
  fit.gamma_err = std::sqrt(cov(2, 2));
  for (const auto& p : points) {
    const double r = (p.car - fit.model_car(p.power, tau)) / p.car_err;
    fit.car_residuals.push_back(r);
    fit.car_chi2 += r * r;
  }
  fit.car_dof = static_cast<int>(points.size()) - 3;

  fit.config = base;
  fit.config.window_tau = tau;
  fit.config.pair_rate_coeff = fit.pair_rate_coeff;
  fit.config.singles_coeff_1 = fit.config.singles_coeff_2 = std::sqrt(std::max(fit.alpha, 0.0));
  fit.config.dark_rate_1 = fit.config.dark_rate_2 = std::sqrt(std::max(fit.gamma, 0.0));
  return fit;
}

}  // namespace polent
