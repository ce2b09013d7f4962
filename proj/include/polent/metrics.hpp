/**
 * @file metrics.hpp
 * @brief Concurrence, fidelity, purity and Poisson-resampled error bars.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/SVD>

#include "polent/tomography.hpp"

namespace polent {

/// sigma_y (x) sigma_y in the (HH, HV, VH, VV) ordering.
inline Mat4 spin_flip() {
  Mat4 s = Mat4::Zero();
  s(0, 3) = -1.0;
  s(1, 2) = 1.0;
  s(2, 1) = 1.0;
  s(3, 0) = -1.0;
  return s;
}

inline Mat4 hermitian_sqrt(const Mat4& m) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(m);
  const Eigen::Vector4d root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.cast<Complex>().asDiagonal() *
         es.eigenvectors().adjoint();
}

/// Decreasing lambda_i, the square roots of the eigenvalues of
/// rho (sy(x)sy) rho* (sy(x)sy).
///
/// They are computed as the singular values of sqrt(rho) (sy(x)sy) sqrt(rho)*,
/// whose Gram matrix is sqrt(rho) rho~ sqrt(rho). This keeps the small lambdas
/// at O(eps) instead of the O(sqrt(eps)) left by a square root of eigenvalues.
inline Eigen::Vector4d wootters_lambdas(const DensityMatrix& rho) {
  const Mat4 root = hermitian_sqrt(rho.matrix());
  const Mat4 x = root * spin_flip() * root.conjugate();
  Eigen::JacobiSVD<Mat4> svd(x);
  return svd.singularValues();  // already decreasing
}

/// Wootters concurrence max(0, l1 - l2 - l3 - l4).
inline double concurrence(const DensityMatrix& rho) {
  const Eigen::Vector4d l = wootters_lambdas(rho);
  return std::clamp(l(0) - l(1) - l(2) - l(3), 0.0, 1.0);
}

/// 2 |a_HH a_VV - a_HV a_VH|
inline double concurrence_pure(const TwoQubitPureState& psi) {
  const Vec4& a = psi.amplitudes();
  return std::min(2.0 * std::abs(a(0) * a(3) - a(1) * a(2)), 1.0);
}

/// <psi|rho|psi>
inline double fidelity_with_pure(const DensityMatrix& rho, const TwoQubitPureState& target) {
  const Vec4& v = target.amplitudes();
  return std::clamp(v.dot(rho.matrix() * v).real(), 0.0, 1.0);
}

/// tr(rho^2)
inline double purity(const DensityMatrix& rho) {
  return (rho.matrix() * rho.matrix()).trace().real();
}

/// Target states addressable by name in reports and on the command line:
/// phi_minus, psi_plus, phi_plus, psi_minus, rr, ll, hh, vv.
inline TwoQubitPureState named_target(const std::string& name) {
  if (name == "phi_minus") return bell_state(BellState::PhiMinus);
  if (name == "psi_plus") return bell_state(BellState::PsiPlus);
  if (name == "phi_plus") return bell_state(BellState::PhiPlus);
  if (name == "psi_minus") return bell_state(BellState::PsiMinus);
  if (name == "rr") return rr_state();
  if (name == "ll") return ll_state();
  if (name == "hh") return {1.0, 0.0, 0.0, 0.0};
  if (name == "vv") return {0.0, 0.0, 0.0, 1.0};
  throw DomainError("unknown target state '" + name + "'");
}

inline const std::vector<std::string>& default_targets() {
  static const std::vector<std::string> names{"phi_minus", "psi_plus", "rr", "ll"};
  return names;
}

struct MetricsReport {
  double concurrence = 0.0;
  double concurrence_err = 0.0;
  std::map<std::string, double> fidelities;
  std::map<std::string, double> fidelity_errs;
  double purity = 0.0;
  double purity_err = 0.0;
  int samples_used = 0;
  int samples_failed = 0;
};

/// Point metrics of a state, errors left at zero.
inline MetricsReport evaluate_metrics(const DensityMatrix& rho,
                                      const std::vector<std::string>& targets = default_targets()) {
  MetricsReport r;
  r.concurrence = concurrence(rho);
  r.purity = purity(rho);
  for (const auto& name : targets) {
    r.fidelities[name] = fidelity_with_pure(rho, named_target(name));
    r.fidelity_errs[name] = 0.0;
  }
  return r;
}

/// Poisson-resampled error bars.
///
/// Point values come from the MLE of `records`. Each sample redraws every
/// count as Poisson(observed) from its own stream derive_seed(seed, sample),
/// reconstructs, and the sample standard deviation of each metric is
/// reported. Samples whose reconstruction throws or does not converge are
/// excluded and counted in samples_failed. Samples run on up to `threads`
/// workers (0 = hardware concurrency); results do not depend on the count.
inline MetricsReport mc_error_bars(std::span<const TomographyRecord> records, int n_samples,
                                   std::uint64_t seed,
                                   const std::vector<std::string>& targets = default_targets(),
                                   const MleOptions& options = MleOptions{},
                                   unsigned threads = 0) {
  if (n_samples < 2) throw DomainError("mc_error_bars: n_samples must be >= 2");
  const TomographyResult point = mle_reconstruct(records, options);
  MetricsReport report = evaluate_metrics(point.rho, targets);

  struct Sample {
    bool ok = false;
    MetricsReport metrics;
  };
  std::vector<Sample> samples(static_cast<std::size_t>(n_samples));
  const std::vector<TomographyRecord> base(records.begin(), records.end());

  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(derive_seed(seed, s));
      std::vector<TomographyRecord> redrawn = base;
      for (auto& r : redrawn) r.counts = rng.poisson(static_cast<double>(r.counts));
      try {
        const TomographyResult res = mle_reconstruct(redrawn, options);
        if (res.converged) samples[s] = {true, evaluate_metrics(res.rho, targets)};
      } catch (const std::exception&) {
        samples[s].ok = false;
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_samples));
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (samples.size() + threads - 1) / threads;
  for (std::size_t b = 0; b < samples.size(); b += chunk) {
    jobs.push_back(std::async(std::launch::async, run, b, std::min(b + chunk, samples.size())));
  }
  for (auto& j : jobs) j.get();

  auto stddev = [&](auto&& get) {
    std::vector<double> v;
    for (const auto& s : samples)
      if (s.ok) v.push_back(get(s.metrics));
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };

  report.samples_used = static_cast<int>(
      std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.ok; }));
  report.samples_failed = n_samples - report.samples_used;
  if (report.samples_used < 2) {
    throw TomographyError("mc_error_bars: fewer than 2 resamples reconstructed");
  }
  report.concurrence_err = stddev([](const MetricsReport& m) { return m.concurrence; });
  report.purity_err = stddev([](const MetricsReport& m) { return m.purity; });
  for (const auto& name : targets) {
    report.fidelity_errs[name] =
        stddev([&](const MetricsReport& m) { return m.fidelities.at(name); });
  }
  return report;
}

}  // namespace polent
