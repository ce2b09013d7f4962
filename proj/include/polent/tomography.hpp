/**
 * @file tomography.hpp
 * @brief Two-qubit polarization tomography with QWP -> HWP -> vertical
 * polarizer analyzers in both arms.
 *
 * Expected counts for record i are F * duration_i * p_i(rho), where the
 * total flux F (counts per second summed over a complete basis) is taken from
 * the HH, HV, VH and VV settings. Reconstruction is either linear inversion
 * or maximum likelihood over rho = T^dagger T / tr(T^dagger T), T lower
 * triangular.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "polent/density_matrix.hpp"
#include "polent/polarization.hpp"
#include "polent/random.hpp"

namespace polent {

class TomographyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State transmitted by QWP(qwp) -> HWP(hwp) -> V polarizer, i.e. the
/// back-propagated analyzer |m> = W_qwp^dagger W_hwp^dagger |V>.
inline JonesVector analyzer_state(double qwp_deg, double hwp_deg) {
  const Mat2 wq = waveplate_operator(WaveplateSetting::qwp(qwp_deg));
  const Mat2 wh = waveplate_operator(WaveplateSetting::hwp(hwp_deg));
  return JonesVector(Vec2(wq.adjoint() * wh.adjoint() *
                          JonesVector::vertical().amplitudes()));
}

struct MeasurementSetting {
  double signal_qwp = 0.0;
  double signal_hwp = 0.0;
  double idler_qwp = 0.0;
  double idler_hwp = 0.0;

  TwoQubitPureState projector_state() const {
    return TwoQubitPureState::product(analyzer_state(signal_qwp, signal_hwp),
                                      analyzer_state(idler_qwp, idler_hwp));
  }

  bool operator==(const MeasurementSetting&) const = default;
};

struct TomographyRecord {
  MeasurementSetting setting;
  std::uint64_t counts = 0;
  double duration = 1.0;  ///< s
};

/// Analyzer angles (qwp, hwp) for the single-photon states used by the
/// standard 16-setting set.
struct AnalyzerAngles {
  double qwp;
  double hwp;
};

namespace analyzers {
inline constexpr AnalyzerAngles H{0.0, 45.0};
inline constexpr AnalyzerAngles V{0.0, 0.0};
inline constexpr AnalyzerAngles D{45.0, 67.5};
inline constexpr AnalyzerAngles R{0.0, 22.5};
inline constexpr AnalyzerAngles L{0.0, 67.5};
}  // namespace analyzers

inline MeasurementSetting make_setting(AnalyzerAngles signal, AnalyzerAngles idler) {
  return {signal.qwp, signal.hwp, idler.qwp, idler.hwp};
}

/// The 16 product projectors HH, HV, VV, VH, RH, RV, DV, DH, DR, DD, RD, HD,
/// VD, VL, HL, RL. The associated 16x16 map is invertible with condition
/// number about 9.75 (see measurement_condition_number).
inline std::vector<MeasurementSetting> default_settings() {
  using namespace analyzers;
  const AnalyzerAngles pairs[16][2] = {
      {H, H}, {H, V}, {V, V}, {V, H}, {R, H}, {R, V}, {D, V}, {D, H},
      {D, R}, {D, D}, {R, D}, {H, D}, {V, D}, {V, L}, {H, L}, {R, L}};
  std::vector<MeasurementSetting> out;
  out.reserve(16);
  for (const auto& p : pairs) out.push_back(make_setting(p[0], p[1]));
  return out;
}

/// Born-rule probability <m|rho|m>, clamped to [0, 1].
inline double predicted_probability(const DensityMatrix& rho,
                                    const MeasurementSetting& setting) {
  const Vec4 m = setting.projector_state().amplitudes();
  const double p = m.dot(rho.matrix() * m).real();
  return std::clamp(p, 0.0, 1.0);
}

/// counts_i ~ Poisson(mean_total_counts * p_i), one independent stream per
/// setting.
inline std::vector<TomographyRecord> simulate_tomography(
    const DensityMatrix& rho, std::span<const MeasurementSetting> settings,
    double mean_total_counts, std::uint64_t seed, double duration = 1.0) {
  if (!(mean_total_counts >= 0.0) || !std::isfinite(mean_total_counts)) {
    throw DomainError("simulate_tomography: mean counts must be finite and >= 0");
  }
  if (!(duration > 0.0)) throw DomainError("simulate_tomography: duration must be > 0");
  std::vector<TomographyRecord> out;
  out.reserve(settings.size());
  for (std::size_t i = 0; i < settings.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const double mean = mean_total_counts * predicted_probability(rho, settings[i]);
    out.push_back({settings[i], rng.poisson(mean), duration});
  }
  return out;
}

/// Hermitian operator basis sigma_a (x) sigma_b / 2, orthonormal under the
/// Hilbert-Schmidt product; index 4a + b with sigma_0 = I.
inline const std::array<Mat4, 16>& pauli_basis() {
  static const std::array<Mat4, 16> basis = [] {
    std::array<Mat2, 4> s;
    s[0] << 1, 0, 0, 1;
    s[1] << 0, 1, 1, 0;
    s[2] << 0, -kI, kI, 0;
    s[3] << 1, 0, 0, -1;
    std::array<Mat4, 16> out;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        Mat4 m;
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) m(r, c) = s[a](r / 2, c / 2) * s[b](r % 2, c % 2);
        out[4 * a + b] = m / 2.0;
      }
    }
    return out;
  }();
  return basis;
}

/// Row i maps the 16 real Pauli coordinates of rho to p_i.
inline Eigen::MatrixXd measurement_matrix(std::span<const MeasurementSetting> settings) {
  const auto& basis = pauli_basis();
  Eigen::MatrixXd b(static_cast<Eigen::Index>(settings.size()), 16);
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const Vec4 m = settings[i].projector_state().amplitudes();
    for (int k = 0; k < 16; ++k) {
      b(static_cast<Eigen::Index>(i), k) = m.dot(basis[static_cast<std::size_t>(k)] * m).real();
    }
  }
  return b;
}

/// Ratio of extreme singular values; +inf if rank deficient.
inline double measurement_condition_number(std::span<const MeasurementSetting> settings) {
  if (settings.size() < 16) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(measurement_matrix(settings));
  const auto& sv = svd.singularValues();
  if (sv(15) <= 1e-12 * sv(0)) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(15);
}

inline bool is_basis_setting(const MeasurementSetting& s, int basis_index) {
  return std::norm(s.projector_state().amplitudes()(basis_index)) > 1.0 - 1e-9;
}

/// Counts per second summed over the HH, HV, VH and VV settings. Repeated
/// settings are averaged.
inline double estimate_flux(std::span<const TomographyRecord> records) {
  double flux = 0.0;
  for (int b = 0; b < 4; ++b) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : records) {
      if (is_basis_setting(r.setting, b)) {
        sum += static_cast<double>(r.counts) / r.duration;
        ++n;
      }
    }
    if (n == 0) {
      throw TomographyError(std::string("records lack the ") + kBasisLabels[b] +
                            " setting needed for the flux estimate");
    }
    flux += sum / n;
  }
  return flux;
}

inline void validate_records(std::span<const TomographyRecord> records) {
  if (records.empty()) throw TomographyError("no tomography records");
  for (const auto& r : records) {
    if (!(r.duration > 0.0) || !std::isfinite(r.duration)) {
      throw TomographyError("record duration must be > 0");
    }
  }
}

struct LinearInversionResult {
  Mat4 rho;  ///< Hermitian, unit trace, not necessarily PSD
  double min_eigenvalue = 0.0;
  bool physical() const { return min_eigenvalue >= DensityTolerance::min_eigenvalue; }
};

/// Least-squares solution of p_i = tr(M_i rho) for the 16 Pauli coordinates,
/// with frequencies p_i = n_i / (F t_i).
inline LinearInversionResult linear_inversion(std::span<const TomographyRecord> records) {
  validate_records(records);
  std::vector<MeasurementSetting> settings;
  for (const auto& r : records) settings.push_back(r.setting);
  if (!std::isfinite(measurement_condition_number(settings))) {
    throw TomographyError("linear_inversion: settings are not informationally complete");
  }
  const double flux = estimate_flux(records);
  if (!(flux > 0.0)) throw TomographyError("linear_inversion: zero counts in the basis settings");

  Eigen::VectorXd freq(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    freq(static_cast<Eigen::Index>(i)) =
        static_cast<double>(records[i].counts) / (flux * records[i].duration);
  }
  const Eigen::MatrixXd b = measurement_matrix(settings);
  const Eigen::VectorXd coords =
      b.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(freq);

  const auto& basis = pauli_basis();
  Mat4 rho = Mat4::Zero();
  for (int k = 0; k < 16; ++k) rho += coords(k) * basis[static_cast<std::size_t>(k)];
  rho = hermitian_part(rho);
  rho /= rho.trace().real();

  LinearInversionResult out;
  out.rho = rho;
  out.min_eigenvalue = hermitian_eigenvalues(rho).minCoeff();
  return out;
}

enum class LikelihoodModel {
  poisson,   ///< sum n ln(mu) - mu
  gaussian,  ///< -sum (n - mu)^2 / (2 max(n, 1))
};

struct MleOptions {
  int max_iters = 10000;
  double tol = 1e-10;
  LikelihoodModel model = LikelihoodModel::poisson;
  bool record_trace = false;
};

struct TomographyResult {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  ///< accepted objective values, if requested
};

namespace mle {

using Params = Eigen::Matrix<double, 16, 1>;

/// Lower-triangular T from 16 reals: the four diagonal entries, then
/// (re, im) of T(1,0), T(2,0), T(2,1), T(3,0), T(3,1), T(3,2).
inline Mat4 t_from_params(const Params& x) {
  Mat4 t = Mat4::Zero();
  for (int d = 0; d < 4; ++d) t(d, d) = x(d);
  int k = 4;
  for (int r = 1; r < 4; ++r) {
    for (int c = 0; c < r; ++c) {
      t(r, c) = Complex{x(k), x(k + 1)};
      k += 2;
    }
  }
  return t;
}

inline Mat4 rho_from_params(const Params& x) {
  const Mat4 t = t_from_params(x);
  Mat4 a = t.adjoint() * t;
  a = hermitian_part(a);
  return a / a.trace().real();
}

/// Inverse of rho_from_params for a positive definite rho: with J the index
/// reversal, J rho J = L L^dagger gives rho = T^dagger T for T = J L^dagger J.
inline Params params_from_rho(const Mat4& rho) {
  Mat4 j = Mat4::Zero();
  for (int i = 0; i < 4; ++i) j(i, 3 - i) = 1.0;
  const Mat4 flipped = j * rho * j;
  Eigen::LLT<Mat4> llt(flipped);
  if (llt.info() != Eigen::Success) {
    throw TomographyError("params_from_rho: matrix is not positive definite");
  }
  const Mat4 lower = llt.matrixL();
  const Mat4 t = j * lower.adjoint() * j;
  Params x;
  for (int d = 0; d < 4; ++d) x(d) = t(d, d).real();
  int k = 4;
  for (int r = 1; r < 4; ++r) {
    for (int c = 0; c < r; ++c) {
      x(k) = t(r, c).real();
      x(k + 1) = t(r, c).imag();
      k += 2;
    }
  }
  return x;
}

/// Likelihood over a fixed record set with the flux estimated once.
class Objective {
 public:
  Objective(std::span<const TomographyRecord> records, LikelihoodModel model)
      : model_(model) {
    validate_records(records);
    flux_ = estimate_flux(records);
    if (!(flux_ > 0.0)) throw TomographyError("mle: zero counts in the basis settings");
    for (const auto& r : records) {
      projectors_.push_back(r.setting.projector_state().amplitudes());
      counts_.push_back(static_cast<double>(r.counts));
      scale_.push_back(flux_ * r.duration);
    }
  }

  double flux() const { return flux_; }

  double value(const Mat4& rho) const {
    double total = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const double p = probability(rho, i);
      const double mu = scale_[i] * p;
      if (model_ == LikelihoodModel::poisson) {
        if (counts_[i] > 0.0) {
          if (!(mu > 0.0)) return -std::numeric_limits<double>::infinity();
          total += counts_[i] * std::log(mu);
        }
        total -= mu;
      } else {
        const double diff = counts_[i] - mu;
        total -= diff * diff / (2.0 * std::max(counts_[i], 1.0));
      }
    }
    return total;
  }

  double value(const Params& x) const { return value(rho_from_params(x)); }

  Params gradient(const Params& x) const {
    const Mat4 t = t_from_params(x);
    const double norm = t.squaredNorm();
    const Mat4 rho = rho_from_params(x);
    Mat4 g = Mat4::Zero();
    double weighted_p = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const double p = probability(rho, i);
      double w;
      if (model_ == LikelihoodModel::poisson) {
        w = (counts_[i] > 0.0 ? counts_[i] / std::max(p, 1e-300) : 0.0) - scale_[i];
      } else {
        w = scale_[i] * (counts_[i] - scale_[i] * p) / std::max(counts_[i], 1.0);
      }
      g += w * projectors_[i] * projectors_[i].adjoint();
      weighted_p += w * p;
    }
    const Mat4 k = (g - weighted_p * Mat4::Identity()) / norm;
    const Mat4 m = k * t.adjoint();
    Params out;
    for (int d = 0; d < 4; ++d) out(d) = 2.0 * m(d, d).real();
    int idx = 4;
    for (int r = 1; r < 4; ++r) {
      for (int c = 0; c < r; ++c) {
        out(idx) = 2.0 * m(c, r).real();
        out(idx + 1) = -2.0 * m(c, r).imag();
        idx += 2;
      }
    }
    return out;
  }

 private:
  double probability(const Mat4& rho, std::size_t i) const {
    return std::max(projectors_[i].dot(rho * projectors_[i]).real(), 0.0);
  }

  LikelihoodModel model_;
  double flux_ = 0.0;
  std::vector<Vec4> projectors_;
  std::vector<double> counts_;
  std::vector<double> scale_;
};

}  // namespace mle

/// Log-likelihood of rho for the records (constant terms dropped).
inline double log_likelihood(const DensityMatrix& rho,
                             std::span<const TomographyRecord> records,
                             LikelihoodModel model = LikelihoodModel::poisson) {
  return mle::Objective(records, model).value(rho.matrix());
}

/// Maximum-likelihood reconstruction.
///
/// Starts from the eigenvalue-clipped linear inversion mixed with 1e-3 of
/// the maximally mixed state and ascends with BFGS directions and Armijo
/// backtracking, falling back to the plain gradient whenever the quasi-Newton
/// direction stops being an ascent direction. Converged means the relative
/// objective change and the relative step both fell below `tol` (step
/// against sqrt(tol)), or no ascent step exists along the gradient.
/// Exhausting max_iters returns converged = false.
inline TomographyResult mle_reconstruct(std::span<const TomographyRecord> records,
                                        const MleOptions& options = MleOptions{}) {
  if (options.max_iters < 1) throw DomainError("mle_reconstruct: max_iters must be >= 1");
  if (!(options.tol > 0.0)) throw DomainError("mle_reconstruct: tol must be > 0");
  validate_records(records);
  if (std::all_of(records.begin(), records.end(),
                  [](const TomographyRecord& r) { return r.counts == 0; })) {
    throw TomographyError("mle_reconstruct: all counts are zero");
  }

  const mle::Objective objective(records, options.model);
  const LinearInversionResult lin = linear_inversion(records);
  constexpr double kMix = 1e-3;
  const Mat4 start = (1.0 - kMix) * project_to_physical(lin.rho).matrix() +
                     kMix * Mat4::Identity() / 4.0;

  using mle::Params;
  using Hess = Eigen::Matrix<double, 16, 16>;
  Params x = mle::params_from_rho(start);
  double f = objective.value(x);
  Params g = objective.gradient(x);
  Hess h = Hess::Identity();

  TomographyResult result;
  if (options.record_trace) result.objective_trace.push_back(f);
  const double step_tol = std::sqrt(options.tol);
  int iter = 0;
  bool converged = false;
  bool fresh = true;  // h is the identity
  while (iter < options.max_iters) {
    ++iter;
    Params d = h * g;
    double slope = g.dot(d);
    if (!(slope > 0.0)) {
      h.setIdentity();
      fresh = true;
      d = g;
      slope = g.squaredNorm();
    }
    if (slope == 0.0) {
      converged = true;
      break;
    }

    double step = 1.0;
    // Scale the first trial of a gradient step to a unit-size move.
    if (fresh) step = std::min(1.0, 0.1 * x.norm() / std::max(d.norm(), 1e-300));
    Params xn;
    double fn = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      xn = x + step * d;
      fn = objective.value(xn);
      if (std::isfinite(fn) && fn >= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        h.setIdentity();
        fresh = true;
        continue;
      }
      converged = true;  // no ascent along the gradient at machine precision
      break;
    }

    const Params gn = objective.gradient(xn);
    const Params s = xn - x;
    const Params y = g - gn;  // gradient change of the negated objective
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho_k = 1.0 / sy;
      const Hess eye = Hess::Identity();
      h = (eye - rho_k * s * y.transpose()) * h * (eye - rho_k * y * s.transpose()) +
          rho_k * s * s.transpose();
      fresh = false;
    }

    const double df = std::abs(fn - f);
    const double scale = std::max(1.0, std::abs(fn));
    x = xn;
    f = fn;
    g = gn;
    if (options.record_trace) result.objective_trace.push_back(f);
    if (df <= options.tol * scale && s.norm() <= step_tol * std::max(1.0, x.norm())) {
      converged = true;
      break;
    }
  }

  Mat4 rho = mle::rho_from_params(x);
  rho = hermitian_part(rho);
  result.rho = project_to_physical(rho);
  result.log_likelihood = objective.value(result.rho.matrix());
  result.iterations = iter;
  result.converged = converged;
  return result;
}

}  // namespace polent
