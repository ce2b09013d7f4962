/**
 * @file polarization.hpp
 * @brief Jones calculus for single photons and the pump beam.
 *
 * Conventions used throughout the library:
 *  - basis (H, V) with H along the crystalline x-axis and V along y;
 *  - angles counterclockwise from H, viewed against the propagation direction;
 *  - a retarder with fast axis at theta and retardance Gamma is
 *        W = R(theta) * diag(1, exp(-i Gamma)) * R(-theta),
 *    R(theta) = [[cos, -sin], [sin, cos]];
 *  - circular states: L = (1, i)/sqrt2 and R = (1, -i)/sqrt2.
 *
 * Angles are degrees at every public interface and radians internally.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "polent/types.hpp"

namespace polent {

/// Normalized single-photon polarization amplitude (h, v).
class JonesVector {
 public:
  JonesVector() : JonesVector(Complex{1.0, 0.0}, Complex{0.0, 0.0}) {}

  /// Normalizes the input; throws DomainError on the zero vector.
  JonesVector(Complex h, Complex v) {
    const double norm = std::sqrt(std::norm(h) + std::norm(v));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DomainError("JonesVector: zero or non-finite amplitude");
    }
    amp_ << h / norm, v / norm;
  }

  explicit JonesVector(const Vec2& amp) : JonesVector(amp(0), amp(1)) {}

  Complex h() const { return amp_(0); }
  Complex v() const { return amp_(1); }
  const Vec2& amplitudes() const { return amp_; }

  static JonesVector horizontal() { return {1.0, 0.0}; }
  static JonesVector vertical() { return {0.0, 1.0}; }
  static JonesVector diagonal() { return {1.0, 1.0}; }
  static JonesVector antidiagonal() { return {1.0, -1.0}; }
  static JonesVector left_circular() { return {1.0, kI}; }
  static JonesVector right_circular() { return {1.0, -kI}; }

  /// Linear polarization at `deg` from H.
  static JonesVector linear(double deg) {
    const double a = deg_to_rad(deg);
    return {std::cos(a), std::sin(a)};
  }

 private:
  Vec2 amp_;
};

/// |<a|b>|, i.e. the overlap maximized over a global phase.
inline double overlap_magnitude(const JonesVector& a, const JonesVector& b) {
  return std::abs(a.amplitudes().dot(b.amplitudes()));
}

inline bool equal_up_to_phase(const JonesVector& a, const JonesVector& b,
                              double tol = 1e-10) {
  return 1.0 - overlap_magnitude(a, b) <= tol;
}

/// Pump ellipse parameters: jones = cos(phi)|x> + exp(i delta) sin(phi)|y>.
struct PumpAngles {
  double phi_p = 0.0;  ///< degrees, [0, 180)
  double delta = 0.0;  ///< degrees, (-180, 180]

  PumpAngles() = default;
  PumpAngles(double phi_deg, double delta_deg)
      : phi_p(wrap_phi(phi_deg)), delta(wrap_delta(delta_deg)) {}

  /// Representative with phi_p in [0, 90]; (phi, delta) and
  /// (180 - phi, delta + 180) describe the same ray.
  PumpAngles canonical() const {
    if (phi_p > 90.0) return {180.0 - phi_p, delta + 180.0};
    return *this;
  }

  static double wrap_phi(double deg) {
    double r = std::fmod(deg, 180.0);
    if (r < 0.0) r += 180.0;
    return r >= 180.0 ? 0.0 : r;
  }

  static double wrap_delta(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r <= -180.0) r += 360.0;
    if (r > 180.0) r -= 360.0;
    return r;
  }
};

enum class WaveplateKind { half, quarter };

struct WaveplateSetting {
  WaveplateKind kind = WaveplateKind::half;
  double fast_axis_angle = 0.0;  ///< degrees from H

  double retardance() const {
    return kind == WaveplateKind::half ? kPi : kPi / 2.0;
  }

  static WaveplateSetting hwp(double deg) { return {WaveplateKind::half, deg}; }
  static WaveplateSetting qwp(double deg) {
    return {WaveplateKind::quarter, deg};
  }
};

inline Mat2 rotation(double rad) {
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// General linear retarder in the library convention.
inline Mat2 retarder(double fast_axis_deg, double retardance_rad) {
  const double theta = deg_to_rad(fast_axis_deg);
  Mat2 d = Mat2::Zero();
  d(0, 0) = 1.0;
  d(1, 1) = std::exp(-kI * retardance_rad);
  return rotation(theta) * d * rotation(-theta);
}

inline Mat2 waveplate_operator(const WaveplateSetting& setting) {
  return retarder(setting.fast_axis_angle, setting.retardance());
}

inline JonesVector apply_operator(const Mat2& op, const JonesVector& in) {
  return JonesVector(Vec2(op * in.amplitudes()));
}

/// Applies the plates in list order (first element is met first).
inline JonesVector apply_waveplates(const JonesVector& input,
                                    std::span<const WaveplateSetting> settings) {
  Vec2 amp = input.amplitudes();
  for (const auto& s : settings) amp = waveplate_operator(s) * amp;
  return JonesVector(amp);
}

inline JonesVector apply_waveplates(
    const JonesVector& input, std::initializer_list<WaveplateSetting> settings) {
  return apply_waveplates(
      input, std::span<const WaveplateSetting>(settings.begin(), settings.size()));
}

/// Ellipse parameters of a pump state, phi_p in [0, 90].
///
/// If either component vanishes the relative phase is undefined and delta is
/// reported as 0.
inline PumpAngles pump_angles(const JonesVector& jones) {
  const double ah = std::abs(jones.h());
  const double av = std::abs(jones.v());
  const double phi = rad_to_deg(std::atan2(av, ah));
  constexpr double kDegenerate = 1e-15;
  double delta = 0.0;
  if (ah > kDegenerate && av > kDegenerate) {
    delta = rad_to_deg(std::arg(jones.v() * std::conj(jones.h())));
  }
  return {phi, delta};
}

inline JonesVector pump_from_angles(const PumpAngles& angles) {
  const double phi = deg_to_rad(angles.phi_p);
  const double delta = deg_to_rad(angles.delta);
  return {Complex{std::cos(phi), 0.0}, std::exp(kI * delta) * std::sin(phi)};
}

}  // namespace polent
