/**
 * @file spdc.hpp
 * @brief Two-photon polarization state generated by the in-plane d22
 * components of a C3v second-order nonlinear tensor.
 *
 * The pump, signal and idler propagate along the crystal z-axis, so only the
 * in-plane components
 *     chi_yyy = -chi_yxx = -chi_xxy = -chi_xyx = d22
 * take part (plane-wave model, z-polarized processes suppressed). Index
 * order is chi_{signal, idler, pump}.
 */

#pragma once

#include <cmath>
#include <string_view>

#include "polent/polarization.hpp"

namespace polent {

/// In-plane part of a C3v chi(2) tensor, x <-> H and y <-> V.
class C3vTensor {
 public:
  explicit C3vTensor(double d22_pm_per_volt = 4.2) : d22_(d22_pm_per_volt) {
    if (!std::isfinite(d22_) || d22_ == 0.0) {
      throw DomainError("C3vTensor: d22 must be finite and nonzero");
    }
  }

  double d22() const { return d22_; }

  /// chi_ijk, each index 0 (x) or 1 (y).
  double component(int i, int j, int k) const {
    // yyy carries +d22; yxx, xyx and xxy (a single y index) carry -d22.
    const int y_count = i + j + k;
    if (y_count == 3) return d22_;
    if (y_count == 1) return -d22_;
    return 0.0;
  }

 private:
  double d22_;
};

/// Unit-norm two-photon amplitude vector ordered (HH, HV, VH, VV).
class TwoQubitPureState {
 public:
  TwoQubitPureState() : TwoQubitPureState(Vec4(Vec4::Unit(0))) {}

  explicit TwoQubitPureState(const Vec4& amplitudes) {
    const double norm = amplitudes.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DomainError("TwoQubitPureState: zero or non-finite amplitudes");
    }
    amp_ = amplitudes / norm;
  }

  TwoQubitPureState(Complex hh, Complex hv, Complex vh, Complex vv)
      : TwoQubitPureState(Vec4(hh, hv, vh, vv)) {}

  const Vec4& amplitudes() const { return amp_; }
  Complex operator[](BasisIndex b) const { return amp_(static_cast<int>(b)); }

  /// |signal> (x) |idler>
  static TwoQubitPureState product(const JonesVector& signal,
                                   const JonesVector& idler) {
    const Vec2& s = signal.amplitudes();
    const Vec2& i = idler.amplitudes();
    return {s(0) * i(0), s(0) * i(1), s(1) * i(0), s(1) * i(1)};
  }

  Mat4 projector() const { return amp_ * amp_.adjoint(); }

 private:
  Vec4 amp_;
};

/// |<a|b>|^2
inline double state_overlap(const TwoQubitPureState& a,
                            const TwoQubitPureState& b) {
  return std::norm(a.amplitudes().dot(b.amplitudes()));
}

inline bool equal_up_to_phase(const TwoQubitPureState& a,
                              const TwoQubitPureState& b, double tol = 1e-10) {
  return 1.0 - std::sqrt(state_overlap(a, b)) <= tol;
}

enum class BellState { PhiMinus, PsiPlus, PhiPlus, PsiMinus };

inline TwoQubitPureState bell_state(BellState which) {
  switch (which) {
    case BellState::PhiMinus:
      return {1.0, 0.0, 0.0, -1.0};
    case BellState::PsiPlus:
      return {0.0, 1.0, 1.0, 0.0};
    case BellState::PhiPlus:
      return {1.0, 0.0, 0.0, 1.0};
    case BellState::PsiMinus:
      return {0.0, 1.0, -1.0, 0.0};
  }
  throw DomainError("bell_state: unknown state");
}

inline TwoQubitPureState rr_state() {
  return TwoQubitPureState::product(JonesVector::right_circular(),
                                    JonesVector::right_circular());
}

inline TwoQubitPureState ll_state() {
  return TwoQubitPureState::product(JonesVector::left_circular(),
                                    JonesVector::left_circular());
}

/// Contracts the tensor with the pump field, A_ij = sum_k chi_ijk E_k.
inline TwoQubitPureState biphoton_from_pump(const JonesVector& pump,
                                            const C3vTensor& tensor = C3vTensor{}) {
  Vec4 amp = Vec4::Zero();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        amp(2 * i + j) += tensor.component(i, j, k) * pump.amplitudes()(k);
      }
    }
  }
  return TwoQubitPureState(amp);
}

/// Closed-form output state:
///   cos(phi)/sqrt2 (|HV> + |VH>) + exp(i delta) sin(phi)/sqrt2 (|HH> - |VV>).
/// Agrees with biphoton_from_pump up to the global factor -d22.
inline TwoQubitPureState state_from_angles(const PumpAngles& angles) {
  const double phi = deg_to_rad(angles.phi_p);
  const Complex c = std::cos(phi) / std::numbers::sqrt2;
  const Complex s = std::exp(kI * deg_to_rad(angles.delta)) * std::sin(phi) /
                    std::numbers::sqrt2;
  return {s, c, c, -s};
}

enum class Analyzer { parallel, perpendicular };

/// Second-harmonic polarization P_i = sum_jk chi_ijk E_j E_k for a linearly
/// polarized fundamental at phi (degrees).
inline Eigen::Vector2d shg_polarization(double phi_deg,
                                        const C3vTensor& tensor = C3vTensor{}) {
  const double phi = deg_to_rad(phi_deg);
  const double e[2] = {std::cos(phi), std::sin(phi)};
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) p(i) += tensor.component(i, j, k) * e[j] * e[k];
  return p;
}

/// SHG intensity behind an analyzer parallel or perpendicular to the
/// fundamental, normalized by the maximum over all phi (|P| = d22 for every
/// linear input, so the normalization is |P|^2).
inline double shg_intensity(double phi_deg, Analyzer analyzer,
                            const C3vTensor& tensor = C3vTensor{}) {
  const double phi = deg_to_rad(phi_deg);
  const Eigen::Vector2d p = shg_polarization(phi_deg, tensor);
  const Eigen::Vector2d along =
      analyzer == Analyzer::parallel ? Eigen::Vector2d(std::cos(phi), std::sin(phi))
                                     : Eigen::Vector2d(-std::sin(phi), std::cos(phi));
  const double proj = p.dot(along);
  return proj * proj / (tensor.d22() * tensor.d22());
}

}  // namespace polent
