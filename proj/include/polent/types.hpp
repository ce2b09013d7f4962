#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace polent {

using Complex = std::complex<double>;
using Vec2 = Eigen::Matrix<Complex, 2, 1>;
using Mat2 = Eigen::Matrix<Complex, 2, 2>;
using Vec4 = Eigen::Matrix<Complex, 4, 1>;
using Mat4 = Eigen::Matrix<Complex, 4, 4>;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Two-qubit basis ordering shared by every module: index = 2*signal + idler,
/// with H = 0 and V = 1.
inline constexpr std::array<const char*, 4> kBasisLabels{"HH", "HV", "VH", "VV"};

enum class BasisIndex : int { HH = 0, HV = 1, VH = 2, VV = 3 };

/// Thrown when an argument lies outside the domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace polent
