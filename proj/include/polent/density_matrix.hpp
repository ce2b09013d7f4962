#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "polent/spdc.hpp"

namespace polent {

/// Tolerances shared by every validity check on a two-qubit state.
struct DensityTolerance {
  static constexpr double hermitian = 1e-10;
  static constexpr double trace = 1e-10;
  static constexpr double min_eigenvalue = -1e-10;
};

/// (m + m^dagger) / 2, evaluated into a fresh matrix so it is safe to assign
/// back to `m`.
inline Mat4 hermitian_part(const Mat4& m) {
  Mat4 out = m.adjoint();
  out += m;
  return 0.5 * out;
}

inline Eigen::Vector4d hermitian_eigenvalues(const Mat4& m) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Hermitian, unit-trace, positive semidefinite 4x4 matrix in the
/// (HH, HV, VH, VV) basis. Construction validates; use `project_to_physical`
/// for matrices that may fail the checks.
class DensityMatrix {
 public:
  DensityMatrix() : rho_(Mat4::Identity() / 4.0) {}

  explicit DensityMatrix(const Mat4& rho) : rho_(rho) {
    if (!rho.allFinite()) throw DomainError("DensityMatrix: non-finite entries");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > DensityTolerance::hermitian) {
      throw DomainError("DensityMatrix: not Hermitian");
    }
    if (std::abs(rho.trace() - 1.0) > DensityTolerance::trace) {
      throw DomainError("DensityMatrix: trace differs from 1");
    }
    rho_ = hermitian_part(rho);
    if (hermitian_eigenvalues(rho_).minCoeff() < DensityTolerance::min_eigenvalue) {
      throw DomainError("DensityMatrix: negative eigenvalue");
    }
  }

  explicit DensityMatrix(const TwoQubitPureState& psi)
      : rho_(psi.projector()) {}

  static DensityMatrix maximally_mixed() { return DensityMatrix(); }

  const Mat4& matrix() const { return rho_; }
  Complex operator()(int r, int c) const { return rho_(r, c); }

 private:
  Mat4 rho_;
};

inline DensityMatrix pure_to_density(const TwoQubitPureState& psi) {
  return DensityMatrix(psi);
}

/// p |target><target| + (1 - p) I/4.
inline DensityMatrix werner_state(double p,
                                  const TwoQubitPureState& target = bell_state(BellState::PhiMinus)) {
  if (!(p >= -1.0 / 3.0 && p <= 1.0)) throw DomainError("werner_state: p outside [-1/3, 1]");
  return DensityMatrix(Mat4(p * target.projector() + (1.0 - p) * Mat4::Identity() / 4.0));
}

/// Nearest valid state in the eigenvalue-clipping sense: Hermitian part,
/// negative eigenvalues set to zero, trace renormalized. Throws if nothing
/// positive is left.
inline DensityMatrix project_to_physical(const Mat4& m) {
  const Mat4 h = hermitian_part(m);
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
  const double total = ev.sum();
  if (!(total > 0.0)) throw DomainError("project_to_physical: no positive spectrum");
  ev /= total;
  Mat4 rho = es.eigenvectors() * ev.cast<Complex>().asDiagonal() *
             es.eigenvectors().adjoint();
  rho = hermitian_part(rho);
  return DensityMatrix(rho);
}

/// (U1 (x) U2) rho (U1 (x) U2)^dagger
inline DensityMatrix apply_local(const DensityMatrix& rho, const Mat2& u1,
                                 const Mat2& u2) {
  Mat4 u;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) u(2 * a + c, 2 * b + d) = u1(a, b) * u2(c, d);
  Mat4 out = u * rho.matrix() * u.adjoint();
  out = hermitian_part(out);
  out /= out.trace().real();
  return DensityMatrix(out);
}

}  // namespace polent
