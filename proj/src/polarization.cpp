#include "spdcsim/polarization.hpp"

#include <cmath>

#include <unsupported/Eigen/KroneckerProduct>

namespace spdcsim {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
}

PumpAngle::PumpAngle(double radians) : value_(std::fmod(radians, kTwoPi)) {
  if (value_ < 0.0) value_ += kTwoPi;
}

PumpAngle PumpAngle::from_degrees(double deg) { return PumpAngle(deg * M_PI / 180.0); }

TwoQubitKet::TwoQubitKet(const Eigen::Vector4cd& amplitudes) : amp_(amplitudes) {
  const double n = amp_.norm();
  if (n < 1e-300) throw std::invalid_argument("TwoQubitKet: zero-norm amplitudes");
  if (std::abs(n - 1.0) > 1e-12) amp_ /= n;
}

TwoQubitKet TwoQubitKet::phi_plus() {
  return TwoQubitKet(Eigen::Vector4cd(1, 0, 0, 1) / std::sqrt(2.0));
}
TwoQubitKet TwoQubitKet::phi_minus() {
  return TwoQubitKet(Eigen::Vector4cd(1, 0, 0, -1) / std::sqrt(2.0));
}
TwoQubitKet TwoQubitKet::psi_plus() {
  return TwoQubitKet(Eigen::Vector4cd(0, 1, 1, 0) / std::sqrt(2.0));
}
TwoQubitKet TwoQubitKet::psi_minus() {
  return TwoQubitKet(Eigen::Vector4cd(0, 1, -1, 0) / std::sqrt(2.0));
}

DensityMatrix::DensityMatrix(const Eigen::Matrix4cd& entries) : rho_(entries) {
  const double herm_err = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
  if (herm_err > kHermitianTol)
    throw std::invalid_argument("DensityMatrix: not Hermitian (max deviation " +
                                std::to_string(herm_err) + ")");
  rho_ = 0.5 * (rho_ + rho_.adjoint().eval());
  const double tr_err = std::abs(rho_.trace() - Complex(1.0, 0.0));
  if (tr_err > kTraceTol)
    throw std::invalid_argument("DensityMatrix: trace differs from 1 by " +
                                std::to_string(tr_err));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rho_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kEigenvalueTol)
    throw std::invalid_argument("DensityMatrix: negative eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()));
}

double DensityMatrix::purity() const { return (rho_ * rho_).trace().real(); }

DensityMatrix DensityMatrix::maximally_mixed() {
  return DensityMatrix(Eigen::Matrix4cd::Identity() * 0.25);
}

TwoQubitKet tmd_state(PumpAngle phi_p) {
  const double s = std::sin(phi_p.radians());
  const double c = std::cos(phi_p.radians());
  const double r = 1.0 / std::sqrt(2.0);
  return TwoQubitKet(Eigen::Vector4cd(s * r, c * r, c * r, -s * r));
}

DensityMatrix density_from_ket(const TwoQubitKet& psi) {
  return DensityMatrix(psi.amplitudes() * psi.amplitudes().adjoint());
}

double concurrence(const DensityMatrix& rho) {
  Eigen::Matrix4cd yy = Eigen::Matrix4cd::Zero();
  // sigma_y x sigma_y in the (HH, HV, VH, VV) basis
  yy(0, 3) = -1;
  yy(1, 2) = 1;
  yy(2, 1) = 1;
  yy(3, 0) = -1;
  // The lambda_i are the eigenvalue square roots of rho * yy * conj(rho) * yy.
  // Equivalently they are the singular values of sqrt(rho) * yy * conj(sqrt(rho)),
  // which an SVD delivers at full precision even for (near-)pure states.
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rho.entries());
  Eigen::Vector4d d = es.eigenvalues();
  for (int i = 0; i < 4; ++i) d(i) = std::sqrt(std::max(0.0, d(i)));
  const Eigen::Matrix4cd sqrt_rho =
      es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  const Eigen::Matrix4cd b = sqrt_rho * yy * sqrt_rho.conjugate();
  const Eigen::JacobiSVD<Eigen::Matrix4cd> svd(b);
  const Eigen::Vector4d lam = svd.singularValues();  // sorted decreasing
  return std::max(0.0, lam(0) - lam(1) - lam(2) - lam(3));
}

double fidelity(const DensityMatrix& rho, const TwoQubitKet& target) {
  const double f = (target.amplitudes().adjoint() * rho.entries() * target.amplitudes())(0).real();
  return std::clamp(f, 0.0, 1.0);
}

Eigen::Vector4cd apply_local_jones(const TwoQubitKet& state, const Jones& j_signal,
                                   const Jones& j_idler) {
  return Eigen::kroneckerProduct(j_signal, j_idler) * state.amplitudes();
}

Eigen::Matrix4cd apply_local_jones(const DensityMatrix& state, const Jones& j_signal,
                                   const Jones& j_idler) {
  const Eigen::Matrix4cd j = Eigen::kroneckerProduct(j_signal, j_idler);
  return j * state.entries() * j.adjoint();
}

Jones jones_rotator(double theta) {
  Jones r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

namespace {
Jones waveplate(double theta, Complex slow_phase) {
  Jones d = Jones::Zero();
  d(0, 0) = 1.0;
  d(1, 1) = slow_phase;
  return jones_rotator(theta) * d * jones_rotator(-theta);
}
}  // namespace

Jones jones_hwp(double theta) { return waveplate(theta, Complex(-1.0, 0.0)); }
Jones jones_qwp(double theta) { return waveplate(theta, Complex(0.0, 1.0)); }

Jones jones_polarizer(double theta) {
  Eigen::Vector2cd a(std::cos(theta), std::sin(theta));
  return a * a.adjoint();
}

}  // namespace spdcsim
