#pragma once

// Two-qubit polarization-state algebra in the (HH, HV, VH, VV) basis.
//
// Conventions used throughout the toolkit:
//   - basis ordering (HH, HV, VH, VV), first slot = signal arm
//   - H is the lab x axis (crystal zigzag), V is the lab y axis (armchair)
//   - angles are measured counterclockwise from x when viewed along -z

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace spdcsim {

using Complex = std::complex<double>;
using Jones = Eigen::Matrix2cd;

/// Pump polarization angle in radians from the x (zigzag) axis, reduced mod 2pi.
class PumpAngle {
public:
  explicit PumpAngle(double radians);
  double radians() const { return value_; }
  static PumpAngle from_degrees(double deg);

private:
  double value_;
};

/// Normalized two-photon polarization ket.
class TwoQubitKet {
public:
  /// Normalizes the amplitudes; throws if the norm is zero.
  explicit TwoQubitKet(const Eigen::Vector4cd& amplitudes);

  const Eigen::Vector4cd& amplitudes() const { return amp_; }
  Complex amplitude(int i) const { return amp_(i); }

  static TwoQubitKet phi_plus();
  static TwoQubitKet phi_minus();
  static TwoQubitKet psi_plus();
  static TwoQubitKet psi_minus();

private:
  Eigen::Vector4cd amp_;
};

/// Physical 4x4 density matrix: Hermitian, unit trace, PSD within 1e-9.
class DensityMatrix {
public:
  /// Validates physicality; throws std::invalid_argument on violation.
  explicit DensityMatrix(const Eigen::Matrix4cd& entries);

  const Eigen::Matrix4cd& entries() const { return rho_; }
  Complex operator()(int i, int j) const { return rho_(i, j); }

  double purity() const;

  static DensityMatrix maximally_mixed();

  static constexpr double kHermitianTol = 1e-9;
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kEigenvalueTol = 1e-9;

private:
  Eigen::Matrix4cd rho_;
};

/// Source state of the tunable TMD pair source for pump angle phi_p:
/// sin(phi_p)/sqrt(2) (|HH> - |VV>) + cos(phi_p)/sqrt(2) (|HV> + |VH>).
TwoQubitKet tmd_state(PumpAngle phi_p);

/// rho = |psi><psi|. Input must be normalized (the ket type guarantees it).
DensityMatrix density_from_ket(const TwoQubitKet& psi);

/// Wootters concurrence via the eigenvalues of rho (sy x sy) rho* (sy x sy).
double concurrence(const DensityMatrix& rho);

/// Pure-target fidelity <target| rho |target>, clipped to [0, 1].
double fidelity(const DensityMatrix& rho, const TwoQubitKet& target);

/// Local transform (J_s x J_i) |psi>. No renormalization: projection
/// amplitudes are preserved so the squared norm is a detection probability.
Eigen::Vector4cd apply_local_jones(const TwoQubitKet& state, const Jones& j_signal,
                                   const Jones& j_idler);

/// rho -> (J_s x J_i) rho (J_s x J_i)^dagger, not renormalized.
Eigen::Matrix4cd apply_local_jones(const DensityMatrix& state, const Jones& j_signal,
                                   const Jones& j_idler);

// Jones matrices. Waveplate fast-axis convention: the fast axis at angle
// theta from x acquires no phase, the slow axis is retarded, i.e.
// W = R(theta) diag(1, e^{i delta}) R(-theta) with delta = pi for a HWP
// and pi/2 for a QWP.
Jones jones_hwp(double theta);
Jones jones_qwp(double theta);
/// Ideal linear polarizer transmitting at angle theta.
Jones jones_polarizer(double theta);
Jones jones_rotator(double theta);

}  // namespace spdcsim
