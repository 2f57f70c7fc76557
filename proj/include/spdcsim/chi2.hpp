#pragma once

// C3v/D3h second-order nonlinear tensor and the analytic polarization-resolved
// observables that follow from it via the Born rule on the source state.

#include <Eigen/Dense>

#include "spdcsim/polarization.hpp"

namespace spdcsim {

/// chi(2) tensor with the in-plane element relations
/// chi_yyy = -chi_yxx = -chi_xxy = -chi_xyx = d22 enforced on query.
/// theta_ac is the armchair-axis orientation in the lab frame; the default
/// pi/2 puts the armchair axis along lab y (V || AC), where the canonical
/// tensor applies without rotation.
struct ChiTensor {
  double d22 = 1.0;
  double d31 = 0.0;
  double theta_ac = M_PI / 2.0;

  /// Tensor element chi_{abc} in the crystal frame (0=x, 1=y, 2=z).
  double crystal_element(int a, int b, int c) const;
};

enum class AnalyzerMode { None, CommonFixed, CorotatingParallel, CorotatingPerpendicular };

/// Common analyzer shared by both photons before the fiber splitter.
/// The angle is reduced modulo pi (linear polarizer period).
struct AnalyzerConfig {
  AnalyzerMode mode = AnalyzerMode::None;
  double angle = 0.0;

  static AnalyzerConfig none() { return {AnalyzerMode::None, 0.0}; }
  static AnalyzerConfig common_fixed(double a);
  static AnalyzerConfig corotating_parallel() { return {AnalyzerMode::CorotatingParallel, 0.0}; }
  static AnalyzerConfig corotating_perpendicular() {
    return {AnalyzerMode::CorotatingPerpendicular, 0.0};
  }
};

/// Contraction sum_{abc} chi_abc e_s,a e_i,b e_p,c with the crystal rotation
/// theta_ac - pi/2 applied to the in-plane indices.
double chi2_contract(const ChiTensor& t, const Eigen::Vector3d& e_s,
                     const Eigen::Vector3d& e_i, const Eigen::Vector3d& e_p);

/// Complex-vector overload used by the Green's-function amplitudes.
Complex chi2_contract(const ChiTensor& t, const Eigen::Vector3cd& e_s,
                      const Eigen::Vector3cd& e_i, const Eigen::Vector3cd& e_p);

/// SHG intensity for a parallel co-rotating analyzer, normalized to peak 1:
/// sin^2(3(phi - theta_ac + pi/2)), computed from the tensor contraction.
double shg_intensity(double phi, const ChiTensor& t = ChiTensor{});

/// Coincidence rate behind the common analyzer, from the Born rule on the
/// source ket (polarizer Jones matrices on both arms, then squared norm).
/// Normalized so the unpolarized rate is 1.
double projected_pair_rate(PumpAngle phi_p, const AnalyzerConfig& analyzer);

}  // namespace spdcsim
