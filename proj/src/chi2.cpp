#include "spdcsim/chi2.hpp"

#include <cmath>

namespace spdcsim {

double ChiTensor::crystal_element(int a, int b, int c) const {
  // In-plane C3v set
  if (a == 1 && b == 1 && c == 1) return d22;
  if (a == 1 && b == 0 && c == 0) return -d22;
  if (a == 0 && b == 0 && c == 1) return -d22;
  if (a == 0 && b == 1 && c == 0) return -d22;
  // Out-of-plane d31 block (z appearing once, Kleinman-symmetric)
  if (d31 != 0.0) {
    if (a == 2 && b == 0 && c == 0) return d31;
    if (a == 2 && b == 1 && c == 1) return d31;
    if (a == 0 && b == 2 && c == 0) return d31;
    if (a == 1 && b == 2 && c == 1) return d31;
    if (a == 0 && b == 0 && c == 2) return d31;
    if (a == 1 && b == 1 && c == 2) return d31;
  }
  return 0.0;
}

AnalyzerConfig AnalyzerConfig::common_fixed(double a) {
  double r = std::fmod(a, M_PI);
  if (r < 0.0) r += M_PI;
  return {AnalyzerMode::CommonFixed, r};
}

Complex chi2_contract(const ChiTensor& t, const Eigen::Vector3cd& e_s,
                      const Eigen::Vector3cd& e_i, const Eigen::Vector3cd& e_p) {
  // Rotate lab vectors into the crystal frame. The canonical tensor has the
  // armchair axis along y, so the crystal frame is the lab frame rotated by
  // theta_ac - pi/2 about z.
  const double rot = t.theta_ac - M_PI / 2.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r.topLeftCorner<2, 2>() << std::cos(rot), std::sin(rot), -std::sin(rot), std::cos(rot);
  const Eigen::Vector3cd s = r * e_s, i = r * e_i, p = r * e_p;
  Complex acc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        const double el = t.crystal_element(a, b, c);
        if (el != 0.0) acc += el * s(a) * i(b) * p(c);
      }
  return acc;
}

double chi2_contract(const ChiTensor& t, const Eigen::Vector3d& e_s,
                     const Eigen::Vector3d& e_i, const Eigen::Vector3d& e_p) {
  return chi2_contract(t, Eigen::Vector3cd(e_s.cast<Complex>()),
                       Eigen::Vector3cd(e_i.cast<Complex>()),
                       Eigen::Vector3cd(e_p.cast<Complex>()))
      .real();
}

double shg_intensity(double phi, const ChiTensor& t) {
  const Eigen::Vector3d e(std::cos(phi), std::sin(phi), 0.0);
  const double amp = chi2_contract(t, e, e, e);
  return (amp * amp) / (t.d22 * t.d22);
}

double projected_pair_rate(PumpAngle phi_p, const AnalyzerConfig& analyzer) {
  const TwoQubitKet psi = tmd_state(phi_p);
  double alpha;
  switch (analyzer.mode) {
    case AnalyzerMode::None:
      return psi.amplitudes().squaredNorm();
    case AnalyzerMode::CommonFixed:
      alpha = analyzer.angle;
      break;
    case AnalyzerMode::CorotatingParallel:
      alpha = phi_p.radians();
      break;
    case AnalyzerMode::CorotatingPerpendicular:
      alpha = phi_p.radians() + M_PI / 2.0;
      break;
    default:
      throw std::invalid_argument("projected_pair_rate: unknown analyzer mode");
  }
  const Jones pol = jones_polarizer(alpha);
  return apply_local_jones(psi, pol, pol).squaredNorm();
}

}  // namespace spdcsim
