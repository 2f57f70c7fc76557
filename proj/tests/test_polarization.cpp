#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "spdcsim/polarization.hpp"

using namespace spdcsim;

namespace {

Eigen::Matrix2cd random_unitary(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Matrix2cd m;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m(i, j) = Complex(g(rng), g(rng));
  const Eigen::HouseholderQR<Eigen::Matrix2cd> qr(m);
  Eigen::Matrix2cd q = qr.householderQ();
  const Eigen::Matrix2cd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 2; ++i) q.col(i) *= r(i, i) / std::abs(r(i, i));
  return q;
}

DensityMatrix random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Matrix4cd m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = Complex(g(rng), g(rng));
  Eigen::Matrix4cd rho = m * m.adjoint();
  return DensityMatrix(rho / rho.trace().real());
}

}  // namespace

TEST_CASE("pump angle reduces modulo 2pi") {
  CHECK(PumpAngle(2.0 * M_PI + 0.5).radians() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(PumpAngle(-0.5).radians() == doctest::Approx(2.0 * M_PI - 0.5).epsilon(1e-12));
  CHECK(PumpAngle::from_degrees(450.0).radians() ==
        doctest::Approx(M_PI / 2.0).epsilon(1e-12));
}

TEST_CASE("kets normalize on construction") {
  const TwoQubitKet k(Eigen::Vector4cd(2, 0, 0, 0));
  CHECK(std::abs(k.amplitude(0) - Complex(1, 0)) < 1e-12);
  CHECK(k.amplitudes().norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(TwoQubitKet(Eigen::Vector4cd::Zero()), std::invalid_argument);
}

TEST_CASE("source state hits the Bell states at the special angles") {
  // phi_p = 90 deg: (|HH> - |VV>)/sqrt(2)
  const auto k90 = tmd_state(PumpAngle::from_degrees(90.0));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(k90.amplitude(0) - Complex(r, 0)) < 1e-12);
  CHECK(std::abs(k90.amplitude(1)) < 1e-12);
  CHECK(std::abs(k90.amplitude(2)) < 1e-12);
  CHECK(std::abs(k90.amplitude(3) - Complex(-r, 0)) < 1e-12);

  // phi_p = 0: (|HV> + |VH>)/sqrt(2)
  const auto k0 = tmd_state(PumpAngle(0.0));
  CHECK(std::abs(k0.amplitude(0)) < 1e-12);
  CHECK(std::abs(k0.amplitude(1) - Complex(r, 0)) < 1e-12);
  CHECK(std::abs(k0.amplitude(2) - Complex(r, 0)) < 1e-12);
  CHECK(std::abs(k0.amplitude(3)) < 1e-12);

  // phi_p = 45 deg: (0.5, 0.5, 0.5, -0.5)
  const auto k45 = tmd_state(PumpAngle::from_degrees(45.0));
  CHECK(std::abs(k45.amplitude(0) - Complex(0.5, 0)) < 1e-12);
  CHECK(std::abs(k45.amplitude(1) - Complex(0.5, 0)) < 1e-12);
  CHECK(std::abs(k45.amplitude(2) - Complex(0.5, 0)) < 1e-12);
  CHECK(std::abs(k45.amplitude(3) - Complex(-0.5, 0)) < 1e-12);
}

TEST_CASE("density matrix validation") {
  Eigen::Matrix4cd bad = Eigen::Matrix4cd::Identity() * 0.25;
  bad(0, 1) = Complex(0.1, 0.0);  // breaks Hermiticity
  CHECK_THROWS_AS(DensityMatrix{bad}, std::invalid_argument);

  Eigen::Matrix4cd traceless = Eigen::Matrix4cd::Identity() * 0.3;
  CHECK_THROWS_AS(DensityMatrix{traceless}, std::invalid_argument);

  Eigen::Matrix4cd neg = Eigen::Matrix4cd::Zero();
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(DensityMatrix{neg}, std::invalid_argument);
}

TEST_CASE("density from ket is a rank-1 projector") {
  const auto rho = density_from_ket(TwoQubitKet::phi_minus());
  CHECK(std::abs(rho(0, 0) - Complex(0.5, 0)) < 1e-12);
  CHECK(std::abs(rho(3, 3) - Complex(0.5, 0)) < 1e-12);
  CHECK(std::abs(rho(0, 3) - Complex(-0.5, 0)) < 1e-12);
  CHECK(std::abs(rho(3, 0) - Complex(-0.5, 0)) < 1e-12);
  CHECK(std::abs(rho(1, 1)) < 1e-12);
  CHECK(rho.purity() == doctest::Approx(1.0).epsilon(1e-12));

  const auto hh = density_from_ket(TwoQubitKet(Eigen::Vector4cd(1, 0, 0, 0)));
  CHECK(std::abs(hh(0, 0) - Complex(1, 0)) < 1e-12);

  const auto r45 = density_from_ket(tmd_state(PumpAngle::from_degrees(45.0)));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(std::abs(r45(i, j)) == doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("concurrence reference values") {
  CHECK(concurrence(density_from_ket(TwoQubitKet::phi_minus())) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(concurrence(density_from_ket(TwoQubitKet(Eigen::Vector4cd(1, 0, 0, 0)))) ==
        doctest::Approx(0.0).epsilon(1e-10));

  // Werner state: C = max(0, (3p - 1)/2)
  const double p = 0.8;
  const Eigen::Matrix4cd w =
      p * density_from_ket(TwoQubitKet::phi_minus()).entries() +
      (1.0 - p) * 0.25 * Eigen::Matrix4cd::Identity();
  CHECK(concurrence(DensityMatrix(w)) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(concurrence(DensityMatrix::maximally_mixed()) == doctest::Approx(0.0));
}

TEST_CASE("concurrence is 1 for the source state on a 360-point grid") {
  for (int i = 0; i < 360; ++i) {
    const auto rho = density_from_ket(tmd_state(PumpAngle::from_degrees(i)));
    CHECK(std::abs(concurrence(rho) - 1.0) < 1e-10);
  }
}

TEST_CASE("fidelity reference values and the sin^2/cos^2 curves") {
  const auto phim = TwoQubitKet::phi_minus();
  CHECK(fidelity(density_from_ket(phim), phim) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fidelity(DensityMatrix::maximally_mixed(), phim) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK(fidelity(density_from_ket(tmd_state(PumpAngle::from_degrees(30.0))), phim) ==
        doctest::Approx(0.25).epsilon(1e-12));

  const auto psip = TwoQubitKet::psi_plus();
  for (int i = 0; i < 360; ++i) {
    const double rad = i * M_PI / 180.0;
    const auto rho = density_from_ket(tmd_state(PumpAngle(rad)));
    const double fm = fidelity(rho, phim);
    const double fp = fidelity(rho, psip);
    CHECK(std::abs(fm - std::sin(rad) * std::sin(rad)) < 1e-12);
    CHECK(std::abs(fp - std::cos(rad) * std::cos(rad)) < 1e-12);
    CHECK(std::abs(fm + fp - 1.0) < 1e-12);
  }
}

TEST_CASE("fidelity is linear in the state") {
  std::mt19937_64 rng(7);
  const auto t = TwoQubitKet::phi_minus();
  for (int trial = 0; trial < 20; ++trial) {
    const auto r1 = random_state(rng);
    const auto r2 = random_state(rng);
    const double a = std::uniform_real_distribution<double>(0, 1)(rng);
    const DensityMatrix mix(a * r1.entries() + (1.0 - a) * r2.entries());
    CHECK(std::abs(fidelity(mix, t) - (a * fidelity(r1, t) + (1 - a) * fidelity(r2, t))) <
          1e-12);
  }
}

TEST_CASE("concurrence is invariant under local unitaries") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rho = random_state(rng);
    const auto u = random_unitary(rng);
    const auto v = random_unitary(rng);
    const DensityMatrix rotated(apply_local_jones(rho, u, v));
    CHECK(std::abs(concurrence(rho) - concurrence(rotated)) < 1e-9);
  }
}

TEST_CASE("local Jones transforms") {
  const auto phim = TwoQubitKet::phi_minus();
  const Jones id = Jones::Identity();
  CHECK((apply_local_jones(phim, id, id) - phim.amplitudes()).norm() < 1e-12);

  // HWP at 45 deg on both arms: phi_minus -> -phi_minus, density unchanged
  const Jones h45 = jones_hwp(M_PI / 4.0);
  const Eigen::Vector4cd flipped = apply_local_jones(phim, h45, h45);
  CHECK((flipped + phim.amplitudes()).norm() < 1e-12);
  const auto rho = density_from_ket(phim);
  CHECK((apply_local_jones(rho, h45, h45) - rho.entries()).cwiseAbs().maxCoeff() < 1e-12);

  // HWP at 45 deg on the signal arm only: rho(phi_minus) -> rho(psi_minus)
  const auto target = density_from_ket(TwoQubitKet::psi_minus());
  CHECK((apply_local_jones(rho, h45, id) - target.entries()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("Jones matrices against closed forms") {
  // HWP at theta maps H to cos(2theta) H + sin(2theta) V
  for (double th : {0.0, 0.3, M_PI / 4.0, 1.1}) {
    const Eigen::Vector2cd out = jones_hwp(th) * Eigen::Vector2cd(1, 0);
    CHECK(std::abs(out(0) - Complex(std::cos(2 * th), 0)) < 1e-12);
    CHECK(std::abs(out(1) - Complex(std::sin(2 * th), 0)) < 1e-12);
  }
  // QWP at 45 deg maps H to a circular state (up to phase)
  const Eigen::Vector2cd circ = jones_qwp(M_PI / 4.0) * Eigen::Vector2cd(1, 0);
  CHECK(std::abs(std::abs(circ(0)) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(circ(1) / circ(0) - Complex(0, -1)) < 1e-12);
  // polarizer is a projector
  const Jones p = jones_polarizer(0.7);
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(p.trace() - Complex(1, 0)) < 1e-12);
  // waveplates are unitary
  for (double th : {0.0, 0.4, 1.9}) {
    CHECK((jones_hwp(th) * jones_hwp(th).adjoint() - Jones::Identity()).norm() < 1e-12);
    CHECK((jones_qwp(th) * jones_qwp(th).adjoint() - Jones::Identity()).norm() < 1e-12);
  }
}
