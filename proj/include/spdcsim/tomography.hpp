#pragma once

// Two-qubit polarization tomography: projective settings from waveplate
// angles, count prediction, linear inversion, maximum-likelihood
// reconstruction and Monte Carlo uncertainty.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spdcsim/polarization.hpp"

namespace spdcsim {

/// Back-propagated projector of a QWP -> HWP -> fixed H polarizer arm:
/// |proj> = Wq(qwp)^dagger Wh(hwp)^dagger |H>. Waveplate fast-axis
/// convention as in jones_qwp/jones_hwp.
Eigen::Vector2cd jones_projector(double qwp, double hwp);

/// Waveplate fast-axis angles (radians) for the two arms. The linear
/// polarizer at the end of each arm is fixed transmitting H.
struct ProjectionSetting {
  double qwp_s = 0.0;
  double hwp_s = 0.0;
  double qwp_i = 0.0;
  double hwp_i = 0.0;

  Eigen::Vector2cd projector_signal() const { return jones_projector(qwp_s, hwp_s); }
  Eigen::Vector2cd projector_idler() const { return jones_projector(qwp_i, hwp_i); }
  /// Joint two-photon projector state |p_s p_i>.
  Eigen::Vector4cd joint_state() const;
};

struct MeasurementRecord {
  ProjectionSetting setting;
  long long counts = 0;
  double duration_s = 1.0;
};

struct TomographySet {
  std::vector<MeasurementRecord> records;

  /// Throws unless the projectors span the 16-dimensional Hermitian space.
  void validate() const;

  /// Canonical 16-setting list (James-protocol style pairings over
  /// H, V, D, R, L states).
  static TomographySet canonical();
};

/// n = n_total <p_s p_i| rho |p_s p_i>.
double predicted_counts(const DensityMatrix& rho, const ProjectionSetting& setting,
                        double n_total);

/// Linear inversion. Hermitian and unit-trace by construction; eigenvalues
/// may be negative under noise. Throws on a rank-deficient setting set.
Eigen::Matrix4cd linear_reconstruct(const TomographySet& data);

struct MleOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  std::uint64_t seed = 0;  // recorded for provenance; the optimizer is deterministic
};

struct MleResult {
  DensityMatrix rho;
  double neg_log_likelihood;
  int n_iter;
  std::vector<double> likelihood_trace;  // NLL at accepted steps, non-increasing
};

struct MleNonConvergence : std::runtime_error {
  MleNonConvergence(const std::string& msg, MleResult best)
      : std::runtime_error(msg), best(std::move(best)) {}
  MleResult best;
};

/// Maximum-likelihood reconstruction, rho = T^dagger T / tr(T^dagger T) with
/// T lower-triangular (16 real parameters), Poisson negative log-likelihood,
/// BFGS with numerical gradients from the physicality-projected linear
/// estimate. Deterministic.
MleResult mle_reconstruct(const TomographySet& data, const MleOptions& options = {});

enum class Statistic { Concurrence, Fidelity };

struct MonteCarloResult {
  double mean;
  double std;
  int excluded;  // samples dropped because their reconstruction failed
};

/// Poisson-resamples the recorded counts, re-runs the MLE per sample and
/// returns mean and standard deviation of the statistic. Deterministic given
/// the seed, independent of the degree of parallelism.
MonteCarloResult monte_carlo_uncertainty(const TomographySet& data, int n_samples,
                                         Statistic statistic,
                                         const std::optional<TwoQubitKet>& target,
                                         std::uint64_t seed);

/// Poisson-sampled synthetic counts for every setting of `settings` from the
/// given state, mean n_total per normalization. seed absent -> noiseless
/// (rounded expectation values).
TomographySet simulate_counts(const DensityMatrix& rho, const TomographySet& settings,
                              double n_total, std::optional<std::uint64_t> seed);

/// "0.967 +/- 0.002" style formatting: std rounded to one significant digit,
/// value to the matching decimal place.
std::string format_pm(double value, double std);

}  // namespace spdcsim
