#pragma once

// Forward models and estimators for the measurable signals: coincidence
// histograms, CAR, pump-power scaling, the detection-efficiency budget and
// dispersive fiber spectroscopy.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace spdcsim {

struct DetectionBudget {
  double t_opt;
  double eta_coupl;
  double eta_bs;
  double eta_detec;
  double eta_lp;
};

/// eta_tot = t_opt^2 * eta_coupl^2 * eta_bs * eta_detec^2 * eta_lp.
double total_efficiency(const DetectionBudget& b);

struct CoincidenceHistogram {
  double bin_width_s;
  std::vector<double> delays_s;  // bin centers, symmetric around zero
  std::vector<long long> counts;
  double duration_s;
};

/// True pairs at zero delay broadened by Gaussian timing jitter plus a flat
/// Poisson accidental floor of mean singles_s * singles_i * bin_width *
/// duration per bin. Deterministic per seed.
CoincidenceHistogram synthesize_histogram(double pair_rate, double singles_s,
                                          double singles_i, double jitter_sigma,
                                          double bin_width, double duration,
                                          std::uint64_t seed, int n_bins = 201);

struct CarResult {
  double value;
  double std;
  bool background_limited;  // no accidental floor; std is infinite
};

/// Coincidence-to-accidental ratio: counts in the peak window over the mean
/// counts of an equal-width accidental window, background estimated from all
/// bins outside 3x the peak window. Poisson error propagation.
CarResult car(const CoincidenceHistogram& h, double peak_window_s);

/// Evidence flag per the CAR > 2 criterion: fires when value - 2 std > 2.
bool pair_evidence(const CarResult& c);

struct PowerFit {
  double slope;     // linear fit through the origin, counts per mW
  double exponent;  // log-log fit
  double r2;        // of the log-log fit
};

/// Simulates rates proportional to power (Poisson noise when seeded) and
/// fits the linear slope and log-log exponent.
PowerFit power_sweep(const std::vector<double>& powers_mw, double rate_per_mw,
                     double duration_s, std::optional<std::uint64_t> seed);

struct SpectrometerConfig {
  double fiber_length_km = 1.0;        // signal arm (and shared spool)
  double fiber_length_idler_km = 1.0;  // split-arms layout only
  double dispersion_ps_nm_km = 17.0;
  double reference_wavelength_nm = 1576.0;  // degenerate SPDC wavelength
  double band_min_nm = 1100.0;
  double band_max_nm = 2600.0;
};

enum class FiberLayout { SharedSpool, SplitArms };

/// First-order dispersive delay for a signal/idler pair constrained by
/// energy conservation 1/ls + 1/li = 2/l_deg.
double wavelengths_to_delay(double lambda_s_nm, double lambda_i_nm,
                            const SpectrometerConfig& cfg, FiberLayout layout);

/// Inverts the delay to the energy-conserving wavelength pair (lambda_s,
/// lambda_i) in nm. Throws if the delay maps outside the configured band.
std::pair<double, double> fiber_delay_to_wavelengths(double dt_s,
                                                     const SpectrometerConfig& cfg,
                                                     FiberLayout layout);

struct SpectrumPoint {
  double lambda_nm;
  double counts_rel;
  double std;
  bool flagged;  // filter-truncated (transmission <= 0.05) or out of band
};

/// Maps histogram bins to wavelength pairs and undoes the filter response
/// where its transmission exceeds 0.05; Poisson errors propagated.
std::vector<SpectrumPoint> spectrum_estimate(const CoincidenceHistogram& h,
                                             const SpectrometerConfig& cfg,
                                             const std::function<double(double)>& filter,
                                             FiberLayout layout = FiberLayout::SharedSpool);

}  // namespace spdcsim
