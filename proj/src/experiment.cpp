#include "spdcsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace spdcsim {

namespace {
constexpr double kInfinity = std::numeric_limits<double>::infinity();

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument(std::string("DetectionBudget: ") + name + " outside [0,1]");
}
}  // namespace

double total_efficiency(const DetectionBudget& b) {
  check_unit_interval(b.t_opt, "t_opt");
  check_unit_interval(b.eta_coupl, "eta_coupl");
  check_unit_interval(b.eta_bs, "eta_bs");
  check_unit_interval(b.eta_detec, "eta_detec");
  check_unit_interval(b.eta_lp, "eta_lp");
  return b.t_opt * b.t_opt * b.eta_coupl * b.eta_coupl * b.eta_bs * b.eta_detec *
         b.eta_detec * b.eta_lp;
}

CoincidenceHistogram synthesize_histogram(double pair_rate, double singles_s,
                                          double singles_i, double jitter_sigma,
                                          double bin_width, double duration,
                                          std::uint64_t seed, int n_bins) {
  if (pair_rate < 0.0 || singles_s < 0.0 || singles_i < 0.0)
    throw std::invalid_argument("synthesize_histogram: rates must be nonnegative");
  if (!(bin_width > 0.0) || !(duration > 0.0) || n_bins < 3)
    throw std::invalid_argument("synthesize_histogram: invalid binning");
  if (n_bins % 2 == 0) ++n_bins;  // keep a bin centered on zero delay

  CoincidenceHistogram h;
  h.bin_width_s = bin_width;
  h.duration_s = duration;
  h.delays_s.resize(n_bins);
  h.counts.assign(n_bins, 0);
  const int mid = n_bins / 2;
  for (int i = 0; i < n_bins; ++i) h.delays_s[i] = (i - mid) * bin_width;

  std::mt19937_64 rng(seed);
  const double accidental_mean = singles_s * singles_i * bin_width * duration;
  if (accidental_mean > 0.0) {
    std::poisson_distribution<long long> acc(accidental_mean);
    for (int i = 0; i < n_bins; ++i) h.counts[i] = acc(rng);
  }
  if (pair_rate > 0.0) {
    std::poisson_distribution<long long> pairs(pair_rate * duration);
    const long long n_pairs = pairs(rng);
    std::normal_distribution<double> jitter(0.0, jitter_sigma);
    for (long long k = 0; k < n_pairs; ++k) {
      const double dt = (jitter_sigma > 0.0) ? jitter(rng) : 0.0;
      const long long bin = mid + std::llround(dt / bin_width);
      if (bin >= 0 && bin < n_bins) ++h.counts[bin];
    }
  }
  return h;
}

CarResult car(const CoincidenceHistogram& h, double peak_window_s) {
  const int n = static_cast<int>(h.counts.size());
  if (!(peak_window_s >= h.bin_width_s))
    throw std::invalid_argument("car: peak window must cover at least one bin");
  double peak = 0.0;
  int peak_bins = 0;
  double background = 0.0;
  int bg_bins = 0;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(h.delays_s[i]);
    if (d <= 0.5 * peak_window_s) {
      peak += static_cast<double>(h.counts[i]);
      ++peak_bins;
    } else if (d > 1.5 * peak_window_s) {  // outside 3x the peak window
      background += static_cast<double>(h.counts[i]);
      ++bg_bins;
    }
  }
  if (bg_bins < 10)
    throw std::invalid_argument("car: need at least 10 background bins outside the window");
  if (background <= 0.0) return {kInfinity, kInfinity, true};

  const double bg_per_window = background * peak_bins / bg_bins;
  const double value = peak / bg_per_window;
  // Poisson propagation of peak counts and the scaled background estimate.
  const double rel2 = (peak > 0.0 ? 1.0 / peak : 0.0) + 1.0 / background;
  return {value, value * std::sqrt(rel2), false};
}

bool pair_evidence(const CarResult& c) {
  if (c.background_limited) return false;  // no accidental reference, no claim
  return c.value - 2.0 * c.std > 2.0;
}

PowerFit power_sweep(const std::vector<double>& powers_mw, double rate_per_mw,
                     double duration_s, std::optional<std::uint64_t> seed) {
  if (powers_mw.size() < 3)
    throw std::invalid_argument("power_sweep: need at least 3 power points");
  std::mt19937_64 rng(seed.value_or(0));
  std::vector<double> counts(powers_mw.size());
  for (size_t i = 0; i < powers_mw.size(); ++i) {
    const double mean = rate_per_mw * powers_mw[i] * duration_s;
    if (seed && mean > 0.0) {
      std::poisson_distribution<long long> p(mean);
      counts[i] = static_cast<double>(p(rng));
    } else {
      counts[i] = mean;
    }
  }

  // log-log exponent
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  int m = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] <= 0.0) continue;
    const double lx = std::log(powers_mw[i]), ly = std::log(counts[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
    ++m;
  }
  if (m < 3) throw std::runtime_error("power_sweep: too few nonzero count points to fit");
  const double denom = m * sxx - sx * sx;
  const double exponent = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - exponent * sx) / m;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ymean = sy / m;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] <= 0.0) continue;
    const double ly = std::log(counts[i]);
    const double fit = intercept + exponent * std::log(powers_mw[i]);
    ss_res += (ly - fit) * (ly - fit);
    ss_tot += (ly - ymean) * (ly - ymean);
  }
  const double r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;

  // linear slope through the origin, in rate units
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    num += powers_mw[i] * counts[i] / duration_s;
    den += powers_mw[i] * powers_mw[i];
  }
  return {num / den, exponent, r2};
}

namespace {
double idler_of(double lambda_s_nm, double lambda_deg_nm) {
  const double inv = 2.0 / lambda_deg_nm - 1.0 / lambda_s_nm;
  if (!(inv > 0.0))
    throw std::out_of_range("fiber spectroscopy: no energy-conserving idler wavelength");
  return 1.0 / inv;
}
}  // namespace

double wavelengths_to_delay(double lambda_s_nm, double lambda_i_nm,
                            const SpectrometerConfig& cfg, FiberLayout layout) {
  const double d = cfg.dispersion_ps_nm_km * 1e-12;  // s/(nm km)
  const double ld = cfg.reference_wavelength_nm;
  if (layout == FiberLayout::SharedSpool)
    return d * cfg.fiber_length_km * (lambda_s_nm - lambda_i_nm);
  return d * (cfg.fiber_length_km * (lambda_s_nm - ld) -
              cfg.fiber_length_idler_km * (lambda_i_nm - ld));
}

std::pair<double, double> fiber_delay_to_wavelengths(double dt_s,
                                                     const SpectrometerConfig& cfg,
                                                     FiberLayout layout) {
  const double ld = cfg.reference_wavelength_nm;
  const auto delay_of = [&](double ls) {
    return wavelengths_to_delay(ls, idler_of(ls, ld), cfg, layout);
  };
  // The delay is strictly monotone in lambda_s for fixed config; bisect
  // within the signal range where both wavelengths stay inside the band.
  const auto conjugate = [&](double l) { return 1.0 / (2.0 / ld - 1.0 / l); };
  double lo = std::max({cfg.band_min_nm, ld * 0.5001, conjugate(cfg.band_max_nm)});
  double hi = std::min(cfg.band_max_nm, conjugate(cfg.band_min_nm));
  double flo = delay_of(lo) - dt_s;
  double fhi = delay_of(hi) - dt_s;
  if (flo * fhi > 0.0)
    throw std::out_of_range("fiber_delay_to_wavelengths: delay maps outside the band [" +
                            std::to_string(cfg.band_min_nm) + ", " +
                            std::to_string(cfg.band_max_nm) + "] nm");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = delay_of(mid) - dt_s;
    if (fm == 0.0 || hi - lo < 1e-9) {
      lo = hi = mid;
      break;
    }
    if (flo * fm <= 0.0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  const double ls = 0.5 * (lo + hi);
  return {ls, idler_of(ls, ld)};
}

std::vector<SpectrumPoint> spectrum_estimate(const CoincidenceHistogram& h,
                                             const SpectrometerConfig& cfg,
                                             const std::function<double(double)>& filter,
                                             FiberLayout layout) {
  std::vector<SpectrumPoint> out;
  out.reserve(h.counts.size());
  bool any_usable = false;
  for (size_t i = 0; i < h.counts.size(); ++i) {
    SpectrumPoint p{0.0, 0.0, 0.0, true};
    try {
      const auto [ls, li] = fiber_delay_to_wavelengths(h.delays_s[i], cfg, layout);
      p.lambda_nm = ls;
      const double trans = filter(ls) * filter(li);
      if (trans > 0.05) {
        p.counts_rel = static_cast<double>(h.counts[i]) / trans;
        p.std = std::sqrt(static_cast<double>(std::max<long long>(h.counts[i], 1))) / trans;
        p.flagged = false;
        any_usable = true;
      }
    } catch (const std::out_of_range&) {
      continue;  // bin outside the configured band
    }
    out.push_back(p);
  }
  if (!any_usable)
    throw std::runtime_error(
        "spectrum_estimate: filter transmission below 0.05 across the whole band");
  return out;
}

}  // namespace spdcsim
