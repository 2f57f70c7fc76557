#pragma once

// Far-field dyadic Green's-function machinery for a stratified stack with a
// chi(2) film, and the collection-integrated two-photon polarization density
// matrix built from it.
//
// Geometry: layers are listed top to bottom, the first and last are
// half-infinite. The film occupies z in [0, t] with z = 0 at its bottom
// interface; the top half-space is at z > 0 side, the bottom (collection)
// half-space below z = 0.
//
// The far-field Green's function is "reduced": the common spherical-wave
// factor e^{ikr}/r is dropped. It cancels in normalized density matrices.

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "spdcsim/chi2.hpp"
#include "spdcsim/polarization.hpp"

namespace spdcsim {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Complex refractive index vs wavelength, linearly interpolated.
struct IndexTable {
  std::vector<double> wavelength_m;  // strictly increasing; empty grid with
  std::vector<Complex> n;            // one entry means wavelength-independent

  static IndexTable constant(Complex n_value);
  Complex at(double wavelength) const;
};

struct Layer {
  double thickness_m;  // infinity for the two half-spaces
  IndexTable index;
};

class LayeredStack {
public:
  LayeredStack(std::vector<Layer> layers, int film_index);

  const std::vector<Layer>& layers() const { return layers_; }
  int film_index() const { return film_index_; }
  double film_thickness() const { return layers_[film_index_].thickness_m; }

  /// All layers share one index table (free-space consistency checks).
  static LayeredStack homogeneous(Complex n, double film_thickness);
  /// air / film / substrate with constant substrate index.
  static LayeredStack three_layer(IndexTable film, double film_thickness,
                                  Complex n_substrate);

private:
  std::vector<Layer> layers_;
  int film_index_;
};

enum class Polarization { S, P };
enum class Side { Top, Bottom };

struct FresnelResult {
  Complex r;
  Complex t;
};

/// Amplitude reflection/transmission of the whole stack via transfer
/// matrices. Throws if the launch wave would be evanescent.
FresnelResult fresnel_stack(const LayeredStack& stack, double k_parallel,
                            double wavelength, Polarization pol, Side incidence_side);

enum class PumpModel { PlaneWave, FocusedGaussian };

struct PumpField {
  double wavelength = 788e-9;
  PumpAngle phi_p{0.0};
  PumpModel model = PumpModel::PlaneWave;
  double na = 0.4;  // focused model only
  Complex amplitude = 1.0;
  int n_theta = 12;  // focused-model angular grid
  int n_phi = 16;
};

/// Pump field inside the film (incident from the top half-space).
/// Plane-wave model: normal incidence with Fabry-Perot factors.
/// Focused model: angular-spectrum superposition up to the pump NA.
Eigen::Vector3cd pump_field_in_film(const LayeredStack& stack, const PumpField& pump,
                                    const Eigen::Vector3d& r);

/// Reduced far-field dyadic Green's function G[sigma][alpha]: detector
/// polarization index sigma, source orientation alpha. direction must point
/// into the top or bottom half-space; z_source lies inside the film.
Eigen::Matrix3cd farfield_green(const LayeredStack& stack, const Eigen::Vector3d& direction,
                                double z_source, double omega);

struct DetectionVector {
  Eigen::Vector3d direction;     // unit
  Eigen::Vector3d polarization;  // unit, orthogonal to direction
  double omega;                  // rad/s

  DetectionVector(const Eigen::Vector3d& dir, const Eigen::Vector3d& pol, double w);
};

/// Far-field polarization vector a collection lens maps to lab H (hv=0) or
/// V (hv=1) for the given detection direction (polarization bent onto the
/// sphere along the meridian).
Eigen::Vector3d bent_polarization(const Eigen::Vector3d& direction, int hv);

struct QuadratureOptions {
  double tol = 1e-9;
  int initial_nodes = 8;
  int max_nodes = 1024;
};

struct QuadratureError : std::runtime_error {
  QuadratureError(const std::string& msg, Complex last_value, double last_change)
      : std::runtime_error(msg), last_value(last_value), last_change(last_change) {}
  Complex last_value;
  double last_change;
};

/// Two-photon amplitude: z-integral over the film of
/// sum_{abc} d_s* G_s d_i* G_i chi_abc E_p. Transverse-momentum conservation
/// is the caller's responsibility (plane-wave pump).
Complex pair_amplitude(const LayeredStack& stack, const PumpField& pump,
                       const DetectionVector& det_s, const DetectionVector& det_i,
                       const ChiTensor& chi, const QuadratureOptions& quad = {});

struct CollectionOptions {
  double na = 0.4;
  int n_theta = 8;
  int n_phi = 16;
  // Spectral handling: n_freq = 1 is the degenerate slice, > 1 integrates
  // signal wavelengths over [band_min, band_max] incoherently.
  int n_freq = 1;
  double band_min = 1500e-9;
  double band_max = 1650e-9;
  QuadratureOptions quad{};
};

/// Collection-integrated polarization density matrix: signal directions on a
/// quadrature grid over the NA cone in the bottom half-space, idler fixed by
/// transverse-momentum conservation, far fields projected onto H/V.
/// OpenMP-parallel over grid points with a fixed reduction order, so the
/// result is identical for any thread count.
DensityMatrix source_density_matrix(const LayeredStack& stack, const PumpField& pump,
                                    const CollectionOptions& opts, const ChiTensor& chi);

/// Plain serial reference implementation of source_density_matrix.
DensityMatrix source_density_matrix_serial(const LayeredStack& stack, const PumpField& pump,
                                           const CollectionOptions& opts,
                                           const ChiTensor& chi);

}  // namespace spdcsim
