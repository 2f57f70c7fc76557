#include "spdcsim/greens.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>

namespace spdcsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// z-wavenumber with the decaying branch (Im >= 0, Re >= 0 for propagating).
Complex kz_of(Complex n, double k0, double k_parallel) {
  Complex v = std::sqrt(n * n * k0 * k0 - Complex(k_parallel * k_parallel));
  if (v.imag() < 0.0) v = -v;
  if (std::abs(v.imag()) < 1e-300 && v.real() < 0.0) v = -v;
  return v;
}

Complex r_interface(Complex kiz, Complex kjz, Complex ni, Complex nj, Polarization pol) {
  if (pol == Polarization::S) return (kiz - kjz) / (kiz + kjz);
  return (nj * nj * kiz - ni * ni * kjz) / (nj * nj * kiz + ni * ni * kjz);
}

Complex t_interface(Complex kiz, Complex kjz, Complex ni, Complex nj, Polarization pol) {
  if (pol == Polarization::S) return 2.0 * kiz / (kiz + kjz);
  return 2.0 * ni * nj * kiz / (nj * nj * kiz + ni * ni * kjz);
}

// Transfer-matrix r/t of a stack given per-medium indices (launch first,
// exit last) and the thicknesses of the interior media.
FresnelResult stack_amplitudes(const std::vector<Complex>& n, const std::vector<double>& d,
                               double k_parallel, double k0, Polarization pol) {
  const size_t m = n.size();
  std::vector<Complex> kz(m);
  for (size_t i = 0; i < m; ++i) kz[i] = kz_of(n[i], k0, k_parallel);

  Eigen::Matrix2cd total = Eigen::Matrix2cd::Identity();
  for (size_t i = 0; i + 1 < m; ++i) {
    if (i > 0) {
      const Complex ph = Complex(0, 1) * kz[i] * d[i - 1];
      Eigen::Matrix2cd prop = Eigen::Matrix2cd::Zero();
      prop(0, 0) = std::exp(-ph);
      prop(1, 1) = std::exp(ph);
      total = total * prop;
    }
    const Complex rij = r_interface(kz[i], kz[i + 1], n[i], n[i + 1], pol);
    const Complex tij = t_interface(kz[i], kz[i + 1], n[i], n[i + 1], pol);
    Eigen::Matrix2cd iface;
    iface << 1.0, rij, rij, 1.0;
    total = total * (iface / tij);
  }
  FresnelResult out;
  out.t = 1.0 / total(0, 0);
  out.r = total(1, 0) / total(0, 0);
  return out;
}

struct StackSlices {
  // Seen from inside the film for one polarization and wavelength.
  Complex r_up;    // reflection off the sub-stack above
  Complex r_dn;    // reflection off the sub-stack below
  Complex t_dn;    // transmission film -> bottom half-space
  Complex t_up;    // transmission film -> top half-space
  Complex t_in;    // transmission top half-space -> film (pump path)
  Complex kfz;     // film z-wavenumber
  Complex k_exit_top;
  Complex k_exit_bottom;
};

StackSlices film_environment(const LayeredStack& stack, double k_parallel, double wavelength,
                             Polarization pol) {
  const auto& L = stack.layers();
  const int f = stack.film_index();
  const int last = static_cast<int>(L.size()) - 1;
  const double k0 = 2.0 * M_PI / wavelength;

  std::vector<Complex> n_all(L.size());
  for (size_t i = 0; i < L.size(); ++i) n_all[i] = L[i].index.at(wavelength);

  // film -> top
  std::vector<Complex> n_up{n_all[f]};
  std::vector<double> d_up;
  for (int i = f - 1; i >= 0; --i) {
    n_up.push_back(n_all[i]);
    if (i > 0) d_up.push_back(L[i].thickness_m);
  }
  // film -> bottom
  std::vector<Complex> n_dn{n_all[f]};
  std::vector<double> d_dn;
  for (int i = f + 1; i <= last; ++i) {
    n_dn.push_back(n_all[i]);
    if (i < last) d_dn.push_back(L[i].thickness_m);
  }
  // top -> film (reverse of the up stack)
  std::vector<Complex> n_in(n_up.rbegin(), n_up.rend());
  std::vector<double> d_in(d_up.rbegin(), d_up.rend());

  StackSlices s;
  const auto up = stack_amplitudes(n_up, d_up, k_parallel, k0, pol);
  const auto dn = stack_amplitudes(n_dn, d_dn, k_parallel, k0, pol);
  const auto in = stack_amplitudes(n_in, d_in, k_parallel, k0, pol);
  s.r_up = up.r;
  s.t_up = up.t;
  s.r_dn = dn.r;
  s.t_dn = dn.t;
  s.t_in = in.t;
  s.kfz = kz_of(n_all[f], k0, k_parallel);
  s.k_exit_top = kz_of(n_all[0], k0, k_parallel);
  s.k_exit_bottom = kz_of(n_all[last], k0, k_parallel);
  return s;
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = xi;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
      const double dx = p1 / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    x[i] = -xi;
    x[n - 1 - i] = xi;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
  }
  return {x, w};
}

struct SPBasis {
  Eigen::Vector3d s_hat;
  Eigen::Vector3d t_hat;  // transverse unit in the plane of incidence
};

SPBasis sp_basis(double dir_x, double dir_y) {
  const double st = std::hypot(dir_x, dir_y);
  SPBasis b;
  if (st > 1e-14) {
    b.t_hat = Eigen::Vector3d(dir_x / st, dir_y / st, 0.0);
  } else {
    b.t_hat = Eigen::Vector3d(1.0, 0.0, 0.0);
  }
  b.s_hat = Eigen::Vector3d(-b.t_hat.y(), b.t_hat.x(), 0.0);
  return b;
}

}  // namespace

IndexTable IndexTable::constant(Complex n_value) {
  IndexTable t;
  t.wavelength_m = {};
  t.n = {n_value};
  return t;
}

Complex IndexTable::at(double wavelength) const {
  if (n.empty()) throw std::invalid_argument("IndexTable: empty table");
  if (wavelength_m.empty() || n.size() == 1) return n.front();
  if (wavelength_m.size() != n.size())
    throw std::invalid_argument("IndexTable: grid/value size mismatch");
  // Tolerate a few ulps of slack at the table ends (unit round trips land there).
  const double slack = 16.0 * std::numeric_limits<double>::epsilon();
  if (wavelength < wavelength_m.front() * (1.0 - slack) ||
      wavelength > wavelength_m.back() * (1.0 + slack))
    throw std::out_of_range("IndexTable: wavelength " + std::to_string(wavelength * 1e9) +
                            " nm outside tabulated range");
  wavelength = std::clamp(wavelength, wavelength_m.front(), wavelength_m.back());
  const auto it = std::upper_bound(wavelength_m.begin(), wavelength_m.end(), wavelength);
  const size_t hi = std::min<size_t>(wavelength_m.size() - 1, it - wavelength_m.begin());
  const size_t lo = hi - (hi > 0 ? 1 : 0);
  if (hi == lo) return n[lo];
  const double f = (wavelength - wavelength_m[lo]) / (wavelength_m[hi] - wavelength_m[lo]);
  return n[lo] + f * (n[hi] - n[lo]);
}

LayeredStack::LayeredStack(std::vector<Layer> layers, int film_index)
    : layers_(std::move(layers)), film_index_(film_index) {
  if (layers_.size() < 3)
    throw std::invalid_argument("LayeredStack: need at least three layers");
  if (!std::isinf(layers_.front().thickness_m) || !std::isinf(layers_.back().thickness_m))
    throw std::invalid_argument("LayeredStack: first and last layers must be half-infinite");
  if (film_index_ <= 0 || film_index_ >= static_cast<int>(layers_.size()) - 1)
    throw std::invalid_argument("LayeredStack: film must be an interior layer");
  for (size_t i = 1; i + 1 < layers_.size(); ++i)
    if (!(layers_[i].thickness_m > 0.0))
      throw std::invalid_argument("LayeredStack: interior thickness must be positive");
  for (const auto& l : layers_) {
    if (!std::is_sorted(l.index.wavelength_m.begin(), l.index.wavelength_m.end()))
      throw std::invalid_argument("LayeredStack: index table grid not monotone");
  }
}

LayeredStack LayeredStack::homogeneous(Complex n, double film_thickness) {
  const IndexTable t = IndexTable::constant(n);
  return LayeredStack({{kInf, t}, {film_thickness, t}, {kInf, t}}, 1);
}

LayeredStack LayeredStack::three_layer(IndexTable film, double film_thickness,
                                       Complex n_substrate) {
  return LayeredStack({{kInf, IndexTable::constant(1.0)},
                       {film_thickness, std::move(film)},
                       {kInf, IndexTable::constant(n_substrate)}},
                      1);
}

FresnelResult fresnel_stack(const LayeredStack& stack, double k_parallel, double wavelength,
                            Polarization pol, Side incidence_side) {
  const auto& L = stack.layers();
  const double k0 = 2.0 * M_PI / wavelength;
  std::vector<Complex> n;
  std::vector<double> d;
  if (incidence_side == Side::Top) {
    for (size_t i = 0; i < L.size(); ++i) {
      n.push_back(L[i].index.at(wavelength));
      if (i > 0 && i + 1 < L.size()) d.push_back(L[i].thickness_m);
    }
  } else {
    for (size_t i = L.size(); i-- > 0;) {
      n.push_back(L[i].index.at(wavelength));
      if (i > 0 && i + 1 < L.size()) d.push_back(L[i].thickness_m);
    }
  }
  const Complex launch_kz = kz_of(n.front(), k0, k_parallel);
  if (std::abs(launch_kz.real()) * 1e9 < std::abs(launch_kz.imag()))
    throw std::invalid_argument(
        "fresnel_stack: evanescent launch wave (k_parallel exceeds the launch-layer "
        "wavenumber)");
  return stack_amplitudes(n, d, k_parallel, k0, pol);
}

Eigen::Vector3cd pump_field_in_film(const LayeredStack& stack, const PumpField& pump,
                                    const Eigen::Vector3d& r) {
  const double t_film = stack.film_thickness();
  const double z = r.z();
  if (z < -1e-15 || z > t_film + 1e-15)
    throw std::invalid_argument("pump_field_in_film: position outside the film");

  if (pump.model == PumpModel::PlaneWave) {
    // Normal incidence: per-Cartesian scalar (s-type) coefficients are exact.
    const auto env = film_environment(stack, 0.0, pump.wavelength, Polarization::S);
    const Complex den = 1.0 - env.r_up * env.r_dn * std::exp(Complex(0, 2) * env.kfz * t_film);
    const Complex amp =
        pump.amplitude * env.t_in / den *
        (std::exp(Complex(0, 1) * env.kfz * (t_film - z)) +
         env.r_dn * std::exp(Complex(0, 1) * env.kfz * (t_film + z)));
    const double p = pump.phi_p.radians();
    return amp * Eigen::Vector3cd(std::cos(p), std::sin(p), 0.0);
  }

  // Focused model: angular-spectrum superposition of transmitted plane waves
  // over the pump NA, aplanatic sqrt(cos) apodization, normalized so the
  // NA -> 0 limit reproduces the plane-wave model.
  if (!(pump.na > 0.0 && pump.na < 1.0))
    throw std::invalid_argument("pump_field_in_film: NA must be in (0,1)");
  const double k0 = 2.0 * M_PI / pump.wavelength;
  const double theta_max = std::asin(pump.na);
  const auto [xg, wg] = gauss_legendre(pump.n_theta);
  const double pp = pump.phi_p.radians();
  const Eigen::Vector3d e_in(std::cos(pp), std::sin(pp), 0.0);

  Eigen::Vector3cd field = Eigen::Vector3cd::Zero();
  double weight_sum = 0.0;
  for (int it = 0; it < pump.n_theta; ++it) {
    const double th = 0.5 * theta_max * (xg[it] + 1.0);
    const double wth = 0.5 * theta_max * wg[it] * std::sin(th) * std::sqrt(std::cos(th));
    for (int ip = 0; ip < pump.n_phi; ++ip) {
      const double ph = 2.0 * M_PI * ip / pump.n_phi;
      const double w = wth * (2.0 * M_PI / pump.n_phi);
      weight_sum += w;
      const double kpar = k0 * std::sin(th);  // air-side transverse wavenumber
      const Eigen::Vector3d kdir(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                                 -std::cos(th));
      const auto basis = sp_basis(kdir.x(), kdir.y());
      const Eigen::Vector3d p_in = basis.s_hat.cross(kdir);
      const double a_s = e_in.dot(basis.s_hat);
      const double a_p = e_in.dot(p_in);
      const Complex trans_phase =
          std::exp(Complex(0, 1) * kpar * (basis.t_hat.x() * r.x() + basis.t_hat.y() * r.y()));

      for (Polarization pol : {Polarization::S, Polarization::P}) {
        const double a = (pol == Polarization::S) ? a_s : a_p;
        if (a == 0.0) continue;
        const auto env = film_environment(stack, kpar, pump.wavelength, pol);
        const Complex den =
            1.0 - env.r_up * env.r_dn * std::exp(Complex(0, 2) * env.kfz * t_film);
        const Complex down = std::exp(Complex(0, 1) * env.kfz * (t_film - z));
        const Complex up = env.r_dn * std::exp(Complex(0, 1) * env.kfz * (t_film + z));
        Eigen::Vector3cd e_dn, e_up;
        if (pol == Polarization::S) {
          e_dn = e_up = basis.s_hat.cast<Complex>();
        } else {
          const double nf_k0 = std::abs(stack.layers()[stack.film_index()]
                                            .index.at(pump.wavelength)) * k0;
          Eigen::Vector3cd k_dn = (kpar * basis.t_hat).cast<Complex>();
          Eigen::Vector3cd k_up = k_dn;
          k_dn.z() = -env.kfz;
          k_up.z() = env.kfz;
          k_dn /= nf_k0;
          k_up /= nf_k0;
          e_dn = basis.s_hat.cast<Complex>().cross(k_dn);
          e_up = basis.s_hat.cast<Complex>().cross(k_up);
        }
        field += w * a * (env.t_in / den) * (down * e_dn + up * e_up) * trans_phase;
      }
    }
  }
  return pump.amplitude * field / weight_sum;
}

Eigen::Vector3d bent_polarization(const Eigen::Vector3d& direction, int hv) {
  const double st = std::hypot(direction.x(), direction.y());
  const double phi = (st > 1e-14) ? std::atan2(direction.y(), direction.x()) : 0.0;
  const double cth = std::abs(direction.z());
  // theta-hat for the hemisphere the direction points into
  const double zsign = (direction.z() >= 0.0) ? 1.0 : -1.0;
  const Eigen::Vector3d that(cth * std::cos(phi), cth * std::sin(phi), -zsign * st);
  const Eigen::Vector3d phat(-std::sin(phi), std::cos(phi), 0.0);
  if (hv == 0) return std::cos(phi) * that - std::sin(phi) * phat;
  return std::sin(phi) * that + std::cos(phi) * phat;
}

Eigen::Matrix3cd farfield_green(const LayeredStack& stack, const Eigen::Vector3d& direction,
                                double z_source, double omega) {
  const Eigen::Vector3d k_hat = direction.normalized();
  if (std::abs(k_hat.z()) < 1e-9)
    throw std::invalid_argument("farfield_green: direction parallel to the interfaces");
  const double t_film = stack.film_thickness();
  if (z_source < -1e-15 || z_source > t_film + 1e-15)
    throw std::invalid_argument("farfield_green: source outside the film");

  const bool bottom = k_hat.z() < 0.0;
  const double wavelength = 2.0 * M_PI * kSpeedOfLight / omega;
  const double k0 = omega / kSpeedOfLight;
  const auto& L = stack.layers();
  const Complex n_exit =
      (bottom ? L.back() : L.front()).index.at(wavelength);
  if (std::abs(n_exit.imag()) > 1e-9 * std::abs(n_exit.real()))
    throw std::invalid_argument("farfield_green: absorbing exit medium has no far field");
  const double st = std::hypot(k_hat.x(), k_hat.y());
  const double k_parallel = n_exit.real() * k0 * st;

  const auto basis = sp_basis(k_hat.x(), k_hat.y());
  const Complex nf = L[stack.film_index()].index.at(wavelength);
  const double nf_k0 = std::abs(nf) * k0;

  Eigen::Matrix3cd g = Eigen::Matrix3cd::Zero();
  for (Polarization pol : {Polarization::S, Polarization::P}) {
    const auto env = film_environment(stack, k_parallel, wavelength, pol);
    const Complex den = 1.0 - env.r_up * env.r_dn * std::exp(Complex(0, 2) * env.kfz * t_film);
    const Complex k_exit_z = bottom ? env.k_exit_bottom : env.k_exit_top;

    Eigen::Vector3cd e_dn, e_up, e_out;
    if (pol == Polarization::S) {
      e_dn = e_up = e_out = basis.s_hat.cast<Complex>();
    } else {
      Eigen::Vector3cd k_dn = (k_parallel * basis.t_hat).cast<Complex>();
      Eigen::Vector3cd k_up = k_dn;
      k_dn.z() = -env.kfz;
      k_up.z() = env.kfz;
      e_dn = basis.s_hat.cast<Complex>().cross(k_dn / nf_k0);
      e_up = basis.s_hat.cast<Complex>().cross(k_up / nf_k0);
      e_out = basis.s_hat.cast<Complex>().cross(k_hat.cast<Complex>());
    }

    Eigen::Vector3cd source;
    Complex t_out;
    if (bottom) {
      source = e_dn * std::exp(Complex(0, 1) * env.kfz * z_source) +
               env.r_up * e_up * std::exp(Complex(0, 1) * env.kfz * (2.0 * t_film - z_source));
      t_out = env.t_dn;
    } else {
      source = e_up * std::exp(Complex(0, 1) * env.kfz * (t_film - z_source)) +
               env.r_dn * e_dn * std::exp(Complex(0, 1) * env.kfz * (t_film + z_source));
      t_out = env.t_up;
    }
    g += (k_exit_z / env.kfz) * t_out / den * (e_out * source.transpose());
  }
  return g;
}

DetectionVector::DetectionVector(const Eigen::Vector3d& dir, const Eigen::Vector3d& pol,
                                 double w)
    : direction(dir.normalized()), polarization(pol.normalized()), omega(w) {
  if (std::abs(direction.dot(polarization)) > 1e-12)
    throw std::invalid_argument("DetectionVector: polarization not orthogonal to direction");
}

Complex pair_amplitude(const LayeredStack& stack, const PumpField& pump,
                       const DetectionVector& det_s, const DetectionVector& det_i,
                       const ChiTensor& chi, const QuadratureOptions& quad) {
  const double omega_p = 2.0 * M_PI * kSpeedOfLight / pump.wavelength;
  if (std::abs(det_s.omega + det_i.omega - omega_p) > 1e-9 * omega_p)
    throw std::invalid_argument("pair_amplitude: signal + idler frequency != pump frequency");

  const double t_film = stack.film_thickness();
  const auto integrand = [&](double z) -> Complex {
    const Eigen::Vector3cd ep = pump_field_in_film(stack, pump, {0.0, 0.0, z});
    const Eigen::Matrix3cd gs = farfield_green(stack, det_s.direction, z, det_s.omega);
    const Eigen::Matrix3cd gi = farfield_green(stack, det_i.direction, z, det_i.omega);
    const Eigen::Vector3cd vs = gs.transpose() * det_s.polarization.cast<Complex>().conjugate();
    const Eigen::Vector3cd vi = gi.transpose() * det_i.polarization.cast<Complex>().conjugate();
    return chi2_contract(chi, vs, vi, ep);
  };

  Complex prev = 0.0;
  bool have_prev = false;
  for (int nodes = quad.initial_nodes; nodes <= quad.max_nodes; nodes *= 2) {
    const auto [xg, wg] = gauss_legendre(nodes);
    Complex acc = 0.0;
    double mag = 0.0;  // L1 norm of the integrand, the scale cancellation hides
    for (int k = 0; k < nodes; ++k) {
      const Complex term = 0.5 * t_film * wg[k] * integrand(0.5 * t_film * (xg[k] + 1.0));
      acc += term;
      mag += std::abs(term);
    }
    if (have_prev) {
      const double change = std::abs(acc - prev);
      if (change <= quad.tol * std::max({std::abs(acc), mag, 1e-300}) || change == 0.0)
        return acc;
      if (nodes * 2 > quad.max_nodes)
        throw QuadratureError("pair_amplitude: z-quadrature did not converge (last change " +
                                  std::to_string(change) + " at " + std::to_string(nodes) +
                                  " nodes)",
                              acc, change);
    }
    prev = acc;
    have_prev = true;
  }
  return prev;
}

namespace {

struct GridPoint {
  Eigen::Vector3d dir_s;
  Eigen::Vector3d dir_i;
  double omega_s;
  double omega_i;
  double weight;
};

std::vector<GridPoint> collection_grid(const CollectionOptions& opts, const PumpField& pump,
                                       const LayeredStack& stack) {
  if (!(opts.na > 0.0 && opts.na < 1.0))
    throw std::invalid_argument("source_density_matrix: collection NA must be in (0,1)");
  const double omega_p = 2.0 * M_PI * kSpeedOfLight / pump.wavelength;
  const Complex n_exit = stack.layers().back().index.at(2.0 * pump.wavelength);
  const double n_out = n_exit.real();
  const double theta_max = std::asin(std::min(1.0, opts.na / n_out));

  std::vector<double> lam_s, w_f;
  if (opts.n_freq <= 1) {
    lam_s = {2.0 * pump.wavelength};
    w_f = {1.0};
  } else {
    const auto [xg, wg] = gauss_legendre(opts.n_freq);
    for (int k = 0; k < opts.n_freq; ++k) {
      lam_s.push_back(opts.band_min +
                      0.5 * (opts.band_max - opts.band_min) * (xg[k] + 1.0));
      w_f.push_back(0.5 * (opts.band_max - opts.band_min) * wg[k]);
    }
  }

  const auto [xt, wt] = gauss_legendre(opts.n_theta);
  std::vector<GridPoint> grid;
  grid.reserve(lam_s.size() * opts.n_theta * opts.n_phi);
  for (size_t kf = 0; kf < lam_s.size(); ++kf) {
    const double omega_s = 2.0 * M_PI * kSpeedOfLight / lam_s[kf];
    const double omega_i = omega_p - omega_s;
    for (int it = 0; it < opts.n_theta; ++it) {
      const double th = 0.5 * theta_max * (xt[it] + 1.0);
      // Transverse-momentum conservation at the pump's normal incidence:
      // k_par,i = -k_par,s, so sin(theta_i) scales with omega_s/omega_i.
      const double st_i = std::sin(th) * omega_s / omega_i;
      if (st_i >= 1.0 || st_i > std::sin(theta_max) * (1.0 + 1e-12))
        continue;  // idler outside the collection cone
      const double wth = 0.5 * theta_max * wt[it] * std::sin(th) * (2.0 * M_PI / opts.n_phi);
      for (int ip = 0; ip < opts.n_phi; ++ip) {
        const double ph = 2.0 * M_PI * ip / opts.n_phi;
        GridPoint p;
        p.dir_s = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), -std::cos(th)};
        p.dir_i = {-st_i * std::cos(ph), -st_i * std::sin(ph),
                   -std::sqrt(1.0 - st_i * st_i)};
        p.omega_s = omega_s;
        p.omega_i = omega_i;
        p.weight = wth * w_f[kf];
        grid.push_back(p);
      }
    }
  }
  return grid;
}

Eigen::Matrix4cd point_contribution(const LayeredStack& stack, const PumpField& pump,
                                    const ChiTensor& chi, const QuadratureOptions& quad,
                                    const GridPoint& p) {
  Eigen::Vector4cd v;
  std::array<double, 4> residual{};  // unresolved change for amplitudes that stalled
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const DetectionVector ds(p.dir_s, bent_polarization(p.dir_s, a), p.omega_s);
      const DetectionVector di(p.dir_i, bent_polarization(p.dir_i, b), p.omega_i);
      try {
        v(2 * a + b) = pair_amplitude(stack, pump, ds, di, chi, quad);
      } catch (const QuadratureError& e) {
        v(2 * a + b) = e.last_value;
        residual[2 * a + b] = e.last_change;
      }
    }
  // Amplitudes that are exact zeros by symmetry never converge in relative
  // terms: they are roundoff noise. Accept them when they are negligible
  // next to the largest amplitude of the same detection point.
  const double scale = v.cwiseAbs().maxCoeff();
  for (int k = 0; k < 4; ++k) {
    if (residual[k] == 0.0) continue;
    if (!(residual[k] <= 1e-6 * scale && std::abs(v(k)) <= 1e-6 * scale))
      throw QuadratureError("pair_amplitude: z-quadrature did not converge", v(k),
                            residual[k]);
    v(k) = 0.0;
  }
  return p.weight * (v * v.adjoint());
}

DensityMatrix normalize_to_state(const Eigen::Matrix4cd& acc) {
  const double tr = acc.trace().real();
  if (!(tr > 0.0))
    throw std::runtime_error("source_density_matrix: vanishing total pair rate");
  return DensityMatrix(acc / tr);
}

}  // namespace

DensityMatrix source_density_matrix_serial(const LayeredStack& stack, const PumpField& pump,
                                           const CollectionOptions& opts,
                                           const ChiTensor& chi) {
  Eigen::Matrix4cd acc = Eigen::Matrix4cd::Zero();
  for (const GridPoint& p : collection_grid(opts, pump, stack))
    acc += point_contribution(stack, pump, chi, opts.quad, p);
  return normalize_to_state(acc);
}

DensityMatrix source_density_matrix(const LayeredStack& stack, const PumpField& pump,
                                    const CollectionOptions& opts, const ChiTensor& chi) {
  const std::vector<GridPoint> grid = collection_grid(opts, pump, stack);
  std::vector<Eigen::Matrix4cd> parts(grid.size());
  std::exception_ptr failure;  // exceptions must not escape the parallel region
#pragma omp parallel for schedule(dynamic)
  for (long long k = 0; k < static_cast<long long>(grid.size()); ++k) {
    try {
      parts[k] = point_contribution(stack, pump, chi, opts.quad, grid[k]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
      parts[k].setZero();
    }
  }
  if (failure) std::rethrow_exception(failure);
  // Fixed reduction order keeps the result bit-stable across thread counts.
  Eigen::Matrix4cd acc = Eigen::Matrix4cd::Zero();
  for (const auto& m : parts) acc += m;
  return normalize_to_state(acc);
}

}  // namespace spdcsim
