#include "spdcsim/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace spdcsim {

namespace {

constexpr double kDeg = M_PI / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// 16-real-parameter coordinates of a Hermitian 4x4 matrix.
Eigen::VectorXd pack_hermitian(const Eigen::Matrix4cd& m) {
  Eigen::VectorXd x(16);
  int k = 0;
  for (int i = 0; i < 4; ++i) x(k++) = m(i, i).real();
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      x(k++) = m(i, j).real();
      x(k++) = m(i, j).imag();
    }
  return x;
}

// Lower-triangular T <-> 16 real parameters (diagonal first, then the
// complex strict lower triangle).
Eigen::VectorXd pack_lower(const Eigen::Matrix4cd& t) {
  Eigen::VectorXd x(16);
  int k = 0;
  for (int i = 0; i < 4; ++i) x(k++) = t(i, i).real();
  for (int i = 1; i < 4; ++i)
    for (int j = 0; j < i; ++j) {
      x(k++) = t(i, j).real();
      x(k++) = t(i, j).imag();
    }
  return x;
}

Eigen::Matrix4cd unpack_lower(const Eigen::VectorXd& x) {
  Eigen::Matrix4cd t = Eigen::Matrix4cd::Zero();
  int k = 0;
  for (int i = 0; i < 4; ++i) t(i, i) = x(k++);
  for (int i = 1; i < 4; ++i)
    for (int j = 0; j < i; ++j) {
      t(i, j) = Complex(x(k), x(k + 1));
      k += 2;
    }
  return t;
}

Eigen::Matrix4cd rho_from_params(const Eigen::VectorXd& x) {
  const Eigen::Matrix4cd t = unpack_lower(x);
  Eigen::Matrix4cd rho = t.adjoint() * t;
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) return Eigen::Matrix4cd::Identity() * 0.25;
  return rho / tr;
}

// Lower-triangular T with rho = T^dagger T via the reversed Cholesky trick.
Eigen::Matrix4cd lower_factor(const Eigen::Matrix4cd& rho) {
  Eigen::Matrix4cd p = Eigen::Matrix4cd::Zero();
  for (int i = 0; i < 4; ++i) p(i, 3 - i) = 1.0;
  const Eigen::Matrix4cd sigma = p * rho * p;
  Eigen::LLT<Eigen::Matrix4cd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("tomography: Cholesky factorization failed");
  const Eigen::Matrix4cd m = p * Eigen::Matrix4cd(llt.matrixL()) * p;  // upper
  return m.adjoint();
}

struct CountModel {
  std::vector<Eigen::Vector4cd> projectors;
  std::vector<double> counts;
  std::vector<double> durations;

  explicit CountModel(const TomographySet& data) {
    for (const auto& r : data.records) {
      projectors.push_back(r.setting.joint_state());
      counts.push_back(static_cast<double>(r.counts));
      durations.push_back(r.duration_s);
    }
  }

  // Poisson NLL with the overall rate profiled out analytically.
  double nll(const Eigen::Matrix4cd& rho) const {
    double sum_p = 0.0, sum_n = 0.0;
    std::vector<double> p(projectors.size());
    for (size_t k = 0; k < projectors.size(); ++k) {
      p[k] = std::max(0.0, (projectors[k].adjoint() * rho * projectors[k])(0).real()) *
             durations[k];
      sum_p += p[k];
      sum_n += counts[k];
    }
    if (!(sum_p > 0.0)) return 1e100;
    const double scale = sum_n / sum_p;
    double nll = 0.0;
    for (size_t k = 0; k < projectors.size(); ++k) {
      const double mean = std::max(scale * p[k], 1e-12);
      nll += mean - counts[k] * std::log(mean);
    }
    return nll;
  }
};

}  // namespace

Eigen::Vector2cd jones_projector(double qwp, double hwp) {
  const Eigen::Vector2cd h(1.0, 0.0);
  Eigen::Vector2cd v = jones_qwp(qwp).adjoint() * (jones_hwp(hwp).adjoint() * h);
  return v / v.norm();
}

Eigen::Vector4cd ProjectionSetting::joint_state() const {
  return Eigen::kroneckerProduct(projector_signal(), projector_idler());
}

TomographySet TomographySet::canonical() {
  // Waveplate angles producing the H, V, D, R, L projectors under the
  // documented fast-axis convention (R = (|H> + i|V>)/sqrt(2)).
  struct Arm {
    double qwp, hwp;
  };
  const auto arm = [](char state) -> Arm {
    switch (state) {
      case 'H': return {0.0, 0.0};
      case 'V': return {0.0, 45.0 * kDeg};
      case 'D': return {45.0 * kDeg, 22.5 * kDeg};
      case 'R': return {45.0 * kDeg, 0.0};
      case 'L': return {135.0 * kDeg, 0.0};
    }
    throw std::logic_error("unknown projector state");
  };
  static const char* kSettings[16] = {"HH", "HV", "VV", "VH", "RH", "RV", "DV", "DD",
                                      "RD", "HD", "VD", "VL", "HL", "RL", "DL", "DH"};
  TomographySet set;
  for (const char* s : kSettings) {
    const Arm a = arm(s[0]), b = arm(s[1]);
    set.records.push_back({{a.qwp, a.hwp, b.qwp, b.hwp}, 0, 1.0});
  }
  return set;
}

void TomographySet::validate() const {
  if (records.size() < 16)
    throw std::invalid_argument("TomographySet: need at least 16 settings, got " +
                                std::to_string(records.size()));
  Eigen::MatrixXd g(records.size(), 16);
  for (size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.counts < 0) throw std::invalid_argument("TomographySet: negative counts");
    if (!(r.duration_s > 0.0))
      throw std::invalid_argument("TomographySet: non-positive duration");
    const Eigen::Vector4cd v = r.setting.joint_state();
    g.row(k) = pack_hermitian(v * v.adjoint()).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const double cond = svd.singularValues()(0) / svd.singularValues()(15);
  if (!(svd.singularValues()(15) > 1e-10 * svd.singularValues()(0)))
    throw std::invalid_argument(
        "TomographySet: projectors do not span the Hermitian space (condition number " +
        std::to_string(cond) + "); settings are rank-deficient");
}

double predicted_counts(const DensityMatrix& rho, const ProjectionSetting& setting,
                        double n_total) {
  const Eigen::Vector4cd v = setting.joint_state();
  return n_total * std::max(0.0, (v.adjoint() * rho.entries() * v)(0).real());
}

Eigen::Matrix4cd linear_reconstruct(const TomographySet& data) {
  data.validate();
  const size_t m = data.records.size();
  Eigen::MatrixXd a(m, 16);
  Eigen::VectorXd n(m);
  for (size_t k = 0; k < m; ++k) {
    const auto& r = data.records[k];
    const Eigen::Vector4cd v = r.setting.joint_state();
    // tr(S P_k) is linear in the Hermitian coordinates of S.
    Eigen::Matrix4cd pk = (v * v.adjoint()) * r.duration_s;
    Eigen::VectorXd row(16);
    int c = 0;
    for (int i = 0; i < 4; ++i) row(c++) = pk(i, i).real();
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        row(c++) = 2.0 * pk(i, j).real();
        row(c++) = 2.0 * pk(i, j).imag();
      }
    a.row(k) = row.transpose();
    n(k) = static_cast<double>(r.counts);
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(n);
  // tr(S P) = sum_i S_ii P_ii + sum_{i<j} 2 (Re S_ij Re P_ij + Im S_ij Im P_ij),
  // so the solved coordinates are the Re/Im parts of the upper triangle.
  Eigen::Matrix4cd s = Eigen::Matrix4cd::Zero();
  int c = 0;
  for (int i = 0; i < 4; ++i) s(i, i) = x(c++);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      s(i, j) = Complex(x(c), x(c + 1));
      s(j, i) = std::conj(s(i, j));
      c += 2;
    }
  const double tr = s.trace().real();
  if (!(tr > 0.0))
    throw std::invalid_argument("linear_reconstruct: non-positive total rate");
  return s / tr;
}

MleResult mle_reconstruct(const TomographySet& data, const MleOptions& options) {
  data.validate();
  const CountModel model(data);

  // Physicality-projected linear estimate as the starting point.
  Eigen::Matrix4cd lin = linear_reconstruct(data);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(lin);
  Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
  if (ev.sum() <= 0.0) ev.setConstant(0.25);
  ev /= ev.sum();
  Eigen::Matrix4cd init = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  init = 0.999999 * init + 1e-6 * 0.25 * Eigen::Matrix4cd::Identity();

  Eigen::VectorXd x = pack_lower(lower_factor(init));

  const auto f = [&](const Eigen::VectorXd& p) { return model.nll(rho_from_params(p)); };
  const auto grad = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd g(16);
    Eigen::VectorXd q = p;
    const double h = 1e-7;
    for (int i = 0; i < 16; ++i) {
      q(i) = p(i) + h;
      const double fp = f(q);
      q(i) = p(i) - h;
      const double fm = f(q);
      q(i) = p(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  };

  double fx = f(x);
  Eigen::VectorXd g = grad(x);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(16, 16);
  std::vector<double> trace{fx};

  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    if (g.norm() < 1e-12) break;
    Eigen::VectorXd d = -h_inv * g;
    if (d.dot(g) >= 0.0) {  // reset on a non-descent direction
      h_inv.setIdentity();
      d = -g;
    }
    double step = 1.0;
    double f_new = fx;
    Eigen::VectorXd x_new = x;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * d;
      f_new = f(x_new);
      if (f_new <= fx + 1e-4 * step * d.dot(g)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent possible at machine precision

    const Eigen::VectorXd g_new = grad(x_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += ((sy + y.dot(hy)) / (sy * sy)) * (s * s.transpose()) -
               (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    const double rel_change = (fx - f_new) / std::max(1.0, std::abs(fx));
    x = x_new;
    fx = f_new;
    g = g_new;
    trace.push_back(fx);
    if (rel_change >= 0.0 && rel_change < options.tol) {
      ++iter;
      break;
    }
  }

  MleResult result{DensityMatrix(rho_from_params(x)), fx, iter, std::move(trace)};
  if (iter >= options.max_iter)
    throw MleNonConvergence("mle_reconstruct: no convergence after " +
                                std::to_string(options.max_iter) + " iterations (NLL " +
                                std::to_string(fx) + ")",
                            std::move(result));
  return result;
}

MonteCarloResult monte_carlo_uncertainty(const TomographySet& data, int n_samples,
                                         Statistic statistic,
                                         const std::optional<TwoQubitKet>& target,
                                         std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument("monte_carlo_uncertainty: need at least 2 samples");
  if (statistic == Statistic::Fidelity && !target)
    throw std::invalid_argument("monte_carlo_uncertainty: fidelity statistic needs a target");
  data.validate();

  std::vector<double> values(n_samples);
  std::vector<char> ok(n_samples, 0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n_samples; ++k) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k) + 1)));
    TomographySet sample = data;
    for (auto& rec : sample.records) {
      if (rec.counts > 0) {
        std::poisson_distribution<long long> poisson(static_cast<double>(rec.counts));
        rec.counts = poisson(rng);
      }
    }
    try {
      const MleResult res = mle_reconstruct(sample);
      values[k] = (statistic == Statistic::Concurrence) ? concurrence(res.rho)
                                                        : fidelity(res.rho, *target);
      ok[k] = 1;
    } catch (const std::exception&) {
      ok[k] = 0;
    }
  }

  double sum = 0.0;
  int n_ok = 0;
  for (int k = 0; k < n_samples; ++k)
    if (ok[k]) {
      sum += values[k];
      ++n_ok;
    }
  if (n_ok < 2)
    throw std::runtime_error("monte_carlo_uncertainty: fewer than 2 usable samples");
  const double mean = sum / n_ok;
  double var = 0.0;
  for (int k = 0; k < n_samples; ++k)
    if (ok[k]) var += (values[k] - mean) * (values[k] - mean);
  var /= (n_ok - 1);
  return {mean, std::sqrt(var), n_samples - n_ok};
}

TomographySet simulate_counts(const DensityMatrix& rho, const TomographySet& settings,
                              double n_total, std::optional<std::uint64_t> seed) {
  TomographySet out = settings;
  for (size_t k = 0; k < out.records.size(); ++k) {
    const double mean = predicted_counts(rho, out.records[k].setting, n_total);
    if (seed) {
      std::mt19937_64 rng(splitmix64(*seed ^ splitmix64(k + 1)));
      if (mean > 0.0) {
        std::poisson_distribution<long long> poisson(mean);
        out.records[k].counts = poisson(rng);
      } else {
        out.records[k].counts = 0;
      }
    } else {
      out.records[k].counts = std::llround(mean);
    }
  }
  return out;
}

std::string format_pm(double value, double std) {
  std::ostringstream os;
  if (!(std > 0.0)) {
    os << value << " ± 0";
    return os.str();
  }
  const int place = static_cast<int>(std::floor(std::log10(std)));
  const double scale = std::pow(10.0, -place);
  const double rstd = std::round(std * scale) / scale;
  const double rval = std::round(value * scale) / scale;
  const int decimals = std::max(0, -place);
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << rval << " ± " << rstd;
  return os.str();
}

}  // namespace spdcsim
