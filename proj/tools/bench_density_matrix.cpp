// Wall-time comparison of the OpenMP collection integral against the serial
// reference, plus an equality check on the resulting density matrices.

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include <omp.h>

#include "spdcsim/greens.hpp"

using namespace spdcsim;

namespace {

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LayeredStack make_stack() {
  IndexTable film;
  const double lam[] = {700, 788, 900, 1000, 1200, 1400, 1576, 1800};
  const double n[] = {4.80, 4.50, 4.32, 4.20, 4.10, 4.00, 3.95, 3.90};
  for (int i = 0; i < 8; ++i) {
    film.wavelength_m.push_back(lam[i] * 1e-9);
    film.n.emplace_back(n[i], 0.0);
  }
  return LayeredStack::three_layer(film, 285e-9, Complex(1.45, 0.0));
}

}  // namespace

int main(int argc, char** argv) {
  CollectionOptions opts;
  opts.n_theta = argc > 1 ? std::atoi(argv[1]) : 12;
  opts.n_phi = argc > 2 ? std::atoi(argv[2]) : 24;

  const LayeredStack stack = make_stack();
  PumpField pump;
  pump.phi_p = PumpAngle::from_degrees(90.0);
  const ChiTensor chi;

  std::printf("grid: n_theta=%d n_phi=%d, omp max threads=%d\n", opts.n_theta, opts.n_phi,
              omp_get_max_threads());

  auto t0 = std::chrono::steady_clock::now();
  const DensityMatrix serial = source_density_matrix_serial(stack, pump, opts, chi);
  const double t_serial = elapsed_s(t0);

  t0 = std::chrono::steady_clock::now();
  const DensityMatrix parallel = source_density_matrix(stack, pump, opts, chi);
  const double t_parallel = elapsed_s(t0);

  const double diff = (serial.entries() - parallel.entries()).cwiseAbs().maxCoeff();
  std::printf("serial:   %8.3f s\n", t_serial);
  std::printf("parallel: %8.3f s  (speedup %.2fx)\n", t_parallel, t_serial / t_parallel);
  std::printf("max |serial - parallel| entry difference: %.3e\n", diff);
  return diff < 1e-12 ? 0 : 1;
}
