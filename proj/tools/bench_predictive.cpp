// Timing comparison of the serial reference and OpenMP predictive-density
// kernels on a synthetic saved-chain mixture set.

#include <chrono>
#include <cstdio>
#include <functional>

#include "msp/dpmm.hpp"

using namespace msp;
using namespace msp::dpmm;

namespace {

std::vector<QDraw> synthetic_mixtures(int n_mix, int atoms, int p,
                                      RandomSource& rng) {
  std::vector<QDraw> mixtures(n_mix);
  for (auto& q : mixtures) {
    double total = 0.0;
    for (int a = 0; a < atoms; ++a) {
      Atom atom;
      atom.mu = Eigen::VectorXd::NullaryExpr(p, [&](Eigen::Index) {
        return 3.0 * rng.normal();
      });
      atom.sigma = Eigen::MatrixXd::Identity(p, p) * (0.5 + rng.uniform());
      atom.weight = rng.uniform();
      total += atom.weight;
      q.atoms.push_back(std::move(atom));
    }
    for (auto& atom : q.atoms) atom.weight /= total;
    q.gamma = 0.9;
  }
  return mixtures;
}

double time_ms(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main() {
  RandomSource rng(7);
  const int p = 2;
  const auto mixtures = synthetic_mixtures(500, 8, p, rng);

  const int side = 200;
  Eigen::MatrixXd grid(side * side, p);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      grid(i * side + j, 0) = -8.0 + 16.0 * i / (side - 1);
      grid(i * side + j, 1) = -8.0 + 16.0 * j / (side - 1);
    }

  Eigen::VectorXd serial, parallel;
  const double t_serial = time_ms([&] {
    serial = posterior_predictive_density_serial(mixtures, grid);
  });
  const double t_parallel = time_ms([&] {
    parallel = posterior_predictive_density(mixtures, grid);
  });
  const double max_diff = (serial - parallel).cwiseAbs().maxCoeff();

  std::printf("grid points: %ld, mixtures: %zu\n", grid.rows(), mixtures.size());
  std::printf("serial:   %8.1f ms\n", t_serial);
  std::printf("openmp:   %8.1f ms  (speedup %.2fx)\n", t_parallel,
              t_serial / t_parallel);
  std::printf("max |serial - openmp|: %.3g\n", max_diff);
  return max_diff == 0.0 ? 0 : 1;
}
