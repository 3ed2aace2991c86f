#ifndef MSP_DISTRIBUTIONS_HPP
#define MSP_DISTRIBUTIONS_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "msp/random.hpp"

namespace msp {

struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normal-inverse-Wishart base measure parameters.
// Sigma ~ inverse-Wishart(S0^{-1}, nu0), parameterized so E[Sigma] = S0/(nu0-p-1);
// mu | Sigma ~ normal(mu0, Sigma/kappa0).
struct NiwParams {
  Eigen::VectorXd mu0;
  double kappa0 = 1.0;
  Eigen::MatrixXd S0;
  double nu0 = 0.0;

  int dim() const { return static_cast<int>(mu0.size()); }
  void validate() const;
};

struct DirichletParams {
  Eigen::VectorXd alpha;

  int dim() const { return static_cast<int>(alpha.size()); }
  void validate() const;
};

// Marsaglia-Tsang, with the boost for shape < 1.  Mean shape/rate.
double sample_gamma(double shape, double rate, RandomSource& rng);

// Gamma-ratio beta draw.
double sample_beta(double a, double b, RandomSource& rng);

// Normalized independent gammas.
Eigen::VectorXd sample_dirichlet(const DirichletParams& params, RandomSource& rng);

double logpdf_gamma(double shape, double rate, double x);
double logpdf_dirichlet(const DirichletParams& params, const Eigen::VectorXd& x);
double logpdf_normal(double mean, double var, double x);
double logpdf_inverse_gamma(double shape, double scale, double x);

// Draw (mu, Sigma) from the NIW; Sigma via Bartlett decomposition.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_niw(const NiwParams& params,
                                                       RandomSource& rng);

// Multivariate Student-t log density.
double logpdf_mvt(const Eigen::VectorXd& location, const Eigen::MatrixXd& scale,
                  double dof, const Eigen::VectorXd& y);

// Cholesky after symmetrization; throws domain_error if not SPD.
Eigen::LLT<Eigen::MatrixXd> spd_cholesky(const Eigen::MatrixXd& a);

// Multinomial(n, p) counts via inverse-cdf categorical draws.
std::vector<long> sample_multinomial(long n, const Eigen::VectorXd& probs,
                                     RandomSource& rng);

}  // namespace msp

#endif
