#include "msp/distributions.hpp"

#include <algorithm>
#include <cmath>

namespace msp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

void NiwParams::validate() const {
  const int p = dim();
  if (p < 1) throw domain_error("NiwParams: empty mu0");
  if (kappa0 <= 0.0) throw domain_error("NiwParams: kappa0 must be > 0");
  if (nu0 <= p - 1) throw domain_error("NiwParams: nu0 must exceed p-1");
  if (S0.rows() != p || S0.cols() != p)
    throw domain_error("NiwParams: S0 dimension mismatch");
  spd_cholesky(S0);
}

void DirichletParams::validate() const {
  if (alpha.size() == 0) throw domain_error("DirichletParams: empty alpha");
  for (int i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0) || !std::isfinite(alpha[i]))
      throw domain_error("DirichletParams: alpha entries must be positive finite");
  }
}

double sample_gamma(double shape, double rate, RandomSource& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw domain_error("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // boost: draw at shape+1 and scale by U^{1/shape}
    const double u = rng.uniform();
    return sample_gamma(shape + 1.0, rate, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double sample_beta(double a, double b, RandomSource& rng) {
  const double x = sample_gamma(a, 1.0, rng);
  const double y = sample_gamma(b, 1.0, rng);
  return x / (x + y);
}

Eigen::VectorXd sample_dirichlet(const DirichletParams& params, RandomSource& rng) {
  params.validate();
  const int k = params.dim();
  Eigen::VectorXd x(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    x[i] = sample_gamma(params.alpha[i], 1.0, rng);
    total += x[i];
  }
  return x / total;
}

double logpdf_gamma(double shape, double rate, double x) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw domain_error("logpdf_gamma: shape and rate must be positive");
  if (!(x > 0.0)) throw domain_error("logpdf_gamma: x must be positive");
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

double logpdf_dirichlet(const DirichletParams& params, const Eigen::VectorXd& x) {
  params.validate();
  if (x.size() != params.alpha.size())
    throw domain_error("logpdf_dirichlet: dimension mismatch");
  double sum = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw domain_error("logpdf_dirichlet: x outside open simplex");
    sum += x[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw domain_error("logpdf_dirichlet: x does not sum to 1");
  double lp = std::lgamma(params.alpha.sum());
  for (int i = 0; i < x.size(); ++i)
    lp += (params.alpha[i] - 1.0) * std::log(x[i]) - std::lgamma(params.alpha[i]);
  return lp;
}

double logpdf_normal(double mean, double var, double x) {
  if (!(var > 0.0)) throw domain_error("logpdf_normal: variance must be positive");
  const double z = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * z * z / var;
}

double logpdf_inverse_gamma(double shape, double scale, double x) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw domain_error("logpdf_inverse_gamma: parameters must be positive");
  if (!(x > 0.0)) throw domain_error("logpdf_inverse_gamma: x must be positive");
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

Eigen::LLT<Eigen::MatrixXd> spd_cholesky(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success)
    throw domain_error("matrix is not symmetric positive definite");
  return llt;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_niw(const NiwParams& params,
                                                       RandomSource& rng) {
  params.validate();
  const int p = params.dim();
  const Eigen::MatrixXd C = spd_cholesky(params.S0).matrixL();

  // Bartlett factor of a Wishart(nu0, I): lower triangular, chi draws on the
  // diagonal, standard normals below.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    A(i, i) = std::sqrt(sample_gamma(0.5 * (params.nu0 - i), 0.5, rng));
    for (int j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  // Sigma^{-1} = (C^{-T} A)(C^{-T} A)^T  ~ Wishart(nu0, S0^{-1})
  // hence Sigma = (C A^{-T})(C A^{-T})^T.
  const Eigen::MatrixXd B =
      A.triangularView<Eigen::Lower>().transpose().solve<Eigen::OnTheRight>(
          Eigen::MatrixXd(C));
  Eigen::MatrixXd sigma = B * B.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());

  const Eigen::MatrixXd L = spd_cholesky(sigma / params.kappa0).matrixL();
  Eigen::VectorXd z(p);
  for (int i = 0; i < p; ++i) z[i] = rng.normal();
  Eigen::VectorXd mu = params.mu0 + L * z;
  return {std::move(mu), std::move(sigma)};
}

double logpdf_mvt(const Eigen::VectorXd& location, const Eigen::MatrixXd& scale,
                  double dof, const Eigen::VectorXd& y) {
  if (!(dof > 0.0)) throw domain_error("logpdf_mvt: dof must be positive");
  const int p = static_cast<int>(location.size());
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_cholesky(scale);
  const Eigen::MatrixXd L = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < p; ++i) logdet += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd d = y - location;
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(d);
  const double quad = w.squaredNorm();
  return std::lgamma(0.5 * (dof + p)) - std::lgamma(0.5 * dof) -
         0.5 * p * std::log(dof * M_PI) - 0.5 * logdet -
         0.5 * (dof + p) * std::log1p(quad / dof);
}

std::vector<long> sample_multinomial(long n, const Eigen::VectorXd& probs,
                                     RandomSource& rng) {
  const int k = static_cast<int>(probs.size());
  if (k == 0) throw domain_error("sample_multinomial: empty probability vector");
  Eigen::VectorXd cdf(k);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    if (probs[i] < 0.0) throw domain_error("sample_multinomial: negative probability");
    acc += probs[i];
    cdf[i] = acc;
  }
  std::vector<long> counts(k, 0);
  for (long t = 0; t < n; ++t) {
    const double u = rng.uniform() * acc;
    const double* begin = cdf.data();
    const double* it = std::lower_bound(begin, begin + k, u);
    int idx = static_cast<int>(it - begin);
    if (idx >= k) idx = k - 1;
    ++counts[idx];
  }
  return counts;
}

}  // namespace msp
