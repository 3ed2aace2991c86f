#include "msp/msp_core.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

namespace msp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double logpdf_student_t(double nu, double z) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

}  // namespace

// ---------------------------------------------------------------------------
// MarginalTargetPrior
// ---------------------------------------------------------------------------

MarginalTargetPrior::MarginalTargetPrior(std::vector<PriorFactor> factors)
    : factors_(std::move(factors)) {
  int expected = 0;
  for (const auto& f : factors_) {
    if (f.offset != expected)
      throw domain_error("MarginalTargetPrior: factor blocks must partition theta");
    expected += f.block_size();
    if (f.kind == PriorFactor::Kind::Dirichlet)
      DirichletParams{f.params}.validate();
    else if (f.params.size() != 2 || !(f.params[1] > 0.0) || !(f.params[0] == f.params[0]))
      throw domain_error("MarginalTargetPrior: scalar factor needs two valid params");
  }
  dim_ = expected;
}

MarginalTargetPrior MarginalTargetPrior::from_estimate(
    InducedMarginalEstimate estimate) {
  MarginalTargetPrior p;
  p.dim_ = estimate.dim();
  p.wrapped_ = std::move(estimate);
  return p;
}

double MarginalTargetPrior::log_density(const FunctionalValue& theta) const {
  if (wrapped_) return wrapped_->log_density(theta);
  if (theta.size() != dim_)
    throw domain_error("MarginalTargetPrior: theta dimension mismatch");
  double lp = 0.0;
  for (const auto& f : factors_) {
    switch (f.kind) {
      case PriorFactor::Kind::Normal:
        lp += logpdf_normal(f.params[0], f.params[1], theta[f.offset]);
        break;
      case PriorFactor::Kind::InverseGamma: {
        const double x = theta[f.offset];
        if (!(x > 0.0)) return kNegInf;
        lp += logpdf_inverse_gamma(f.params[0], f.params[1], x);
        break;
      }
      case PriorFactor::Kind::Dirichlet: {
        const Eigen::VectorXd block = theta.segment(f.offset, f.block_size());
        for (int i = 0; i < block.size(); ++i)
          if (!(block[i] > 0.0)) return kNegInf;
        lp += logpdf_dirichlet(DirichletParams{f.params}, block);
        break;
      }
    }
  }
  return lp;
}

FunctionalValue MarginalTargetPrior::sample(RandomSource& rng) const {
  if (wrapped_)
    throw domain_error(
        "MarginalTargetPrior: estimate-wrapped priors cannot be sampled");
  FunctionalValue theta(dim_);
  for (const auto& f : factors_) {
    switch (f.kind) {
      case PriorFactor::Kind::Normal:
        theta[f.offset] = f.params[0] + std::sqrt(f.params[1]) * rng.normal();
        break;
      case PriorFactor::Kind::InverseGamma:
        theta[f.offset] = f.params[1] / sample_gamma(f.params[0], 1.0, rng);
        break;
      case PriorFactor::Kind::Dirichlet:
        theta.segment(f.offset, f.block_size()) =
            sample_dirichlet(DirichletParams{f.params}, rng);
        break;
    }
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Skew-t margin
// ---------------------------------------------------------------------------

double logpdf_skew_t(const SkewTMargin& m, double x) {
  const double z = (x - m.xi) / m.omega;
  const double w = m.alpha * z * std::sqrt((m.nu + 1.0) / (m.nu + z * z));
  const boost::math::students_t tnu1(m.nu + 1.0);
  const double cdf = boost::math::cdf(tnu1, w);
  const double log_cdf = cdf > 0.0 ? std::log(cdf) : -750.0;
  return std::log(2.0) - std::log(m.omega) + logpdf_student_t(m.nu, z) + log_cdf;
}

namespace {

// mean, sd and skewness of the standard skew-t ST(0,1,alpha,nu) as functions
// of delta = alpha/sqrt(1+alpha^2).
struct SkewTStdMoments {
  double mean, var, skew;
};

SkewTStdMoments skew_t_std_moments(double delta, double nu) {
  const double b = std::sqrt(nu / M_PI) *
                   std::exp(std::lgamma(0.5 * (nu - 1.0)) - std::lgamma(0.5 * nu));
  const double m1 = b * delta;
  const double v = nu / (nu - 2.0) - m1 * m1;
  const double m3 = m1 * (nu * (3.0 - delta * delta) / (nu - 3.0) -
                          3.0 * nu / (nu - 2.0) + 2.0 * m1 * m1);
  return {m1, v, m3 / std::pow(v, 1.5)};
}

}  // namespace

SkewTMargin fit_skew_t_moments(double mean, double variance, double skewness,
                               double nu) {
  if (!(variance > 0.0)) throw domain_error("fit_skew_t_moments: zero variance");
  const double max_skew = skew_t_std_moments(0.999999, nu).skew * 0.999;
  double target = std::clamp(skewness, -max_skew, max_skew);
  // skewness is odd and monotone in delta: bisect on |delta|
  const double sign = target < 0.0 ? -1.0 : 1.0;
  target = std::abs(target);
  double lo = 0.0, hi = 0.999999;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (skew_t_std_moments(mid, nu).skew < target)
      lo = mid;
    else
      hi = mid;
  }
  const double delta = sign * 0.5 * (lo + hi);
  const auto mom = skew_t_std_moments(delta, nu);
  SkewTMargin m;
  m.nu = nu;
  m.alpha = delta / std::sqrt(1.0 - delta * delta);
  m.omega = std::sqrt(variance / mom.var);
  m.xi = mean - m.omega * mom.mean;
  return m;
}

// ---------------------------------------------------------------------------
// InducedMarginalEstimate
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd apply_log_transform(const Eigen::MatrixXd& draws,
                                    const std::vector<int>& log_coords) {
  Eigen::MatrixXd out = draws;
  for (int c : log_coords) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (!(out(i, c) > 0.0))
        throw domain_error("log-scale coordinate must be positive");
      out(i, c) = std::log(out(i, c));
    }
  }
  return out;
}

void check_nondegenerate(const Eigen::MatrixXd& draws) {
  if (draws.rows() < 2) throw domain_error("estimate fit: too few draws");
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    const double sd =
        std::sqrt((draws.col(c).array() - draws.col(c).mean()).square().mean());
    if (!(sd > 0.0))
      throw domain_error("estimate fit: degenerate sample (zero variance)");
  }
}

}  // namespace

InducedMarginalEstimate InducedMarginalEstimate::fit_kde(
    const Eigen::MatrixXd& theta_draws, const std::vector<int>& log_coords) {
  Eigen::MatrixXd t = apply_log_transform(theta_draws, log_coords);
  check_nondegenerate(t);
  InducedMarginalEstimate e;
  e.kind_ = EstimatorKind::GaussianKde;
  e.dim_ = static_cast<int>(t.cols());
  e.fit_sample_size_ = static_cast<int>(t.rows());
  e.log_coords_ = log_coords;
  const double n = static_cast<double>(t.rows());
  const double scott = std::pow(n, -1.0 / (e.dim_ + 4.0));
  e.kde_bandwidth_.resize(e.dim_);
  for (int c = 0; c < e.dim_; ++c) {
    const double sd =
        std::sqrt((t.col(c).array() - t.col(c).mean()).square().mean());
    e.kde_bandwidth_[c] = sd * scott;
  }
  e.kde_points_ = std::move(t);
  return e;
}

InducedMarginalEstimate InducedMarginalEstimate::fit_skew_t(
    const Eigen::MatrixXd& theta_draws, const std::vector<int>& log_coords) {
  Eigen::MatrixXd t = apply_log_transform(theta_draws, log_coords);
  check_nondegenerate(t);
  InducedMarginalEstimate e;
  e.kind_ = EstimatorKind::MomentFitSkewT;
  e.dim_ = static_cast<int>(t.cols());
  e.fit_sample_size_ = static_cast<int>(t.rows());
  e.log_coords_ = log_coords;
  for (int c = 0; c < e.dim_; ++c) {
    const double mean = t.col(c).mean();
    const Eigen::ArrayXd d = t.col(c).array() - mean;
    const double var = d.square().mean();
    const double skew = d.cube().mean() / std::pow(var, 1.5);
    e.skew_t_.push_back(fit_skew_t_moments(mean, var, skew));
  }
  return e;
}

InducedMarginalEstimate InducedMarginalEstimate::product_of_dirichlet(
    const std::vector<DirichletParams>& margins) {
  InducedMarginalEstimate e;
  e.kind_ = EstimatorKind::ProductOfDirichlet;
  int dim = 0;
  for (const auto& m : margins) {
    m.validate();
    dim += m.dim();
  }
  e.dim_ = dim;
  e.dirichlet_ = margins;
  return e;
}

InducedMarginalEstimate InducedMarginalEstimate::from_skew_t(
    std::vector<SkewTMargin> margins, std::vector<int> log_coords,
    int fit_sample_size) {
  if (margins.empty()) throw domain_error("from_skew_t: no margins");
  for (const auto& m : margins)
    if (!(m.omega > 0.0) || !(m.nu > 2.0))
      throw domain_error("from_skew_t: invalid margin parameters");
  InducedMarginalEstimate e;
  e.kind_ = EstimatorKind::MomentFitSkewT;
  e.dim_ = static_cast<int>(margins.size());
  e.fit_sample_size_ = fit_sample_size;
  e.log_coords_ = std::move(log_coords);
  e.skew_t_ = std::move(margins);
  return e;
}

InducedMarginalEstimate InducedMarginalEstimate::from_kde_points(
    Eigen::MatrixXd points, Eigen::VectorXd bandwidths,
    std::vector<int> log_coords) {
  if (points.rows() < 2 || points.cols() != bandwidths.size())
    throw domain_error("from_kde_points: dimension mismatch");
  for (int c = 0; c < bandwidths.size(); ++c)
    if (!(bandwidths[c] > 0.0))
      throw domain_error("from_kde_points: bandwidths must be positive");
  InducedMarginalEstimate e;
  e.kind_ = EstimatorKind::GaussianKde;
  e.dim_ = static_cast<int>(points.cols());
  e.fit_sample_size_ = static_cast<int>(points.rows());
  e.log_coords_ = std::move(log_coords);
  e.kde_points_ = std::move(points);
  e.kde_bandwidth_ = std::move(bandwidths);
  return e;
}

double InducedMarginalEstimate::log_density(const FunctionalValue& theta) const {
  if (theta.size() != dim_)
    throw domain_error("InducedMarginalEstimate: theta dimension mismatch");
  // transform to the fitted scale; accumulate the log-Jacobian so the result
  // is always a density on the natural scale
  Eigen::VectorXd t = theta;
  double log_jac = 0.0;
  for (int c : log_coords_) {
    if (!(theta[c] > 0.0)) return kNegInf;
    t[c] = std::log(theta[c]);
    log_jac -= t[c];  // d(log v)/dv = 1/v
  }
  switch (kind_) {
    case EstimatorKind::GaussianKde: {
      const Eigen::Index S = kde_points_.rows();
      double max_term = kNegInf;
      Eigen::VectorXd terms(S);
      double norm = 0.0;
      for (int c = 0; c < dim_; ++c)
        norm += 0.5 * kLog2Pi + std::log(kde_bandwidth_[c]);
      for (Eigen::Index i = 0; i < S; ++i) {
        double q = 0.0;
        for (int c = 0; c < dim_; ++c) {
          const double z = (t[c] - kde_points_(i, c)) / kde_bandwidth_[c];
          q += z * z;
        }
        terms[i] = -0.5 * q;
        max_term = std::max(max_term, terms[i]);
      }
      double acc = 0.0;
      for (Eigen::Index i = 0; i < S; ++i) acc += std::exp(terms[i] - max_term);
      return max_term + std::log(acc / S) - norm + log_jac;
    }
    case EstimatorKind::MomentFitSkewT: {
      double lp = 0.0;
      for (int c = 0; c < dim_; ++c) lp += logpdf_skew_t(skew_t_[c], t[c]);
      return lp + log_jac;
    }
    case EstimatorKind::ProductOfDirichlet: {
      double lp = 0.0;
      int off = 0;
      for (const auto& m : dirichlet_) {
        const Eigen::VectorXd block = t.segment(off, m.dim());
        for (int i = 0; i < block.size(); ++i)
          if (!(block[i] > 0.0)) return kNegInf;
        lp += logpdf_dirichlet(m, block);
        off += m.dim();
      }
      return lp + log_jac;
    }
  }
  return kNegInf;
}

InducedMarginalEstimate estimate_induced_marginal(const PriorThetaSampler& sampler,
                                                  int S, EstimatorKind kind,
                                                  const std::vector<int>& log_coords,
                                                  RandomSource& rng) {
  if (S < 100) throw domain_error("estimate_induced_marginal: S must be >= 100");
  FunctionalValue first = sampler(rng);
  Eigen::MatrixXd draws(S, first.size());
  draws.row(0) = first;
  for (int i = 1; i < S; ++i) draws.row(i) = sampler(rng);
  switch (kind) {
    case EstimatorKind::GaussianKde:
      return InducedMarginalEstimate::fit_kde(draws, log_coords);
    case EstimatorKind::MomentFitSkewT:
      return InducedMarginalEstimate::fit_skew_t(draws, log_coords);
    default:
      throw domain_error(
          "estimate_induced_marginal: product-of-Dirichlet is closed form, not "
          "sample-fitted");
  }
}

// ---------------------------------------------------------------------------
// Acceptance-ratio machinery
// ---------------------------------------------------------------------------

double msp_log_adjustment(const MarginalTargetPrior& p1,
                          const InducedMarginalEstimate& p0,
                          const FunctionalValue& theta_prop,
                          const FunctionalValue& theta_cur) {
  const double lp1_cur = p1.log_density(theta_cur);
  const double lp0_cur = p0.log_density(theta_cur);
  if (std::isinf(lp1_cur) || std::isinf(lp0_cur))
    throw invariant_violation(
        "msp_log_adjustment: current state has zero marginal density");
  const double lp1_prop = p1.log_density(theta_prop);
  if (std::isinf(lp1_prop) && lp1_prop < 0.0) return kNegInf;
  const double lp0_prop = p0.log_density(theta_prop);
  const double r = lp1_prop - lp0_prop - lp1_cur + lp0_cur;
  if (std::isnan(r)) throw invariant_violation("msp_log_adjustment: NaN ratio");
  return r;
}

double approx_target_log_adjustment(const MarginalTargetPrior& p1_tilde,
                                    const FunctionalValue& theta_prop,
                                    const FunctionalValue& theta_cur) {
  const double cur = p1_tilde.log_density(theta_cur);
  if (std::isinf(cur))
    throw invariant_violation(
        "approx_target_log_adjustment: current state has zero target density");
  const double prop = p1_tilde.log_density(theta_prop);
  const double r = prop - cur;
  if (std::isnan(r))
    throw invariant_violation("approx_target_log_adjustment: NaN ratio");
  return r;
}

bool metropolis_accept(double log_r, RandomSource& rng) {
  if (std::isnan(log_r))
    throw invariant_violation("metropolis_accept: NaN log ratio");
  if (log_r >= 0.0) return true;
  if (std::isinf(log_r)) return false;
  return std::log(rng.uniform()) < log_r;
}

void validate_absolute_continuity(const MarginalTargetPrior& p1,
                                  const InducedMarginalEstimate& p0,
                                  int n_check, RandomSource& rng) {
  for (int i = 0; i < n_check; ++i) {
    const FunctionalValue theta = p1.sample(rng);
    if (p0.log_density(theta) < -700.0)
      throw domain_error(
          "p1 support exceeds the numeric support of the induced marginal "
          "estimate (absolute continuity check failed)");
  }
}

// ---------------------------------------------------------------------------
// Effective sample size
// ---------------------------------------------------------------------------

double effective_sample_size(const std::vector<double>& series, bool* degenerate) {
  if (degenerate) *degenerate = false;
  const long n = static_cast<long>(series.size());
  if (n < 100) throw domain_error("effective_sample_size: need at least 100 points");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= n;
  double c0 = 0.0;
  for (double x : series) c0 += (x - mean) * (x - mean);
  c0 /= n;
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (!(c0 > 0.0) || *lo == *hi) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  auto autocov = [&](long k) {
    double acc = 0.0;
    for (long i = 0; i + k < n; ++i)
      acc += (series[i] - mean) * (series[i + k] - mean);
    return acc / n;
  };
  // Geyer initial monotone positive sequence over pair sums
  double prev_pair = 1.0 + autocov(1) / c0;  // Gamma_0 = rho_0 + rho_1
  double total = prev_pair > 0.0 ? prev_pair : 0.0;
  if (prev_pair > 0.0) {
    for (long m = 1; 2 * m + 1 < n; ++m) {
      double pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair);  // enforce monotonicity
      total += pair;
      prev_pair = pair;
      if (pair < 1e-4) break;
    }
  }
  const double tau = -1.0 + 2.0 * total;
  if (tau < 1.0 / n) return static_cast<double>(n);  // cap for anticorrelated input
  return std::min(static_cast<double>(n), n / tau);
}

// ---------------------------------------------------------------------------
// ChainConfig
// ---------------------------------------------------------------------------

void ChainConfig::validate() const {
  if (iterations <= 0) throw domain_error("ChainConfig: iterations must be positive");
  if (thin <= 0) throw domain_error("ChainConfig: thin must be positive");
  if (burn_in < 0) throw domain_error("ChainConfig: burn_in must be nonnegative");
  if (burn_in >= iterations)
    throw domain_error("ChainConfig: burn_in must be smaller than iterations");
  if (saved_draws() <= 0) throw domain_error("ChainConfig: no draws would be saved");
}

}  // namespace msp
