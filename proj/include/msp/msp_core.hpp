#ifndef MSP_CORE_HPP
#define MSP_CORE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msp/distributions.hpp"
#include "msp/random.hpp"

namespace msp {

// Low-dimensional functional theta(f) of the big parameter.
using FunctionalValue = Eigen::VectorXd;

struct invariant_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Induced marginal estimate p0-hat: frozen approximation to the theta-margin
// of the base prior, fitted once before any chain runs.
// ---------------------------------------------------------------------------

enum class EstimatorKind { GaussianKde, MomentFitSkewT, ProductOfDirichlet };

// One fitted Azzalini skew-t margin (location xi, scale omega, slant alpha,
// dof nu), used coordinate-wise by the MomentFitSkewT estimator.
struct SkewTMargin {
  double xi = 0.0;
  double omega = 1.0;
  double alpha = 0.0;
  double nu = 10.0;
};

double logpdf_skew_t(const SkewTMargin& m, double x);

// Moment-match a skew-t to (mean, variance, skewness) at fixed dof.
SkewTMargin fit_skew_t_moments(double mean, double variance, double skewness,
                               double nu = 10.0);

class InducedMarginalEstimate {
 public:
  // empty (dim 0) until produced by one of the factories
  InducedMarginalEstimate() = default;

  // log_coords: theta coordinates fitted on the log scale (e.g. variances).
  // Callers always evaluate on the natural scale; the log transform and its
  // Jacobian live inside this class.
  static InducedMarginalEstimate fit_kde(const Eigen::MatrixXd& theta_draws,
                                         const std::vector<int>& log_coords);
  static InducedMarginalEstimate fit_skew_t(const Eigen::MatrixXd& theta_draws,
                                            const std::vector<int>& log_coords);
  static InducedMarginalEstimate product_of_dirichlet(
      const std::vector<DirichletParams>& margins);

  // Reconstruction from serialized parameters (artifact loading).
  static InducedMarginalEstimate from_skew_t(std::vector<SkewTMargin> margins,
                                             std::vector<int> log_coords,
                                             int fit_sample_size);
  static InducedMarginalEstimate from_kde_points(Eigen::MatrixXd points,
                                                 Eigen::VectorXd bandwidths,
                                                 std::vector<int> log_coords);

  EstimatorKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int fit_sample_size() const { return fit_sample_size_; }
  const std::vector<int>& log_coords() const { return log_coords_; }
  const std::vector<SkewTMargin>& skew_t_margins() const { return skew_t_; }
  const std::vector<DirichletParams>& dirichlet_margins() const {
    return dirichlet_;
  }
  const Eigen::MatrixXd& kde_points() const { return kde_points_; }
  const Eigen::VectorXd& kde_bandwidths() const { return kde_bandwidth_; }

  double log_density(const FunctionalValue& theta) const;

 private:
  EstimatorKind kind_ = EstimatorKind::GaussianKde;
  int dim_ = 0;
  int fit_sample_size_ = 0;
  std::vector<int> log_coords_;
  // kde
  Eigen::MatrixXd kde_points_;   // S x q, transformed scale
  Eigen::VectorXd kde_bandwidth_;
  // skew-t
  std::vector<SkewTMargin> skew_t_;
  // product-of-Dirichlet (theta laid out as concatenated simplex blocks)
  std::vector<DirichletParams> dirichlet_;
};

// ---------------------------------------------------------------------------
// Target marginal prior p1: a product of named parametric factors, each
// covering a contiguous coordinate block of theta.
// ---------------------------------------------------------------------------

struct PriorFactor {
  enum class Kind { Normal, InverseGamma, Dirichlet };
  Kind kind;
  // Normal: params = {mean, variance}; InverseGamma: {shape, scale};
  // Dirichlet: params = alpha (block length = alpha size).
  Eigen::VectorXd params;
  int offset = 0;  // first theta coordinate of this factor's block

  int block_size() const {
    return kind == Kind::Dirichlet ? static_cast<int>(params.size()) : 1;
  }
};

class MarginalTargetPrior {
 public:
  MarginalTargetPrior() = default;
  explicit MarginalTargetPrior(std::vector<PriorFactor> factors);

  // p1 identical to a fitted p0-hat: log_density delegates to the estimate,
  // so the adjustment ratio cancels exactly (the identity-reduction case).
  static MarginalTargetPrior from_estimate(InducedMarginalEstimate estimate);

  int dim() const { return dim_; }
  const std::vector<PriorFactor>& factors() const { return factors_; }

  // -inf outside the support; never NaN.
  double log_density(const FunctionalValue& theta) const;

  // Direct draw; estimate-wrapped priors are evaluate-only and throw.
  FunctionalValue sample(RandomSource& rng) const;

 private:
  std::vector<PriorFactor> factors_;
  std::optional<InducedMarginalEstimate> wrapped_;
  int dim_ = 0;
};

using PriorThetaSampler = std::function<FunctionalValue(RandomSource&)>;

// Draw S functionals from the base prior and fit the chosen estimator.
InducedMarginalEstimate estimate_induced_marginal(const PriorThetaSampler& sampler,
                                                  int S, EstimatorKind kind,
                                                  const std::vector<int>& log_coords,
                                                  RandomSource& rng);

// ---------------------------------------------------------------------------
// Acceptance-ratio machinery
// ---------------------------------------------------------------------------

// ln p1(theta*) - ln p0(theta*) - ln p1(theta) + ln p0(theta).
// -inf at the proposal means certain rejection; -inf at the current state is
// an invariant violation (the chain must never occupy zero-density states).
double msp_log_adjustment(const MarginalTargetPrior& p1,
                          const InducedMarginalEstimate& p0,
                          const FunctionalValue& theta_prop,
                          const FunctionalValue& theta_cur);

// Approximate-target variant: ln p1~(theta*) - ln p1~(theta).  The induced
// margin is then proportional to p0 * p1~ rather than p1~ itself.
double approx_target_log_adjustment(const MarginalTargetPrior& p1_tilde,
                                    const FunctionalValue& theta_prop,
                                    const FunctionalValue& theta_cur);

// True with probability min(1, exp(log_r)).  Consumes no randomness when
// log_r >= 0, so adjustment-free chains keep identical RNG streams.
bool metropolis_accept(double log_r, RandomSource& rng);

// Rejects a p1 whose support provably exceeds the numeric support of p0-hat:
// any p1 draw with ln p0-hat below -700 fails validation.
void validate_absolute_continuity(const MarginalTargetPrior& p1,
                                  const InducedMarginalEstimate& p0,
                                  int n_check, RandomSource& rng);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

// n / (1 + 2 sum rho_k) with Geyer's initial-monotone-sequence truncation,
// capped at n.  Constant series report 0 and set *degenerate when provided.
double effective_sample_size(const std::vector<double>& series,
                             bool* degenerate = nullptr);

// ---------------------------------------------------------------------------
// Chain bookkeeping shared by both models
// ---------------------------------------------------------------------------

struct ChainConfig {
  long iterations = 0;
  long thin = 1;
  long burn_in = 0;
  std::uint64_t seed = 0;

  long saved_draws() const { return (iterations - burn_in) / thin; }
  void validate() const;
};

struct ChainOutput {
  Eigen::MatrixXd theta_samples;  // saved draws x q
  double acceptance_rate = 0.0;
  Eigen::VectorXd ess;            // per theta coordinate
  std::vector<char> accept_trace; // one flag per decision (diagnostics)
};

}  // namespace msp

#endif
