#ifndef MSP_DPMM_HPP
#define MSP_DPMM_HPP

#include <Eigen/Dense>
#include <vector>

#include "msp/distributions.hpp"
#include "msp/msp_core.hpp"
#include "msp/random.hpp"

namespace msp::dpmm {

struct Dataset {
  Eigen::MatrixXd y;  // n x p observations

  long n() const { return y.rows(); }
  int p() const { return static_cast<int>(y.cols()); }
  void validate() const;
};

// NIW base measure plus the DP concentration.
struct NiwHyper {
  NiwParams base;
  double alpha = 1.0;

  int dim() const { return base.dim(); }
};

// One atom of a finite approximation to the mixing distribution Q.
struct Atom {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  double weight = 0.0;
};

// Pitman conditional draw of Q given the partition: occupied atoms carry
// total weight gamma, the fresh CRP block carries 1 - gamma.
struct QDraw {
  std::vector<Atom> atoms;
  double gamma = 0.0;
  long residual_sample_count = 0;  // s in the multinomial allocation
};

// Component membership state with cached sufficient statistics.
class DpmmState {
 public:
  DpmmState(const Dataset& data, int p);

  long n() const { return static_cast<long>(assignment_.size()); }
  int components() const { return static_cast<int>(counts_.size()); }
  int assignment(long i) const { return assignment_[i]; }
  long count(int k) const { return counts_[k]; }
  const Eigen::VectorXd& sum(int k) const { return sums_[k]; }
  const Eigen::MatrixXd& sum_outer(int k) const { return outer_[k]; }

  const FunctionalValue& theta() const { return theta_; }
  void set_theta(FunctionalValue theta) { theta_ = std::move(theta); }

  void remove(long i, const Dataset& data);
  // component = components() creates a new one
  void insert(long i, int component, const Dataset& data);

  // consistency with a from-scratch recomputation; throws on drift
  void check_consistency(const Dataset& data, double tol = 1e-9) const;

 private:
  std::vector<int> assignment_;
  std::vector<long> counts_;
  std::vector<Eigen::VectorXd> sums_;
  std::vector<Eigen::MatrixXd> outer_;
  FunctionalValue theta_;
};

// Named prior recipes --------------------------------------------------------

// mu0=m0, kappa0=n0/(alpha+1), nu0=n0, S0=nu0*V0 with V0 = D(sqrt v0) R D(sqrt v0).
NiwHyper informative_hyperparameters(const Eigen::VectorXd& m0,
                                     const Eigen::VectorXd& v0, long n0,
                                     double alpha, const Eigen::MatrixXd& R);

// mu0=ybar, kappa0=1/10, nu0=p+2, S0=sample covariance; weakly centered on data.
NiwHyper noninformative_hyperparameters(const Dataset& data, double alpha = 1.0);

// NIW posterior parameters for one component's cached statistics.
NiwParams component_posterior(const DpmmState& state, int k, const NiwHyper& hyper);

// Full conditional over existing components plus a fresh one, for point i.
// flat_likelihood drops the predictive terms (pure CRP conditional).
Eigen::VectorXd assignment_full_conditional(const DpmmState& state, long i,
                                            const Dataset& data,
                                            const NiwHyper& hyper,
                                            bool flat_likelihood = false);

QDraw sample_q_given_partition(const DpmmState& state,
                               const NiwHyper& hyper, long S, RandomSource& rng,
                               bool flat_likelihood = false);

// theta = (marginal means, marginal variances), natural scale.
FunctionalValue functionals_from_q(const QDraw& q);

// Plain collapsed Gibbs sweep (base prior).
void gibbs_sweep(DpmmState& state, const Dataset& data, const NiwHyper& hyper,
                 RandomSource& rng, bool flat_likelihood = false);

// One MSP sweep: per point, propose (g_k*, theta*) from the base full
// conditionals and accept with the marginal-ratio adjustment.  Appends one
// accept flag per point to accept_trace when provided.
void msp_sweep(DpmmState& state, const Dataset& data, const NiwHyper& hyper,
               const MarginalTargetPrior* p1, const InducedMarginalEstimate* p0,
               long S, RandomSource& rng, std::vector<char>* accept_trace = nullptr,
               long* accept_count = nullptr, long* proposal_count = nullptr,
               bool flat_likelihood = false);

enum class PriorKind { Informative, Noninformative, Msp };

struct DpmmChainResult {
  ChainOutput output;
  std::vector<QDraw> mixtures;  // one saved mixture record per saved draw
};

struct DpmmRunSpec {
  PriorKind prior = PriorKind::Noninformative;
  NiwHyper hyper;
  // msp only:
  MarginalTargetPrior p1;
  InducedMarginalEstimate p0;
  long atoms_per_qdraw = 1000;
  bool flat_likelihood = false;
};

DpmmChainResult run_dpmm_chain(const Dataset& data, const DpmmRunSpec& spec,
                               const ChainConfig& config);

// Sample theta under the prior alone (stick-breaking truncation of the DP),
// used for fitting p0-hat and for hyperparameter verification.
FunctionalValue sample_prior_functionals(const NiwHyper& hyper, RandomSource& rng,
                                         double weight_tol = 1e-10,
                                         int max_sticks = 4000);

// Pointwise average over saved draws of the implied finite mixture density.
// Serial reference implementation.
Eigen::VectorXd posterior_predictive_density_serial(
    const std::vector<QDraw>& mixtures, const Eigen::MatrixXd& grid);

// OpenMP version; must agree with the serial reference bitwise per point.
Eigen::VectorXd posterior_predictive_density(const std::vector<QDraw>& mixtures,
                                             const Eigen::MatrixXd& grid);

// Yamato approximation to the prior law of the mean functional of DP(alpha Q0).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> yamato_mean_prior(
    const Eigen::VectorXd& q0_mean, const Eigen::MatrixXd& q0_cov, double alpha);

}  // namespace msp::dpmm

#endif
