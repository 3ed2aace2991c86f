#ifndef MSP_CTAB_HPP
#define MSP_CTAB_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "msp/distributions.hpp"
#include "msp/msp_core.hpp"
#include "msp/random.hpp"

namespace msp::ctab {

// Multiway table shape d_1 x ... x d_p.  Cells are ordered lexicographically
// with the last variable fastest.
struct TableShape {
  std::vector<int> d;

  int vars() const { return static_cast<int>(d.size()); }
  long cells() const;
  void validate() const;

  long index(const std::vector<int>& levels) const;   // 0-based levels
  std::vector<int> levels(long cell) const;
};

// Cell-probability table on the (|C|-1)-simplex.
struct TableParam {
  Eigen::VectorXd f;
};

struct CountTable {
  std::vector<long> counts;

  long n() const;
  void validate() const;
};

struct MetricsReport {
  double M = 0.0;
  double L = 0.0;
};

// One-way margin of f for variable j.
Eigen::VectorXd cell_marginals(const TableParam& f, const TableShape& shape, int j);

// Dirichlet aggregation: theta_j ~ Dir(per-level sums of alpha).
DirichletParams induced_dirichlet_margin(const DirichletParams& alpha,
                                         const TableShape& shape, int j);

// I-projection of the uniform table onto the set with the given one-way
// margins, by iterative proportional fitting.  The result has product form
// f_c proportional to prod_j a_{j,c_j}.
TableParam ipf_iproject(const TableShape& shape,
                        const std::vector<Eigen::VectorXd>& target_margins,
                        double tol = 1e-12, int max_iters = 10000);

// alpha = |C| * I-projection of the targets.
DirichletParams informative_prior(const TableShape& shape,
                                  const std::vector<Eigen::VectorXd>& target_margins);

// alpha_c = 1/sqrt(|C|) for every cell.
DirichletParams noninformative_prior(const TableShape& shape);

// (alpha_c + count_c) / (sum alpha + n).
TableParam conjugate_posterior_mean(const DirichletParams& prior,
                                    const CountTable& data);

// Log-gamma random-walk state: f_c = Z_c / sum Z with Z_c = exp(logZ_c).
// Caches (Z, sum Z, per-variable level sums) are updated incrementally and
// recomputed from scratch every refresh_interval accepted moves.
class LogGammaState {
 public:
  LogGammaState(const TableShape& shape, Eigen::VectorXd logZ);

  const TableShape& shape() const { return shape_; }
  const Eigen::VectorXd& logZ() const { return logZ_; }
  double z(long c) const { return z_[c]; }
  double zsum() const { return zsum_; }

  Eigen::VectorXd f() const;
  Eigen::VectorXd margin(int j) const;

  void update_cells(const std::vector<long>& cells,
                    const Eigen::VectorXd& new_logZ_values);
  void rebuild_caches();

  // caches vs a from-scratch recomputation; throws on drift
  void check_caches(double tol = 1e-12) const;

 private:
  TableShape shape_;
  Eigen::VectorXd logZ_;
  Eigen::VectorXd z_;
  double zsum_ = 0.0;
  std::vector<Eigen::VectorXd> level_sums_;  // per variable, per level, sums of Z
  long updates_since_rebuild_ = 0;
  static constexpr long kRebuildInterval = 10000;
};

struct SubsetProposal {
  std::vector<long> cells;
  Eigen::VectorXd new_logZ;  // one value per proposed cell
  double log_r0 = 0.0;       // likelihood + gamma prior + Jacobian terms
};

// Perturb logZ on a uniformly chosen subset of cells; log_r0 is the full
// base-prior acceptance log ratio including the Z -> log Z Jacobian.
SubsetProposal propose_subset(const LogGammaState& state, const CountTable& data,
                              const DirichletParams& prior, int subset_size,
                              double delta, RandomSource& rng);

// Marginal-ratio correction sum_j [ln Dir(theta*_j; p1_j) - ln Dir(theta*_j; p0_j)]
// minus the same at the current margins.
double marginal_adjustment(const std::vector<Eigen::VectorXd>& margins_cur,
                           const std::vector<Eigen::VectorXd>& margins_prop,
                           const std::vector<DirichletParams>& p1_margins,
                           const std::vector<DirichletParams>& p0_margins);

struct CtabTuning {
  int subset_size = 0;      // 0: default max(1, ceil(|C|/20))
  double delta = 0.5;
  bool pilot_tune = true;   // doubling/halving pilot targeting 60-90% acceptance
};

struct CtabChainResult {
  ChainOutput output;          // theta = concatenated margins
  Eigen::MatrixXd f_samples;   // saved draws x |C|
  double tuned_delta = 0.0;
  int subset_size = 0;
};

CtabChainResult run_ctab_chain(const CountTable& data, const TableShape& shape,
                               const DirichletParams& base_prior,
                               const std::optional<std::vector<DirichletParams>>&
                                   p1_margins,
                               const ChainConfig& config,
                               const CtabTuning& tuning = {});

// Two-way marginal table of f for variables (j1, j2), as a d_j1 x d_j2 matrix.
Eigen::MatrixXd two_way_marginal(const TableParam& f, const TableShape& shape,
                                 int j1, int j2);

// Local dependence function: log cross-product ratios of the two-way marginal.
Eigen::MatrixXd ldf(const TableParam& f, const TableShape& shape, int j1, int j2);

// (1/p) sum_j | sum_c theta~_jc ln(theta^_jc / theta~_jc) |, exactly as stated.
double metric_M(const std::vector<Eigen::VectorXd>& theta_hat,
                const std::vector<Eigen::VectorXd>& theta_true);

// Double average of squared LDF differences over variable pairs.
double metric_L(const TableParam& f_hat, const TableParam& f_true,
                const TableShape& shape);

// f_c proportional to max(count_c, epsilon).
TableParam smooth_zero_cells(const CountTable& counts, double epsilon);

CountTable simulate_dataset(const TableParam& f_true, long n, RandomSource& rng);

}  // namespace msp::ctab

#endif
