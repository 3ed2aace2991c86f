#include "msp/ctab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace msp::ctab {

// ---------------------------------------------------------------------------
// TableShape / CountTable
// ---------------------------------------------------------------------------

long TableShape::cells() const {
  long c = 1;
  for (int dj : d) c *= dj;
  return c;
}

void TableShape::validate() const {
  // one variable is a plain categorical; pair metrics need two or more
  if (vars() < 1) throw domain_error("TableShape: need at least one variable");
  for (int dj : d)
    if (dj < 2) throw domain_error("TableShape: each variable needs >= 2 levels");
}

long TableShape::index(const std::vector<int>& levels) const {
  if (static_cast<int>(levels.size()) != vars())
    throw domain_error("TableShape::index: level vector length mismatch");
  long idx = 0;
  for (int j = 0; j < vars(); ++j) {
    if (levels[j] < 0 || levels[j] >= d[j])
      throw domain_error("TableShape::index: level out of range");
    idx = idx * d[j] + levels[j];
  }
  return idx;
}

std::vector<int> TableShape::levels(long cell) const {
  std::vector<int> out(vars());
  for (int j = vars() - 1; j >= 0; --j) {
    out[j] = static_cast<int>(cell % d[j]);
    cell /= d[j];
  }
  return out;
}

long CountTable::n() const {
  long total = 0;
  for (long c : counts) total += c;
  return total;
}

void CountTable::validate() const {
  for (long c : counts)
    if (c < 0) throw domain_error("CountTable: negative count");
}

// ---------------------------------------------------------------------------
// Margins and priors
// ---------------------------------------------------------------------------

namespace {

// stride pattern for variable j: cells sharing a level of j form
// `outer` groups of `inner` consecutive cells, `inner` = prod of faster dims
void strides_for(const TableShape& shape, int j, long* inner, long* outer) {
  *inner = 1;
  for (int k = j + 1; k < shape.vars(); ++k) *inner *= shape.d[k];
  *outer = shape.cells() / (*inner * shape.d[j]);
}

template <typename Vec>
Eigen::VectorXd aggregate_levels(const Vec& x, const TableShape& shape, int j) {
  if (j < 0 || j >= shape.vars())
    throw domain_error("variable index out of range");
  long inner, outer;
  strides_for(shape, j, &inner, &outer);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(shape.d[j]);
  long idx = 0;
  for (long o = 0; o < outer; ++o)
    for (int l = 0; l < shape.d[j]; ++l)
      for (long i = 0; i < inner; ++i) out[l] += x[idx++];
  return out;
}

}  // namespace

Eigen::VectorXd cell_marginals(const TableParam& f, const TableShape& shape, int j) {
  shape.validate();
  if (f.f.size() != shape.cells())
    throw domain_error("cell_marginals: table size mismatch");
  return aggregate_levels(f.f, shape, j);
}

DirichletParams induced_dirichlet_margin(const DirichletParams& alpha,
                                         const TableShape& shape, int j) {
  shape.validate();
  alpha.validate();
  if (alpha.alpha.size() != shape.cells())
    throw domain_error("induced_dirichlet_margin: alpha size mismatch");
  return DirichletParams{aggregate_levels(alpha.alpha, shape, j)};
}

TableParam ipf_iproject(const TableShape& shape,
                        const std::vector<Eigen::VectorXd>& target_margins,
                        double tol, int max_iters) {
  shape.validate();
  if (!(tol > 0.0)) throw domain_error("ipf_iproject: tol must be positive");
  const int p = shape.vars();
  if (static_cast<int>(target_margins.size()) != p)
    throw domain_error("ipf_iproject: need one target margin per variable");
  for (int j = 0; j < p; ++j) {
    const auto& t = target_margins[j];
    if (t.size() != shape.d[j])
      throw domain_error("ipf_iproject: target margin length mismatch");
    for (int l = 0; l < t.size(); ++l)
      if (!(t[l] > 0.0))
        throw domain_error("ipf_iproject: target margins must be strictly positive");
    if (std::abs(t.sum() - 1.0) > 1e-9)
      throw domain_error("ipf_iproject: target margin must sum to 1");
  }

  const long cells = shape.cells();
  TableParam f{Eigen::VectorXd::Constant(cells, 1.0 / cells)};
  double residual = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int j = 0; j < p; ++j) {
      const Eigen::VectorXd current = aggregate_levels(f.f, shape, j);
      long inner, outer;
      strides_for(shape, j, &inner, &outer);
      long idx = 0;
      for (long o = 0; o < outer; ++o)
        for (int l = 0; l < shape.d[j]; ++l) {
          const double scale = target_margins[j][l] / current[l];
          for (long i = 0; i < inner; ++i) f.f[idx++] *= scale;
        }
    }
    f.f /= f.f.sum();
    residual = 0.0;
    for (int j = 0; j < p; ++j) {
      const Eigen::VectorXd fitted = aggregate_levels(f.f, shape, j);
      residual = std::max(
          residual, (fitted - target_margins[j]).cwiseAbs().maxCoeff());
    }
    if (residual <= tol) return f;
  }
  throw domain_error("ipf_iproject: no convergence, residual " +
                     std::to_string(residual));
}

DirichletParams informative_prior(const TableShape& shape,
                                  const std::vector<Eigen::VectorXd>& target_margins) {
  const TableParam f0 = ipf_iproject(shape, target_margins);
  return DirichletParams{static_cast<double>(shape.cells()) * f0.f};
}

DirichletParams noninformative_prior(const TableShape& shape) {
  shape.validate();
  const long cells = shape.cells();
  return DirichletParams{Eigen::VectorXd::Constant(
      cells, 1.0 / std::sqrt(static_cast<double>(cells)))};
}

TableParam conjugate_posterior_mean(const DirichletParams& prior,
                                    const CountTable& data) {
  prior.validate();
  data.validate();
  if (static_cast<long>(data.counts.size()) != prior.alpha.size())
    throw domain_error("conjugate_posterior_mean: dimension mismatch");
  Eigen::VectorXd post = prior.alpha;
  for (long c = 0; c < post.size(); ++c) post[c] += data.counts[c];
  return TableParam{post / post.sum()};
}

// ---------------------------------------------------------------------------
// LogGammaState
// ---------------------------------------------------------------------------

LogGammaState::LogGammaState(const TableShape& shape, Eigen::VectorXd logZ)
    : shape_(shape), logZ_(std::move(logZ)) {
  shape_.validate();
  if (logZ_.size() != shape_.cells())
    throw domain_error("LogGammaState: logZ size mismatch");
  rebuild_caches();
}

void LogGammaState::rebuild_caches() {
  for (long c = 0; c < logZ_.size(); ++c) {
    if (!std::isfinite(logZ_[c]) || std::abs(logZ_[c]) > 700.0)
      throw invariant_violation("LogGammaState: logZ out of numeric range");
  }
  z_ = logZ_.array().exp();
  zsum_ = z_.sum();
  level_sums_.clear();
  for (int j = 0; j < shape_.vars(); ++j)
    level_sums_.push_back(aggregate_levels(z_, shape_, j));
  updates_since_rebuild_ = 0;
}

Eigen::VectorXd LogGammaState::f() const {
  // normalization via max-subtraction; logZ itself is never shifted
  const double m = logZ_.maxCoeff();
  const Eigen::VectorXd scaled = (logZ_.array() - m).exp();
  return scaled / scaled.sum();
}

Eigen::VectorXd LogGammaState::margin(int j) const {
  if (j < 0 || j >= shape_.vars())
    throw domain_error("LogGammaState::margin: variable index out of range");
  return level_sums_[j] / zsum_;
}

void LogGammaState::update_cells(const std::vector<long>& cells,
                                 const Eigen::VectorXd& new_logZ_values) {
  if (static_cast<long>(cells.size()) != new_logZ_values.size())
    throw domain_error("LogGammaState::update_cells: size mismatch");
  for (std::size_t t = 0; t < cells.size(); ++t) {
    const long c = cells[t];
    if (std::abs(new_logZ_values[t]) > 700.0)
      throw invariant_violation("LogGammaState: proposed logZ out of range");
    const double znew = std::exp(new_logZ_values[t]);
    const double dz = znew - z_[c];
    logZ_[c] = new_logZ_values[t];
    z_[c] = znew;
    zsum_ += dz;
    const std::vector<int> levels = shape_.levels(c);
    for (int j = 0; j < shape_.vars(); ++j) level_sums_[j][levels[j]] += dz;
  }
  if (++updates_since_rebuild_ >= kRebuildInterval) rebuild_caches();
}

void LogGammaState::check_caches(double tol) const {
  const Eigen::VectorXd z = logZ_.array().exp();
  if (std::abs(z.sum() - zsum_) > tol * std::max(1.0, zsum_))
    throw invariant_violation("LogGammaState: zsum cache drifted");
  for (int j = 0; j < shape_.vars(); ++j) {
    const Eigen::VectorXd fresh = aggregate_levels(z, shape_, j);
    if ((fresh - level_sums_[j]).cwiseAbs().maxCoeff() >
        tol * std::max(1.0, zsum_))
      throw invariant_violation("LogGammaState: margin cache drifted");
  }
}

// ---------------------------------------------------------------------------
// Proposals and adjustment
// ---------------------------------------------------------------------------

SubsetProposal propose_subset(const LogGammaState& state, const CountTable& data,
                              const DirichletParams& prior, int subset_size,
                              double delta, RandomSource& rng) {
  const long cells = state.shape().cells();
  if (subset_size < 1 || subset_size > cells)
    throw domain_error("propose_subset: subset size out of range");
  if (static_cast<long>(data.counts.size()) != cells ||
      prior.alpha.size() != cells)
    throw domain_error("propose_subset: dimension mismatch");

  // uniform subset without replacement (partial Fisher-Yates)
  std::vector<long> pool(cells);
  std::iota(pool.begin(), pool.end(), 0L);
  SubsetProposal prop;
  prop.cells.resize(subset_size);
  for (int t = 0; t < subset_size; ++t) {
    const long j =
        t + static_cast<long>(rng.integer(static_cast<std::uint64_t>(cells - t)));
    std::swap(pool[t], pool[j]);
    prop.cells[t] = pool[t];
  }

  prop.new_logZ.resize(subset_size);
  const long n = data.n();
  double zsum_new = state.zsum();
  double log_r0 = 0.0;
  for (int t = 0; t < subset_size; ++t) {
    const long c = prop.cells[t];
    const double cur = state.logZ()[c];
    const double nxt = cur + delta * rng.normal();
    prop.new_logZ[t] = nxt;
    const double dlog = nxt - cur;
    const double znew = std::exp(nxt);
    zsum_new += znew - state.z(c);
    // gamma(alpha_c, 1) prior on Z plus the Z -> log Z Jacobian:
    // (alpha_c - 1) dlogZ - dZ + dlogZ
    log_r0 += prior.alpha[c] * dlog - (znew - state.z(c));
    log_r0 += static_cast<double>(data.counts[c]) * dlog;
  }
  log_r0 -= static_cast<double>(n) * (std::log(zsum_new) - std::log(state.zsum()));
  prop.log_r0 = log_r0;
  return prop;
}

double marginal_adjustment(const std::vector<Eigen::VectorXd>& margins_cur,
                           const std::vector<Eigen::VectorXd>& margins_prop,
                           const std::vector<DirichletParams>& p1_margins,
                           const std::vector<DirichletParams>& p0_margins) {
  const std::size_t p = margins_cur.size();
  if (margins_prop.size() != p || p1_margins.size() != p || p0_margins.size() != p)
    throw domain_error("marginal_adjustment: margin list size mismatch");
  double cur = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (int l = 0; l < margins_cur[j].size(); ++l)
      if (!(margins_cur[j][l] > 0.0))
        throw invariant_violation(
            "marginal_adjustment: current margin on the simplex boundary");
    cur += logpdf_dirichlet(p1_margins[j], margins_cur[j]) -
           logpdf_dirichlet(p0_margins[j], margins_cur[j]);
  }
  double prop = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (int l = 0; l < margins_prop[j].size(); ++l)
      if (!(margins_prop[j][l] > 0.0))
        return -std::numeric_limits<double>::infinity();
    prop += logpdf_dirichlet(p1_margins[j], margins_prop[j]) -
            logpdf_dirichlet(p0_margins[j], margins_prop[j]);
  }
  return prop - cur;
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

namespace {

struct StepOutcome {
  bool accepted = false;
};

StepOutcome ctab_step(LogGammaState& state, const CountTable& data,
                      const DirichletParams& base_prior,
                      const std::vector<DirichletParams>* p1,
                      const std::vector<DirichletParams>* p0, int subset_size,
                      double delta, RandomSource& rng) {
  SubsetProposal prop =
      propose_subset(state, data, base_prior, subset_size, delta, rng);
  double log_r = prop.log_r0;
  if (p1) {
    const int p = state.shape().vars();
    std::vector<Eigen::VectorXd> cur(p), nxt(p);
    for (int j = 0; j < p; ++j) cur[j] = state.margin(j);
    // apply, read proposed margins, then revert on rejection
    Eigen::VectorXd old_values(prop.cells.size());
    for (std::size_t t = 0; t < prop.cells.size(); ++t)
      old_values[t] = state.logZ()[prop.cells[t]];
    state.update_cells(prop.cells, prop.new_logZ);
    for (int j = 0; j < p; ++j) nxt[j] = state.margin(j);
    log_r += marginal_adjustment(cur, nxt, *p1, *p0);
    if (metropolis_accept(log_r, rng)) return {true};
    state.update_cells(prop.cells, old_values);
    return {false};
  }
  if (metropolis_accept(log_r, rng)) {
    state.update_cells(prop.cells, prop.new_logZ);
    return {true};
  }
  return {false};
}

}  // namespace

CtabChainResult run_ctab_chain(const CountTable& data, const TableShape& shape,
                               const DirichletParams& base_prior,
                               const std::optional<std::vector<DirichletParams>>&
                                   p1_margins,
                               const ChainConfig& config,
                               const CtabTuning& tuning) {
  shape.validate();
  data.validate();
  config.validate();
  const long cells = shape.cells();
  if (static_cast<long>(data.counts.size()) != cells)
    throw domain_error("run_ctab_chain: count table size mismatch");
  const int p = shape.vars();

  std::vector<DirichletParams> p0_margins;
  const std::vector<DirichletParams>* p1 = nullptr;
  if (p1_margins) {
    if (static_cast<int>(p1_margins->size()) != p)
      throw domain_error("run_ctab_chain: need one p1 margin per variable");
    for (int j = 0; j < p; ++j) {
      if ((*p1_margins)[j].alpha.size() != shape.d[j])
        throw domain_error("run_ctab_chain: p1 margin dimension mismatch");
      p0_margins.push_back(induced_dirichlet_margin(base_prior, shape, j));
    }
    p1 = &*p1_margins;
  }

  RandomSource rng(config.seed);
  int subset_size = tuning.subset_size > 0
                        ? tuning.subset_size
                        : static_cast<int>(std::max(1L, (cells + 19) / 20));
  double delta = tuning.delta;

  // initialize at the prior mean scale: logZ = log alpha_c (gamma mean)
  Eigen::VectorXd logZ0 = base_prior.alpha.array().log();
  LogGammaState state(shape, logZ0);

  if (tuning.pilot_tune) {
    for (int batch = 0; batch < 10; ++batch) {
      long acc = 0;
      const long batch_iters = 2000;
      for (long it = 0; it < batch_iters; ++it)
        acc += ctab_step(state, data, base_prior, p1,
                         p1 ? &p0_margins : nullptr, subset_size, delta, rng)
                   .accepted;
      const double rate = static_cast<double>(acc) / batch_iters;
      if (rate > 0.9)
        delta *= 2.0;
      else if (rate < 0.6)
        delta *= 0.5;
    }
  }

  const long saved = config.saved_draws();
  CtabChainResult result;
  result.tuned_delta = delta;
  result.subset_size = subset_size;
  int theta_dim = 0;
  for (int j = 0; j < p; ++j) theta_dim += shape.d[j];
  result.output.theta_samples.resize(saved, theta_dim);
  result.f_samples.resize(saved, cells);

  long accepted = 0, row = 0;
  result.output.accept_trace.reserve(config.iterations);
  for (long it = 0; it < config.iterations; ++it) {
    const bool acc = ctab_step(state, data, base_prior, p1,
                               p1 ? &p0_margins : nullptr, subset_size, delta, rng)
                         .accepted;
    accepted += acc;
    result.output.accept_trace.push_back(acc ? 1 : 0);
    if (it >= config.burn_in &&
        (it - config.burn_in) % config.thin == config.thin - 1) {
      // margins recomputed from logZ, not the incremental caches: apply/revert
      // round-trips can shift cache bits, while logZ restores exactly
      const TableParam f_now{state.f()};
      result.f_samples.row(row) = f_now.f.transpose();
      int off = 0;
      for (int j = 0; j < p; ++j) {
        result.output.theta_samples.row(row).segment(off, shape.d[j]) =
            cell_marginals(f_now, shape, j).transpose();
        off += shape.d[j];
      }
      ++row;
    }
  }
  state.check_caches(1e-8);

  result.output.acceptance_rate =
      static_cast<double>(accepted) / config.iterations;
  result.output.ess.resize(theta_dim);
  for (int c = 0; c < theta_dim; ++c) {
    std::vector<double> series(saved);
    for (long r = 0; r < saved; ++r)
      series[r] = result.output.theta_samples(r, c);
    result.output.ess[c] =
        saved >= 100 ? effective_sample_size(series) : static_cast<double>(saved);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

Eigen::MatrixXd two_way_marginal(const TableParam& f, const TableShape& shape,
                                 int j1, int j2) {
  shape.validate();
  if (j1 == j2 || j1 < 0 || j2 < 0 || j1 >= shape.vars() || j2 >= shape.vars())
    throw domain_error("two_way_marginal: invalid variable pair");
  if (f.f.size() != shape.cells())
    throw domain_error("two_way_marginal: table size mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(shape.d[j1], shape.d[j2]);
  for (long c = 0; c < f.f.size(); ++c) {
    const std::vector<int> lv = shape.levels(c);
    out(lv[j1], lv[j2]) += f.f[c];
  }
  return out;
}

Eigen::MatrixXd ldf(const TableParam& f, const TableShape& shape, int j1, int j2) {
  const Eigen::MatrixXd m = two_way_marginal(f, shape, j1, j2);
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b)
      if (!(m(a, b) > 0.0))
        throw domain_error("ldf: zero two-way cell (smooth the table first)");
  Eigen::MatrixXd out(m.rows() - 1, m.cols() - 1);
  for (Eigen::Index a = 0; a + 1 < m.rows(); ++a)
    for (Eigen::Index b = 0; b + 1 < m.cols(); ++b)
      out(a, b) = std::log(m(a, b) * m(a + 1, b + 1) /
                           (m(a, b + 1) * m(a + 1, b)));
  return out;
}

double metric_M(const std::vector<Eigen::VectorXd>& theta_hat,
                const std::vector<Eigen::VectorXd>& theta_true) {
  const std::size_t p = theta_hat.size();
  if (theta_true.size() != p || p == 0)
    throw domain_error("metric_M: margin list mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    if (theta_hat[j].size() != theta_true[j].size())
      throw domain_error("metric_M: margin length mismatch");
    double inner = 0.0;
    for (int c = 0; c < theta_hat[j].size(); ++c) {
      if (!(theta_hat[j][c] > 0.0) || !(theta_true[j][c] > 0.0))
        throw domain_error("metric_M: margins must be strictly positive");
      inner += theta_true[j][c] * std::log(theta_hat[j][c] / theta_true[j][c]);
    }
    total += std::abs(inner);
  }
  return total / static_cast<double>(p);
}

double metric_L(const TableParam& f_hat, const TableParam& f_true,
                const TableShape& shape) {
  const int p = shape.vars();
  double total = 0.0;
  long pairs = 0;
  for (int j1 = 0; j1 < p; ++j1)
    for (int j2 = j1 + 1; j2 < p; ++j2) {
      const Eigen::MatrixXd a = ldf(f_hat, shape, j1, j2);
      const Eigen::MatrixXd b = ldf(f_true, shape, j1, j2);
      total += (a - b).array().square().sum() /
               static_cast<double>((shape.d[j1] - 1) * (shape.d[j2] - 1));
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

TableParam smooth_zero_cells(const CountTable& counts, double epsilon) {
  counts.validate();
  if (!(epsilon > 0.0))
    throw domain_error("smooth_zero_cells: epsilon must be positive");
  Eigen::VectorXd f(counts.counts.size());
  for (std::size_t c = 0; c < counts.counts.size(); ++c)
    f[c] = std::max(static_cast<double>(counts.counts[c]), epsilon);
  return TableParam{f / f.sum()};
}

CountTable simulate_dataset(const TableParam& f_true, long n, RandomSource& rng) {
  if (n < 0) throw domain_error("simulate_dataset: negative sample size");
  const std::vector<long> counts = sample_multinomial(n, f_true.f, rng);
  return CountTable{counts};
}

}  // namespace msp::ctab
