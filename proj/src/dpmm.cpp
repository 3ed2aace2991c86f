#include "msp/dpmm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msp::dpmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<long> random_permutation(long n, RandomSource& rng) {
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0L);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng.integer(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  return order;
}

int sample_categorical(const Eigen::VectorXd& probs, RandomSource& rng) {
  const double u = rng.uniform() * probs.sum();
  double acc = 0.0;
  for (int k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u <= acc) return k;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

void Dataset::validate() const {
  if (y.rows() < 1 || y.cols() < 1) throw domain_error("Dataset: empty data");
  if (!y.allFinite()) throw domain_error("Dataset: non-finite entries");
}

// ---------------------------------------------------------------------------
// DpmmState
// ---------------------------------------------------------------------------

DpmmState::DpmmState(const Dataset& data, int p) {
  data.validate();
  const long n = data.n();
  assignment_.assign(n, 0);
  counts_.assign(1, n);
  sums_.assign(1, Eigen::VectorXd::Zero(p));
  outer_.assign(1, Eigen::MatrixXd::Zero(p, p));
  for (long i = 0; i < n; ++i) {
    sums_[0] += data.y.row(i).transpose();
    outer_[0] += data.y.row(i).transpose() * data.y.row(i);
  }
  theta_ = FunctionalValue::Zero(2 * p);
}

void DpmmState::remove(long i, const Dataset& data) {
  const int k = assignment_[i];
  if (k < 0) throw invariant_violation("DpmmState::remove: point not assigned");
  assignment_[i] = -1;
  counts_[k] -= 1;
  sums_[k] -= data.y.row(i).transpose();
  outer_[k] -= data.y.row(i).transpose() * data.y.row(i);
  if (counts_[k] == 0) {
    const int last = components() - 1;
    if (k != last) {
      counts_[k] = counts_[last];
      sums_[k] = std::move(sums_[last]);
      outer_[k] = std::move(outer_[last]);
      for (auto& g : assignment_)
        if (g == last) g = k;
    }
    counts_.pop_back();
    sums_.pop_back();
    outer_.pop_back();
  }
}

void DpmmState::insert(long i, int component, const Dataset& data) {
  if (assignment_[i] != -1)
    throw invariant_violation("DpmmState::insert: point already assigned");
  const int p = static_cast<int>(data.y.cols());
  if (component == components()) {
    counts_.push_back(0);
    sums_.push_back(Eigen::VectorXd::Zero(p));
    outer_.push_back(Eigen::MatrixXd::Zero(p, p));
  } else if (component > components()) {
    throw invariant_violation("DpmmState::insert: component out of range");
  }
  assignment_[i] = component;
  counts_[component] += 1;
  sums_[component] += data.y.row(i).transpose();
  outer_[component] += data.y.row(i).transpose() * data.y.row(i);
}

void DpmmState::check_consistency(const Dataset& data, double tol) const {
  const int K = components();
  const int p = static_cast<int>(data.y.cols());
  std::vector<long> counts(K, 0);
  std::vector<Eigen::VectorXd> sums(K, Eigen::VectorXd::Zero(p));
  std::vector<Eigen::MatrixXd> outer(K, Eigen::MatrixXd::Zero(p, p));
  long total = 0;
  for (long i = 0; i < n(); ++i) {
    const int k = assignment_[i];
    if (k < 0 || k >= K) throw invariant_violation("state: label out of range");
    ++counts[k];
    ++total;
    sums[k] += data.y.row(i).transpose();
    outer[k] += data.y.row(i).transpose() * data.y.row(i);
  }
  if (total != n()) throw invariant_violation("state: count total mismatch");
  for (int k = 0; k < K; ++k) {
    if (counts[k] != counts_[k] || counts[k] == 0)
      throw invariant_violation("state: component count mismatch");
    // scale-aware: incremental updates accumulate roundoff proportional to
    // the magnitude of the statistics
    const double sum_scale = 1.0 + sums[k].cwiseAbs().maxCoeff();
    const double outer_scale = 1.0 + outer[k].cwiseAbs().maxCoeff();
    if ((sums[k] - sums_[k]).cwiseAbs().maxCoeff() > tol * sum_scale ||
        (outer[k] - outer_[k]).cwiseAbs().maxCoeff() > tol * outer_scale)
      throw invariant_violation("state: sufficient statistics drifted");
  }
}

// ---------------------------------------------------------------------------
// Prior recipes
// ---------------------------------------------------------------------------

NiwHyper informative_hyperparameters(const Eigen::VectorXd& m0,
                                     const Eigen::VectorXd& v0, long n0,
                                     double alpha, const Eigen::MatrixXd& R) {
  const int p = static_cast<int>(m0.size());
  if (v0.size() != p || R.rows() != p || R.cols() != p)
    throw domain_error("informative_hyperparameters: dimension mismatch");
  for (int i = 0; i < p; ++i) {
    if (!(v0[i] > 0.0))
      throw domain_error("informative_hyperparameters: v0 must be positive");
    if (std::abs(R(i, i) - 1.0) > 1e-9)
      throw domain_error("informative_hyperparameters: R must have unit diagonal");
  }
  if (n0 <= p + 1)
    throw domain_error("informative_hyperparameters: n0 must exceed p+1");
  if (alpha < 0.0) throw domain_error("informative_hyperparameters: alpha < 0");
  const Eigen::VectorXd sd = v0.cwiseSqrt();
  const Eigen::MatrixXd V0 = sd.asDiagonal() * R * sd.asDiagonal();
  NiwHyper h;
  h.alpha = alpha;
  h.base.mu0 = m0;
  h.base.kappa0 = static_cast<double>(n0) / (alpha + 1.0);
  h.base.nu0 = static_cast<double>(n0);
  h.base.S0 = h.base.nu0 * V0;
  h.base.validate();
  return h;
}

NiwHyper noninformative_hyperparameters(const Dataset& data, double alpha) {
  data.validate();
  const long n = data.n();
  const int p = data.p();
  if (n < 2) throw domain_error("noninformative_hyperparameters: need n >= 2");
  const Eigen::VectorXd ybar = data.y.colwise().mean();
  const Eigen::MatrixXd centered = data.y.rowwise() - ybar.transpose();
  const Eigen::MatrixXd Sy =
      centered.transpose() * centered / static_cast<double>(n - 1);
  NiwHyper h;
  h.alpha = alpha;
  h.base.mu0 = ybar;
  h.base.kappa0 = 0.1;
  h.base.nu0 = p + 2;
  h.base.S0 = Sy;
  try {
    h.base.validate();
  } catch (const domain_error&) {
    throw domain_error(
        "noninformative_hyperparameters: singular sample covariance (add a "
        "small jitter to the data)");
  }
  return h;
}

// ---------------------------------------------------------------------------
// Collapsed conditionals
// ---------------------------------------------------------------------------

NiwParams component_posterior(const DpmmState& state, int k, const NiwHyper& hyper) {
  const double n = static_cast<double>(state.count(k));
  const NiwParams& pr = hyper.base;
  const Eigen::VectorXd ybar = state.sum(k) / n;
  NiwParams post;
  post.kappa0 = pr.kappa0 + n;
  post.nu0 = pr.nu0 + n;
  post.mu0 = (pr.kappa0 * pr.mu0 + state.sum(k)) / post.kappa0;
  const Eigen::MatrixXd scatter =
      state.sum_outer(k) - n * (ybar * ybar.transpose());
  const Eigen::VectorXd d = ybar - pr.mu0;
  post.S0 = pr.S0 + scatter +
            (pr.kappa0 * n / post.kappa0) * (d * d.transpose());
  post.S0 = 0.5 * (post.S0 + post.S0.transpose());
  return post;
}

namespace {

// NIW posterior-predictive Student-t log density for a single observation.
double predictive_logpdf(const NiwParams& niw, const Eigen::VectorXd& y) {
  const int p = static_cast<int>(y.size());
  const double dof = niw.nu0 - p + 1.0;
  const Eigen::MatrixXd scale =
      niw.S0 * ((niw.kappa0 + 1.0) / (niw.kappa0 * dof));
  return logpdf_mvt(niw.mu0, scale, dof, y);
}

}  // namespace

Eigen::VectorXd assignment_full_conditional(const DpmmState& state, long i,
                                            const Dataset& data,
                                            const NiwHyper& hyper,
                                            bool flat_likelihood) {
  if (state.assignment(i) != -1)
    throw invariant_violation(
        "assignment_full_conditional: point must be removed from the state first");
  const int K = state.components();
  Eigen::VectorXd logw(K + 1);
  const Eigen::VectorXd yi = data.y.row(i).transpose();
  for (int k = 0; k < K; ++k) {
    logw[k] = std::log(static_cast<double>(state.count(k)));
    if (!flat_likelihood)
      logw[k] += predictive_logpdf(component_posterior(state, k, hyper), yi);
  }
  logw[K] = std::log(hyper.alpha);
  if (!flat_likelihood) logw[K] += predictive_logpdf(hyper.base, yi);
  const double m = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - m).exp();
  return w / w.sum();
}

// ---------------------------------------------------------------------------
// Pitman conditional draw of Q
// ---------------------------------------------------------------------------

QDraw sample_q_given_partition(const DpmmState& state,
                               const NiwHyper& hyper, long S, RandomSource& rng,
                               bool flat_likelihood) {
  if (S < 100) throw domain_error("sample_q_given_partition: S must be >= 100");
  const int K = state.components();
  const long n = state.n();
  QDraw q;
  q.gamma = sample_beta(static_cast<double>(n), hyper.alpha, rng);

  DirichletParams occ;
  occ.alpha.resize(K);
  for (int k = 0; k < K; ++k) occ.alpha[k] = static_cast<double>(state.count(k));
  const Eigen::VectorXd w = sample_dirichlet(occ, rng);

  for (int k = 0; k < K; ++k) {
    const NiwParams post = flat_likelihood
                               ? hyper.base
                               : component_posterior(state, k, hyper);
    auto [mu, sigma] = sample_niw(post, rng);
    q.atoms.push_back({std::move(mu), std::move(sigma), q.gamma * w[k]});
  }

  // allocate S simulated psi-values across occupied atoms and the remainder
  Eigen::VectorXd probs(K + 1);
  probs.head(K) = q.gamma * w;
  probs[K] = 1.0 - q.gamma;
  const std::vector<long> counts = sample_multinomial(S, probs, rng);
  const long s = counts[K];
  q.residual_sample_count = s;

  if (s == 0) {
    // no fresh samples landed in the remainder; represent it with one atom
    auto [mu, sigma] = sample_niw(hyper.base, rng);
    q.atoms.push_back({std::move(mu), std::move(sigma), 1.0 - q.gamma});
    return q;
  }

  // Chinese restaurant process of length s; each block gets a fresh atom
  std::vector<long> block_sizes;
  for (long t = 0; t < s; ++t) {
    const double u = rng.uniform() * (static_cast<double>(t) + hyper.alpha);
    double acc = 0.0;
    bool placed = false;
    for (auto& b : block_sizes) {
      acc += static_cast<double>(b);
      if (u <= acc) {
        ++b;
        placed = true;
        break;
      }
    }
    if (!placed) block_sizes.push_back(1);
  }
  for (long b : block_sizes) {
    auto [mu, sigma] = sample_niw(hyper.base, rng);
    const double weight =
        (1.0 - q.gamma) * static_cast<double>(b) / static_cast<double>(s);
    q.atoms.push_back({std::move(mu), std::move(sigma), weight});
  }
  return q;
}

FunctionalValue functionals_from_q(const QDraw& q) {
  if (q.atoms.empty()) throw domain_error("functionals_from_q: no atoms");
  const int p = static_cast<int>(q.atoms.front().mu.size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(p, p);
  for (const auto& a : q.atoms) {
    m += a.weight * a.mu;
    m2 += a.weight * (a.sigma + a.mu * a.mu.transpose());
  }
  FunctionalValue theta(2 * p);
  theta.head(p) = m;
  const Eigen::VectorXd v = (m2 - m * m.transpose()).diagonal();
  for (int j = 0; j < p; ++j) {
    if (!(v[j] > 0.0))
      throw invariant_violation("functionals_from_q: nonpositive variance");
    theta[p + j] = v[j];
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

void gibbs_sweep(DpmmState& state, const Dataset& data, const NiwHyper& hyper,
                 RandomSource& rng, bool flat_likelihood) {
  for (long i : random_permutation(state.n(), rng)) {
    state.remove(i, data);
    const Eigen::VectorXd probs =
        assignment_full_conditional(state, i, data, hyper, flat_likelihood);
    state.insert(i, sample_categorical(probs, rng), data);
  }
}

void msp_sweep(DpmmState& state, const Dataset& data, const NiwHyper& hyper,
               const MarginalTargetPrior* p1, const InducedMarginalEstimate* p0,
               long S, RandomSource& rng, std::vector<char>* accept_trace,
               long* accept_count, long* proposal_count, bool flat_likelihood) {
  for (long i : random_permutation(state.n(), rng)) {
    const int old_component = state.assignment(i);
    const bool was_singleton = state.count(old_component) == 1;
    state.remove(i, data);
    const int restore_to = was_singleton ? state.components() : old_component;

    const Eigen::VectorXd probs =
        assignment_full_conditional(state, i, data, hyper, flat_likelihood);
    const int proposed = sample_categorical(probs, rng);
    state.insert(i, proposed, data);

    const QDraw q =
        sample_q_given_partition(state, hyper, S, rng, flat_likelihood);
    const FunctionalValue theta_prop = functionals_from_q(q);

    const double log_r =
        (p1 && p0) ? msp_log_adjustment(*p1, *p0, theta_prop, state.theta()) : 0.0;
    const bool accept = metropolis_accept(log_r, rng);
    if (proposal_count) ++*proposal_count;
    if (accept_trace) accept_trace->push_back(accept ? 1 : 0);
    if (accept) {
      if (accept_count) ++*accept_count;
      state.set_theta(theta_prop);
    } else {
      // revert the whole (g_k, theta) pair
      state.remove(i, data);
      state.insert(i, restore_to, data);
    }
  }
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

DpmmChainResult run_dpmm_chain(const Dataset& data, const DpmmRunSpec& spec,
                               const ChainConfig& config) {
  config.validate();
  data.validate();
  const int p = data.p();
  RandomSource rng(config.seed);

  DpmmState state(data, p);
  state.set_theta(functionals_from_q(sample_q_given_partition(
      state, spec.hyper, spec.atoms_per_qdraw, rng, spec.flat_likelihood)));

  const long saved = config.saved_draws();
  DpmmChainResult result;
  result.output.theta_samples.resize(saved, 2 * p);
  result.mixtures.reserve(saved);

  long accepted = 0, proposed = 0, row = 0;
  for (long it = 0; it < config.iterations; ++it) {
    if (spec.prior == PriorKind::Msp) {
      // an empty p1 means no marginal adjustment: the same kernel serves as
      // the base chain for stream-identity comparisons
      const bool adjust = spec.p1.dim() > 0;
      msp_sweep(state, data, spec.hyper, adjust ? &spec.p1 : nullptr,
                adjust ? &spec.p0 : nullptr, spec.atoms_per_qdraw,
                rng, &result.output.accept_trace, &accepted, &proposed,
                spec.flat_likelihood);
    } else {
      gibbs_sweep(state, data, spec.hyper, rng, spec.flat_likelihood);
      accepted += state.n();
      proposed += state.n();
    }
    if (it >= config.burn_in && (it - config.burn_in) % config.thin == config.thin - 1) {
      QDraw q;
      if (spec.prior == PriorKind::Msp) {
        // theta is part of the chain state; draw a mixture record consistent
        // with the current partition for the predictive
        q = sample_q_given_partition(state, spec.hyper,
                                     spec.atoms_per_qdraw, rng,
                                     spec.flat_likelihood);
      } else {
        q = sample_q_given_partition(state, spec.hyper,
                                     spec.atoms_per_qdraw, rng,
                                     spec.flat_likelihood);
        state.set_theta(functionals_from_q(q));
      }
      result.output.theta_samples.row(row++) = state.theta().transpose();
      result.mixtures.push_back(std::move(q));
    }
    if ((it + 1) % 1000 == 0) state.check_consistency(data);
  }

  result.output.acceptance_rate =
      proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0;
  result.output.ess.resize(2 * p);
  for (int c = 0; c < 2 * p; ++c) {
    std::vector<double> series(saved);
    for (long r = 0; r < saved; ++r) series[r] = result.output.theta_samples(r, c);
    result.output.ess[c] =
        saved >= 100 ? effective_sample_size(series) : static_cast<double>(saved);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prior simulation and predictive density
// ---------------------------------------------------------------------------

FunctionalValue sample_prior_functionals(const NiwHyper& hyper, RandomSource& rng,
                                         double weight_tol, int max_sticks) {
  QDraw q;
  double remaining = 1.0;
  for (int i = 0; i < max_sticks && remaining > weight_tol; ++i) {
    const double v = sample_beta(1.0, hyper.alpha, rng);
    auto [mu, sigma] = sample_niw(hyper.base, rng);
    q.atoms.push_back({std::move(mu), std::move(sigma), remaining * v});
    remaining *= 1.0 - v;
  }
  if (remaining > 0.0) {
    auto [mu, sigma] = sample_niw(hyper.base, rng);
    q.atoms.push_back({std::move(mu), std::move(sigma), remaining});
  }
  return functionals_from_q(q);
}

namespace {

struct AtomEval {
  Eigen::MatrixXd chol_lower;
  Eigen::VectorXd mu;
  double log_norm;  // log(weight / n_mixtures) - log normal constant
};

std::vector<AtomEval> prepare_atoms(const std::vector<QDraw>& mixtures) {
  std::vector<AtomEval> evals;
  const double n_mix = static_cast<double>(mixtures.size());
  for (const auto& q : mixtures) {
    for (const auto& a : q.atoms) {
      AtomEval e;
      const auto llt = spd_cholesky(a.sigma);
      e.chol_lower = llt.matrixL();
      e.mu = a.mu;
      double logdet = 0.0;
      for (int i = 0; i < e.chol_lower.rows(); ++i)
        logdet += 2.0 * std::log(e.chol_lower(i, i));
      e.log_norm = std::log(a.weight / n_mix) -
                   0.5 * (a.mu.size() * kLog2Pi + logdet);
      evals.push_back(std::move(e));
    }
  }
  return evals;
}

double eval_point(const std::vector<AtomEval>& atoms, const Eigen::VectorXd& y) {
  double density = 0.0;
  for (const auto& a : atoms) {
    const Eigen::VectorXd w =
        a.chol_lower.triangularView<Eigen::Lower>().solve(y - a.mu);
    density += std::exp(a.log_norm - 0.5 * w.squaredNorm());
  }
  return density;
}

}  // namespace

Eigen::VectorXd posterior_predictive_density_serial(
    const std::vector<QDraw>& mixtures, const Eigen::MatrixXd& grid) {
  if (mixtures.empty())
    throw domain_error("posterior_predictive_density: no saved mixtures");
  const auto atoms = prepare_atoms(mixtures);
  Eigen::VectorXd out(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g)
    out[g] = eval_point(atoms, grid.row(g).transpose());
  return out;
}

Eigen::VectorXd posterior_predictive_density(const std::vector<QDraw>& mixtures,
                                             const Eigen::MatrixXd& grid) {
  if (mixtures.empty())
    throw domain_error("posterior_predictive_density: no saved mixtures");
  const auto atoms = prepare_atoms(mixtures);
  Eigen::VectorXd out(grid.rows());
  const Eigen::Index rows = grid.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index g = 0; g < rows; ++g)
    out[g] = eval_point(atoms, grid.row(g).transpose());
  return out;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> yamato_mean_prior(
    const Eigen::VectorXd& q0_mean, const Eigen::MatrixXd& q0_cov, double alpha) {
  spd_cholesky(q0_cov);
  return {q0_mean, q0_cov / (alpha + 1.0)};
}

}  // namespace msp::dpmm
