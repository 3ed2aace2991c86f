// Command-line front end: configuration, chain execution, p0 estimation,
// dataset simulation and replicate studies.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "msp/ctab.hpp"
#include "msp/dpmm.hpp"
#include "msp/io_util.hpp"
#include "msp/msp_core.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msp;

namespace {

// exit codes: 0 ok, 2 validation, 3 numeric, 4 partial study failure
struct CliError {
  int code;
  std::string message;
};

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError{2, "cannot open config: " + path.string()};
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw CliError{2, std::string("config parse error: ") + e.what()};
  }
  return cfg;
}

std::uint64_t config_hash(const json& cfg) {
  // FNV-1a over the canonical dump
  const std::string s = cfg.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out))
      throw CliError{2, "output path is not a directory: " + out.string()};
    if (!force && !fs::is_empty(out))
      throw CliError{2, "output directory not empty (use --force): " + out.string()};
  } else {
    fs::create_directories(out);
  }
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << content;
    if (!out) throw CliError{3, "write failed: " + path.string()};
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

template <typename T>
T require(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw CliError{2, "config missing field: " + key};
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw CliError{2, "config field has wrong type: " + key};
  }
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw CliError{2, "config field has wrong type: " + key};
  }
}

Eigen::VectorXd to_vector(const json& a, const std::string& what) {
  if (!a.is_array() || a.empty())
    throw CliError{2, what + " must be a non-empty array"};
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw CliError{2, what + " must be numeric"};
    v[static_cast<int>(i)] = a[i].get<double>();
  }
  return v;
}

json from_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ChainConfig chain_config(const json& cfg, std::uint64_t seed) {
  if (!cfg.contains("chain")) throw CliError{2, "config missing field: chain"};
  const json& c = cfg.at("chain");
  ChainConfig out;
  out.iterations = require<long>(c, "iterations");
  out.thin = get_or<long>(c, "thin", 1);
  out.burn_in = get_or<long>(c, "burn_in", out.iterations / 10);
  out.seed = seed;
  try {
    out.validate();
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
  return out;
}

std::uint64_t resolve_seed(const json& cfg, const std::optional<std::uint64_t>& cli_seed) {
  if (cli_seed) return *cli_seed;
  if (!cfg.contains("seed")) throw CliError{2, "seed required (config or --seed)"};
  return require<std::uint64_t>(cfg, "seed");
}

// ---------------------------------------------------------------------------
// dpmm configuration
// ---------------------------------------------------------------------------

dpmm::NiwHyper informative_hyper_from(const json& cfg, double alpha) {
  if (!cfg.contains("informative"))
    throw CliError{2, "informative prior requires an 'informative' block"};
  const json& b = cfg.at("informative");
  const Eigen::VectorXd m0 = to_vector(require<json>(b, "m0"), "informative.m0");
  const Eigen::VectorXd v0 = to_vector(require<json>(b, "v0"), "informative.v0");
  const long n0 = require<long>(b, "n0");
  const int p = static_cast<int>(m0.size());
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(p, p);
  if (b.contains("R")) {
    const json& rows = b.at("R");
    if (!rows.is_array() || static_cast<int>(rows.size()) != p)
      throw CliError{2, "informative.R must be a p x p matrix"};
    for (int i = 0; i < p; ++i) {
      const Eigen::VectorXd row = to_vector(rows[i], "informative.R row");
      if (row.size() != p) throw CliError{2, "informative.R must be square"};
      R.row(i) = row.transpose();
    }
  }
  try {
    return dpmm::informative_hyperparameters(m0, v0, n0, alpha, R);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
}

dpmm::NiwHyper hyper_from(const json& cfg, const std::string& prior,
                          const dpmm::Dataset& data) {
  const double alpha = get_or<double>(cfg, "alpha", 1.0);
  const bool informative =
      prior == "informative" ||
      (prior == "msp" && get_or<std::string>(cfg, "base", "noninformative") ==
                             "informative");
  try {
    return informative ? informative_hyper_from(cfg, alpha)
                       : dpmm::noninformative_hyperparameters(data, alpha);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
}

MarginalTargetPrior p1_from(const json& cfg) {
  if (!cfg.contains("p1") || !cfg.at("p1").contains("factors"))
    throw CliError{2, "msp prior requires p1.factors"};
  std::vector<PriorFactor> factors;
  int offset = 0;
  for (const json& fj : cfg.at("p1").at("factors")) {
    PriorFactor f;
    const std::string kind = require<std::string>(fj, "kind");
    if (kind == "normal")
      f.kind = PriorFactor::Kind::Normal;
    else if (kind == "inverse_gamma")
      f.kind = PriorFactor::Kind::InverseGamma;
    else if (kind == "dirichlet")
      f.kind = PriorFactor::Kind::Dirichlet;
    else
      throw CliError{2, "unknown p1 factor kind: " + kind};
    f.params = to_vector(require<json>(fj, "params"), "p1 factor params");
    f.offset = offset;
    offset += f.block_size();
    factors.push_back(std::move(f));
  }
  try {
    return MarginalTargetPrior(std::move(factors));
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
}

std::vector<int> default_log_coords(int p) {
  std::vector<int> out;
  for (int j = p; j < 2 * p; ++j) out.push_back(j);  // variance coordinates
  return out;
}

json estimate_to_json(const InducedMarginalEstimate& e) {
  json j;
  j["dim"] = e.dim();
  j["fit_sample_size"] = e.fit_sample_size();
  j["log_coords"] = e.log_coords();
  switch (e.kind()) {
    case EstimatorKind::MomentFitSkewT: {
      j["kind"] = "skew_t";
      json margins = json::array();
      for (const auto& m : e.skew_t_margins())
        margins.push_back({{"xi", m.xi},
                           {"omega", m.omega},
                           {"alpha", m.alpha},
                           {"nu", m.nu}});
      j["margins"] = margins;
      break;
    }
    case EstimatorKind::GaussianKde: {
      j["kind"] = "kde";
      json points = json::array();
      for (Eigen::Index r = 0; r < e.kde_points().rows(); ++r)
        points.push_back(from_vector(e.kde_points().row(r).transpose()));
      j["points"] = points;
      j["bandwidths"] = from_vector(e.kde_bandwidths());
      break;
    }
    case EstimatorKind::ProductOfDirichlet: {
      j["kind"] = "product_dirichlet";
      json margins = json::array();
      for (const auto& m : e.dirichlet_margins())
        margins.push_back(from_vector(m.alpha));
      j["margins"] = margins;
      break;
    }
  }
  return j;
}

InducedMarginalEstimate estimate_from_json(const json& j) {
  const std::string kind = require<std::string>(j, "kind");
  const std::vector<int> log_coords =
      get_or<std::vector<int>>(j, "log_coords", {});
  try {
    if (kind == "skew_t") {
      std::vector<SkewTMargin> margins;
      for (const json& mj : j.at("margins"))
        margins.push_back({require<double>(mj, "xi"), require<double>(mj, "omega"),
                           require<double>(mj, "alpha"), require<double>(mj, "nu")});
      return InducedMarginalEstimate::from_skew_t(
          std::move(margins), log_coords, get_or<int>(j, "fit_sample_size", 0));
    }
    if (kind == "kde") {
      const json& pts = j.at("points");
      const Eigen::VectorXd bw = to_vector(j.at("bandwidths"), "p0 bandwidths");
      Eigen::MatrixXd points(pts.size(), bw.size());
      for (std::size_t r = 0; r < pts.size(); ++r)
        points.row(static_cast<Eigen::Index>(r)) =
            to_vector(pts[r], "p0 point").transpose();
      return InducedMarginalEstimate::from_kde_points(std::move(points), bw,
                                                      log_coords);
    }
    if (kind == "product_dirichlet") {
      std::vector<DirichletParams> margins;
      for (const json& mj : j.at("margins"))
        margins.push_back(DirichletParams{to_vector(mj, "p0 margin")});
      return InducedMarginalEstimate::product_of_dirichlet(margins);
    }
  } catch (const json::exception& e) {
    throw CliError{2, std::string("p0 artifact malformed: ") + e.what()};
  } catch (const domain_error& e) {
    throw CliError{2, std::string("p0 artifact invalid: ") + e.what()};
  }
  throw CliError{2, "unknown p0 artifact kind: " + kind};
}

// Fit p0-hat from prior theta draws.  Goes through the fit factories directly
// so that deliberately tiny S still produces a (flagged) artifact.
InducedMarginalEstimate fit_p0(const PriorThetaSampler& sampler, int S,
                               const std::string& kind,
                               const std::vector<int>& log_coords,
                               RandomSource& rng) {
  if (S < 2) throw CliError{2, "p0 fit needs S >= 2"};
  FunctionalValue first = sampler(rng);
  Eigen::MatrixXd draws(S, first.size());
  draws.row(0) = first;
  for (int i = 1; i < S; ++i) draws.row(i) = sampler(rng);
  if (kind == "skew_t")
    return InducedMarginalEstimate::fit_skew_t(draws, log_coords);
  if (kind == "kde") return InducedMarginalEstimate::fit_kde(draws, log_coords);
  throw CliError{2, "unknown p0 estimator kind: " + kind};
}

InducedMarginalEstimate p0_for_fit(const json& cfg, const dpmm::NiwHyper& hyper,
                                   std::uint64_t seed) {
  const json p0cfg = get_or<json>(cfg, "p0", json::object());
  if (p0cfg.contains("artifact")) {
    const fs::path path = p0cfg.at("artifact").get<std::string>();
    if (!fs::exists(path))
      throw CliError{2, "p0 artifact not found: " + path.string()};
    return estimate_from_json(load_config(path));
  }
  const int S = get_or<int>(p0cfg, "S", 10000);
  const std::string kind = get_or<std::string>(p0cfg, "kind", "skew_t");
  RandomSource rng = RandomSource(seed).split(0xb0);
  PriorThetaSampler sampler = [&hyper](RandomSource& r) {
    return dpmm::sample_prior_functionals(hyper, r);
  };
  return fit_p0(sampler, S, kind, default_log_coords(hyper.dim()), rng);
}

// ---------------------------------------------------------------------------
// ctab configuration
// ---------------------------------------------------------------------------

ctab::TableShape shape_from(const json& cfg) {
  ctab::TableShape s{require<std::vector<int>>(cfg, "shape")};
  try {
    s.validate();
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
  return s;
}

std::vector<Eigen::VectorXd> margins_from(const json& cfg, const std::string& key,
                                          const ctab::TableShape& shape) {
  if (!cfg.contains(key)) throw CliError{2, "config missing field: " + key};
  const json& list = cfg.at(key);
  if (static_cast<int>(list.size()) != shape.vars())
    throw CliError{2, key + " needs one entry per variable"};
  std::vector<Eigen::VectorXd> out;
  for (int j = 0; j < shape.vars(); ++j) {
    Eigen::VectorXd m = to_vector(list[j], key);
    if (m.size() != shape.d[j])
      throw CliError{2, key + " entry length mismatch for variable " +
                            std::to_string(j)};
    out.push_back(std::move(m));
  }
  return out;
}

DirichletParams ctab_base_prior(const json& cfg, const std::string& prior,
                                const ctab::TableShape& shape) {
  try {
    if (prior == "informative") {
      std::vector<Eigen::VectorXd> targets =
          margins_from(cfg, "target_margins", shape);
      for (auto& t : targets) t /= t.sum();
      return ctab::informative_prior(shape, targets);
    }
    return ctab::noninformative_prior(shape);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
}

std::vector<DirichletParams> p1_margins_from(const json& cfg,
                                             const ctab::TableShape& shape) {
  std::vector<DirichletParams> out;
  for (Eigen::VectorXd& m : margins_from(cfg, "p1_margins", shape)) {
    DirichletParams d{std::move(m)};
    try {
      d.validate();
    } catch (const domain_error& e) {
      throw CliError{2, std::string("p1_margins: ") + e.what()};
    }
    out.push_back(std::move(d));
  }
  return out;
}

ctab::TableParam truth_from(const json& cfg, const ctab::TableShape& shape) {
  if (!cfg.contains("truth")) throw CliError{2, "config missing field: truth"};
  const json& t = cfg.at("truth");
  try {
    if (t.contains("table")) {
      const fs::path path = t.at("table").get<std::string>();
      if (!fs::exists(path)) throw CliError{2, "truth table not found: " + path.string()};
      return io::read_table_param_csv(path, shape);
    }
    if (t.contains("smooth")) {
      const json& s = t.at("smooth");
      const fs::path path = require<std::string>(s, "counts");
      if (!fs::exists(path)) throw CliError{2, "truth counts not found: " + path.string()};
      const ctab::CountTable counts = io::read_count_table_csv(path, shape);
      return ctab::smooth_zero_cells(counts, get_or<double>(s, "epsilon", 0.5));
    }
  } catch (const domain_error& e) {
    throw CliError{2, std::string("truth: ") + e.what()};
  }
  throw CliError{2, "truth must contain 'table' or 'smooth'"};
}

std::vector<std::string> theta_headers(const ctab::TableShape& shape) {
  std::vector<std::string> out;
  for (int j = 0; j < shape.vars(); ++j)
    for (int l = 0; l < shape.d[j]; ++l)
      out.push_back("m" + std::to_string(j + 1) + "_" + std::to_string(l + 1));
  return out;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

struct ManifestBuilder {
  json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  ManifestBuilder(const std::string& command, const json& cfg, std::uint64_t seed) {
    j["command"] = command;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = seed;
    j["artifacts"] = json::array();
    j["warnings"] = json::array();
  }

  void artifact(const fs::path& path) {
    j["artifacts"].push_back(path.filename().string());
  }
  void warn(const std::string& w) { j["warnings"].push_back(w); }

  void write(const fs::path& out_dir) {
    j["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    write_json(out_dir / "manifest.json", j);
  }
};

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit_dpmm(const json& cfg, const fs::path& out, std::uint64_t seed) {
  const std::string prior = require<std::string>(cfg, "prior");
  const fs::path data_path = require<std::string>(cfg, "data");
  if (!fs::exists(data_path))
    throw CliError{2, "data file not found: " + data_path.string()};
  dpmm::Dataset data;
  try {
    data = io::read_dataset_csv(data_path);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
  const int p = data.p();

  dpmm::DpmmRunSpec spec;
  spec.hyper = hyper_from(cfg, prior, data);
  spec.atoms_per_qdraw = get_or<long>(cfg, "atoms_per_qdraw", 1000);
  spec.flat_likelihood = get_or<bool>(cfg, "flat_likelihood", false);
  if (prior == "informative")
    spec.prior = dpmm::PriorKind::Informative;
  else if (prior == "noninformative")
    spec.prior = dpmm::PriorKind::Noninformative;
  else if (prior == "msp")
    spec.prior = dpmm::PriorKind::Msp;
  else
    throw CliError{2, "unknown prior: " + prior};

  if (spec.prior == dpmm::PriorKind::Msp) {
    spec.p1 = p1_from(cfg);
    if (spec.p1.dim() != 2 * p)
      throw CliError{2, "p1 dimension must be 2p = " + std::to_string(2 * p)};
    spec.p0 = p0_for_fit(cfg, spec.hyper, seed);
    if (spec.p0.dim() != 2 * p)
      throw CliError{2, "p0 dimension must be 2p = " + std::to_string(2 * p)};
    RandomSource check_rng = RandomSource(seed).split(0xac);
    try {
      validate_absolute_continuity(spec.p1, spec.p0, 100, check_rng);
    } catch (const domain_error& e) {
      throw CliError{2, e.what()};
    }
  }

  const ChainConfig config = chain_config(cfg, seed);
  ManifestBuilder manifest("fit", cfg, seed);

  dpmm::DpmmChainResult result;
  try {
    result = dpmm::run_dpmm_chain(data, spec, config);
  } catch (const std::runtime_error& e) {
    throw CliError{3, e.what()};
  }

  std::vector<std::string> headers;
  for (int j = 0; j < p; ++j) headers.push_back("mean_" + std::to_string(j + 1));
  for (int j = 0; j < p; ++j) headers.push_back("var_" + std::to_string(j + 1));
  io::write_matrix_csv(out / "theta_samples.csv", result.output.theta_samples,
                       headers);
  manifest.artifact(out / "theta_samples.csv");

  if (cfg.contains("grid")) {
    const json& g = cfg.at("grid");
    const Eigen::VectorXd lo = to_vector(require<json>(g, "min"), "grid.min");
    const Eigen::VectorXd hi = to_vector(require<json>(g, "max"), "grid.max");
    const std::vector<int> npts = require<std::vector<int>>(g, "points");
    if (lo.size() != p || hi.size() != p || static_cast<int>(npts.size()) != p)
      throw CliError{2, "grid must give min/max/points per coordinate"};
    long total = 1;
    for (int n : npts) {
      if (n < 2) throw CliError{2, "grid.points entries must be >= 2"};
      total *= n;
    }
    Eigen::MatrixXd grid(total, p);
    for (long r = 0; r < total; ++r) {
      long rem = r;
      for (int j = p - 1; j >= 0; --j) {
        const int i = static_cast<int>(rem % npts[j]);
        rem /= npts[j];
        grid(r, j) = lo[j] + (hi[j] - lo[j]) * i / (npts[j] - 1);
      }
    }
    Eigen::VectorXd density;
    try {
      density = dpmm::posterior_predictive_density(result.mixtures, grid);
    } catch (const std::runtime_error& e) {
      throw CliError{3, e.what()};
    }
    Eigen::MatrixXd table(total, p + 1);
    table.leftCols(p) = grid;
    table.col(p) = density;
    std::vector<std::string> gh;
    for (int j = 0; j < p; ++j) gh.push_back("x" + std::to_string(j + 1));
    gh.push_back("density");
    io::write_matrix_csv(out / "predictive_density.csv", table, gh);
    manifest.artifact(out / "predictive_density.csv");
  }

  manifest.j["acceptance_rate"] = result.output.acceptance_rate;
  manifest.j["ess"] = from_vector(result.output.ess);
  manifest.j["saved_draws"] = result.output.theta_samples.rows();
  manifest.write(out);
  return 0;
}

int cmd_fit_ctab(const json& cfg, const fs::path& out, std::uint64_t seed) {
  const std::string prior = require<std::string>(cfg, "prior");
  const ctab::TableShape shape = shape_from(cfg);
  const fs::path data_path = require<std::string>(cfg, "data");
  if (!fs::exists(data_path))
    throw CliError{2, "data file not found: " + data_path.string()};
  ctab::CountTable data;
  try {
    data = io::read_count_table_csv(data_path, shape);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }

  const DirichletParams base = ctab_base_prior(cfg, prior, shape);
  std::optional<std::vector<DirichletParams>> p1;
  if (prior == "msp")
    p1 = p1_margins_from(cfg, shape);
  else if (prior != "informative" && prior != "noninformative")
    throw CliError{2, "unknown prior: " + prior};

  ctab::CtabTuning tuning;
  if (cfg.contains("tuning")) {
    const json& t = cfg.at("tuning");
    tuning.subset_size = get_or<int>(t, "subset_size", 0);
    tuning.delta = get_or<double>(t, "delta", 0.5);
    tuning.pilot_tune = get_or<bool>(t, "pilot", true);
  }

  const ChainConfig config = chain_config(cfg, seed);
  ManifestBuilder manifest("fit", cfg, seed);

  ctab::CtabChainResult result;
  try {
    result = ctab::run_ctab_chain(data, shape, base, p1, config, tuning);
  } catch (const std::runtime_error& e) {
    throw CliError{3, e.what()};
  }

  io::write_matrix_csv(out / "theta_samples.csv", result.output.theta_samples,
                       theta_headers(shape));
  manifest.artifact(out / "theta_samples.csv");

  const ctab::TableParam post_mean{result.f_samples.colwise().mean().transpose()};
  io::write_table_param_csv(out / "posterior_mean.csv", post_mean, shape);
  manifest.artifact(out / "posterior_mean.csv");

  manifest.j["acceptance_rate"] = result.output.acceptance_rate;
  manifest.j["ess"] = from_vector(result.output.ess);
  manifest.j["saved_draws"] = result.output.theta_samples.rows();
  manifest.j["tuned_delta"] = result.tuned_delta;
  manifest.j["subset_size"] = result.subset_size;
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------------------
// estimate-p0
// ---------------------------------------------------------------------------

int cmd_estimate_p0(const json& cfg, const fs::path& out, std::uint64_t seed) {
  const std::string model = require<std::string>(cfg, "model");
  ManifestBuilder manifest("estimate-p0", cfg, seed);
  json artifact;

  if (model == "dpmm") {
    const std::string prior = get_or<std::string>(cfg, "prior", "noninformative");
    dpmm::NiwHyper hyper;
    if (prior == "informative") {
      hyper = informative_hyper_from(cfg, get_or<double>(cfg, "alpha", 1.0));
    } else {
      const fs::path data_path = require<std::string>(cfg, "data");
      if (!fs::exists(data_path))
        throw CliError{2, "data file not found: " + data_path.string()};
      dpmm::Dataset data;
      try {
        data = io::read_dataset_csv(data_path);
        hyper = dpmm::noninformative_hyperparameters(
            data, get_or<double>(cfg, "alpha", 1.0));
      } catch (const domain_error& e) {
        throw CliError{2, e.what()};
      }
    }
    const json p0cfg = get_or<json>(cfg, "p0", json::object());
    const int S = get_or<int>(p0cfg, "S", 10000);
    const std::string kind = get_or<std::string>(p0cfg, "kind", "skew_t");
    RandomSource rng = RandomSource(seed).split(0xb0);
    PriorThetaSampler sampler = [&hyper](RandomSource& r) {
      return dpmm::sample_prior_functionals(hyper, r);
    };
    InducedMarginalEstimate est;
    try {
      est = fit_p0(sampler, S, kind, default_log_coords(hyper.dim()), rng);
    } catch (const domain_error& e) {
      throw CliError{3, e.what()};
    }
    // held-out diagnostics: score fresh prior draws under the frozen fit
    const int held = std::max(S / 5, 20);
    double score = 0.0;
    for (int i = 0; i < held; ++i) score += est.log_density(sampler(rng));
    artifact = estimate_to_json(est);
    artifact["diagnostics"] = {
        {"held_out_draws", held},
        {"held_out_mean_log_score", score / held},
        {"low_sample_warning", S < 1000}};
    if (S < 1000)
      manifest.warn("p0 fit sample size below recommended minimum (1000)");
  } else if (model == "ctab") {
    const ctab::TableShape shape = shape_from(cfg);
    const std::string prior = get_or<std::string>(cfg, "prior", "noninformative");
    const DirichletParams base = ctab_base_prior(cfg, prior, shape);
    std::vector<DirichletParams> margins;
    for (int j = 0; j < shape.vars(); ++j)
      margins.push_back(ctab::induced_dirichlet_margin(base, shape, j));
    artifact = estimate_to_json(
        InducedMarginalEstimate::product_of_dirichlet(margins));
    artifact["diagnostics"] = {{"closed_form", true}};
  } else {
    throw CliError{2, "unknown model: " + model};
  }

  write_json(out / "p0.json", artifact);
  manifest.artifact(out / "p0.json");
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const json& cfg, const fs::path& out, std::uint64_t seed) {
  if (require<std::string>(cfg, "model") != "ctab")
    throw CliError{2, "simulate supports model = ctab only"};
  const ctab::TableShape shape = shape_from(cfg);
  const ctab::TableParam truth = truth_from(cfg, shape);
  const json sim = get_or<json>(cfg, "simulate", json::object());
  const long n = require<long>(sim, "n");
  const int replicates = get_or<int>(sim, "replicates", 1);
  if (n < 0 || replicates < 1)
    throw CliError{2, "simulate needs n >= 0 and replicates >= 1"};

  ManifestBuilder manifest("simulate", cfg, seed);
  json replicate_seeds = json::array();
  const RandomSource master(seed);
  for (int r = 0; r < replicates; ++r) {
    RandomSource rng = master.split(static_cast<std::uint64_t>(r));
    ctab::CountTable counts;
    try {
      counts = ctab::simulate_dataset(truth, n, rng);
    } catch (const std::runtime_error& e) {
      throw CliError{3, e.what()};
    }
    const fs::path path = out / ("replicate_" + std::to_string(r) + ".csv");
    io::write_count_table_csv(path, counts, shape);
    manifest.artifact(path);
    replicate_seeds.push_back({{"replicate", r}, {"stream_seed", rng.seed()}});
  }
  manifest.j["replicate_seeds"] = replicate_seeds;
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------------------
// replicate-study
// ---------------------------------------------------------------------------

struct StudyTask {
  std::string prior;
  long n = 0;
  int replicate = 0;
  std::uint64_t task_id = 0;
};

struct StudyResult {
  bool ok = false;
  std::string error;
  double M = 0.0, L = 0.0;
  std::uint64_t data_seed = 0;
};

int cmd_replicate_study(const json& cfg, const fs::path& out, std::uint64_t seed) {
  if (require<std::string>(cfg, "model") != "ctab")
    throw CliError{2, "replicate-study supports model = ctab only"};
  const ctab::TableShape shape = shape_from(cfg);
  const ctab::TableParam truth = truth_from(cfg, shape);
  if (truth.f.minCoeff() <= 0.0)
    throw CliError{2, "study truth must be strictly positive (smooth it first)"};

  const json study = get_or<json>(cfg, "study", json::object());
  const std::vector<long> sizes = require<std::vector<long>>(study, "sizes");
  const int replicates = require<int>(study, "replicates");
  const std::vector<std::string> priors =
      require<std::vector<std::string>>(study, "priors");
  if (sizes.empty() || replicates < 1 || priors.empty())
    throw CliError{2, "study needs sizes, replicates and priors"};
  for (const std::string& p : priors)
    if (p != "informative" && p != "noninformative" && p != "msp")
      throw CliError{2, "unknown study prior: " + p};

  std::vector<Eigen::VectorXd> truth_margins;
  for (int j = 0; j < shape.vars(); ++j)
    truth_margins.push_back(ctab::cell_marginals(truth, shape, j));

  // prior ingredients; informative targets default to the exact truth margins
  std::vector<Eigen::VectorXd> inf_targets = truth_margins;
  if (cfg.contains("target_margins"))
    inf_targets = margins_from(cfg, "target_margins", shape);
  DirichletParams informative;
  const DirichletParams noninformative = ctab::noninformative_prior(shape);
  try {
    informative = ctab::informative_prior(shape, inf_targets);
  } catch (const domain_error& e) {
    throw CliError{2, e.what()};
  }
  std::vector<DirichletParams> msp_p1;
  if (cfg.contains("p1_margins")) {
    msp_p1 = p1_margins_from(cfg, shape);
  } else {
    const double conc = get_or<double>(cfg, "msp_concentration", 100.0);
    for (const auto& m : truth_margins)
      msp_p1.push_back(DirichletParams{conc * m});
  }

  const bool needs_chain =
      std::find(priors.begin(), priors.end(), std::string("msp")) != priors.end();
  ChainConfig chain_template;
  ctab::CtabTuning tuning;
  if (needs_chain) {
    chain_template = chain_config(cfg, seed);
    if (cfg.contains("tuning")) {
      const json& t = cfg.at("tuning");
      tuning.subset_size = get_or<int>(t, "subset_size", 0);
      tuning.delta = get_or<double>(t, "delta", 0.5);
      tuning.pilot_tune = get_or<bool>(t, "pilot", true);
    }
  }

  std::vector<StudyTask> tasks;
  std::uint64_t task_id = 0;
  for (const std::string& prior : priors)
    for (long n : sizes)
      for (int r = 0; r < replicates; ++r)
        tasks.push_back({prior, n, r, task_id++});

  std::vector<StudyResult> results(tasks.size());
  const RandomSource master(seed);

  auto run_task = [&](const StudyTask& t) {
    StudyResult res;
    try {
      RandomSource data_rng = master.split(2 * t.task_id);
      res.data_seed = data_rng.seed();
      const ctab::CountTable data = ctab::simulate_dataset(truth, t.n, data_rng);

      ctab::TableParam f_hat;
      std::vector<Eigen::VectorXd> theta_hat;
      if (t.prior == "msp") {
        ChainConfig cc = chain_template;
        cc.seed = master.split(2 * t.task_id + 1).seed();
        const ctab::CtabChainResult chain = ctab::run_ctab_chain(
            data, shape, noninformative, msp_p1, cc, tuning);
        f_hat.f = chain.f_samples.colwise().mean().transpose();
        int off = 0;
        for (int j = 0; j < shape.vars(); ++j) {
          theta_hat.push_back(chain.output.theta_samples.middleCols(off, shape.d[j])
                                  .colwise()
                                  .mean()
                                  .transpose());
          off += shape.d[j];
        }
      } else {
        // Dirichlet priors are conjugate: use the exact posterior mean
        const DirichletParams& prior =
            t.prior == "informative" ? informative : noninformative;
        f_hat = ctab::conjugate_posterior_mean(prior, data);
        for (int j = 0; j < shape.vars(); ++j)
          theta_hat.push_back(ctab::cell_marginals(f_hat, shape, j));
      }
      res.M = ctab::metric_M(theta_hat, truth_margins);
      res.L = ctab::metric_L(f_hat, truth, shape);
      res.ok = true;
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
    return res;
  };

  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(tasks.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        results[i] = run_task(tasks[i]);
      }
    });
  for (auto& th : pool) th.join();

  ManifestBuilder manifest("replicate-study", cfg, seed);
  json metrics = json::array();
  json failures = json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const StudyTask& t = tasks[i];
    const StudyResult& r = results[i];
    if (r.ok) {
      metrics.push_back({{"prior", t.prior},
                         {"n", t.n},
                         {"replicate", t.replicate},
                         {"data_seed", r.data_seed},
                         {"M", r.M},
                         {"L", r.L}});
    } else {
      failures.push_back({{"prior", t.prior},
                          {"n", t.n},
                          {"replicate", t.replicate},
                          {"error", r.error}});
    }
  }
  write_json(out / "metrics.json", {{"metrics", metrics}, {"failures", failures}});
  manifest.artifact(out / "metrics.json");

  // per-(prior, n) means over successful replicates
  std::ostringstream summary, plot;
  summary << "prior,n,mean_M,mean_L,replicates_ok\n";
  plot << "n,prior,log10_mean_M,log10_mean_L\n";
  for (const std::string& prior : priors)
    for (long n : sizes) {
      double sm = 0.0, sl = 0.0;
      long ok = 0;
      for (std::size_t i = 0; i < tasks.size(); ++i)
        if (results[i].ok && tasks[i].prior == prior && tasks[i].n == n) {
          sm += results[i].M;
          sl += results[i].L;
          ++ok;
        }
      char line[256];
      if (ok > 0) {
        std::snprintf(line, sizeof line, "%s,%ld,%.17g,%.17g,%ld\n",
                      prior.c_str(), n, sm / ok, sl / ok, ok);
        summary << line;
        std::snprintf(line, sizeof line, "%ld,%s,%.17g,%.17g\n", n, prior.c_str(),
                      std::log10(std::max(sm / ok, 1e-300)),
                      std::log10(std::max(sl / ok, 1e-300)));
        plot << line;
      } else {
        std::snprintf(line, sizeof line, "%s,%ld,nan,nan,0\n", prior.c_str(), n);
        summary << line;
      }
    }
  atomic_write_text(out / "summary.csv", summary.str());
  manifest.artifact(out / "summary.csv");
  atomic_write_text(out / "plot_data.csv", plot.str());
  manifest.artifact(out / "plot_data.csv");

  manifest.j["tasks"] = tasks.size();
  manifest.j["failures"] = failures.size();
  manifest.write(out);
  return failures.empty() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginally specified priors: fitting, estimation and studies"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed_override;
  bool force = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config path")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed_override, "seed override");
    sub->add_flag("--force", force, "allow writing into a non-empty directory");
  };

  CLI::App* fit = app.add_subcommand("fit", "run a posterior chain");
  CLI::App* estimate = app.add_subcommand("estimate-p0", "fit the induced marginal");
  CLI::App* simulate = app.add_subcommand("simulate", "simulate replicate datasets");
  CLI::App* study = app.add_subcommand("replicate-study", "run a metric study");
  for (CLI::App* sub : {fit, estimate, simulate, study}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(config_path);
    const std::uint64_t seed = resolve_seed(cfg, seed_override);
    prepare_out_dir(out_dir, force);
    if (app.got_subcommand(fit)) {
      const std::string model = require<std::string>(cfg, "model");
      if (model == "dpmm") return cmd_fit_dpmm(cfg, out_dir, seed);
      if (model == "ctab") return cmd_fit_ctab(cfg, out_dir, seed);
      throw CliError{2, "unknown model: " + model};
    }
    if (app.got_subcommand(estimate)) return cmd_estimate_p0(cfg, out_dir, seed);
    if (app.got_subcommand(simulate)) return cmd_simulate(cfg, out_dir, seed);
    return cmd_replicate_study(cfg, out_dir, seed);
  } catch (const CliError& e) {
    std::cerr << json{{"error", e.message}, {"exit_code", e.code}}.dump() << "\n";
    return e.code;
  } catch (const invariant_violation& e) {
    std::cerr << json{{"error", e.what()}, {"exit_code", 3}}.dump() << "\n";
    return 3;
  } catch (const domain_error& e) {
    std::cerr << json{{"error", e.what()}, {"exit_code", 2}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"exit_code", 3}}.dump() << "\n";
    return 3;
  }
}
