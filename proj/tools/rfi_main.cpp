// rfi: command-line workbench for robust feature inference experiments.
//
// Verbs: fit-projector, eval, grid-k, ntk-experiment, dynamics, score-report.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <rfi/attack.hpp>
#include <rfi/config.hpp>
#include <rfi/csv.hpp>
#include <rfi/dataset.hpp>
#include <rfi/io.hpp>
#include <rfi/metrics.hpp>
#include <rfi/ntk.hpp>
#include <rfi/scores.hpp>

namespace fs = std::filesystem;
using rfi::ExperimentConfig;
using rfi::Matrix;
using rfi::Vector;

namespace {

std::string fnv_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void emit_config(rfi::CsvWriter& csv, const ExperimentConfig& cfg) {
  csv.comment("config_hash", cfg.content_hash());
  for (const auto& [k, v] : cfg.values()) csv.comment(k, v);
}

/// Eigendecomposition of the feature covariance, cached next to the features
/// file and keyed by its content hash so grid runs decompose only once.
rfi::Spectrum cached_cov_spectrum(const fs::path& features_file, const Matrix& phi) {
  const std::string hash = fnv_hash(rfi::read_file(features_file));
  const fs::path cache = features_file.string() + "." + hash + ".eig";
  if (fs::exists(cache)) {
    const std::string bytes = rfi::read_file(cache);
    rfi::detail::ByteReader in{bytes};
    rfi::Spectrum spec;
    spec.eigenvalues = rfi::detail::decode_matrix(in).col(0);
    spec.eigenvectors = rfi::detail::decode_matrix(in);
    if (in.pos == bytes.size() && spec.eigenvalues.size() == phi.rows())
      return spec;
  }
  const rfi::Spectrum spec = rfi::sym_eig(rfi::feature_covariance(phi));
  std::string out;
  rfi::detail::encode_matrix(out, Matrix(spec.eigenvalues));
  rfi::detail::encode_matrix(out, spec.eigenvectors);
  rfi::write_file_atomic(cache, out);
  return spec;
}

void write_score_csv(const fs::path& path, const rfi::RobustnessScoreTable& table,
                     const rfi::Spectrum& spectrum, const ExperimentConfig& cfg) {
  rfi::CsvWriter csv;
  emit_config(csv, cfg);
  csv.header({"class", "rank", "eigen_index", "eigenvalue", "score"});
  for (int c = 0; c < table.num_classes(); ++c)
    for (int r = 0; r < table.num_features(); ++r) {
      const int idx = table.index_order[c][r];
      csv.row({rfi::CsvWriter::num(long(c)), rfi::CsvWriter::num(long(r)),
               rfi::CsvWriter::num(long(idx)),
               rfi::CsvWriter::num(spectrum.eigenvalues[idx]),
               rfi::CsvWriter::num(table.scores(c, idx))});
    }
  csv.write(path);
}

rfi::ProjectorMode parse_mode(const std::string& mode) {
  if (mode == "global-union") return rfi::ProjectorMode::GlobalUnion;
  if (mode == "classwise-bc") return rfi::ProjectorMode::ClasswiseBc;
  throw rfi::value_error("unknown projector mode: " + mode);
}

// ---------------------------------------------------------------------------
// Synthetic experiment assembly shared by eval / grid-k.
// ---------------------------------------------------------------------------

struct EvalSetup {
  rfi::FeatureMap feature_map;
  rfi::GamModel model;
  rfi::Dataset train;
  rfi::Dataset eval;
  rfi::Spectrum cov_spectrum;
  rfi::AttackConfig attack;
  int num_classes = 0;
};

/// Planted-non-robust-direction fixture: the spiked coordinate carries all
/// the label signal and most of the variance, the remaining coordinates keep
/// a reduced standard deviation so their eigendirections rank low.
constexpr double kPlantedJunkStd = 0.3;

/// Weights for the planted task: each class leans on the robust spiked
/// coordinate with opposite signs, plus junk weight spread over the
/// low-variance coordinates that carry no label signal.
Matrix planted_weights(int d, int classes, std::uint64_t seed) {
  rfi::require_value(classes == 2, "planted fixture is a 2-class task");
  Matrix beta = Matrix::Zero(d, 2);
  beta(0, 0) = 1.0;
  beta(0, 1) = -1.0;
  rfi::CounterRng rng(rfi::derive_seed(seed, 0x6a756e6bULL));  // "junk"
  for (int j = 1; j < d; ++j) {
    const double w = 0.5 * rng.normal();
    beta(j, 0) += w;
    beta(j, 1) -= w;
  }
  return beta;
}

rfi::FeatureMap feature_map_from_config(const ExperimentConfig& cfg, int d) {
  const std::string kind = cfg.get_string("featuremap.kind", "linear");
  const int p = int(cfg.get_int("featuremap.p", d));
  const std::uint64_t seed = std::uint64_t(cfg.get_int("featuremap.seed", 0));
  if (kind == "linear") return rfi::FeatureMap::linear(d);
  if (kind == "random-linear") return rfi::FeatureMap::random_linear(d, p, seed);
  if (kind == "random-affine-relu")
    return rfi::FeatureMap::random_affine_relu(d, p, seed);
  throw rfi::value_error("unknown featuremap.kind: " + kind);
}

rfi::AttackConfig attack_from_config(const ExperimentConfig& cfg) {
  const std::string norm = cfg.get_string("attack.norm", "linf");
  rfi::AttackConfig attack = norm == "l2" ? rfi::AttackConfig::l2_default()
                                          : rfi::AttackConfig::linf_default();
  if (norm != "l2" && norm != "linf")
    throw rfi::value_error("unknown attack.norm: " + norm);
  attack.epsilon = cfg.get_double("attack.epsilon", attack.epsilon);
  attack.step_size = cfg.get_double("attack.step", attack.epsilon > 0
                                                       ? attack.epsilon / 4.0
                                                       : attack.step_size);
  attack.iterations = int(cfg.get_int("attack.iters", attack.iterations));
  const std::string loss = cfg.get_string("attack.loss", "cross-entropy");
  if (loss == "cross-entropy")
    attack.loss = rfi::AttackLoss::CrossEntropy;
  else if (loss == "margin")
    attack.loss = rfi::AttackLoss::Margin;
  else
    throw rfi::value_error("unknown attack.loss: " + loss);
  attack.random_start = cfg.get_bool("attack.random_start", false);
  attack.seed = std::uint64_t(cfg.get_int("attack.seed", 0));
  attack.check();
  return attack;
}

EvalSetup build_eval_setup(const ExperimentConfig& cfg) {
  EvalSetup setup;
  const int d = int(cfg.get_int("dataset.d", 12));
  const int n = int(cfg.get_int("dataset.n", 400));
  const int eval_n = int(cfg.get_int("dataset.eval_n", 200));
  setup.num_classes = int(cfg.get_int("dataset.classes", 2));
  const std::uint64_t seed = std::uint64_t(cfg.get_int("dataset.seed", 1));
  setup.feature_map = feature_map_from_config(cfg, d);
  const int p = setup.feature_map.feature_dim();

  rfi::SyntheticDatasetSpec spec;
  spec.d = d;
  spec.n = n;
  spec.seed = seed;
  spec.noise_sigma = cfg.get_double("dataset.sigma", 0.0);
  spec.mode = rfi::LabelMode::Classification;
  const std::string cov = cfg.get_string("dataset.cov", "identity");
  if (cov == "identity")
    spec.covariance = rfi::CovarianceKind::Identity;
  else if (cov == "diagonal-spiked")
    spec.covariance = rfi::CovarianceKind::DiagonalSpiked;
  else
    throw rfi::value_error("unknown dataset.cov: " + cov);

  Matrix model_weights;
  const bool planted = cfg.get_bool("dataset.planted", false);
  if (planted) {
    // labels depend only on the robust spiked coordinate; the model also
    // carries junk weight the attack can exploit
    rfi::require_value(setup.feature_map.kind() == rfi::FeatureMapKind::Linear,
                       "planted fixture requires a linear feature map");
    spec.covariance = rfi::CovarianceKind::DiagonalSpiked;
    spec.true_weights = Matrix::Zero(p, 2);
    spec.true_weights(0, 0) = 1.0;
    spec.true_weights(0, 1) = -1.0;
    model_weights = planted_weights(p, setup.num_classes, seed);
  } else {
    rfi::CounterRng rng(rfi::derive_seed(seed, 0x77ULL));  // 'w' stream
    spec.true_weights.resize(p, setup.num_classes);
    for (int i = 0; i < p; ++i)
      for (int c = 0; c < setup.num_classes; ++c)
        spec.true_weights(i, c) = rng.normal();
    model_weights = spec.true_weights;
  }

  setup.train = sample_dataset(spec, setup.feature_map);
  rfi::SyntheticDatasetSpec eval_spec = spec;
  eval_spec.n = eval_n;
  eval_spec.seed = rfi::derive_seed(seed, 0x6576616cULL);  // "eval"
  setup.eval = sample_dataset(eval_spec, setup.feature_map);
  if (planted) {
    // labels only depend on coordinate 0, so shrinking the junk coordinates
    // after sampling leaves them intact
    setup.train.X.rightCols(d - 1) *= kPlantedJunkStd;
    setup.eval.X.rightCols(d - 1) *= kPlantedJunkStd;
  }

  setup.model = rfi::GamModel{setup.feature_map, model_weights};
  setup.cov_spectrum = rfi::sym_eig(
      rfi::feature_covariance(setup.feature_map.feature_matrix(setup.train.X)));
  setup.attack = attack_from_config(cfg);
  return setup;
}

struct EvalRow {
  std::string variant;
  double clean = 0.0;
  double robust = 0.0;
  std::vector<double> per_class_robustness;
};

EvalRow evaluate_model(const std::string& variant, const rfi::GamModel& model,
                       const EvalSetup& setup) {
  EvalRow row;
  row.variant = variant;
  rfi::AttackConfig clean = setup.attack;
  clean.epsilon = 0.0;
  row.clean = rfi::robust_accuracy(model, setup.eval, clean);
  row.robust = setup.attack.epsilon == 0.0
                   ? row.clean
                   : rfi::robust_accuracy(model, setup.eval, setup.attack);
  const int p = model.feature_map.feature_dim();
  rfi::AttackConfig inner = rfi::AttackConfig::l2_default();
  inner.iterations = 50;
  inner.seed = setup.attack.seed;
  for (int c = 0; c < model.num_classes(); ++c) {
    const auto est = rfi::empirical_robustness(model, Matrix::Identity(p, p),
                                               setup.eval, c,
                                               setup.attack.epsilon, inner);
    row.per_class_robustness.push_back(est.value);
  }
  return row;
}

void write_eval_csv(const fs::path& path, const std::vector<EvalRow>& rows,
                    const ExperimentConfig& cfg) {
  rfi::CsvWriter csv;
  emit_config(csv, cfg);
  csv.header({"variant", "metric", "value"});
  for (const EvalRow& row : rows) {
    csv.row({row.variant, "clean_accuracy", rfi::CsvWriter::num(row.clean)});
    csv.row({row.variant, "robust_accuracy", rfi::CsvWriter::num(row.robust)});
    for (std::size_t c = 0; c < row.per_class_robustness.size(); ++c)
      csv.row({row.variant, "robustness_class_" + std::to_string(c),
               rfi::CsvWriter::num(row.per_class_robustness[c])});
  }
  csv.write(path);
}

rfi::GamModel projected_model(const EvalSetup& setup,
                              const rfi::RobustProjector& proj) {
  return rfi::GamModel{setup.feature_map, proj.beta_tilde};
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

int cmd_fit_projector(const fs::path& features_file, const fs::path& weights_file,
                      std::optional<int> k, const std::string& mode,
                      const fs::path& out_projector, const fs::path& out_scores) {
  const Matrix phi = rfi::read_matrix_file(features_file);
  const Matrix beta = rfi::read_matrix_file(weights_file);
  rfi::require_dims(beta.rows() == phi.rows(),
                    "weights rows must match feature dimension");
  const int num_classes = int(beta.cols());
  const int kk = k.value_or(num_classes);  // default K = C

  const rfi::Spectrum spectrum = cached_cov_spectrum(features_file, phi);
  const auto table = rfi::robustness_scores(spectrum, beta);
  rfi::RobustProjector proj;
  if (parse_mode(mode) == rfi::ProjectorMode::GlobalUnion)
    proj = rfi::select_topk_union(table, spectrum, beta, kk);
  else
    proj = rfi::select_classwise_bc(rfi::feature_covariance(phi), beta, kk);
  proj.scores = table.scores;
  rfi::write_projector_file(out_projector, proj);

  if (!out_scores.empty()) {
    ExperimentConfig cfg;
    cfg.set("rfi.k", std::to_string(kk));
    cfg.set("rfi.mode", mode);
    write_score_csv(out_scores, table, spectrum, cfg);
  }
  std::cout << "projector: " << out_projector.string() << " K=" << kk
            << " selected=" << proj.selected_indices.size() << "\n";
  return 0;
}

int cmd_score_report(const fs::path& features_file, const fs::path& weights_file,
                     const fs::path& out) {
  const Matrix phi = rfi::read_matrix_file(features_file);
  const Matrix beta = rfi::read_matrix_file(weights_file);
  rfi::require_dims(beta.rows() == phi.rows(),
                    "weights rows must match feature dimension");
  const rfi::Spectrum spectrum = cached_cov_spectrum(features_file, phi);
  const auto table = rfi::robustness_scores(spectrum, beta);
  ExperimentConfig cfg;
  write_score_csv(out, table, spectrum, cfg);
  std::cout << "scores: " << out.string() << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& projector_file,
             const fs::path& out) {
  const EvalSetup setup = build_eval_setup(cfg);
  std::vector<EvalRow> rows;
  rows.push_back(evaluate_model("base", setup.model, setup));
  if (!projector_file.empty()) {
    const rfi::RobustProjector proj = rfi::read_projector_file(projector_file);
    rows.push_back(evaluate_model("rfi", projected_model(setup, proj), setup));
  }
  write_eval_csv(out, rows, cfg);
  std::cout << "report: " << out.string() << "\n";
  return 0;
}

int cmd_grid_k(const ExperimentConfig& cfg, int k_min, int k_max,
               const fs::path& out) {
  rfi::require_value(k_min >= 1 && k_max >= k_min, "grid-k: empty or invalid range");
  const EvalSetup setup = build_eval_setup(cfg);
  const int p = setup.feature_map.feature_dim();
  rfi::require_value(k_max <= p, "grid-k: K exceeds the feature dimension");
  const auto table = rfi::robustness_scores(setup.cov_spectrum, setup.model.weights);

  rfi::CsvWriter csv;
  emit_config(csv, cfg);
  csv.header({"k", "clean_accuracy", "robust_accuracy"});
  const EvalRow base = evaluate_model("base", setup.model, setup);
  for (int k = k_min; k <= k_max; ++k) {
    const auto proj =
        rfi::select_topk_union(table, setup.cov_spectrum, setup.model.weights, k);
    const EvalRow row = evaluate_model("rfi", projected_model(setup, proj), setup);
    csv.row({rfi::CsvWriter::num(long(k)), rfi::CsvWriter::num(row.clean),
             rfi::CsvWriter::num(row.robust)});
  }
  csv.footer_comment("base_clean_accuracy", rfi::CsvWriter::num(base.clean));
  csv.footer_comment("base_robust_accuracy", rfi::CsvWriter::num(base.robust));
  csv.write(out);
  std::cout << "grid: " << out.string() << "\n";
  return 0;
}

int cmd_ntk_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  rfi::PerturbationExperimentConfig config;
  config.d = int(cfg.get_int("ntk.d", config.d));
  config.n = int(cfg.get_int("ntk.n", config.n));
  config.deltas = cfg.get_double_list("ntk.deltas", config.deltas);
  config.noise_sigma = cfg.get_double("ntk.sigma", config.noise_sigma);
  config.seed = std::uint64_t(cfg.get_int("ntk.seed", long(config.seed)));
  const auto result = rfi::perturbation_experiment(config);

  fs::create_directories(out_dir);
  rfi::CsvWriter dev;
  emit_config(dev, cfg);
  dev.comment("perturbation", "per-feature l2 PGD maximizing the feature deviation");
  dev.header({"rank", "lambda", "delta", "deviation"});
  // delta = 0 control rows: no perturbation, no deviation
  const double eig_cut =
      1e-10 * std::max(result.eigenvalues.size() ? result.eigenvalues[0] : 0.0, 0.0);
  for (Eigen::Index i = 0; i < result.eigenvalues.size(); ++i) {
    if (result.eigenvalues[i] <= eig_cut) continue;
    dev.row({rfi::CsvWriter::num(long(i)), rfi::CsvWriter::num(result.eigenvalues[i]),
             rfi::CsvWriter::num(0.0), rfi::CsvWriter::num(0.0)});
  }
  for (const auto& row : result.rows)
    dev.row({rfi::CsvWriter::num(long(row.rank)), rfi::CsvWriter::num(row.lambda),
             rfi::CsvWriter::num(row.delta), rfi::CsvWriter::num(row.deviation)});
  bool trend_ok = true;
  for (const auto& [delta, rho] : result.spearman_per_delta) {
    dev.footer_comment("spearman_delta_" + rfi::CsvWriter::num(delta),
                       rfi::CsvWriter::num(rho));
    if (!(rho < 0.0)) trend_ok = false;
  }
  dev.write(out_dir / "ntk_deviation.csv");

  rfi::CsvWriter eig;
  emit_config(eig, cfg);
  eig.header({"rank", "eigenvalue"});
  for (Eigen::Index i = 0; i < result.eigenvalues.size(); ++i)
    eig.row({rfi::CsvWriter::num(long(i)),
             rfi::CsvWriter::num(result.eigenvalues[i])});
  eig.write(out_dir / "ntk_eigenvalues.csv");

  std::cout << "ntk experiment: " << (out_dir / "ntk_deviation.csv").string() << "\n";
  if (!trend_ok) {
    std::cerr << "warning: spearman trend not negative for every delta\n";
    return 3;
  }
  return 0;
}

int cmd_dynamics(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const int d = int(cfg.get_int("dataset.d", 8));
  const int n = int(cfg.get_int("dataset.n", 100));
  const std::uint64_t seed = std::uint64_t(cfg.get_int("dataset.seed", 1));
  const double noise = cfg.get_double("dataset.sigma", 0.0);
  const double gamma = cfg.get_double("dynamics.gamma", 1.0);
  const int t_max = int(cfg.get_int("dynamics.tmax", 200));
  const int t_record = int(cfg.get_int("dynamics.trecord", 10));
  const double delta = cfg.get_double("attack.epsilon", 0.1);

  const rfi::FeatureMap fm = rfi::FeatureMap::linear(d);
  rfi::SyntheticDatasetSpec spec;
  spec.d = d;
  spec.n = n;
  spec.seed = seed;
  spec.noise_sigma = noise;
  rfi::CounterRng rng(rfi::derive_seed(seed, 0x62ULL));
  spec.true_weights.resize(d, 1);
  for (int i = 0; i < d; ++i) spec.true_weights(i, 0) = rng.normal();
  const rfi::Dataset data = sample_dataset(spec, fm);
  const Matrix phi = fm.feature_matrix(data.X);
  const rfi::Spectrum cov_spec = rfi::sym_eig(rfi::feature_covariance(phi));

  const double eta =
      cfg.get_double("dynamics.eta", 0.5 / std::max(cov_spec.eigenvalues[0], 1e-12));
  rfi::CounterRng prng(rfi::derive_seed(seed, 0x70ULL));
  Vector probe(d);
  for (int i = 0; i < d; ++i) probe[i] = prng.normal();

  const auto trace = rfi::gd_simulate(eta, t_max, phi, data.Y, fm(probe));
  const rfi::NtkSystem system = rfi::ntk_gram(fm, data.X, data.Y);

  fs::create_directories(out_dir);

  // coefficients and kernel-flow coefficients per recorded t
  rfi::CsvWriter coeff;
  emit_config(coeff, cfg);
  std::vector<std::string> cols = {"t"};
  for (int j = 0; j < d; ++j) cols.push_back("coeff_" + std::to_string(j));
  for (int j = 0; j < d; ++j) cols.push_back("flow_coeff_" + std::to_string(j));
  coeff.header(cols);
  double max_dev = 0.0;
  const int recorded = int(trace.coefficients.rows()) - 1;
  for (int t = 0; t <= recorded; t += t_record) {
    const auto closed =
        rfi::gd_closed_form(eta, t, cov_spec, spec.true_weights, probe, fm);
    std::vector<std::string> cells = {rfi::CsvWriter::num(long(t))};
    for (int j = 0; j < d; ++j) {
      cells.push_back(rfi::CsvWriter::num(trace.coefficients(t, j)));
      const double denom = std::max(std::abs(closed.coefficients[j]), 1e-12);
      max_dev = std::max(
          max_dev, std::abs(trace.coefficients(t, j) - closed.coefficients[j]) / denom);
    }
    const auto flow = rfi::kernel_flow(gamma, double(t), system, probe);
    for (int j = 0; j < d; ++j)
      cells.push_back(rfi::CsvWriter::num(flow.coefficients[j]));
    coeff.row(cells);
  }
  coeff.footer_comment("max_sim_closed_deviation", rfi::CsvWriter::num(max_dev));
  coeff.footer_comment("diverged", trace.diverged ? "true" : "false");
  coeff.write(out_dir / "dynamics_coefficients.csv");

  // rho / gamma / %risk profiles at the last recorded step
  rfi::CsvWriter prof;
  emit_config(prof, cfg);
  prof.header({"t", "eigen_index", "eigenvalue", "rho", "gamma", "risk"});
  for (int t = 0; t <= recorded; t += t_record) {
    const auto risk =
        rfi::risk_profile(double(t), eta, cov_spec, spec.true_weights.col(0), noise);
    for (int j = 0; j < d; ++j) {
      const auto [rho_j, gamma_j] = rfi::usefulness_robustness_profile(
          j, double(t), eta, cov_spec, spec.true_weights.col(0), delta, noise);
      prof.row({rfi::CsvWriter::num(long(t)), rfi::CsvWriter::num(long(j)),
                rfi::CsvWriter::num(cov_spec.eigenvalues[j]),
                rfi::CsvWriter::num(rho_j), rfi::CsvWriter::num(gamma_j),
                rfi::CsvWriter::num(risk.per_index[j])});
    }
  }
  prof.write(out_dir / "dynamics_profiles.csv");

  std::cout << "dynamics: " << (out_dir / "dynamics_coefficients.csv").string()
            << " max_sim_closed_deviation=" << max_dev
            << (trace.diverged ? " (diverged)" : "") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust feature inference workbench"};
  app.require_subcommand(1);

  std::string features_file, weights_file, projector_out, scores_out;
  std::string projector_in, config_file, out_file, out_dir = ".";
  std::string mode = "global-union";
  int k_flag = -1, k_min = 1, k_max = 1;

  auto* fit = app.add_subcommand("fit-projector",
                                 "score features and project the weights");
  fit->add_option("--features", features_file, "feature matrix file (p x n)")
      ->required();
  fit->add_option("--weights", weights_file, "weight matrix file (p x C)")
      ->required();
  fit->add_option("--k", k_flag, "eigenvectors per class (default: C)");
  fit->add_option("--mode", mode, "global-union | classwise-bc");
  fit->add_option("--out-projector", projector_out, "projector output file")
      ->required();
  fit->add_option("--out-scores", scores_out, "score report CSV");

  auto* score = app.add_subcommand("score-report", "per-class robustness scores");
  score->add_option("--features", features_file)->required();
  score->add_option("--weights", weights_file)->required();
  score->add_option("--out", out_file, "score CSV")->required();

  auto* eval = app.add_subcommand("eval", "clean/robust accuracy report");
  eval->add_option("--config", config_file, "experiment config file")->required();
  eval->add_option("--projector", projector_in, "optional projector file");
  eval->add_option("--out", out_file, "report CSV")->required();

  auto* grid = app.add_subcommand("grid-k", "sweep K and report accuracies");
  grid->add_option("--config", config_file)->required();
  grid->add_option("--k-min", k_min);
  grid->add_option("--k-max", k_max)->required();
  grid->add_option("--out", out_file)->required();

  auto* ntk = app.add_subcommand("ntk-experiment",
                                 "spiked-covariance feature perturbation study");
  ntk->add_option("--config", config_file, "experiment config file");
  ntk->add_option("--out-dir", out_dir);

  auto* dyn = app.add_subcommand("dynamics", "GD and kernel-flow dynamics report");
  dyn->add_option("--config", config_file, "experiment config file");
  dyn->add_option("--out-dir", out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = ExperimentConfig::load(config_file);
    if (fit->parsed())
      return cmd_fit_projector(features_file, weights_file,
                               k_flag > 0 ? std::optional<int>(k_flag) : std::nullopt,
                               mode, projector_out, scores_out);
    if (score->parsed()) return cmd_score_report(features_file, weights_file, out_file);
    if (eval->parsed()) return cmd_eval(cfg, projector_in, out_file);
    if (grid->parsed()) return cmd_grid_k(cfg, k_min, k_max, out_file);
    if (ntk->parsed()) return cmd_ntk_experiment(cfg, out_dir);
    if (dyn->parsed()) return cmd_dynamics(cfg, out_dir);
  } catch (const rfi::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
