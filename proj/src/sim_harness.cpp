#include "dncit/sim_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "dncit/parallel.hpp"

namespace dncit {

namespace {

// Structure of the confounder mixing map; fixed so every roster shares it.
constexpr std::uint64_t kMixingSeed = 0x5eed0c0fULL;
constexpr double kMaxMixing = 0.4;

struct RosterEntry {
  const char* name;
  ConfounderRole role;
};

const std::vector<RosterEntry>& roster() {
  static const std::vector<RosterEntry> entries = {
      {"age", ConfounderRole::kAge},           {"head_size", ConfounderRole::kHeadSize},
      {"sex", ConfounderRole::kSex},           {"site", ConfounderRole::kSite},
      {"date", ConfounderRole::kDate},         {"qc", ConfounderRole::kQc},
      {"head_pos_1", ConfounderRole::kHeadPosition}, {"head_pos_2", ConfounderRole::kHeadPosition},
      {"head_pos_3", ConfounderRole::kHeadPosition}, {"head_pos_4", ConfounderRole::kHeadPosition},
      {"pc_1", ConfounderRole::kGeneticPc},    {"pc_2", ConfounderRole::kGeneticPc},
      {"pc_3", ConfounderRole::kGeneticPc},    {"pc_4", ConfounderRole::kGeneticPc},
      {"pc_5", ConfounderRole::kGeneticPc},
  };
  return entries;
}

bool is_continuous(ConfounderRole role) {
  return role != ConfounderRole::kSex && role != ConfounderRole::kSite;
}

Matrix select_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
  return out;
}

Matrix gaussian_matrix(Index rows, Index cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

}  // namespace

std::vector<Index> ConfounderMeta::continuous_columns() const {
  std::vector<Index> cols;
  for (std::size_t c = 0; c < continuous.size(); ++c) {
    if (continuous[c]) cols.push_back(static_cast<Index>(c));
  }
  return cols;
}

std::optional<Index> ConfounderMeta::find(ConfounderRole role) const {
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (roles[c] == role) return static_cast<Index>(c);
  }
  return std::nullopt;
}

bool supported_conf_dim(Index d) {
  return d == 1 || d == 2 || d == 4 || d == 6 || d == 10 || d == 15;
}

ConfounderDraw generate_confounders(Index n, Index conf_dim, std::uint64_t seed) {
  if (!supported_conf_dim(conf_dim)) {
    throw Error(ErrorCode::kUnsupportedDim,
                "conf_dim must be one of 1, 2, 4, 6, 10, 15 (got " + std::to_string(conf_dim) + ")");
  }
  if (n < 2) throw Error(ErrorCode::kTooFewRows, "need at least 2 rows");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ConfounderDraw draw;
  draw.z.resize(n, conf_dim);
  for (Index j = 0; j < conf_dim; ++j) {
    const auto& entry = roster()[static_cast<std::size_t>(j)];
    draw.meta.names.emplace_back(entry.name);
    draw.meta.roles.push_back(entry.role);
    draw.meta.continuous.push_back(is_continuous(entry.role));
    draw.meta.kinds.push_back(entry.role == ConfounderRole::kSite ? ColumnKind::kCategoricalEncoded
                                                                  : ColumnKind::kContinuous);
    for (Index i = 0; i < n; ++i) {
      double v = 0.0;
      switch (entry.role) {
        case ConfounderRole::kAge: v = 45.0 + 35.0 * unit(rng); break;
        case ConfounderRole::kDate: v = unit(rng); break;
        case ConfounderRole::kSex: v = unit(rng) < 0.5 ? 0.0 : 1.0; break;
        case ConfounderRole::kSite: v = std::floor(3.0 * unit(rng)); v = std::min(v, 2.0); break;
        default: v = normal(rng); break;
      }
      draw.z(i, j) = v;
    }
  }
  // Correlate the continuous block: column j += m_j * column j-1 (within J_c).
  const auto cont = draw.meta.continuous_columns();
  Matrix block = standardize_columns(select_columns(draw.z, cont)).values;
  std::mt19937_64 mix_rng(kMixingSeed);
  std::uniform_real_distribution<double> mix(-kMaxMixing, kMaxMixing);
  Matrix mixed = block;
  for (Index j = 1; j < block.cols(); ++j) mixed.col(j) += mix(mix_rng) * block.col(j - 1);
  for (std::size_t c = 0; c < cont.size(); ++c) draw.z.col(cont[c]) = mixed.col(static_cast<Index>(c));
  draw.z = standardize_columns(draw.z).values;
  return draw;
}

FeatureStructure make_feature_structure(Index p_cont, Index q, const FeatureGenerator& gen,
                                        std::uint64_t seed) {
  if (q < 1) throw Error(ErrorCode::kInvalidArgument, "q must be >= 1");
  if (p_cont < 1) throw Error(ErrorCode::kInvalidArgument, "features need a continuous confounder");
  std::mt19937_64 rng(seed);
  FeatureStructure s;
  s.a = gaussian_matrix(p_cont, gen.rank, 1.0 / std::sqrt(static_cast<double>(p_cont)), rng);
  s.a0 = gaussian_matrix(gen.rank, 1, gen.offset_sd, rng).col(0);
  s.b = gaussian_matrix(gen.rank, q, 1.0 / std::sqrt(static_cast<double>(gen.rank)), rng);
  std::uniform_real_distribution<double> load(0.5, 1.5);
  s.loadings.resize(q);
  for (Index j = 0; j < q; ++j) s.loadings(j) = load(rng);
  return s;
}

Matrix generate_true_features(const Matrix& z, const ConfounderMeta& meta,
                              const FeatureStructure& structure, const FeatureGenerator& gen,
                              std::uint64_t noise_seed) {
  const Matrix zc = select_columns(z, meta.continuous_columns());
  if (zc.cols() != structure.a.rows()) {
    throw Error(ErrorCode::kDimMismatch, "feature structure does not match the continuous block");
  }
  Matrix inner = zc * structure.a;
  inner.rowwise() += structure.a0.transpose();
  Matrix x = inner.array().tanh().matrix() * structure.b;
  if (gen.noise_sd > 0.0) {
    std::mt19937_64 rng(noise_seed);
    const Index n = x.rows();
    const Vector factor = gaussian_matrix(n, 1, 1.0, rng).col(0);
    const Matrix idio = gaussian_matrix(n, x.cols(), 1.0, rng);
    const double s = gen.shared_fraction;
    x += gen.noise_sd * (std::sqrt(s) * factor * structure.loadings.transpose() + std::sqrt(1.0 - s) * idio);
  }
  return standardize_columns(x).values;
}

Matrix generate_true_features(const Matrix& z, const ConfounderMeta& meta, Index q,
                              std::uint64_t seed, const FeatureGenerator& gen) {
  const auto structure = make_feature_structure(static_cast<Index>(meta.continuous_columns().size()),
                                                q, gen, derive_seed(seed, 1));
  return generate_true_features(z, meta, structure, gen, derive_seed(seed, 2));
}

std::string_view to_string(GzKind kind) {
  switch (kind) {
    case GzKind::kLinear: return "linear";
    case GzKind::kSquared: return "squared";
    case GzKind::kComplex: return "complex";
  }
  return "linear";
}

std::optional<GzKind> parse_gz_kind(std::string_view name) {
  if (name == "linear") return GzKind::kLinear;
  if (name == "squared") return GzKind::kSquared;
  if (name == "complex") return GzKind::kComplex;
  return std::nullopt;
}

Matrix gz_transform(const Matrix& z, const ConfounderMeta& meta, GzKind kind) {
  if (kind == GzKind::kLinear) return z;
  const auto cont = meta.continuous_columns();
  std::vector<Vector> extra;
  for (Index j : cont) extra.push_back(z.col(j).array().square());
  if (kind == GzKind::kComplex) {
    const auto sex = meta.find(ConfounderRole::kSex);
    const auto date = meta.find(ConfounderRole::kDate);
    if (!sex || !date) {
      throw Error(ErrorCode::kMissingColumn, "complex g_z needs sex-like and date-like columns");
    }
    for (Index j : cont) extra.push_back(z.col(j).cwiseProduct(z.col(*sex)));
    extra.push_back(z.col(*date).array().pow(3.0));
    extra.push_back(z.col(*date).array().pow(4.0));
  }
  Matrix out(z.rows(), z.cols() + static_cast<Index>(extra.size()));
  out.leftCols(z.cols()) = z;
  for (std::size_t e = 0; e < extra.size(); ++e) out.col(z.cols() + static_cast<Index>(e)) = extra[e];
  return out;
}

OutcomeWeights draw_outcome_weights(Index q, Index p_z, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  OutcomeWeights w;
  Vector dx(q);
  for (Index j = 0; j < q; ++j) dx(j) = std::abs(normal(rng));
  w.w_x.resize(q);
  bool any = false;
  for (Index j = 0; j < q; ++j) {
    const bool a = coin(rng);
    any = any || a;
    w.w_x(j) = a ? dx(j) : 0.0;
  }
  w.w_x /= dx.sum();
  w.degenerate = !any;
  Vector dz(p_z);
  for (Index j = 0; j < p_z; ++j) dz(j) = std::abs(normal(rng));
  w.w_z = dz / dz.sum();
  return w;
}

Vector simulate_outcome(const Matrix& features, const Matrix& gz, int c, double noise_sd,
                        const OutcomeWeights& weights, std::uint64_t noise_seed) {
  if (features.rows() != gz.rows()) throw Error(ErrorCode::kRowMismatch, "features and g_z differ in rows");
  if (weights.w_x.size() != features.cols() || weights.w_z.size() != gz.cols()) {
    throw Error(ErrorCode::kDimMismatch, "weights do not match the design");
  }
  if (c != 0 && c != 1) throw Error(ErrorCode::kInvalidArgument, "c must be 0 or 1");
  if (!(noise_sd > 0.0)) throw Error(ErrorCode::kNonPositive, "noise_sd must be positive");
  std::mt19937_64 rng(noise_seed);
  Vector y = gz * weights.w_z + gaussian_matrix(gz.rows(), 1, noise_sd, rng).col(0);
  if (c == 1) y += features * weights.w_x;
  return y;
}

Vector simulate_outcome(const Matrix& features, const Matrix& gz, int c, double noise_sd,
                        std::uint64_t seed) {
  const auto w = draw_outcome_weights(features.cols(), gz.cols(), derive_seed(seed, 1));
  return simulate_outcome(features, gz, c, noise_sd, w, derive_seed(seed, 2));
}

// ---------------------------------------------------------------------------

void validate(const DgmConfig& d) {
  if (d.n < 50) throw Error(ErrorCode::kSchema, "n must be >= 50 (dgm " + d.id + ")");
  if (!supported_conf_dim(d.conf_dim)) {
    throw Error(ErrorCode::kSchema, "conf_dim must be one of 1, 2, 4, 6, 10, 15 (dgm " + d.id + ")");
  }
  if (d.c != 0 && d.c != 1) throw Error(ErrorCode::kSchema, "c must be 0 or 1 (dgm " + d.id + ")");
  if (d.true_dim_q < 1) throw Error(ErrorCode::kSchema, "true_dim_q must be >= 1 (dgm " + d.id + ")");
  if (d.g_z_kind == GzKind::kComplex && d.conf_dim < 6) {
    throw Error(ErrorCode::kSchema, "g_z_kind complex needs conf_dim >= 6 (dgm " + d.id + ")");
  }
  if (d.noise_sd && !(*d.noise_sd > 0.0)) {
    throw Error(ErrorCode::kSchema, "noise_sd must be positive (dgm " + d.id + ")");
  }
  const auto& e = d.embedding.spec;
  if (e.kind == EmbeddingKind::kPrecomputed) {
    throw Error(ErrorCode::kSchema, "embedding kind precomputed is not available in simulations");
  }
  if (e.kind == EmbeddingKind::kNoisy && !(e.noise_variance > 0.0)) {
    throw Error(ErrorCode::kSchema, "noisy embedding needs noise_variance > 0 (dgm " + d.id + ")");
  }
  if (e.kind != EmbeddingKind::kNoisy && e.noise_variance != 0.0) {
    throw Error(ErrorCode::kSchema, "noise_variance is only valid for noisy embeddings");
  }
  if ((e.kind == EmbeddingKind::kLinearProjection || e.kind == EmbeddingKind::kPcaInSample) &&
      e.dim_out < 1) {
    throw Error(ErrorCode::kSchema, "embedding dim_out must be >= 1 (dgm " + d.id + ")");
  }
  if (d.embedding.nuisance_dim && *d.embedding.nuisance_dim < 0) {
    throw Error(ErrorCode::kSchema, "nuisance_dim must be >= 0 (dgm " + d.id + ")");
  }
}

namespace {

Index nuisance_dim(const DgmConfig& d) {
  return d.embedding.nuisance_dim.value_or(4 * d.true_dim_q);
}

bool uses_raw(const DgmConfig& d) {
  const auto k = d.embedding.spec.kind;
  return k == EmbeddingKind::kLinearProjection || k == EmbeddingKind::kPcaInSample;
}

}  // namespace

PreparedDgm prepare_dgm(const DgmConfig& dgm) {
  validate(dgm);
  PreparedDgm out;
  out.config = dgm;
  const ConfounderDraw probe = generate_confounders(2, dgm.conf_dim, 0);
  out.meta = probe.meta;
  const auto p_cont = static_cast<Index>(out.meta.continuous_columns().size());
  out.structure = make_feature_structure(p_cont, dgm.true_dim_q, dgm.generator,
                                         derive_seed(dgm.weight_seed, 1));
  const Index p_z = gz_transform(probe.z, probe.meta, dgm.g_z_kind).cols();
  // An all-zero Bernoulli mask would silently turn c = 1 into c = 0: redraw.
  for (Index attempt = 0;; ++attempt) {
    out.weights = draw_outcome_weights(dgm.true_dim_q, p_z,
                                       derive_seed(dgm.weight_seed, 2, static_cast<std::uint64_t>(attempt)));
    if (!out.weights.degenerate) break;
    ++out.weight_redraws;
  }
  if (dgm.noise_sd) {
    out.noise_sd = *dgm.noise_sd;
  } else {
    // Pilot draw under c = 1: match Var(eps) to Var(X w_x + g(Z) w_z).
    const Index pilot_n = std::max<Index>(dgm.n, 2000);
    const ConfounderDraw pz = generate_confounders(pilot_n, dgm.conf_dim, derive_seed(dgm.weight_seed, 3));
    const Matrix px = generate_true_features(pz.z, pz.meta, out.structure, dgm.generator,
                                             derive_seed(dgm.weight_seed, 4));
    const Vector signal = px * out.weights.w_x + gz_transform(pz.z, pz.meta, dgm.g_z_kind) * out.weights.w_z;
    const double var = (signal.array() - signal.mean()).square().sum() / static_cast<double>(pilot_n - 1);
    out.noise_sd = var > 0.0 ? std::sqrt(var) : 1.0;
    out.noise_calibrated = true;
  }
  if (dgm.embedding.spec.kind == EmbeddingKind::kLinearProjection) {
    out.projection = make_random_projection(dgm.true_dim_q + nuisance_dim(dgm), dgm.embedding.spec.dim_out,
                                            derive_seed(dgm.weight_seed, 5));
  }
  return out;
}

Replication simulate_replication(const PreparedDgm& dgm, std::uint64_t seed) {
  const DgmConfig& cfg = dgm.config;
  const ConfounderDraw cz = generate_confounders(cfg.n, cfg.conf_dim, derive_seed(seed, 1));
  const Matrix features =
      generate_true_features(cz.z, cz.meta, dgm.structure, cfg.generator, derive_seed(seed, 2));
  const Matrix gz = gz_transform(cz.z, cz.meta, cfg.g_z_kind);
  const Vector y = simulate_outcome(features, gz, cfg.c, dgm.noise_sd, dgm.weights, derive_seed(seed, 3));

  Matrix embedded;
  const auto& spec = cfg.embedding.spec;
  if (uses_raw(cfg)) {
    std::mt19937_64 rng(derive_seed(seed, 4));
    Matrix raw(cfg.n, cfg.true_dim_q + nuisance_dim(cfg));
    raw.leftCols(cfg.true_dim_q) = features;
    raw.rightCols(nuisance_dim(cfg)) = gaussian_matrix(cfg.n, nuisance_dim(cfg), 1.0, rng);
    const RawObjectSet objects(std::move(raw));
    if (spec.kind == EmbeddingKind::kLinearProjection) {
      embedded = apply_embedding(*dgm.projection, objects);
    } else {
      embedded = apply_embedding(fit_pca_embedding(objects, spec.dim_out), objects);
    }
  } else if (spec.kind == EmbeddingKind::kNoisy) {
    embedded = apply_embedding(make_noisy_embedding(cfg.true_dim_q, spec.noise_variance, derive_seed(seed, 5)),
                               RawObjectSet(features));
  } else {
    embedded = features;
  }
  return Replication{FeatureSample(std::move(embedded), y, cz.z, cz.meta.kinds, cz.meta.names),
                     gz * dgm.weights.w_z};
}

// ---------------------------------------------------------------------------

double rejection_rate(const std::vector<double>& p, double alpha) {
  if (p.empty()) return 0.0;
  const auto k = std::count_if(p.begin(), p.end(), [&](double v) { return v <= alpha; });
  return static_cast<double>(k) / static_cast<double>(p.size());
}

double mc_se(double rr, Index n) {
  if (n <= 0) return 0.0;
  return std::sqrt(rr * (1.0 - rr) / static_cast<double>(n));
}

double ks_statistic(std::vector<double> p) {
  if (p.empty()) return 0.0;
  std::sort(p.begin(), p.end());
  const auto m = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = std::clamp(p[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / m - v, v - static_cast<double>(i) / m});
  }
  return d;
}

std::vector<std::pair<double, double>> qq_pairs(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  std::vector<std::pair<double, double>> out;
  const auto m = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(static_cast<double>(i + 1) / (m + 1.0), p[i]);
  return out;
}

std::uint64_t replication_seed(std::uint64_t master_seed, const DgmConfig& dgm, Index replication) {
  return derive_seed(derive_seed(master_seed, dgm.data_seed), static_cast<std::uint64_t>(replication));
}

std::vector<CampaignResult> run_campaign(const DgmConfig& dgm, const std::vector<MethodSpec>& methods,
                                         Index n_sim, double alpha, std::uint64_t master_seed,
                                         unsigned threads) {
  if (n_sim < 1) throw Error(ErrorCode::kInvalidArgument, "n_sim must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  const PreparedDgm prepared = prepare_dgm(dgm);
  for (const auto& m : methods) {
    if (m.true_conditional_model && (m.method != Method::kCptKpc || dgm.c != 0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "a true conditional model is only available for cpt_kpc under c = 0");
    }
  }
  const auto sims = static_cast<std::size_t>(n_sim);
  std::vector<CampaignResult> results(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    auto& r = results[k];
    r.dgm_id = dgm.id;
    r.method = methods[k].label.empty() ? std::string(to_string(methods[k].method)) : methods[k].label;
    r.alpha = alpha;
    r.seeds.resize(sims);
    r.p_values.resize(sims);
    r.runtime_ms.assign(sims, 0.0);
    r.errors.resize(sims);
    r.noise_sd = prepared.noise_sd;
    r.noise_calibrated = prepared.noise_calibrated;
    r.weight_redraws = prepared.weight_redraws;
  }

  parallel_for(sims, threads, [&](std::size_t rep) {
    const std::uint64_t seed = replication_seed(master_seed, dgm, static_cast<Index>(rep));
    const std::uint64_t test_seed = derive_seed(seed, 99);
    std::optional<Replication> data;
    std::string data_error;
    try {
      data.emplace(simulate_replication(prepared, seed));
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (std::size_t k = 0; k < methods.size(); ++k) {
      auto& r = results[k];
      r.seeds[rep] = test_seed;
      if (!data) {
        r.errors[rep] = "data generation failed: " + data_error;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        RunExtras extras;
        if (methods[k].true_conditional_model) {
          extras.conditional_model =
              ConditionalModel::from_truth(data->true_features_mean_y, prepared.noise_sd * prepared.noise_sd);
        }
        const TestOutcome out =
            run_method(methods[k].method, data->sample, methods[k].params, test_seed, alpha, extras);
        r.p_values[rep] = out.p_value;
      } catch (const std::exception& e) {
        r.errors[rep] = e.what();
      }
      r.runtime_ms[rep] =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  });

  for (auto& r : results) {
    std::vector<double> ok;
    double runtime = 0.0;
    for (std::size_t i = 0; i < sims; ++i) {
      runtime += r.runtime_ms[i];
      if (r.p_values[i]) ok.push_back(*r.p_values[i]);
    }
    r.n_ok = static_cast<Index>(ok.size());
    r.rejection_rate = rejection_rate(ok, alpha);
    r.mc_se = mc_se(r.rejection_rate, r.n_ok);
    r.ks_stat = ks_statistic(ok);
    r.mean_runtime_ms = runtime / static_cast<double>(sims);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Config

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::kSchema, "config key '" + key + "': " + what);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) schema_error(where + key, "unknown key");
  }
}

std::int64_t get_int(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) schema_error(where + key, "must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    schema_error(where + key, "must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) schema_error(where + key, "must be a number");
  return v.get<double>();
}

ParamMap parse_params(const json& obj, const std::string& where) {
  if (!obj.is_object()) schema_error(where, "must be an object");
  ParamMap out;
  for (const auto& [key, value] : obj.items()) {
    if (value.is_number()) {
      out[key] = value.get<double>();
    } else if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else if (value.is_boolean()) {
      out[key] = value.get<bool>() ? 1.0 : 0.0;
    } else {
      schema_error(where + "." + key, "must be a number, string or boolean");
    }
  }
  return out;
}

DgmConfig parse_dgm(const json& obj, std::size_t index) {
  const std::string where = "dgms[" + std::to_string(index) + "].";
  if (!obj.is_object()) schema_error("dgms[" + std::to_string(index) + "]", "must be an object");
  check_keys(obj,
             {"id", "n", "conf_dim", "g_z_kind", "c", "embedding", "true_dim_q", "weight_seed",
              "data_seed", "noise_sd", "generator"},
             where);
  DgmConfig d;
  d.id = "dgm" + std::to_string(index);
  for (const char* required : {"n", "conf_dim", "g_z_kind", "c"}) {
    if (!obj.contains(required)) schema_error(where + required, "missing");
  }
  if (obj.contains("id")) {
    if (!obj["id"].is_string() || obj["id"].get<std::string>().empty()) schema_error(where + "id", "must be a non-empty string");
    d.id = obj["id"].get<std::string>();
    if (d.id.find_first_of("/\\") != std::string::npos) schema_error(where + "id", "must not contain path separators");
  }
  d.n = get_int(obj, "n", where);
  if (d.n < 50) schema_error(where + "n", "must be >= 50");
  d.conf_dim = get_int(obj, "conf_dim", where);
  if (!supported_conf_dim(d.conf_dim)) schema_error(where + "conf_dim", "must be one of 1, 2, 4, 6, 10, 15");
  if (!obj["g_z_kind"].is_string()) schema_error(where + "g_z_kind", "must be a string");
  const auto kind = parse_gz_kind(obj["g_z_kind"].get<std::string>());
  if (!kind) schema_error(where + "g_z_kind", "must be linear, squared or complex (got \"" + obj["g_z_kind"].get<std::string>() + "\")");
  d.g_z_kind = *kind;
  d.c = static_cast<int>(get_int(obj, "c", where));
  if (d.c != 0 && d.c != 1) schema_error(where + "c", "must be 0 or 1");
  if (obj.contains("true_dim_q")) d.true_dim_q = get_int(obj, "true_dim_q", where);
  if (d.true_dim_q < 1) schema_error(where + "true_dim_q", "must be >= 1");
  if (obj.contains("weight_seed")) d.weight_seed = get_seed(obj, "weight_seed", where);
  if (obj.contains("data_seed")) d.data_seed = get_seed(obj, "data_seed", where);
  if (obj.contains("noise_sd") && !obj["noise_sd"].is_null()) {
    d.noise_sd = get_number(obj, "noise_sd", where);
    if (!(*d.noise_sd > 0.0)) schema_error(where + "noise_sd", "must be positive");
  }
  d.embedding.spec = {EmbeddingKind::kIdentity, d.true_dim_q, 0.0, Provenance::kFunctionOfX};
  if (obj.contains("embedding")) {
    const auto& e = obj["embedding"];
    const std::string ew = where + "embedding.";
    if (!e.is_object()) schema_error(where + "embedding", "must be an object");
    check_keys(e, {"kind", "dim_out", "noise_variance", "nuisance_dim"}, ew);
    if (!e.contains("kind") || !e["kind"].is_string()) schema_error(ew + "kind", "must be a string");
    const auto ek = parse_embedding_kind(e["kind"].get<std::string>());
    if (!ek || *ek == EmbeddingKind::kPrecomputed) {
      schema_error(ew + "kind", "must be identity, noisy, linear_projection or pca_insample");
    }
    d.embedding.spec.kind = *ek;
    d.embedding.spec.provenance = *ek == EmbeddingKind::kNoisy ? Provenance::kIndependentSample
                                  : *ek == EmbeddingKind::kLinearProjection ? Provenance::kExternal
                                                                             : Provenance::kFunctionOfX;
    if (e.contains("dim_out")) {
      d.embedding.spec.dim_out = get_int(e, "dim_out", ew);
      if (d.embedding.spec.dim_out < 1) schema_error(ew + "dim_out", "must be >= 1");
    } else if (*ek == EmbeddingKind::kLinearProjection || *ek == EmbeddingKind::kPcaInSample) {
      schema_error(ew + "dim_out", "required for projection embeddings");
    }
    if (e.contains("noise_variance")) d.embedding.spec.noise_variance = get_number(e, "noise_variance", ew);
    if (*ek == EmbeddingKind::kNoisy && !(d.embedding.spec.noise_variance > 0.0)) {
      schema_error(ew + "noise_variance", "must be positive for noisy embeddings");
    }
    if (*ek != EmbeddingKind::kNoisy && d.embedding.spec.noise_variance != 0.0) {
      schema_error(ew + "noise_variance", "only valid for noisy embeddings");
    }
    if (e.contains("nuisance_dim")) {
      d.embedding.nuisance_dim = get_int(e, "nuisance_dim", ew);
      if (*d.embedding.nuisance_dim < 0) schema_error(ew + "nuisance_dim", "must be >= 0");
    }
  }
  if (obj.contains("generator")) {
    const auto& g = obj["generator"];
    const std::string gw = where + "generator.";
    if (!g.is_object()) schema_error(where + "generator", "must be an object");
    check_keys(g, {"rank", "noise_sd", "shared_fraction", "offset_sd"}, gw);
    if (g.contains("rank")) d.generator.rank = get_int(g, "rank", gw);
    if (g.contains("noise_sd")) d.generator.noise_sd = get_number(g, "noise_sd", gw);
    if (g.contains("shared_fraction")) d.generator.shared_fraction = get_number(g, "shared_fraction", gw);
    if (g.contains("offset_sd")) d.generator.offset_sd = get_number(g, "offset_sd", gw);
    if (d.generator.rank < 1) schema_error(gw + "rank", "must be >= 1");
    if (d.generator.noise_sd < 0.0) schema_error(gw + "noise_sd", "must be >= 0");
    if (d.generator.shared_fraction < 0.0 || d.generator.shared_fraction > 1.0) {
      schema_error(gw + "shared_fraction", "must lie in [0, 1]");
    }
  }
  if (d.g_z_kind == GzKind::kComplex && d.conf_dim < 6) {
    schema_error(where + "g_z_kind", "complex needs conf_dim >= 6");
  }
  return d;
}

MethodSpec parse_method_spec(const json& v, std::size_t index) {
  const std::string where = "methods[" + std::to_string(index) + "]";
  MethodSpec spec;
  std::string name;
  if (v.is_string()) {
    name = v.get<std::string>();
  } else if (v.is_object()) {
    check_keys(v, {"name", "params", "label"}, where + ".");
    if (!v.contains("name") || !v["name"].is_string()) schema_error(where + ".name", "must be a string");
    name = v["name"].get<std::string>();
    if (v.contains("params")) spec.params = parse_params(v["params"], where + ".params");
    if (v.contains("label")) {
      if (!v["label"].is_string()) schema_error(where + ".label", "must be a string");
      spec.label = v["label"].get<std::string>();
    }
  } else {
    schema_error(where, "must be a method name or an object");
  }
  const auto m = parse_method(name);
  if (!m) schema_error(where + ".name", "unknown method \"" + name + "\"");
  spec.method = *m;
  if (auto it = spec.params.find("conditional_model"); it != spec.params.end()) {
    const auto* s = std::get_if<std::string>(&it->second);
    if (!s || (*s != "true" && *s != "fitted")) {
      schema_error(where + ".params.conditional_model", "must be \"true\" or \"fitted\"");
    }
    spec.true_conditional_model = *s == "true";
    spec.params.erase(it);
  }
  return spec;
}

}  // namespace

CampaignConfig parse_campaign_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kSchema, "config must be a JSON object");
  check_keys(doc, {"n_sim", "alpha", "master_seed", "dgms", "methods"}, "");
  CampaignConfig cfg;
  if (doc.contains("n_sim")) cfg.n_sim = get_int(doc, "n_sim", "");
  if (cfg.n_sim < 20) schema_error("n_sim", "must be >= 20");
  if (doc.contains("alpha")) cfg.alpha = get_number(doc, "alpha", "");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) schema_error("alpha", "must lie in (0, 1)");
  if (doc.contains("master_seed")) cfg.master_seed = get_seed(doc, "master_seed", "");
  if (!doc.contains("dgms") || !doc["dgms"].is_array() || doc["dgms"].empty()) {
    schema_error("dgms", "must be a non-empty array");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["dgms"].size(); ++i) {
    cfg.dgms.push_back(parse_dgm(doc["dgms"][i], i));
    if (!ids.insert(cfg.dgms.back().id).second) {
      schema_error("dgms[" + std::to_string(i) + "].id", "duplicate id \"" + cfg.dgms.back().id + "\"");
    }
  }
  if (!doc.contains("methods") || !doc["methods"].is_array() || doc["methods"].empty()) {
    schema_error("methods", "must be a non-empty array");
  }
  std::set<std::string> labels;
  for (std::size_t i = 0; i < doc["methods"].size(); ++i) {
    cfg.methods.push_back(parse_method_spec(doc["methods"][i], i));
    auto& m = cfg.methods.back();
    if (m.label.empty()) m.label = std::string(to_string(m.method));
    if (!labels.insert(m.label).second) {
      schema_error("methods[" + std::to_string(i) + "]", "duplicate method label \"" + m.label + "\"");
    }
    if (m.true_conditional_model) {
      const bool all_null = std::all_of(cfg.dgms.begin(), cfg.dgms.end(),
                                        [](const DgmConfig& d) { return d.c == 0; });
      if (m.method != Method::kCptKpc || !all_null) {
        schema_error("methods[" + std::to_string(i) + "].params.conditional_model",
                     "\"true\" needs cpt_kpc and c = 0 in every dgm");
      }
    }
  }
  return cfg;
}

std::vector<CampaignResult> run_campaign_config(const CampaignConfig& config, unsigned threads) {
  std::vector<CampaignResult> all;
  for (const auto& dgm : config.dgms) {
    auto cells = run_campaign(dgm, config.methods, config.n_sim, config.alpha, config.master_seed, threads);
    for (auto& c : cells) all.push_back(std::move(c));
  }
  return all;
}

std::string campaign_summary_json(const std::vector<CampaignResult>& results) {
  json cells = json::array();
  for (const auto& r : results) {
    cells.push_back({
        {"dgm", r.dgm_id},
        {"method", r.method},
        {"alpha", r.alpha},
        {"n_sim", r.p_values.size()},
        {"n_ok", r.n_ok},
        {"n_error", static_cast<Index>(r.p_values.size()) - r.n_ok},
        {"rejection_rate", r.rejection_rate},
        {"mc_se", r.mc_se},
        {"ks_stat", r.ks_stat},
        {"mean_runtime_ms", r.mean_runtime_ms},
        {"noise_sd", r.noise_sd},
        {"noise_calibrated", r.noise_calibrated},
        {"weight_redraws", r.weight_redraws},
    });
  }
  return json{{"cells", cells}}.dump(2);
}

void write_campaign_outputs(const std::filesystem::path& dir, const std::vector<CampaignResult>& results) {
  std::filesystem::create_directories(dir);
  for (const auto& r : results) {
    const std::string cell = r.dgm_id + "__" + r.method;
    std::ofstream csv(dir / (cell + ".csv"));
    if (!csv) throw Error(ErrorCode::kIo, "cannot write " + (dir / (cell + ".csv")).string());
    csv << "dgm_id,method,replication,seed,p_value,runtime_ms,error\n";
    for (std::size_t i = 0; i < r.p_values.size(); ++i) {
      std::string err = r.errors[i];
      std::replace(err.begin(), err.end(), '"', '\'');
      csv << r.dgm_id << ',' << r.method << ',' << i << ',' << r.seeds[i] << ','
          << (r.p_values[i] ? format_double(*r.p_values[i]) : std::string("NA")) << ','
          << format_double(r.runtime_ms[i]) << ',' << (err.empty() ? "" : "\"" + err + "\"") << '\n';
    }
    std::vector<double> ok;
    for (const auto& p : r.p_values) {
      if (p) ok.push_back(*p);
    }
    std::ofstream qq(dir / (cell + "_qq.csv"));
    qq << "uniform_quantile,p_value\n";
    for (const auto& [u, p] : qq_pairs(ok)) qq << format_double(u) << ',' << format_double(p) << '\n';
  }
  std::ofstream summary(dir / "summary.json");
  if (!summary) throw Error(ErrorCode::kIo, "cannot write summary.json");
  summary << campaign_summary_json(results) << '\n';
}

}  // namespace dncit
