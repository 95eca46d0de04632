#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dncit/common.hpp"
#include "dncit/conditional_model.hpp"
#include "dncit/data_model.hpp"
#include "dncit/embeddings.hpp"
#include "dncit/methods.hpp"

namespace dncit {

// ---------------------------------------------------------------------------
// Synthetic confounders

enum class ConfounderRole { kAge, kHeadSize, kSex, kSite, kDate, kQc, kHeadPosition, kGeneticPc };

struct ConfounderMeta {
  std::vector<std::string> names;
  std::vector<ConfounderRole> roles;
  std::vector<ColumnKind> kinds;
  std::vector<bool> continuous;  // membership in J_c

  std::vector<Index> continuous_columns() const;
  std::optional<Index> find(ConfounderRole role) const;
};

struct ConfounderDraw {
  Matrix z;
  ConfounderMeta meta;
};

bool supported_conf_dim(Index conf_dim);

// Roster by dimension: 1 age; 2 + head size; 4 + sex, site (3 levels, one
// encoded column); 6 + date, qc; 10 + four head-position columns; 15 + five
// genetic PCs. The continuous block is mixed by a fixed lower-bidiagonal map
// (pairwise |rho| <= 0.4) and every column is standardised.
ConfounderDraw generate_confounders(Index n, Index conf_dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// True features

struct FeatureGenerator {
  Index rank = 8;               // inner width r
  double noise_sd = 0.7;        // SD of E
  double shared_fraction = 0.25; // share of Var(E) carried by one common factor
  double offset_sd = 1.0;       // SD of the per-unit offsets inside tanh
};

// Fixed structure: tanh(Z_c A + a0) B, plus loadings of the common factor in E.
struct FeatureStructure {
  Matrix a;         // p_c x r, N(0, 1/p_c)
  Vector a0;        // r offsets
  Matrix b;         // r x q, N(0, 1/r)
  Vector loadings;  // q positive loadings
};

FeatureStructure make_feature_structure(Index p_cont, Index q, const FeatureGenerator& gen,
                                        std::uint64_t seed);

// Column-standardised tanh(Z_c A + a0) B + E. E = noise_sd * (sqrt(s) f l' +
// sqrt(1 - s) N), f a per-row common factor; noise_sd = 0 gives exact
// functions of Z.
Matrix generate_true_features(const Matrix& z, const ConfounderMeta& meta,
                              const FeatureStructure& structure, const FeatureGenerator& gen,
                              std::uint64_t noise_seed);

// Convenience form: structure from derive_seed(seed, 1), E from derive_seed(seed, 2).
Matrix generate_true_features(const Matrix& z, const ConfounderMeta& meta, Index q,
                              std::uint64_t seed, const FeatureGenerator& gen = {});

// ---------------------------------------------------------------------------
// Outcome

enum class GzKind { kLinear, kSquared, kComplex };

std::string_view to_string(GzKind kind);
std::optional<GzKind> parse_gz_kind(std::string_view name);

// linear: z; squared: z plus s_j^2 for j in J_c; complex: squared plus
// s_j * s_sex for j in J_c plus s_date^3 and s_date^4.
Matrix gz_transform(const Matrix& z, const ConfounderMeta& meta, GzKind kind);

struct OutcomeWeights {
  Vector w_x;  // a_j |d_j| / sum |d|, a_j ~ Bernoulli(0.5)
  Vector w_z;  // |d_j| / sum |d|
  bool degenerate = false;  // every a_j was 0
};

OutcomeWeights draw_outcome_weights(Index q, Index p_z, std::uint64_t seed);

Vector simulate_outcome(const Matrix& features, const Matrix& gz, int c, double noise_sd,
                        const OutcomeWeights& weights, std::uint64_t noise_seed);

// Weights from derive_seed(seed, 1), noise from derive_seed(seed, 2).
Vector simulate_outcome(const Matrix& features, const Matrix& gz, int c, double noise_sd,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Campaigns

struct HarnessEmbedding {
  EmbeddingSpec spec;          // kind, dim_out, noise_variance
  std::optional<Index> nuisance_dim;  // raw extra dims for projections; default 4 q
};

struct DgmConfig {
  std::string id = "dgm";
  Index n = 500;
  Index conf_dim = 1;
  GzKind g_z_kind = GzKind::kLinear;
  int c = 0;
  HarnessEmbedding embedding;
  Index true_dim_q = 139;
  std::uint64_t weight_seed = 1;
  std::uint64_t data_seed = 1;
  std::optional<double> noise_sd;  // unset = calibrated so Var(eps) = Var(c X w_x + g(Z) w_z) at c = 1
  FeatureGenerator generator;
};

void validate(const DgmConfig& dgm);

// Everything fixed per DGM: feature structure, outcome weights, projection
// and the resolved noise level.
struct PreparedDgm {
  DgmConfig config;
  ConfounderMeta meta;
  FeatureStructure structure;
  OutcomeWeights weights;
  Index weight_redraws = 0;
  double noise_sd = 1.0;
  bool noise_calibrated = false;
  std::optional<FittedEmbedding> projection;
};

PreparedDgm prepare_dgm(const DgmConfig& dgm);

struct Replication {
  FeatureSample sample;
  Vector true_features_mean_y;  // gz w_z, the mean of Y | Z when c = 0
};

Replication simulate_replication(const PreparedDgm& dgm, std::uint64_t seed);

struct MethodSpec {
  Method method = Method::kRcot;
  ParamMap params;
  bool true_conditional_model = false;  // CPT only; requires c = 0
  std::string label;                    // defaults to the method name
};

struct CampaignResult {
  std::string dgm_id;
  std::string method;
  double alpha = 0.05;
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<double>> p_values;  // nullopt where the run failed
  std::vector<double> runtime_ms;
  std::vector<std::string> errors;
  Index n_ok = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  double mean_runtime_ms = 0.0;
  double ks_stat = 0.0;
  double noise_sd = 0.0;
  bool noise_calibrated = false;
  Index weight_redraws = 0;
};

double rejection_rate(const std::vector<double>& p_values, double alpha);
// sqrt(rr (1 - rr) / n)
double mc_se(double rr, Index n);
// Kolmogorov-Smirnov distance of the empirical CDF of p from U(0, 1).
double ks_statistic(std::vector<double> p_values);
// (i / (m + 1), p_(i)) for the sorted p-values.
std::vector<std::pair<double, double>> qq_pairs(std::vector<double> p_values);

std::uint64_t replication_seed(std::uint64_t master_seed, const DgmConfig& dgm, Index replication);

// One result per method. Data are generated once per replication and shared
// by all methods; results do not depend on the thread count.
std::vector<CampaignResult> run_campaign(const DgmConfig& dgm, const std::vector<MethodSpec>& methods,
                                         Index n_sim, double alpha, std::uint64_t master_seed,
                                         unsigned threads = 1);

struct CampaignConfig {
  Index n_sim = 200;
  double alpha = 0.05;
  std::uint64_t master_seed = 0;
  std::vector<DgmConfig> dgms;
  std::vector<MethodSpec> methods;
};

// Rejects unknown keys and bad values with kSchema, naming the key.
CampaignConfig parse_campaign_config(const std::string& json_text);

std::vector<CampaignResult> run_campaign_config(const CampaignConfig& config, unsigned threads);

// <dir>/<dgm>__<method>.csv, <dir>/<dgm>__<method>_qq.csv and <dir>/summary.json.
void write_campaign_outputs(const std::filesystem::path& dir,
                            const std::vector<CampaignResult>& results);

std::string campaign_summary_json(const std::vector<CampaignResult>& results);

}  // namespace dncit
