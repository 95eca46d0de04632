#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "dncit/methods.hpp"
#include "dncit/parallel.hpp"
#include "dncit/sim_harness.hpp"

namespace dncit::cli {

using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit(const json& doc, const std::string& out_path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(out_path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + out_path);
  file << text;
}

json params_json(const ParamMap& params) {
  json obj = json::object();
  for (const auto& [key, value] : params) {
    std::visit([&](const auto& v) { obj[key] = v; }, value);
  }
  return obj;
}

ParamMap collect_params(const std::vector<std::string>& assignments) {
  ParamMap params;
  for (const auto& a : assignments) {
    auto [key, value] = parse_param(a);
    if (!params.emplace(key, value).second) {
      throw Error(ErrorCode::kInvalidArgument, "parameter '" + key + "' given twice");
    }
  }
  return params;
}

const std::vector<std::string> kMethodNames = {"rcot", "cpt-kpc", "cpt_kpc", "cmiknn", "fcit", "wald"};

struct TestArgs {
  std::string x, y, z, method, adjust, out;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<std::string> params;
};

struct SimulateArgs {
  std::string config, out_dir;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct ConfcheckArgs {
  std::string x, z, spec, method = "rcot", role = "residual_as_x", adjust, out;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<std::string> params;
};

double adjusted_alpha(double alpha, const std::string& adjust, ParamMap& record) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  if (adjust.empty()) return alpha;
  const Index k = parse_adjust(adjust);
  record["adjust"] = adjust;
  record["alpha_unadjusted"] = alpha;
  return alpha / static_cast<double>(k);
}

int cmd_test(const TestArgs& a, std::ostream& out) {
  const FeatureSample sample =
      load_sample(a.x, a.y, a.z.empty() ? std::nullopt : std::optional<std::filesystem::path>(a.z));
  const ParamMap params = collect_params(a.params);
  ParamMap record;
  const double alpha = adjusted_alpha(a.alpha, a.adjust, record);
  TestOutcome outcome = run_method(*parse_method(a.method), sample, params, a.seed, alpha);
  for (auto& [k, v] : record) outcome.params[k] = v;
  emit(outcome_json(outcome, sample), a.out, out);
  return kExitOk;
}

int cmd_simulate(const SimulateArgs& a, bool seed_given, std::ostream& out) {
  CampaignConfig config = parse_campaign_config(read_text(a.config));
  if (seed_given) config.master_seed = a.seed;
  const auto results = run_campaign_config(config, a.threads);
  write_campaign_outputs(a.out_dir, results);
  for (const auto& r : results) {
    out << r.dgm_id << ' ' << r.method << " rejection_rate=" << r.rejection_rate
        << " mc_se=" << r.mc_se << " ok=" << r.n_ok << '/' << r.p_values.size() << '\n';
  }
  return kExitOk;
}

int cmd_confcheck(const ConfcheckArgs& a, std::ostream& out) {
  LabeledMatrix x = load_matrix_csv(a.x, false);
  LabeledMatrix z = load_matrix_csv(a.z, true);
  if (!x.ids.empty() && !z.ids.empty()) {
    z.values = reorder_rows(z, x.ids, "z");
    z.ids = x.ids;
  } else if (x.values.rows() != z.values.rows()) {
    throw Error(ErrorCode::kRowMismatch, "x and z files have differing row counts");
  }
  const ConfounderSpec spec = parse_confounder_spec(read_text(a.spec));
  AuditOptions options;
  options.method = *parse_method(a.method);
  options.params = collect_params(a.params);
  options.role = a.role == "confounder_as_x" ? AuditRole::kConfounderAsX : AuditRole::kResidualAsX;
  ParamMap record;
  options.alpha = adjusted_alpha(a.alpha, a.adjust, record);
  options.seed = a.seed;
  const auto entries = confounder_audit(x.values, to_confounder_table(z), spec, options);
  json doc = audit_json(entries, options, x.values.rows(), x.values.cols());
  for (const auto& [k, v] : record) std::visit([&](const auto& val) { doc[k] = val; }, v);
  emit(doc, a.out, out);
  for (const auto& e : entries) {
    if (!e.error.empty()) return kExitMethod;
  }
  return kExitOk;
}

}  // namespace

Index parse_adjust(const std::string& spec) {
  const std::string prefix = "bonferroni:";
  if (spec.rfind(prefix, 0) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "--adjust must look like bonferroni:K");
  }
  const std::string count = spec.substr(prefix.size());
  std::size_t used = 0;
  long long k = 0;
  try {
    k = std::stoll(count, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != count.size() || k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "bonferroni count must be a positive integer");
  }
  return static_cast<Index>(k);
}

json outcome_json(const TestOutcome& o, const FeatureSample& sample) {
  return json{
      {"method", std::string(to_string(o.method))},
      {"statistic", o.statistic},
      {"p_value", o.p_value},
      {"reject", o.reject},
      {"alpha", o.alpha},
      {"n", sample.n()},
      {"dim_x", sample.q()},
      {"dim_z", sample.p()},
      {"params", params_json(o.params)},
      {"seed", o.seed},
      {"runtime_ms", o.runtime_ms},
  };
}

json audit_json(const std::vector<AuditEntry>& entries, const AuditOptions& options, Index n,
                Index dim_x) {
  json p_values = json::object();
  json rows = json::array();
  for (const auto& e : entries) {
    p_values[e.name] = e.p_value ? json(*e.p_value) : json(nullptr);
    json row{
        {"name", e.name},
        {"p_value", e.p_value ? json(*e.p_value) : json(nullptr)},
        {"statistic", e.statistic ? json(*e.statistic) : json(nullptr)},
        {"reject", e.p_value ? json(*e.p_value <= options.alpha) : json(nullptr)},
        {"dropped_design_columns", e.dropped_design_columns},
    };
    if (!e.error.empty()) row["error"] = e.error;
    rows.push_back(std::move(row));
  }
  return json{
      {"p_values", std::move(p_values)},
      {"entries", std::move(rows)},
      {"method", std::string(to_string(options.method))},
      {"role", options.role == AuditRole::kConfounderAsX ? "confounder_as_x" : "residual_as_x"},
      {"alpha", options.alpha},
      {"seed", options.seed},
      {"n", n},
      {"dim_x", dim_x},
      {"params", params_json(options.params)},
  };
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional independence tests for embedded data", "dncit"};
  app.require_subcommand(1);

  TestArgs t;
  auto* test = app.add_subcommand("test", "Run one conditional independence test");
  test->add_option("--x", t.x, "CSV with the feature columns")->required();
  test->add_option("--y", t.y, "CSV with one outcome column")->required();
  test->add_option("--z", t.z, "CSV with confounder columns");
  test->add_option("--method", t.method, "rcot | cpt-kpc | cmiknn | fcit | wald")
      ->required()
      ->check(CLI::IsMember(kMethodNames));
  test->add_option("--alpha", t.alpha, "Significance level")->capture_default_str();
  test->add_option("--seed", t.seed, "Seed for all randomised steps")->capture_default_str();
  test->add_option("--param", t.params, "Method hyperparameter key=value (repeatable)");
  test->add_option("--adjust", t.adjust, "Multiple-testing adjustment, bonferroni:K");
  test->add_option("--out", t.out, "Write the JSON here instead of stdout");

  SimulateArgs s;
  s.threads = default_thread_count();
  auto* simulate = app.add_subcommand("simulate", "Run a simulation campaign");
  simulate->add_option("--config", s.config, "Campaign JSON")->required();
  simulate->add_option("--out-dir", s.out_dir, "Directory for CSV and summary output")->required();
  simulate->add_option("--threads", s.threads, "Worker threads (default: DNCIT_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  auto* sim_seed = simulate->add_option("--seed", s.seed, "Override the config master_seed");

  ConfcheckArgs c;
  auto* confcheck = app.add_subcommand("confcheck", "Audit confounder control by regressing out");
  confcheck->add_option("--x", c.x, "CSV with the feature columns")->required();
  confcheck->add_option("--z", c.z, "CSV with confounder columns")->required();
  confcheck->add_option("--spec", c.spec, "Confounder spec JSON")->required();
  confcheck->add_option("--method", c.method, "Test used per confounder")
      ->check(CLI::IsMember(kMethodNames))
      ->capture_default_str();
  confcheck->add_option("--role", c.role, "residual_as_x | confounder_as_x")
      ->check(CLI::IsMember({"residual_as_x", "confounder_as_x"}))
      ->capture_default_str();
  confcheck->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
  confcheck->add_option("--seed", c.seed, "Seed for all randomised steps")->capture_default_str();
  confcheck->add_option("--param", c.params, "Method hyperparameter key=value (repeatable)");
  confcheck->add_option("--adjust", c.adjust, "Multiple-testing adjustment, bonferroni:K");
  confcheck->add_option("--out", c.out, "Write the JSON here instead of stdout");

  std::vector<std::string> storage{"dncit"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInput;
  }

  try {
    if (test->parsed()) return cmd_test(t, out);
    if (simulate->parsed()) return cmd_simulate(s, sim_seed->count() > 0, out);
    return cmd_confcheck(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_input_error(e.code()) ? kExitInput : kExitMethod;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitMethod;
  }
}

}  // namespace dncit::cli
