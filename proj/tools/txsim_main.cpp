// txsim: transformer-accelerator co-design workbench.
//
// Subcommands: validate, simulate, profile, map, enumerate, refmax, search.
// Exit codes: 0 success, 1 validation/feasibility failure, 2 usage/IO error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "txsim/codesign.hpp"
#include "txsim/graph.hpp"
#include "txsim/manifest.hpp"
#include "txsim/scheduler.hpp"
#include "txsim/simulator.hpp"
#include "txsim/sparsity.hpp"

using nlohmann::json;
using namespace txsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write file: " + path);
  out << contents;
}

CalibrationTable resolve_calibration(const std::string& flag_path) {
  if (!flag_path.empty()) return load_calibration(flag_path);
  if (const char* env = std::getenv("TXSIM_CALIB")) return load_calibration(env);
  return default_calibration();
}

ValidationMode parse_mode(const std::string& m) {
  if (m == "strict") return ValidationMode::Strict;
  if (m == "extended") return ValidationMode::Extended;
  throw Error(ErrorCode::IoError, "unknown validation mode: " + m);
}

PruneThresholds thresholds_from_flags(double tau_i, double tau_t, double tau_w) {
  PruneThresholds th;
  th.tau_infer = tau_i;
  th.tau_train = tau_t;
  if (tau_w >= 0) th.tau_weight = tau_w;
  return th;
}

struct SearchFileConfig {
  SearchConfig search;
  EvalContext ctx;
  bool maxima_loaded = false;
};

SearchFileConfig load_search_config(const std::string& path, const std::string& calib_flag) {
  SearchFileConfig out;
  json j = json::parse(slurp(path));
  auto& sc = out.search;
  auto& ctx = out.ctx;

  const std::string method = j.value("method", "transcode");
  if (method == "transcode") sc.method = SearchMethod::TransCode;
  else if (method == "random") sc.method = SearchMethod::Random;
  else if (method == "hwnas") sc.method = SearchMethod::HwNas;
  else throw Error(ErrorCode::IoError, "unknown search method: " + method);
  sc.budget = j.value("budget", 200);
  sc.seed = j.value("seed", 0);
  sc.initial_samples = j.value("initial_samples", 32);
  sc.workers = j.value("workers", 1);

  if (j.contains("weights")) {
    const auto& w = j["weights"];
    ctx.weights = {w.value("alpha", 0.1), w.value("beta", 0.1), w.value("gamma", 0.2),
                   w.value("delta", 0.1), w.value("epsilon", 0.5)};
  }
  ctx.oracle = j.value("oracle", "synthetic") == "toy_trainer" ? OracleKind::ToyTrainer
                                                               : OracleKind::Synthetic;
  ctx.mode = j.value("mode", "inference") == "training" ? EvalMode::Training : EvalMode::Inference;
  ctx.validation = parse_mode(j.value("validation", "strict"));
  ctx.seq_len = j.value("seq_len", 16u);
  if (j.contains("constraints")) {
    const auto& c = j["constraints"];
    if (c.contains("max_layers")) ctx.constraints.max_layers = c["max_layers"].get<int>();
    if (c.contains("max_area_mm2")) ctx.constraints.max_area_mm2 = c["max_area_mm2"].get<double>();
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    ctx.thresholds.tau_infer = t.value("tau_infer", 0.0);
    ctx.thresholds.tau_train = t.value("tau_train", 0.0);
    if (t.contains("tau_weight")) ctx.thresholds.tau_weight = t["tau_weight"].get<double>();
  }
  if (j.contains("spaces_file")) ctx.spaces = load_spaces(j["spaces_file"].get<std::string>());
  ctx.calib = j.contains("calib_file") ? load_calibration(j["calib_file"].get<std::string>())
                                       : resolve_calibration(calib_flag);
  if (j.contains("curves")) {
    const auto& c = j["curves"];
    if (c.contains("weight")) ctx.curves.weight = curve_from_json(slurp(c["weight"]));
    if (c.contains("activation")) ctx.curves.activation = curve_from_json(slurp(c["activation"]));
    if (c.contains("gradient")) ctx.curves.gradient = curve_from_json(slurp(c["gradient"]));
  }
  if (j.contains("maxima_file")) {
    ctx.maxima = maxima_from_json(slurp(j["maxima_file"].get<std::string>()));
    out.maxima_loaded = true;
  }
  if (j.contains("freeze_acc_file"))
    sc.freeze_acc = accelerator_from_json(slurp(j["freeze_acc_file"].get<std::string>()));
  return out;
}

json report_with_manifest(const SimReport& rep, RunManifest manifest) {
  json j = json::parse(report_to_json(rep));
  manifest.timestamp_utc = utc_timestamp();
  j["manifest"] = json::parse(manifest.to_json());
  return j;
}

int cmd_validate(const std::string& txf_path, const std::string& acc_path,
                 const std::string& mode_str, const std::string& spaces_path) {
  DesignSpaces spaces = spaces_path.empty() ? DesignSpaces{} : load_spaces(spaces_path);
  const ValidationMode mode = parse_mode(mode_str);
  bool ok = true;
  if (!txf_path.empty()) {
    auto cfg = transformer_from_json(slurp(txf_path));
    auto rep = validate_transformer(cfg, spaces.transformer, mode);
    for (const auto& v : rep.violations)
      std::cout << "transformer: " << v.field << ": " << v.message << "\n";
    ok = ok && rep.valid;
  }
  if (!acc_path.empty()) {
    auto cfg = accelerator_from_json(slurp(acc_path));
    auto rep = validate_accelerator(cfg, spaces.accelerator);
    for (const auto& v : rep.violations)
      std::cout << "accelerator: " << v.field << ": " << v.message << "\n";
    ok = ok && rep.valid;
  }
  std::cout << (ok ? "valid" : "invalid") << "\n";
  return ok ? 0 : 1;
}

int cmd_enumerate(const std::string& spaces_path, bool transformers, bool check) {
  DesignSpaces spaces = spaces_path.empty() ? DesignSpaces{} : load_spaces(spaces_path);
  if (transformers) {
    std::cout << count_transformer_space_strict(spaces.transformer).str() << "\n";
    return 0;
  }
  const uint64_t count = count_accelerator_space(spaces.accelerator);
  std::cout << count << "\n";
  if (check) {
    const uint64_t brute = enumerate_accelerator_space(spaces.accelerator);
    if (brute != count) {
      std::cerr << "enumeration mismatch: product=" << count << " brute=" << brute << "\n";
      return 1;
    }
    std::cerr << "brute-force enumeration agrees (" << brute << ")\n";
  }
  return 0;
}

int cmd_simulate(const std::string& txf_path, const std::string& acc_path,
                 const std::string& calib_path, const std::string& mode, uint32_t seq_len,
                 double tau_i, double tau_t, double tau_w, const std::string& curves_dir,
                 const std::string& out_path) {
  auto txf = transformer_from_json(slurp(txf_path));
  auto acc = accelerator_from_json(slurp(acc_path));
  CalibrationTable calib = resolve_calibration(calib_path);
  CurveSet curves = identity_curves();
  if (!curves_dir.empty()) {
    namespace fs = std::filesystem;
    curves.weight = curve_from_json(slurp((fs::path(curves_dir) / "weight.json").string()));
    curves.activation = curve_from_json(slurp((fs::path(curves_dir) / "activation.json").string()));
    curves.gradient = curve_from_json(slurp((fs::path(curves_dir) / "gradient.json").string()));
  }
  PruneThresholds th = thresholds_from_flags(tau_i, tau_t, tau_w);

  BuildOptions opts;
  opts.activation = acc.activation;
  const EvalMode em = (mode == "training") ? EvalMode::Training : EvalMode::Inference;
  Graph g = build_graph(txf, seq_len, em, opts);
  Schedule sched = build_schedule(g, acc);
  SimReport rep = simulate(sched, calib, curves, th);

  RunManifest manifest;
  manifest.command = "simulate";
  manifest.calib_version = calib.calib_version;
  manifest.add_file_hash("transformer", slurp(txf_path));
  manifest.add_file_hash("accelerator", slurp(acc_path));
  json j = report_with_manifest(rep, manifest);
  if (!out_path.empty()) spit(out_path, j.dump(2) + "\n");
  std::cout << "cycles=" << rep.total_cycles << " latency_ms=" << rep.latency_ms
            << " dynamic_j=" << rep.dynamic_energy_j << " leakage_j=" << rep.leakage_energy_j
            << " area_mm2=" << rep.area_mm2 << "\n";
  return 0;
}

int cmd_map(const std::string& txf_path, const std::string& acc_path, const std::string& mode,
            uint32_t seq_len, const std::string& out_path) {
  auto txf = transformer_from_json(slurp(txf_path));
  auto acc = accelerator_from_json(slurp(acc_path));
  BuildOptions opts;
  opts.activation = acc.activation;
  const EvalMode em = (mode == "training") ? EvalMode::Training : EvalMode::Inference;
  Graph g = build_graph(txf, seq_len, em, opts);
  Schedule sched = build_schedule(g, acc);
  for (const auto& [kind, count] : sched.program.op_counts())
    std::cout << kind << "=" << count << "\n";
  if (!out_path.empty()) spit(out_path, schedule_to_json(sched) + "\n");
  return 0;
}

int cmd_profile(const std::string& txf_path, uint32_t seq_len, int num_inputs,
                const std::string& roles_csv, const std::string& grid_csv, uint64_t seed,
                const std::string& out_dir) {
  if (num_inputs < 1) {
    std::cerr << "profile: need at least one input\n";
    return 2;
  }
  auto txf = transformer_from_json(slurp(txf_path));
  std::vector<Role> roles;
  {
    std::stringstream ss(roles_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "weight") roles.push_back(Role::Weight);
      else if (tok == "activation") roles.push_back(Role::Activation);
      else if (tok == "gradient") roles.push_back(Role::Gradient);
      else throw Error(ErrorCode::IoError, "unknown role: " + tok);
    }
  }
  std::vector<double> grid;
  {
    std::stringstream ss(grid_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) grid.push_back(std::stod(tok));
  }
  bool need_training = false;
  for (Role r : roles) need_training |= (r == Role::Gradient);

  Graph g = build_graph(txf, seq_len, need_training ? EvalMode::Training : EvalMode::Inference);
  Params params = make_params(g, seed);
  DetRng rng(seed + 1);
  std::vector<std::map<uint32_t, Matrix>> inputs;
  for (int i = 0; i < num_inputs; ++i) {
    std::map<uint32_t, Matrix> in;
    const auto& in_node = g.nodes[g.input_ids[0]];
    in[g.input_ids[0]] = random_matrix(in_node.rows, in_node.cols, rng);
    if (g.mode == EvalMode::Training) {
      const auto& seed_node = g.nodes[g.grad_seed_id];
      in[g.grad_seed_id] = random_matrix(seed_node.rows, seed_node.cols, rng);
    }
    inputs.push_back(std::move(in));
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (Role r : roles) {
    SparsityCurve curve = profile_curve(g, params, inputs, r, grid);
    spit((fs::path(out_dir) / (role_name(r) + ".json")).string(), curve_to_json(curve) + "\n");
    std::cout << role_name(r) << ": " << curve.points.size() << " points, rho("
              << curve.points.back().first << ")=" << curve.points.back().second << "\n";
  }
  return 0;
}

int cmd_refmax(const std::string& spaces_path, const std::string& calib_path, uint32_t seq_len,
               double tau_i, double tau_t, double tau_w, const std::string& out_path) {
  DesignSpaces spaces = spaces_path.empty() ? DesignSpaces{} : load_spaces(spaces_path);
  CalibrationTable calib = resolve_calibration(calib_path);
  PruneThresholds th = thresholds_from_flags(tau_i, tau_t, tau_w);
  ReferenceMaxima mx = compute_reference_maxima(spaces, calib, identity_curves(), th, seq_len);
  const std::string text = maxima_to_json(mx) + "\n";
  if (!out_path.empty()) spit(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_search(const std::string& config_path, const std::string& calib_flag,
               const std::string& out_dir, const std::string& method_override,
               int64_t seed_override, int budget_override, int workers_override,
               const std::string& freeze_acc_path) {
  SearchFileConfig sfc = load_search_config(config_path, calib_flag);
  if (!method_override.empty()) {
    if (method_override == "transcode") sfc.search.method = SearchMethod::TransCode;
    else if (method_override == "random") sfc.search.method = SearchMethod::Random;
    else if (method_override == "hwnas") sfc.search.method = SearchMethod::HwNas;
    else throw Error(ErrorCode::IoError, "unknown method: " + method_override);
  }
  if (seed_override >= 0) sfc.search.seed = static_cast<uint64_t>(seed_override);
  if (budget_override > 0) sfc.search.budget = budget_override;
  if (workers_override > 0) sfc.search.workers = workers_override;
  if (!freeze_acc_path.empty())
    sfc.search.freeze_acc = accelerator_from_json(slurp(freeze_acc_path));

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (!sfc.maxima_loaded) {
    sfc.ctx.maxima = compute_reference_maxima(sfc.ctx.spaces, sfc.ctx.calib, sfc.ctx.curves,
                                              sfc.ctx.thresholds, sfc.ctx.seq_len);
    spit((fs::path(out_dir) / "reference_maxima.json").string(),
         maxima_to_json(sfc.ctx.maxima) + "\n");
  }

  SearchResult result = run_search(sfc.search, sfc.ctx);
  spit((fs::path(out_dir) / "trace.jsonl").string(), trace_to_jsonl(result.trace));

  json best;
  best["schema_version"] = 1;
  best["best_p"] = result.best.p;
  best["valid"] = result.best.valid;
  if (result.best_txf) best["transformer"] = json::parse(transformer_to_json(*result.best_txf));
  if (result.best_acc) best["accelerator"] = json::parse(accelerator_to_json(*result.best_acc));
  best["measures"] = {{"latency", result.best.measures.latency},
                      {"area", result.best.measures.area},
                      {"dynamic_energy", result.best.measures.dynamic_energy},
                      {"leakage_energy", result.best.measures.leakage_energy},
                      {"accuracy", result.best.measures.accuracy}};
  RunManifest manifest;
  manifest.command = "search";
  manifest.seed = sfc.search.seed;
  manifest.calib_version = sfc.ctx.calib.calib_version;
  manifest.add_file_hash("search_config", slurp(config_path));
  manifest.timestamp_utc = utc_timestamp();
  best["manifest"] = json::parse(manifest.to_json());
  spit((fs::path(out_dir) / "best_pair.json").string(), best.dump(2) + "\n");

  std::cout << "best_p=" << result.best.p << " evaluations=" << result.trace.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer-accelerator co-design workbench"};
  app.require_subcommand(1);

  std::string txf_path, acc_path, spaces_path, calib_path, out_path, out_dir = "out";
  std::string mode = "strict";
  std::string sim_mode = "inference";
  uint32_t seq_len = 32;
  double tau_i = 0.0, tau_t = 0.0, tau_w = -1.0;
  uint64_t seed = 0;
  bool transformers = false, check = false;

  auto* validate = app.add_subcommand("validate", "validate configuration files");
  validate->add_option("--txf", txf_path, "transformer config JSON");
  validate->add_option("--acc", acc_path, "accelerator config JSON");
  validate->add_option("--mode", mode, "strict|extended")->capture_default_str();
  validate->add_option("--spaces", spaces_path, "design-space override JSON");

  auto* enumerate = app.add_subcommand("enumerate", "design-space cardinality");
  enumerate->add_option("--spaces", spaces_path, "design-space override JSON");
  enumerate->add_flag("--transformers", transformers, "strict transformer-space size");
  enumerate->add_flag("--check", check, "cross-check by brute-force enumeration");

  std::string curves_dir;
  auto* simulate_cmd = app.add_subcommand("simulate", "run one pair through the simulator");
  simulate_cmd->add_option("--txf", txf_path)->required();
  simulate_cmd->add_option("--acc", acc_path)->required();
  simulate_cmd->add_option("--calib", calib_path, "calibration JSON (or TXSIM_CALIB)");
  simulate_cmd->add_option("--mode", sim_mode, "inference|training")->capture_default_str();
  simulate_cmd->add_option("--seq-len", seq_len)->capture_default_str();
  simulate_cmd->add_option("--tau-infer", tau_i)->capture_default_str();
  simulate_cmd->add_option("--tau-train", tau_t)->capture_default_str();
  simulate_cmd->add_option("--tau-weight", tau_w, "override static weight prune threshold");
  simulate_cmd->add_option("--curves", curves_dir, "directory with {weight,activation,gradient}.json");
  simulate_cmd->add_option("--out", out_path, "report JSON path");

  auto* map_cmd = app.add_subcommand("map", "tile + schedule a pair, print op counts");
  map_cmd->add_option("--txf", txf_path)->required();
  map_cmd->add_option("--acc", acc_path)->required();
  map_cmd->add_option("--mode", sim_mode, "inference|training")->capture_default_str();
  map_cmd->add_option("--seq-len", seq_len)->capture_default_str();
  map_cmd->add_option("--out", out_path, "schedule JSON path");

  int num_inputs = 4;
  std::string roles_csv = "weight,activation,gradient";
  std::string grid_csv = "0,0.01,0.05,0.1,0.2,0.4,0.7,1.0,1.5";
  auto* profile = app.add_subcommand("profile", "profile pruning-ratio transfer curves");
  profile->add_option("--txf", txf_path)->required();
  profile->add_option("--seq-len", seq_len)->capture_default_str();
  profile->add_option("--inputs", num_inputs, "number of random input sequences")
      ->capture_default_str();
  profile->add_option("--roles", roles_csv)->capture_default_str();
  profile->add_option("--tau-grid", grid_csv)->capture_default_str();
  profile->add_option("--seed", seed)->capture_default_str();
  profile->add_option("--out-dir", out_dir)->capture_default_str();

  auto* refmax = app.add_subcommand("refmax", "compute normalization reference maxima");
  refmax->add_option("--spaces", spaces_path);
  refmax->add_option("--calib", calib_path);
  refmax->add_option("--seq-len", seq_len)->capture_default_str();
  refmax->add_option("--tau-infer", tau_i);
  refmax->add_option("--tau-train", tau_t);
  refmax->add_option("--tau-weight", tau_w);
  refmax->add_option("--out", out_path);

  std::string search_config, method_override, freeze_acc_path;
  int64_t seed_override = -1;
  int budget_override = 0, workers_override = 0;
  auto* search = app.add_subcommand("search", "co-design search");
  search->add_option("--config", search_config)->required();
  search->add_option("--out-dir", out_dir)->capture_default_str();
  search->add_option("--method", method_override, "override: transcode|random|hwnas");
  search->add_option("--seed", seed_override, "override seed");
  search->add_option("--budget", budget_override, "override budget");
  search->add_option("--workers", workers_override, "parallel evaluators (results invariant)");
  search->add_option("--freeze-acc", freeze_acc_path, "hold the accelerator fixed (hwnas)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(txf_path, acc_path, mode, spaces_path);
    if (enumerate->parsed()) return cmd_enumerate(spaces_path, transformers, check);
    if (simulate_cmd->parsed())
      return cmd_simulate(txf_path, acc_path, calib_path, sim_mode, seq_len, tau_i, tau_t, tau_w,
                          curves_dir, out_path);
    if (map_cmd->parsed()) return cmd_map(txf_path, acc_path, sim_mode, seq_len, out_path);
    if (profile->parsed())
      return cmd_profile(txf_path, seq_len, num_inputs, roles_csv, grid_csv, seed, out_dir);
    if (refmax->parsed())
      return cmd_refmax(spaces_path, calib_path, seq_len, tau_i, tau_t, tau_w, out_path);
    if (search->parsed())
      return cmd_search(search_config, calib_path, out_dir, method_override, seed_override,
                        budget_override, workers_override, freeze_acc_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code) {
      case ErrorCode::BufferOverflow:
      case ErrorCode::InvalidConfig:
      case ErrorCode::KernelTooLarge:
        return 1;
      default:
        return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
