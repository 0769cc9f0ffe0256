#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "txsim/calibration.hpp"
#include "txsim/oracle.hpp"
#include "txsim/simulator.hpp"
#include "txsim/surrogate.hpp"

namespace txsim {

constexpr double kPerformanceMin = -1.0;  // score of invalid / constraint-violating pairs

struct PerfWeights {
  double alpha = 0.1;    // latency
  double beta = 0.1;     // area
  double gamma = 0.2;    // dynamic energy
  double delta = 0.1;    // leakage energy
  double epsilon = 0.5;  // accuracy
};

struct Measures {
  double latency = 0.0;
  double area = 0.0;
  double dynamic_energy = 0.0;
  double leakage_energy = 0.0;
  double accuracy = 0.0;
};

// alpha(1-L) + beta(1-A) + gamma(1-D) + delta(1-K) + epsilon*Acc
double performance(const Measures& m, const PerfWeights& w);

struct ReferenceMaxima {
  double latency_ms = 0.0;
  double area_mm2 = 0.0;
  double dynamic_j = 0.0;
  double leakage_j = 0.0;
  std::string workload;  // description of the corner evaluation
};

Measures normalize_measures(const SimReport& raw, double accuracy, const ReferenceMaxima& maxima);

std::string maxima_to_json(const ReferenceMaxima& m);
ReferenceMaxima maxima_from_json(const std::string& text);

struct Constraints {
  std::optional<int> max_layers;
  std::optional<double> max_area_mm2;
};

struct EvalContext {
  DesignSpaces spaces;
  CalibrationTable calib;
  CurveSet curves = identity_curves();
  PruneThresholds thresholds;
  PerfWeights weights;
  EvalMode mode = EvalMode::Inference;
  ValidationMode validation = ValidationMode::Strict;
  uint32_t seq_len = 16;
  Constraints constraints;
  OracleKind oracle = OracleKind::Synthetic;
  ReferenceMaxima maxima;
};

struct EvalPoint {
  std::vector<double> x_txf;
  std::vector<double> x_acc;  // extended 13-dim embedding
  Measures measures;
  double p = kPerformanceMin;
  bool valid = false;
  std::string diagnostic;
};

// Decodes both embeddings; any invalidity, constraint violation or simulator
// hard error yields the penalty point. Valid pairs run the full
// graph -> schedule -> simulate -> normalize -> score pipeline.
EvalPoint evaluate_pair(const std::vector<double>& x_txf, const std::vector<double>& x_acc,
                        const EvalContext& ctx);

// Corner evaluation fixing the normalization denominators: every accelerator
// field at its maximum listed value (memory config at the highest index), the
// deepest strict-mode transformer with every field at its maximum, training
// mode.
ReferenceMaxima compute_reference_maxima(const DesignSpaces& spaces,
                                         const CalibrationTable& calib, const CurveSet& curves,
                                         const PruneThresholds& thresholds, uint32_t seq_len);

AcceleratorConfig corner_accelerator(const AcceleratorSpace& space);
TransformerConfig corner_transformer(const TransformerSpace& space);

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

enum class SearchMethod { TransCode, Random, HwNas };

struct SearchConfig {
  SearchMethod method = SearchMethod::TransCode;
  int budget = 200;
  uint64_t seed = 0;
  int initial_samples = 32;
  double kappa_start = 0.5;
  double kappa_end = 0.1;
  int workers = 1;
  std::optional<AcceleratorConfig> freeze_acc;  // HwNas
  SurrogateOptions surrogate;
};

struct TracePoint {
  int iteration = 0;
  double p = kPerformanceMin;
  double best_p = kPerformanceMin;
  bool valid = false;
  std::vector<double> x_txf;
  std::vector<double> x_acc;
  Measures measures;
};

struct SearchResult {
  std::vector<TracePoint> trace;
  EvalPoint best;
  std::optional<TransformerConfig> best_txf;
  std::optional<AcceleratorConfig> best_acc;
};

SearchResult run_search(const SearchConfig& cfg, const EvalContext& ctx);

// Axis-aligned hull of the joint embedding lattice (transformer slots
// followed by the 13 accelerator dims).
std::pair<std::vector<double>, std::vector<double>> embedding_hull(const DesignSpaces& spaces);

// Lattice projection used by the proposal step: each coordinate snaps to the
// nearest permissible value, ties toward the smaller one.
std::vector<double> project_accelerator_embedding(const std::vector<double>& e,
                                                  const AcceleratorSpace& space);
// Transformer projection includes structural repair (head counts adjusted to
// an allowed total, homogeneous heads in strict mode, layer compaction), so
// the result always decodes to a space-valid configuration.
std::vector<double> project_transformer_embedding(
    const std::vector<double>& e, const TransformerSpace& space,
    ValidationMode mode = ValidationMode::Extended);

// Objective driving a proposal: a scalar to maximize, its analytic input
// gradient, and a per-dimension step scale.
struct ProposalObjective {
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> grad;
  std::vector<double> scale;
};

// Multi-restart first-order ascent on the objective over the joint embedding,
// every step projected onto the lattice; the best unseen projected candidate
// (after a short discrete polish) becomes the proposal.
std::pair<std::vector<double>, std::vector<double>> propose_with_objective(
    const ProposalObjective& obj, DetRng& rng, const EvalContext& ctx,
    const std::vector<EvalPoint>& dataset, const std::optional<AcceleratorConfig>& freeze_acc);

// One GOBI-style proposal: the objective is the surrogate acquisition
// mean + kappa * (aleatoric + epistemic).
std::pair<std::vector<double>, std::vector<double>> propose_next(
    const Surrogate& s, DetRng& rng, const EvalContext& ctx, double kappa,
    const std::vector<EvalPoint>& dataset, const std::optional<AcceleratorConfig>& freeze_acc);

std::string trace_to_jsonl(const std::vector<TracePoint>& trace);

}  // namespace txsim
