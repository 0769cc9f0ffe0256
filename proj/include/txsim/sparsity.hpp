#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "txsim/graph.hpp"
#include "txsim/matrix.hpp"

namespace txsim {

// Batched b x r x c tile, the unit of pruning and compute.
struct Tile {
  uint32_t b = 1, r = 0, c = 0;
  std::vector<double> data;  // batch-major, then row-major

  Tile() = default;
  Tile(uint32_t b_, uint32_t r_, uint32_t c_) : b(b_), r(r_), c(c_), data(size_t(b_) * r_ * c_, 0.0) {}

  size_t elems() const { return size_t(b) * r * c; }
  double& at(uint32_t bi, uint32_t ri, uint32_t ci) { return data[(size_t(bi) * r + ri) * c + ci]; }
  double at(uint32_t bi, uint32_t ri, uint32_t ci) const {
    return data[(size_t(bi) * r + ri) * c + ci];
  }
};

// Zero-free storage: packed nonzero values plus a same-shape bitmask where a
// set bit marks a pruned (zero) element.
struct MaskedTile {
  uint32_t b = 1, r = 0, c = 0;
  std::vector<double> values;   // nonzeros in element order
  std::vector<uint8_t> mask;    // ceil(elems/8) bytes, bit i = element i pruned

  size_t elems() const { return size_t(b) * r * c; }
  bool mask_bit(size_t i) const { return (mask[i >> 3] >> (i & 7)) & 1; }
  size_t pruned_count() const;

  size_t payload_bytes(uint32_t elem_bytes) const { return values.size() * elem_bytes; }
  size_t mask_bytes() const { return mask.size(); }
};

MaskedTile prune_tile(const Tile& t, double tau);
double pruning_ratio(const MaskedTile& t);
MaskedTile pack_zero_free(const Tile& t);
Tile unpack(const MaskedTile& t);

// Tile matmul on zero-free operands: every MAC whose operands are both
// unmasked executes, everything else is skipped. Returns the dense product of
// the pruned tiles together with the effectual MAC count.
struct MaskedMatmulResult {
  Tile out;
  uint64_t effectual_macs = 0;
};
MaskedMatmulResult masked_matmul(const MaskedTile& w, const MaskedTile& a);

// ---------------------------------------------------------------------------
// Pruning-ratio transfer curves
// ---------------------------------------------------------------------------

enum class Role { Weight, Activation, Gradient, Const };

Role role_of(DataClass dc);
std::string role_name(Role r);

struct SparsityCurve {
  Role role = Role::Activation;
  std::vector<std::pair<double, double>> points;  // (tau, rho), tau ascending

  bool empty() const { return points.empty(); }
};

// rho at tau by piecewise-linear interpolation, clamped to the endpoints.
double eval_rho(const SparsityCurve& curve, double tau);
// Inverse lookup: smallest tau on the curve reaching the desired rho,
// clamped to the sampled range.
double lookup_tau(const SparsityCurve& curve, double rho_desired);

// Counts output zeros after pruning at each grid threshold. `magnitudes`
// holds raw values; the result is monotone by construction.
SparsityCurve profile_values(const std::vector<double>& values, Role role,
                             const std::vector<double>& tau_grid);

// Runs the graph on every provided input set and profiles all matrices of
// the given role.
SparsityCurve profile_curve(const Graph& g, const Params& params,
                            const std::vector<std::map<uint32_t, Matrix>>& inputs, Role role,
                            const std::vector<double>& tau_grid);

struct CurveSet {
  SparsityCurve weight;
  SparsityCurve activation;
  SparsityCurve gradient;

  const SparsityCurve& of(Role r) const;
};

// Identity curves (rho == tau on [0,1]); tests and default configurations use
// these so thresholds read directly as pruning ratios.
CurveSet identity_curves();

constexpr double kDefaultWeightPruneRatio = 0.5;

// Forward threshold tau_I, backward threshold tau_T, with optional per-role
// overrides. Weights default to the static prune ratio above via inverse
// lookup rather than following tau_I.
struct PruneThresholds {
  double tau_infer = 0.0;
  double tau_train = 0.0;
  std::optional<double> tau_weight;
  std::optional<double> tau_activation;
  std::optional<double> tau_gradient;
};

double resolve_tau(const CurveSet& curves, const PruneThresholds& th, Role role);
double resolve_rho(const CurveSet& curves, const PruneThresholds& th, Role role);

std::string curve_to_json(const SparsityCurve& c);
SparsityCurve curve_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Model memory footprint
// ---------------------------------------------------------------------------

struct Footprint {
  uint64_t dense_bytes = 0;
  uint64_t payload_bytes = 0;
  uint64_t mask_bytes = 0;
  uint64_t compressed_bytes() const { return payload_bytes + mask_bytes; }
};

struct FootprintReport {
  Footprint weights;
  Footprint activations;
  Footprint gradients;
  uint64_t dense_total() const {
    return weights.dense_bytes + activations.dense_bytes + gradients.dense_bytes;
  }
  uint64_t compressed_total() const {
    return weights.compressed_bytes() + activations.compressed_bytes() +
           gradients.compressed_bytes();
  }
};

// compressed = dense * (1 - rho) + mask overhead, applied per matrix of the
// graph with the matching role ratio.
FootprintReport compute_footprint(const Graph& g, uint32_t elem_bytes, double rho_w, double rho_a,
                                  double rho_g);

}  // namespace txsim
