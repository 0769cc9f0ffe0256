#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "txsim/graph.hpp"
#include "txsim/sparsity.hpp"
#include "txsim/spaces.hpp"

namespace txsim {

enum class TileOpKind : uint8_t {
  TileMatMulAcc,
  TileSoftmax,
  TileLayerNorm,
  TileActivation,
  TilePrune,
  Load,
  Store,
};

std::string tile_op_kind_name(TileOpKind k);

constexpr uint32_t kNone = UINT32_MAX;

// One schedulable unit. Dependencies are op ids; dep0 carries the previous
// accumulation step for reduction chains. Loads additionally wait for their
// source matrices (see TiledProgram::load_sources).
struct TiledOp {
  uint32_t id = 0;
  uint32_t node = 0;  // originating graph node
  TileOpKind kind = TileOpKind::Load;
  uint16_t pe = UINT16_MAX;
  uint8_t chain_start = 0;  // first op of an accumulation chain
  uint8_t chain_end = 0;    // output tile materializes after this op
  uint32_t in_tile0 = kNone;
  uint32_t in_tile1 = kNone;
  uint32_t out_tile = kNone;
  uint32_t dense_macs = 0;  // TileMatMulAcc
  uint32_t elems = 0;       // per-element kinds (padded to full tiles)
  uint32_t dep0 = kNone;
  uint32_t dep1 = kNone;
  uint32_t dep2 = kNone;
  uint32_t src_off = 0;  // Load: slice into TiledProgram::load_sources
  uint16_t src_cnt = 0;
};

// A tile instance resident in a buffer: either a loaded operand copy or a
// produced output tile awaiting its store.
struct TileInfo {
  uint32_t matrix_node = 0;  // underlying graph node
  uint32_t elems = 0;
  Role role = Role::Activation;
  float struct_zero_frac = 0.0f;  // exact zeros of banded/constant operands
};

struct TiledProgram {
  std::vector<TiledOp> ops;
  std::vector<TileInfo> tiles;
  std::vector<uint32_t> load_sources;       // arena of matrix node ids
  std::vector<uint32_t> stores_per_matrix;  // indexed by graph node id
  std::vector<uint8_t> node_batched;        // indexed by graph node id
  uint32_t batch = 1;

  std::map<std::string, uint64_t> op_counts() const;
};

// Tiles every data-producing node of the graph, inserting one Load and one
// TilePrune per distinct operand tile per consuming node (weights are pruned
// at load), and a Store per produced tile. Prune thresholds are role-tagged;
// their values only matter at simulation time.
TiledProgram build_tiled_program(const Graph& g, const AcceleratorConfig& cfg);

// Count of TileMatMulAcc ops a (B x P x Q) * (B x Q x R) matmul expands to.
uint64_t tile_matmul_op_count(uint64_t batch, uint64_t p, uint64_t q, uint64_t r, uint64_t b,
                              uint64_t x);

// Dense matmul executed through the tile grid with zero-padded ragged edges
// and masked-tile kernels. Reference path for tiling correctness tests.
Matrix execute_tiled_matmul(const Matrix& a, const Matrix& bm, uint32_t b, uint32_t x);

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

enum class SchedulePolicy { LeastLoaded, RoundRobin };

struct Schedule {
  TiledProgram program;
  std::vector<std::vector<uint32_t>> pe_queues;  // compute-class op ids, issue order
  std::vector<uint32_t> memory_stream;           // Load/Store op ids, program order
  AcceleratorConfig cfg;
};

// Greedy list scheduling in topological order. A ready op goes to the PE
// with the earliest estimated start for its module kind; accumulation chains
// stay on their PE, other ties prefer the critical predecessor's PE, then
// the lighter queue, then the lower index.
Schedule assign_and_order(TiledProgram program, const AcceleratorConfig& cfg,
                          SchedulePolicy policy = SchedulePolicy::LeastLoaded);

Schedule build_schedule(const Graph& g, const AcceleratorConfig& cfg,
                        SchedulePolicy policy = SchedulePolicy::LeastLoaded);

// Partition view of a schedule: compute-stream op ids and memory-stream op
// ids, preserving order.
std::pair<std::vector<uint32_t>, std::vector<uint32_t>> split_streams(const Schedule& s);

std::string schedule_to_json(const Schedule& s);

}  // namespace txsim
