#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "txsim/scheduler.hpp"

using namespace txsim;

namespace {

AcceleratorConfig small_acc(int pes = 2, int lanes = 2, int x = 8, int b = 1, int batch = 4) {
  AcceleratorConfig cfg;
  cfg.num_pes = pes;
  cfg.mac_lanes_per_pe = lanes;
  cfg.macs_per_lane = 16;
  cfg.softmax_per_pe = 2;
  cfg.spatial_tile = x;
  cfg.batch_tile = b;
  cfg.batch_size = batch;
  cfg.act_buffer_mb = 4;
  cfg.weight_buffer_mb = 8;
  cfg.mask_buffer_mb = 1;
  cfg.mem = {MemType::RRAM, 8, 2, 4};
  return cfg;
}

Graph single_matmul_graph(uint32_t n, uint32_t in, uint32_t out) {
  GraphBuilder b;
  uint32_t x = b.input(n, in);
  uint32_t w = b.weight(in, out);
  uint32_t y = b.matmul(x, w);
  Graph g = b.take();
  g.output_id = y;
  g.seq_len = n;
  return g;
}

// Replays a schedule keeping a dependency counter; verifies every op's deps
// retired first and PE queues issue in order.
bool replay_valid(const Schedule& s) {
  const auto& ops = s.program.ops;
  std::vector<int> pending(ops.size(), 0);
  std::vector<std::vector<uint32_t>> dependents(ops.size());
  for (const auto& op : ops)
    for (uint32_t d : {op.dep0, op.dep1, op.dep2})
      if (d != kNone) {
        ++pending[op.id];
        dependents[d].push_back(op.id);
      }
  std::vector<std::vector<uint32_t>> matrix_loads(s.program.stores_per_matrix.size());
  for (const auto& op : ops)
    if (op.kind == TileOpKind::Load)
      for (uint16_t i = 0; i < op.src_cnt; ++i) {
        const uint32_t mat = s.program.load_sources[op.src_off + i];
        if (s.program.stores_per_matrix[mat] > 0) {
          ++pending[op.id];
          matrix_loads[mat].push_back(op.id);
        }
      }
  std::vector<uint32_t> remaining_stores = s.program.stores_per_matrix;

  std::vector<size_t> heads(s.pe_queues.size(), 0);
  size_t mem_head = 0, retired = 0;
  bool progress = true;
  while (progress) {
    progress = false;
    for (size_t pe = 0; pe < s.pe_queues.size(); ++pe) {
      while (heads[pe] < s.pe_queues[pe].size()) {
        const uint32_t id = s.pe_queues[pe][heads[pe]];
        if (pending[id] > 0) break;
        ++retired;
        ++heads[pe];
        progress = true;
        for (uint32_t d : dependents[id]) --pending[d];
      }
    }
    while (mem_head < s.memory_stream.size()) {
      const uint32_t id = s.memory_stream[mem_head];
      if (pending[id] > 0) break;
      ++retired;
      ++mem_head;
      progress = true;
      for (uint32_t d : dependents[id]) --pending[d];
      const auto& op = s.program.ops[id];
      if (op.kind == TileOpKind::Store && --remaining_stores[op.node] == 0)
        for (uint32_t l : matrix_loads[op.node]) --pending[l];
    }
  }
  return retired == ops.size();
}

}  // namespace

TEST_CASE("matmul tile-op counts follow the grid formula") {
  CHECK(tile_matmul_op_count(1, 64, 64, 64, 1, 32) == 8);
  CHECK(tile_matmul_op_count(4, 32, 32, 32, 4, 32) == 1);
  CHECK(tile_matmul_op_count(3, 33, 17, 9, 2, 8) == 2 * 5 * 3 * 2);

  // Brute-force index enumeration oracle.
  DetRng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const uint64_t B = 1 + rng.index(8), P = 1 + rng.index(100), Q = 1 + rng.index(100),
                   R = 1 + rng.index(100);
    const uint64_t b = 1 + rng.index(4), x = 8ull << rng.index(3);
    uint64_t count = 0;
    for (uint64_t bb = 0; bb < B; bb += b)
      for (uint64_t i = 0; i < P; i += x)
        for (uint64_t k = 0; k < Q; k += x)
          for (uint64_t j = 0; j < R; j += x) ++count;
    CHECK(tile_matmul_op_count(B, P, Q, R, b, x) == count);
  }

  Graph g = single_matmul_graph(64, 64, 64);
  auto cfg = small_acc(2, 2, 32, 1, 1);
  TiledProgram prog = build_tiled_program(g, cfg);
  auto counts = prog.op_counts();
  CHECK(counts["tile_matmul_acc"] == 8);
}

TEST_CASE("prune insertion: one prune per operand tile, weights at load") {
  Graph g = single_matmul_graph(8, 8, 8);
  auto cfg = small_acc(2, 2, 8, 1, 1);
  TiledProgram prog = build_tiled_program(g, cfg);
  auto counts = prog.op_counts();
  CHECK(counts["tile_prune"] == 2);
  CHECK(counts["tile_matmul_acc"] == 1);
  CHECK(counts["load"] == 2);
  CHECK(counts["store"] == 1);

  std::set<uint32_t> prune_outputs;
  for (const auto& op : prog.ops) {
    if (op.kind == TileOpKind::TilePrune) {
      CHECK(prog.ops[op.dep0].kind == TileOpKind::Load);
      prune_outputs.insert(op.out_tile);
    }
  }
  for (const auto& op : prog.ops)
    if (op.kind == TileOpKind::TileMatMulAcc) {
      CHECK(prune_outputs.count(op.in_tile0) == 1);
      CHECK(prune_outputs.count(op.in_tile1) == 1);
    }
}

TEST_CASE("gradient-governed prune count equals gradient operand tiles") {
  TransformerConfig tcfg;
  LayerConfig layer;
  layer.hidden = 8;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {8};
  tcfg.layers = {layer, layer};
  Graph g = build_graph(tcfg, 8, EvalMode::Training);
  auto cfg = small_acc(2, 2, 8, 1, 2);
  TiledProgram prog = build_tiled_program(g, cfg);

  uint64_t grad_prunes = 0, grad_operand_tiles = 0;
  for (const auto& op : prog.ops) {
    if (op.kind == TileOpKind::TilePrune && prog.tiles[op.in_tile0].role == Role::Gradient)
      ++grad_prunes;
    if (op.kind == TileOpKind::Load && prog.tiles[op.out_tile].role == Role::Gradient)
      ++grad_operand_tiles;
  }
  CHECK(grad_prunes > 0);
  CHECK(grad_prunes == grad_operand_tiles);
}

TEST_CASE("eight independent ops on two PEs balance 4/4") {
  GraphBuilder b;
  uint32_t x = b.input(8, 8);
  std::vector<uint32_t> outs;
  for (int i = 0; i < 8; ++i) {
    uint32_t w = b.weight(8, 8);
    outs.push_back(b.matmul(x, w));
  }
  Graph g = b.take();
  g.output_id = outs.back();
  g.seq_len = 8;

  auto cfg = small_acc(2, 2, 8, 1, 1);
  Schedule s = build_schedule(g, cfg);
  std::map<int, int> per_pe;
  for (const auto& op : s.program.ops)
    if (op.kind == TileOpKind::TileMatMulAcc) ++per_pe[op.pe];
  REQUIRE(per_pe.size() == 2);
  CHECK(per_pe[0] == 4);
  CHECK(per_pe[1] == 4);
}

TEST_CASE("dependent chain stays on one PE in order") {
  // Three directly dependent compute ops, fed straight to the assigner.
  TiledProgram prog;
  prog.batch = 1;
  prog.stores_per_matrix.assign(1, 0);
  prog.node_batched.assign(1, 1);
  for (uint32_t i = 0; i < 3; ++i) {
    TiledOp op;
    op.id = i;
    op.node = 0;
    op.kind = TileOpKind::TileMatMulAcc;
    op.dense_macs = 512;
    op.chain_start = op.chain_end = 1;
    op.dep1 = (i == 0) ? kNone : i - 1;  // data dependency, not accumulation
    prog.ops.push_back(op);
  }
  auto cfg = small_acc(4, 2, 8, 1, 1);
  Schedule s = assign_and_order(std::move(prog), cfg);
  std::set<int> pes;
  for (const auto& op : s.program.ops) pes.insert(op.pe);
  CHECK(pes.size() == 1);
  const auto& queue = s.pe_queues[*pes.begin()];
  CHECK(queue == std::vector<uint32_t>{0, 1, 2});
}

TEST_CASE("eight independent tile ops balance across two PEs (direct)") {
  TiledProgram prog;
  prog.batch = 1;
  prog.stores_per_matrix.assign(1, 0);
  prog.node_batched.assign(1, 1);
  for (uint32_t i = 0; i < 8; ++i) {
    TiledOp op;
    op.id = i;
    op.node = 0;
    op.kind = TileOpKind::TileMatMulAcc;
    op.dense_macs = 512;
    op.chain_start = op.chain_end = 1;
    prog.ops.push_back(op);
  }
  Schedule s = assign_and_order(std::move(prog), small_acc(2, 2, 8, 1, 1));
  std::map<int, int> per_pe;
  for (const auto& op : s.program.ops) ++per_pe[op.pe];
  REQUIRE(per_pe.size() == 2);
  CHECK(per_pe[0] == 4);
  CHECK(per_pe[1] == 4);
}

TEST_CASE("reduction chains share a PE and link via dep0") {
  Graph g = single_matmul_graph(8, 64, 8);  // K = 64 -> 8 chain steps at x = 8
  auto cfg = small_acc(4, 2, 8, 1, 1);
  Schedule s = build_schedule(g, cfg);
  uint32_t prev = kNone;
  int prev_pe = -1;
  int steps = 0;
  for (const auto& op : s.program.ops) {
    if (op.kind != TileOpKind::TileMatMulAcc) continue;
    ++steps;
    if (!op.chain_start) {
      CHECK(op.dep0 == prev);
      CHECK(op.pe == prev_pe);
    }
    prev = op.id;
    prev_pe = op.pe;
  }
  CHECK(steps == 8);
}

TEST_CASE("schedules are deterministic") {
  TransformerConfig tcfg;
  LayerConfig layer;
  layer.hidden = 16;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {16};
  tcfg.layers = {layer};
  Graph g = build_graph(tcfg, 8, EvalMode::Inference);
  auto cfg = small_acc(4, 4, 8, 1, 4);
  Schedule a = build_schedule(g, cfg);
  Schedule b = build_schedule(g, cfg);
  CHECK(schedule_to_json(a) == schedule_to_json(b));
}

TEST_CASE("split_streams partitions the op set") {
  Graph g = single_matmul_graph(16, 16, 16);
  auto cfg = small_acc(2, 2, 8, 1, 1);
  Schedule s = build_schedule(g, cfg);
  auto [compute, memory] = split_streams(s);
  CHECK(compute.size() + memory.size() == s.program.ops.size());
  for (uint32_t id : memory) {
    const auto k = s.program.ops[id].kind;
    CHECK((k == TileOpKind::Load || k == TileOpKind::Store));
  }
  for (uint32_t id : compute) {
    const auto k = s.program.ops[id].kind;
    CHECK(k != TileOpKind::Load);
    CHECK(k != TileOpKind::Store);
  }
  CHECK(memory == s.memory_stream);
}

TEST_CASE("dataflow closure: every compute operand is covered by a prior load") {
  TransformerConfig tcfg;
  LayerConfig layer;
  layer.hidden = 8;
  layer.heads = {{HeadKind::LT_DFT, 0}, {HeadKind::DSC, 3}};
  layer.ff = {8};
  tcfg.layers = {layer};
  Graph g = build_graph(tcfg, 8, EvalMode::Training);
  auto cfg = small_acc(2, 2, 8, 1, 2);
  TiledProgram prog = build_tiled_program(g, cfg);

  std::set<uint32_t> loaded_tiles;
  for (const auto& op : prog.ops) {
    if (op.kind == TileOpKind::Load) loaded_tiles.insert(op.out_tile);
    if (op.kind == TileOpKind::TileMatMulAcc || op.kind == TileOpKind::TileSoftmax ||
        op.kind == TileOpKind::TileLayerNorm || op.kind == TileOpKind::TileActivation) {
      CHECK(loaded_tiles.count(op.in_tile0) == 1);
      if (op.in_tile1 != kNone) CHECK(loaded_tiles.count(op.in_tile1) == 1);
    }
  }
}

TEST_CASE("schedule replay respects all dependencies") {
  for (auto mode : {EvalMode::Inference, EvalMode::Training}) {
    TransformerConfig tcfg;
    LayerConfig layer;
    layer.hidden = 8;
    layer.heads = {{HeadKind::SA_SDP, 0}, {HeadKind::SA_WMA, 0}};
    layer.ff = {12, 8};
    tcfg.layers = {layer, layer};
    Graph g = build_graph(tcfg, 8, mode);
    for (int pes : {1, 2, 4}) {
      Schedule s = build_schedule(g, small_acc(pes, 2, 8, 1, 2));
      CHECK(replay_valid(s));
    }
  }
}

TEST_CASE("round-robin policy is available and valid") {
  Graph g = single_matmul_graph(32, 32, 32);
  auto cfg = small_acc(4, 2, 8, 1, 1);
  Schedule s = build_schedule(g, cfg, SchedulePolicy::RoundRobin);
  CHECK(replay_valid(s));
}

TEST_CASE("every op appears exactly once across queues and memory stream") {
  TransformerConfig tcfg;
  LayerConfig layer;
  layer.hidden = 8;
  layer.heads.assign(2, HeadOp{HeadKind::DSC, 5});
  layer.ff = {8};
  tcfg.layers = {layer};
  Graph g = build_graph(tcfg, 8, EvalMode::Inference);
  Schedule s = build_schedule(g, small_acc(3, 2, 8, 1, 2));
  std::set<uint32_t> seen;
  for (const auto& q : s.pe_queues)
    for (uint32_t id : q) CHECK(seen.insert(id).second);
  for (uint32_t id : s.memory_stream) CHECK(seen.insert(id).second);
  CHECK(seen.size() == s.program.ops.size());
}
