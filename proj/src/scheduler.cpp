#include "txsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <nlohmann/json.hpp>

namespace txsim {

std::string tile_op_kind_name(TileOpKind k) {
  switch (k) {
    case TileOpKind::TileMatMulAcc: return "tile_matmul_acc";
    case TileOpKind::TileSoftmax: return "tile_softmax";
    case TileOpKind::TileLayerNorm: return "tile_layernorm";
    case TileOpKind::TileActivation: return "tile_activation";
    case TileOpKind::TilePrune: return "tile_prune";
    case TileOpKind::Load: return "load";
    case TileOpKind::Store: return "store";
  }
  return "?";
}

std::map<std::string, uint64_t> TiledProgram::op_counts() const {
  std::map<std::string, uint64_t> counts;
  for (const auto& op : ops) ++counts[tile_op_kind_name(op.kind)];
  return counts;
}

uint64_t tile_matmul_op_count(uint64_t batch, uint64_t p, uint64_t q, uint64_t r, uint64_t b,
                              uint64_t x) {
  return ceil_div(batch, b) * ceil_div(p, x) * ceil_div(q, x) * ceil_div(r, x);
}

// ---------------------------------------------------------------------------
// Operand views
// ---------------------------------------------------------------------------

namespace {

constexpr double kConstZeroTol = 1e-12;

// A structural view of an operand matrix: one or more underlying matrices
// (several for concatenations), an optional transpose, and a column offset
// for slices. Transposes never stack on slices or concats in built graphs.
struct View {
  std::vector<std::pair<uint32_t, uint32_t>> parts;  // (matrix node, width)
  bool transposed = false;
  uint32_t col_off = 0;
  uint32_t rows = 0, cols = 0;
};

bool is_structural(NodeKind k) {
  return k == NodeKind::Transpose || k == NodeKind::Slice || k == NodeKind::Concat;
}

bool is_source(NodeKind k) {
  return k == NodeKind::Input || k == NodeKind::Weight || k == NodeKind::ConstMat ||
         k == NodeKind::BandExpand;
}

View resolve_view(const Graph& g, uint32_t id) {
  const GraphNode& n = g.nodes[id];
  View v;
  v.rows = n.rows;
  v.cols = n.cols;
  switch (n.kind) {
    case NodeKind::Transpose: {
      View inner = resolve_view(g, n.preds[0]);
      if (inner.parts.size() != 1 || inner.col_off != 0)
        throw Error(ErrorCode::InvalidConfig, "transpose of sliced/concat view unsupported");
      v.parts = inner.parts;
      v.transposed = !inner.transposed;
      return v;
    }
    case NodeKind::Slice: {
      View inner = resolve_view(g, n.preds[0]);
      if (inner.transposed)
        throw Error(ErrorCode::InvalidConfig, "slice of transposed view unsupported");
      if (inner.parts.size() != 1)
        throw Error(ErrorCode::InvalidConfig, "slice of concat view unsupported");
      v.parts = inner.parts;
      v.col_off = inner.col_off + static_cast<uint32_t>(n.aux);
      return v;
    }
    case NodeKind::Concat: {
      for (uint32_t p : n.preds) {
        View inner = resolve_view(g, p);
        if (inner.transposed || inner.col_off != 0 || inner.parts.size() != 1)
          throw Error(ErrorCode::InvalidConfig, "nested concat view unsupported");
        v.parts.emplace_back(inner.parts[0].first, g.nodes[p].cols);
      }
      return v;
    }
    default:
      v.parts.emplace_back(id, n.cols);
      return v;
  }
}

// Exact structural-zero fraction of a tile region: padding beyond the real
// matrix plus out-of-band entries of convolution matrices plus exact zeros of
// constant transforms.
float tile_struct_zeros(const Graph& g, const View& view, uint32_t row0, uint32_t col0,
                        uint32_t rows_tile, uint32_t cols_tile, uint32_t real_batch,
                        uint32_t tile_batch) {
  const uint64_t total = uint64_t(tile_batch) * rows_tile * cols_tile;
  uint64_t nonzero = 0;
  const uint32_t vrows = view.rows, vcols = view.cols;
  const uint32_t single = (view.parts.size() == 1) ? view.parts[0].first : kNone;
  const GraphNode* mn = (single != kNone) ? &g.nodes[single] : nullptr;
  const bool banded = mn && mn->kind == NodeKind::BandExpand;
  const bool constant = mn && mn->kind == NodeKind::ConstMat;
  const int half = banded ? mn->iaux / 2 : 0;

  for (uint32_t r = 0; r < rows_tile; ++r) {
    const uint32_t vr = row0 + r;
    if (vr >= vrows) continue;
    for (uint32_t c = 0; c < cols_tile; ++c) {
      const uint32_t vc = col0 + c;
      if (vc >= vcols) continue;
      if (banded) {
        // The band is symmetric, so the transpose flag does not matter.
        const int64_t diff =
            static_cast<int64_t>(vc + view.col_off) - static_cast<int64_t>(vr);
        if (diff >= -half && diff <= half) ++nonzero;
      } else if (constant) {
        const uint32_t ur = view.transposed ? vc : vr;
        const uint32_t uc = view.transposed ? vr : vc + view.col_off;
        if (std::fabs(mn->payload.at(ur, uc)) > kConstZeroTol) ++nonzero;
      } else {
        ++nonzero;
      }
    }
  }
  nonzero *= real_batch;
  return static_cast<float>(1.0 - static_cast<double>(nonzero) / static_cast<double>(total));
}

// ---------------------------------------------------------------------------
// Program emission
// ---------------------------------------------------------------------------

struct Emitter {
  const Graph& g;
  const AcceleratorConfig& cfg;
  TiledProgram prog;
  std::vector<uint8_t> reduce_mark;  // weight-gradient nodes (batch reduced)

  Emitter(const Graph& graph, const AcceleratorConfig& c) : g(graph), cfg(c) {
    prog.batch = cfg.batch_size;
    prog.stores_per_matrix.assign(g.nodes.size(), 0);
    classify();
  }

  void classify() {
    reduce_mark.assign(g.nodes.size(), 0);
    for (const auto& [w, grad] : g.grad_of_weight) {
      (void)w;
      std::vector<uint32_t> stack{grad};
      while (!stack.empty()) {
        uint32_t id = stack.back();
        stack.pop_back();
        if (reduce_mark[id]) continue;
        reduce_mark[id] = 1;
        if (g.nodes[id].kind == NodeKind::Add)
          for (uint32_t p : g.nodes[id].preds) stack.push_back(p);
      }
    }
    prog.node_batched.assign(g.nodes.size(), 0);
    for (const auto& n : g.nodes) {
      uint8_t batched = 0;
      if (n.kind == NodeKind::Input) {
        batched = 1;
      } else if (is_source(n.kind)) {
        batched = 0;
      } else {
        for (uint32_t p : n.preds) batched |= prog.node_batched[p];
      }
      if (reduce_mark[n.id]) batched = 0;
      prog.node_batched[n.id] = batched;
    }
  }

  uint32_t push_op(TiledOp op) {
    op.id = static_cast<uint32_t>(prog.ops.size());
    prog.ops.push_back(op);
    return op.id;
  }

  uint32_t make_tile(uint32_t matrix_node, uint32_t elems, Role role, float struct_zeros) {
    prog.tiles.push_back({matrix_node, elems, role, struct_zeros});
    return static_cast<uint32_t>(prog.tiles.size() - 1);
  }

  // Emits Load + TilePrune for one operand tile; returns the prune op id.
  uint32_t load_and_prune(const View& view, uint32_t row0, uint32_t col0, uint32_t rows_tile,
                          uint32_t cols_tile, uint32_t real_batch, uint32_t tile_batch) {
    const GraphNode& owner = g.nodes[view.parts[0].first];
    Role role = role_of(owner.dclass);
    float sz = tile_struct_zeros(g, view, row0, col0, rows_tile, cols_tile, real_batch, tile_batch);
    const uint32_t elems = tile_batch * rows_tile * cols_tile;
    uint32_t tile = make_tile(view.parts[0].first, elems, role, sz);

    TiledOp load;
    load.kind = TileOpKind::Load;
    load.node = view.parts[0].first;
    load.out_tile = tile;
    load.elems = elems;
    // Source matrices this load waits on (only produced matrices matter).
    load.src_off = static_cast<uint32_t>(prog.load_sources.size());
    if (view.parts.size() == 1) {
      prog.load_sources.push_back(view.parts[0].first);
      load.src_cnt = 1;
    } else {
      // Column range [col0, col0+cols_tile) may span several concat parts.
      uint32_t off = 0;
      uint16_t cnt = 0;
      for (const auto& [mat, width] : view.parts) {
        const uint32_t lo = off, hi = off + width;
        if (col0 < hi && col0 + cols_tile > lo) {
          prog.load_sources.push_back(mat);
          ++cnt;
        }
        off += width;
      }
      load.src_cnt = cnt;
    }
    const uint32_t load_id = push_op(load);

    TiledOp prune;
    prune.kind = TileOpKind::TilePrune;
    prune.node = view.parts[0].first;
    prune.in_tile0 = tile;
    prune.out_tile = tile;
    prune.elems = elems;
    prune.dep0 = load_id;
    return push_op(prune);
  }

  void store_tile(uint32_t producer_op, uint32_t tile, uint32_t node) {
    TiledOp st;
    st.kind = TileOpKind::Store;
    st.node = node;
    st.in_tile0 = tile;
    st.elems = prog.tiles[tile].elems;
    st.dep0 = producer_op;
    push_op(st);
    ++prog.stores_per_matrix[node];
  }

  // Memoized operand loads over a (batch, row, col) grid.
  struct OperandGrid {
    View view;
    bool batched = false;
    uint32_t nb = 1, nr = 1, nc = 1;
    uint32_t rows_tile = 0, cols_tile = 0;
    std::vector<uint32_t> memo;  // prune op ids

    uint32_t index(uint32_t bb, uint32_t rb, uint32_t cb) const {
      return (bb * nr + rb) * nc + cb;
    }
  };

  OperandGrid make_grid(uint32_t pred, uint32_t rows_tile, uint32_t cols_tile, bool row_major_full) {
    OperandGrid gr;
    gr.view = resolve_view(g, pred);
    gr.batched = prog.node_batched[gr.view.parts[0].first] != 0;
    // Structural nodes inherit batchedness from the underlying matrix except
    // that concat parts are uniformly batched activations.
    gr.nb = gr.batched ? static_cast<uint32_t>(ceil_div(prog.batch, cfg.batch_tile)) : 1;
    gr.rows_tile = rows_tile;
    gr.cols_tile = row_major_full ? gr.view.cols : cols_tile;
    gr.nr = static_cast<uint32_t>(ceil_div(gr.view.rows, rows_tile));
    gr.nc = row_major_full ? 1 : static_cast<uint32_t>(ceil_div(gr.view.cols, cols_tile));
    gr.memo.assign(size_t(gr.nb) * gr.nr * gr.nc, kNone);
    return gr;
  }

  uint32_t grid_prune(OperandGrid& gr, uint32_t bb, uint32_t rb, uint32_t cb) {
    const uint32_t use_bb = gr.batched ? bb : 0;
    const uint32_t idx = gr.index(use_bb, rb, cb);
    if (gr.memo[idx] != kNone) return gr.memo[idx];
    const uint32_t tile_batch = gr.batched ? cfg.batch_tile : 1;
    uint32_t real_batch = tile_batch;
    if (gr.batched) {
      const uint32_t remaining = prog.batch - use_bb * cfg.batch_tile;
      real_batch = std::min<uint32_t>(tile_batch, remaining);
    }
    gr.memo[idx] = load_and_prune(gr.view, rb * gr.rows_tile, cb * gr.cols_tile, gr.rows_tile,
                                  gr.cols_tile, real_batch, tile_batch);
    return gr.memo[idx];
  }

  void emit_matmul(const GraphNode& n) {
    const uint32_t x = cfg.spatial_tile, b = cfg.batch_tile;
    // Weight-gradient matmuls sum over the batch: the reduction chain runs
    // across batch blocks as well as K blocks and the output is unbatched.
    const bool reduce = reduce_mark[n.id] != 0;
    const bool out_batched = prog.node_batched[n.id] != 0;
    const uint32_t K = g.nodes[n.preds[0]].cols;

    OperandGrid lhs = make_grid(n.preds[0], x, x, false);
    OperandGrid rhs = make_grid(n.preds[1], x, x, false);

    const uint32_t IB = static_cast<uint32_t>(ceil_div(n.rows, x));
    const uint32_t JB = static_cast<uint32_t>(ceil_div(n.cols, x));
    const uint32_t KB = static_cast<uint32_t>(ceil_div(K, x));
    const uint32_t NB_IN = static_cast<uint32_t>(ceil_div(prog.batch, b));
    const uint32_t nb_chain = (reduce && (lhs.batched || rhs.batched)) ? NB_IN : 1;
    const uint32_t nb_out = out_batched ? NB_IN : 1;
    const bool any_batched = lhs.batched || rhs.batched || out_batched;
    const uint32_t mac_batch = any_batched ? b : 1;
    const uint32_t macs = mac_batch * x * x * x;

    for (uint32_t bb = 0; bb < nb_out; ++bb) {
      for (uint32_t ib = 0; ib < IB; ++ib) {
        for (uint32_t jb = 0; jb < JB; ++jb) {
          uint32_t prev = kNone;
          const uint32_t chain_len = KB * nb_chain;
          for (uint32_t step = 0; step < chain_len; ++step) {
            const uint32_t batch_blk = reduce ? step / KB : bb;
            const uint32_t kb = reduce ? step % KB : step;
            TiledOp op;
            op.kind = TileOpKind::TileMatMulAcc;
            op.node = n.id;
            op.dense_macs = macs;
            op.chain_start = (step == 0);
            op.chain_end = (step == chain_len - 1);
            op.dep0 = prev;
            op.dep1 = grid_prune(lhs, batch_blk, ib, kb);
            op.dep2 = grid_prune(rhs, batch_blk, kb, jb);
            op.in_tile0 = prog.ops[op.dep1].out_tile;
            op.in_tile1 = prog.ops[op.dep2].out_tile;
            if (op.chain_end) {
              const uint32_t out_batch = out_batched ? b : 1;
              const uint32_t rows_real = std::min(x, n.rows - ib * x);
              const uint32_t cols_real = std::min(x, n.cols - jb * x);
              float sz = 1.0f - static_cast<float>(rows_real) * cols_real / (float(x) * x);
              op.out_tile = make_tile(n.id, out_batch * x * x, role_of(n.dclass), sz);
            }
            prev = push_op(op);
          }
          store_tile(prev, prog.ops[prev].out_tile, n.id);
        }
      }
    }
  }

  void emit_rowwise(const GraphNode& n, TileOpKind kind) {
    const uint32_t x = cfg.spatial_tile, b = cfg.batch_tile;
    const bool out_batched = prog.node_batched[n.id] != 0;
    const uint32_t nb = out_batched ? static_cast<uint32_t>(ceil_div(prog.batch, b)) : 1;
    const uint32_t RB = static_cast<uint32_t>(ceil_div(n.rows, x));
    const uint32_t tile_batch = out_batched ? b : 1;

    std::vector<OperandGrid> grids;
    for (uint32_t p : n.preds) grids.push_back(make_grid(p, x, 0, true));

    for (uint32_t bb = 0; bb < nb; ++bb) {
      for (uint32_t rb = 0; rb < RB; ++rb) {
        TiledOp op;
        op.kind = kind;
        op.node = n.id;
        op.elems = tile_batch * x * n.cols;
        op.dep1 = grid_prune(grids[0], bb, rb, 0);
        op.in_tile0 = prog.ops[op.dep1].out_tile;
        if (grids.size() > 1) {
          op.dep2 = grid_prune(grids[1], bb, rb, 0);
          op.in_tile1 = prog.ops[op.dep2].out_tile;
        }
        op.chain_start = op.chain_end = 1;
        const uint32_t rows_real = std::min(x, n.rows - rb * x);
        float sz = 1.0f - static_cast<float>(rows_real) / static_cast<float>(x);
        op.out_tile = make_tile(n.id, op.elems, role_of(n.dclass), sz);
        uint32_t id = push_op(op);
        store_tile(id, prog.ops[id].out_tile, n.id);
      }
    }
  }

  void emit_elementwise(const GraphNode& n) {
    const uint32_t x = cfg.spatial_tile, b = cfg.batch_tile;
    const bool out_batched = prog.node_batched[n.id] != 0;
    const uint32_t nb = out_batched ? static_cast<uint32_t>(ceil_div(prog.batch, b)) : 1;
    const uint32_t RB = static_cast<uint32_t>(ceil_div(n.rows, x));
    const uint32_t CB = static_cast<uint32_t>(ceil_div(n.cols, x));
    const uint32_t tile_batch = out_batched ? b : 1;

    std::vector<OperandGrid> grids;
    for (uint32_t p : n.preds) grids.push_back(make_grid(p, x, x, false));

    for (uint32_t bb = 0; bb < nb; ++bb) {
      for (uint32_t rb = 0; rb < RB; ++rb) {
        for (uint32_t cb = 0; cb < CB; ++cb) {
          TiledOp op;
          op.kind = TileOpKind::TileActivation;
          op.node = n.id;
          op.elems = tile_batch * x * x;
          op.dep1 = grid_prune(grids[0], bb, rb, cb);
          op.in_tile0 = prog.ops[op.dep1].out_tile;
          if (grids.size() > 1) {
            op.dep2 = grid_prune(grids[1], bb, rb, cb);
            op.in_tile1 = prog.ops[op.dep2].out_tile;
          }
          op.chain_start = op.chain_end = 1;
          const uint32_t rows_real = std::min(x, n.rows - rb * x);
          const uint32_t cols_real = std::min(x, n.cols - cb * x);
          float sz = 1.0f - static_cast<float>(rows_real) * cols_real / (float(x) * x);
          op.out_tile = make_tile(n.id, op.elems, role_of(n.dclass), sz);
          uint32_t id = push_op(op);
          store_tile(id, prog.ops[id].out_tile, n.id);
        }
      }
    }
  }

  void emit_conv_kernel_grad(const GraphNode& n) {
    const uint32_t b = cfg.batch_tile;
    const uint32_t nb = static_cast<uint32_t>(ceil_div(prog.batch, b));
    const GraphNode& grad_in = g.nodes[n.preds[0]];
    const uint64_t macs64 =
        uint64_t(b) * n.rows /*k*/ * grad_in.rows * grad_in.cols;
    const uint32_t macs = static_cast<uint32_t>(std::min<uint64_t>(macs64, UINT32_MAX));

    View gv = resolve_view(g, n.preds[0]);
    View xv = resolve_view(g, n.preds[1]);
    uint32_t prev = kNone;
    uint32_t out_tile = kNone;
    for (uint32_t bb = 0; bb < nb; ++bb) {
      const uint32_t remaining = prog.batch - bb * b;
      const uint32_t real_batch = std::min(b, remaining);
      uint32_t p0 = load_and_prune(gv, 0, 0, grad_in.rows, grad_in.cols, real_batch, b);
      uint32_t p1 = load_and_prune(xv, 0, 0, grad_in.rows, grad_in.cols, real_batch, b);
      TiledOp op;
      op.kind = TileOpKind::TileMatMulAcc;
      op.node = n.id;
      op.dense_macs = macs;
      op.chain_start = (bb == 0);
      op.chain_end = (bb == nb - 1);
      op.dep0 = prev;
      op.dep1 = p0;
      op.dep2 = p1;
      op.in_tile0 = prog.ops[p0].out_tile;
      op.in_tile1 = prog.ops[p1].out_tile;
      if (op.chain_end) {
        out_tile = make_tile(n.id, n.rows, Role::Gradient, 0.0f);
        op.out_tile = out_tile;
      }
      prev = push_op(op);
    }
    store_tile(prev, out_tile, n.id);
  }

  void run() {
    for (const auto& n : g.nodes) {
      if (is_source(n.kind) || is_structural(n.kind)) continue;
      switch (n.kind) {
        case NodeKind::MatMul:
          emit_matmul(n);
          break;
        case NodeKind::Softmax:
        case NodeKind::SoftmaxGrad:
          emit_rowwise(n, TileOpKind::TileSoftmax);
          break;
        case NodeKind::LayerNorm:
        case NodeKind::LayerNormGrad:
          emit_rowwise(n, TileOpKind::TileLayerNorm);
          break;
        case NodeKind::Activation:
        case NodeKind::ActivationGrad:
        case NodeKind::Add:
        case NodeKind::Hadamard:
        case NodeKind::Scale:
        case NodeKind::WeightUpdate:
          emit_elementwise(n);
          break;
        case NodeKind::ConvKernelGrad:
          emit_conv_kernel_grad(n);
          break;
        default:
          throw Error(ErrorCode::InvalidConfig,
                      "cannot tile node kind " + node_kind_name(n.kind));
      }
    }
  }
};

}  // namespace

TiledProgram build_tiled_program(const Graph& g, const AcceleratorConfig& cfg) {
  Emitter e(g, cfg);
  e.run();
  return std::move(e.prog);
}

// ---------------------------------------------------------------------------
// Tiled matmul execution (tiling-correctness reference)
// ---------------------------------------------------------------------------

Matrix execute_tiled_matmul(const Matrix& a, const Matrix& bm, uint32_t b, uint32_t x) {
  (void)b;  // batch dimension is 1 for plain matrices
  if (a.cols != bm.rows) throw Error(ErrorCode::ShapeMismatch, "execute_tiled_matmul");
  const uint32_t P = static_cast<uint32_t>(a.rows), Q = static_cast<uint32_t>(a.cols),
                 R = static_cast<uint32_t>(bm.cols);
  const uint32_t IB = static_cast<uint32_t>(ceil_div(P, x));
  const uint32_t KB = static_cast<uint32_t>(ceil_div(Q, x));
  const uint32_t JB = static_cast<uint32_t>(ceil_div(R, x));

  auto take_tile = [&](const Matrix& m, uint32_t r0, uint32_t c0) {
    Tile t(1, x, x);
    for (uint32_t r = 0; r < x; ++r)
      for (uint32_t c = 0; c < x; ++c) {
        const uint32_t mr = r0 + r, mc = c0 + c;
        if (mr < m.rows && mc < m.cols) t.at(0, r, c) = m.at(mr, mc);
      }
    return t;
  };

  Matrix out(P, R);
  for (uint32_t ib = 0; ib < IB; ++ib) {
    for (uint32_t jb = 0; jb < JB; ++jb) {
      Tile acc(1, x, x);
      for (uint32_t kb = 0; kb < KB; ++kb) {
        auto wt = pack_zero_free(take_tile(a, ib * x, kb * x));
        auto at = pack_zero_free(take_tile(bm, kb * x, jb * x));
        auto res = masked_matmul(wt, at);
        for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += res.out.data[i];
      }
      for (uint32_t r = 0; r < x; ++r)
        for (uint32_t c = 0; c < x; ++c) {
          const uint32_t orow = ib * x + r, ocol = jb * x + c;
          if (orow < P && ocol < R) out.at(orow, ocol) = acc.at(0, r, c);
        }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

namespace {

enum ModuleKind { kLane = 0, kSoftmaxMod = 1, kLayerNormMod = 2, kPruneMod = 3, kModuleKinds = 4 };

int module_kind_of(TileOpKind k) {
  switch (k) {
    case TileOpKind::TileMatMulAcc:
    case TileOpKind::TileActivation: return kLane;
    case TileOpKind::TileSoftmax: return kSoftmaxMod;
    case TileOpKind::TileLayerNorm: return kLayerNormMod;
    case TileOpKind::TilePrune: return kPruneMod;
    default: return -1;
  }
}

// Calibration-free cycle estimate used only for placement decisions.
uint64_t est_cycles(const TiledOp& op, const AcceleratorConfig& cfg) {
  switch (op.kind) {
    case TileOpKind::TileMatMulAcc:
      return ceil_div(op.dense_macs, cfg.macs_per_lane) +
             static_cast<uint64_t>(ilog2(cfg.macs_per_lane));
    case TileOpKind::TileSoftmax:
    case TileOpKind::TileLayerNorm: return std::max<uint64_t>(1, op.elems / 8);
    case TileOpKind::TileActivation: return std::max<uint64_t>(1, op.elems / 16);
    case TileOpKind::TilePrune: return 1;
    default: return 0;
  }
}

}  // namespace

Schedule assign_and_order(TiledProgram program, const AcceleratorConfig& cfg,
                          SchedulePolicy policy) {
  const uint32_t num_pes = static_cast<uint32_t>(cfg.num_pes);
  Schedule sched;
  sched.cfg = cfg;
  sched.pe_queues.assign(num_pes, {});

  // Per-PE, per-module-kind min-heaps of estimated module free times.
  std::vector<std::array<std::vector<double>, kModuleKinds>> pool(num_pes);
  const int counts[kModuleKinds] = {cfg.mac_lanes_per_pe, cfg.softmax_per_pe, 1, 1};
  for (uint32_t pe = 0; pe < num_pes; ++pe)
    for (int k = 0; k < kModuleKinds; ++k) pool[pe][k].assign(counts[k], 0.0);

  std::vector<double> pe_load(num_pes, 0.0);
  std::vector<std::array<double, kModuleKinds>> free_min(num_pes);
  for (auto& fm : free_min) fm.fill(0.0);

  // One live (version-stamped) entry per PE per kind; stale entries are
  // dropped on sight, keeping heap traffic O(log) per assignment.
  struct HeapEntry {
    double free_min;
    double load;
    uint32_t pe;
    uint32_t version;
    bool operator>(const HeapEntry& o) const {
      if (free_min != o.free_min) return free_min > o.free_min;
      if (load != o.load) return load > o.load;
      return pe > o.pe;
    }
  };
  std::array<std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>>,
             kModuleKinds>
      kind_heap;
  std::vector<std::array<uint32_t, kModuleKinds>> entry_version(num_pes);
  for (auto& v : entry_version) v.fill(0);
  for (int k = 0; k < kModuleKinds; ++k)
    for (uint32_t pe = 0; pe < num_pes; ++pe) kind_heap[k].push({0.0, 0.0, pe, 0});

  std::vector<double> finish_est(program.ops.size(), 0.0);
  std::vector<uint16_t> op_pe(program.ops.size(), UINT16_MAX);
  uint64_t rr_next = 0;

  for (auto& op : program.ops) {
    if (op.kind == TileOpKind::Load || op.kind == TileOpKind::Store) {
      sched.memory_stream.push_back(op.id);
      continue;
    }
    const int mk = module_kind_of(op.kind);
    double ready = 0.0;
    uint32_t affinity = kNone;
    double affinity_finish = -1.0;
    for (uint32_t dep : {op.dep0, op.dep1, op.dep2}) {
      if (dep == kNone) continue;
      ready = std::max(ready, finish_est[dep]);
      if (op_pe[dep] != UINT16_MAX && finish_est[dep] > affinity_finish) {
        affinity_finish = finish_est[dep];
        affinity = op_pe[dep];
      }
    }

    uint32_t pe;
    if (policy == SchedulePolicy::RoundRobin) {
      pe = static_cast<uint32_t>(rr_next++ % num_pes);
    } else {
      pe = kNone;
      if (op.kind == TileOpKind::TileMatMulAcc && !op.chain_start && op.dep0 != kNone) {
        pe = op_pe[op.dep0];  // accumulator stays on its PE
      }
      if (pe == kNone) {
        auto& heap = kind_heap[mk];
        while (heap.top().version != entry_version[heap.top().pe][mk]) heap.pop();
        const HeapEntry cand = heap.top();
        const double est_c = std::max(ready, cand.free_min);
        if (affinity != kNone) {
          const double est_a = std::max(ready, free_min[affinity][mk]);
          if (est_a <= est_c) pe = affinity;
        }
        if (pe == kNone) pe = cand.pe;
      }
    }
    if (op.kind == TileOpKind::TileMatMulAcc && !op.chain_start && op.dep0 != kNone)
      pe = op_pe[op.dep0];

    // Claim the earliest-free module of this kind on the chosen PE.
    auto& modules = pool[pe][mk];
    size_t best = 0;
    for (size_t i = 1; i < modules.size(); ++i)
      if (modules[i] < modules[best]) best = i;
    const double start = std::max(ready, modules[best]);
    const double cyc = static_cast<double>(est_cycles(op, cfg));
    modules[best] = start + cyc;
    double fm = modules[0];
    for (double m : modules) fm = std::min(fm, m);
    free_min[pe][mk] = fm;
    pe_load[pe] += cyc;
    finish_est[op.id] = start + cyc;
    op_pe[op.id] = static_cast<uint16_t>(pe);
    if (policy == SchedulePolicy::LeastLoaded)
      kind_heap[mk].push({fm, pe_load[pe], pe, ++entry_version[pe][mk]});

    op.pe = static_cast<uint16_t>(pe);
    sched.pe_queues[pe].push_back(op.id);
  }

  sched.program = std::move(program);
  return sched;
}

Schedule build_schedule(const Graph& g, const AcceleratorConfig& cfg, SchedulePolicy policy) {
  return assign_and_order(build_tiled_program(g, cfg), cfg, policy);
}

std::pair<std::vector<uint32_t>, std::vector<uint32_t>> split_streams(const Schedule& s) {
  std::vector<uint32_t> compute, memory;
  for (const auto& op : s.program.ops) {
    if (op.kind == TileOpKind::Load || op.kind == TileOpKind::Store)
      memory.push_back(op.id);
    else
      compute.push_back(op.id);
  }
  return {std::move(compute), std::move(memory)};
}

std::string schedule_to_json(const Schedule& s) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["num_pes"] = s.cfg.num_pes;
  j["op_counts"] = s.program.op_counts();
  auto queues = nlohmann::json::array();
  for (const auto& q : s.pe_queues) queues.push_back(q);
  j["pe_queues"] = std::move(queues);
  j["memory_stream"] = s.memory_stream;
  return j.dump();
}

}  // namespace txsim
