#include "txsim/graph.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace txsim {

size_t Graph::count_kind(NodeKind k) const {
  size_t n = 0;
  for (const auto& node : nodes)
    if (node.kind == k) ++n;
  return n;
}

std::string node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::Weight: return "weight";
    case NodeKind::ConstMat: return "const";
    case NodeKind::BandExpand: return "band_expand";
    case NodeKind::MatMul: return "matmul";
    case NodeKind::Transpose: return "transpose";
    case NodeKind::Scale: return "scale";
    case NodeKind::Add: return "add";
    case NodeKind::Hadamard: return "hadamard";
    case NodeKind::Concat: return "concat";
    case NodeKind::Slice: return "slice";
    case NodeKind::Softmax: return "softmax";
    case NodeKind::LayerNorm: return "layernorm";
    case NodeKind::Activation: return "activation";
    case NodeKind::SoftmaxGrad: return "softmax_grad";
    case NodeKind::LayerNormGrad: return "layernorm_grad";
    case NodeKind::ActivationGrad: return "activation_grad";
    case NodeKind::ConvKernelGrad: return "conv_kernel_grad";
    case NodeKind::WeightUpdate: return "weight_update";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

uint32_t GraphBuilder::push(GraphNode n) {
  n.id = static_cast<uint32_t>(g_.nodes.size());
  g_.nodes.push_back(std::move(n));
  return g_.nodes.back().id;
}

uint32_t GraphBuilder::input(uint32_t rows, uint32_t cols, DataClass dc) {
  GraphNode n;
  n.kind = NodeKind::Input;
  n.dclass = dc;
  n.rows = rows;
  n.cols = cols;
  uint32_t id = push(std::move(n));
  g_.input_ids.push_back(id);
  return id;
}

uint32_t GraphBuilder::weight(uint32_t rows, uint32_t cols) {
  GraphNode n;
  n.kind = NodeKind::Weight;
  n.dclass = DataClass::Weight;
  n.rows = rows;
  n.cols = cols;
  uint32_t id = push(std::move(n));
  g_.weight_ids.push_back(id);
  return id;
}

uint32_t GraphBuilder::constant(Matrix m) {
  GraphNode n;
  n.kind = NodeKind::ConstMat;
  n.dclass = DataClass::Const;
  n.rows = static_cast<uint32_t>(m.rows);
  n.cols = static_cast<uint32_t>(m.cols);
  n.payload = std::move(m);
  return push(std::move(n));
}

uint32_t GraphBuilder::band_expand(uint32_t kernel_id, uint32_t n_seq) {
  const auto& k = node(kernel_id);
  if (k.cols != 1) throw Error(ErrorCode::ShapeMismatch, "band_expand: kernel must be k x 1");
  if (k.rows % 2 == 0) throw Error(ErrorCode::InvalidConfig, "band_expand: kernel length must be odd");
  if (k.rows > n_seq) throw Error(ErrorCode::KernelTooLarge, "band_expand: kernel longer than sequence");
  GraphNode n;
  n.kind = NodeKind::BandExpand;
  n.dclass = DataClass::Weight;
  n.rows = n_seq;
  n.cols = n_seq;
  n.iaux = static_cast<int>(k.rows);
  n.preds = {kernel_id};
  return push(std::move(n));
}

uint32_t GraphBuilder::matmul(uint32_t a, uint32_t b) {
  const auto &na = node(a), &nb = node(b);
  if (na.cols != nb.rows)
    throw Error(ErrorCode::ShapeMismatch,
                "matmul: " + std::to_string(na.rows) + "x" + std::to_string(na.cols) + " * " +
                    std::to_string(nb.rows) + "x" + std::to_string(nb.cols));
  GraphNode n;
  n.kind = NodeKind::MatMul;
  n.rows = na.rows;
  n.cols = nb.cols;
  n.preds = {a, b};
  return push(std::move(n));
}

uint32_t GraphBuilder::transpose(uint32_t a) {
  const auto& na = node(a);
  GraphNode n;
  n.kind = NodeKind::Transpose;
  n.dclass = na.dclass;
  n.rows = na.cols;
  n.cols = na.rows;
  n.preds = {a};
  return push(std::move(n));
}

uint32_t GraphBuilder::scale(uint32_t a, double c) {
  const auto& na = node(a);
  GraphNode n;
  n.kind = NodeKind::Scale;
  n.rows = na.rows;
  n.cols = na.cols;
  n.aux = c;
  n.preds = {a};
  return push(std::move(n));
}

uint32_t GraphBuilder::add(uint32_t a, uint32_t b) {
  const auto &na = node(a), &nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw Error(ErrorCode::ShapeMismatch, "add: shape mismatch");
  GraphNode n;
  n.kind = NodeKind::Add;
  n.rows = na.rows;
  n.cols = na.cols;
  n.preds = {a, b};
  return push(std::move(n));
}

uint32_t GraphBuilder::hadamard(uint32_t a, uint32_t b) {
  const auto &na = node(a), &nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw Error(ErrorCode::ShapeMismatch, "hadamard: shape mismatch");
  GraphNode n;
  n.kind = NodeKind::Hadamard;
  n.rows = na.rows;
  n.cols = na.cols;
  n.preds = {a, b};
  return push(std::move(n));
}

uint32_t GraphBuilder::concat_cols(const std::vector<uint32_t>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat: no parts");
  uint32_t rows = node(parts[0]).rows, cols = 0;
  for (uint32_t p : parts) {
    if (node(p).rows != rows) throw Error(ErrorCode::ShapeMismatch, "concat: row mismatch");
    cols += node(p).cols;
  }
  GraphNode n;
  n.kind = NodeKind::Concat;
  n.rows = rows;
  n.cols = cols;
  n.preds = parts;
  return push(std::move(n));
}

uint32_t GraphBuilder::slice_cols(uint32_t a, uint32_t col_offset, uint32_t cols) {
  const auto& na = node(a);
  if (col_offset + cols > na.cols) throw Error(ErrorCode::ShapeMismatch, "slice: out of range");
  GraphNode n;
  n.kind = NodeKind::Slice;
  n.dclass = na.dclass;
  n.rows = na.rows;
  n.cols = cols;
  n.aux = static_cast<double>(col_offset);
  n.preds = {a};
  return push(std::move(n));
}

uint32_t GraphBuilder::softmax(uint32_t a) {
  const auto& na = node(a);
  GraphNode n;
  n.kind = NodeKind::Softmax;
  n.rows = na.rows;
  n.cols = na.cols;
  n.preds = {a};
  return push(std::move(n));
}

uint32_t GraphBuilder::layernorm(uint32_t a) {
  const auto& na = node(a);
  GraphNode n;
  n.kind = NodeKind::LayerNorm;
  n.rows = na.rows;
  n.cols = na.cols;
  n.preds = {a};
  return push(std::move(n));
}

uint32_t GraphBuilder::activation(uint32_t a, Activation fn) {
  const auto& na = node(a);
  GraphNode n;
  n.kind = NodeKind::Activation;
  n.rows = na.rows;
  n.cols = na.cols;
  n.iaux = (fn == Activation::GeLU) ? 1 : 0;
  n.preds = {a};
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Attention head mapping
// ---------------------------------------------------------------------------

std::vector<uint32_t> map_self_attention(GraphBuilder& b, SelfAttentionKind kind, uint32_t q,
                                         uint32_t k, uint32_t v, uint32_t wa, uint32_t wo,
                                         int hidden) {
  const auto &nq = b.node(q), &nk = b.node(k), &nv = b.node(v);
  if (nq.rows != nk.rows || nq.cols != nk.cols || nv.rows != nq.rows)
    throw Error(ErrorCode::ShapeMismatch, "self-attention: Q/K/V shapes not conformable");
  std::vector<uint32_t> made;
  uint32_t scores_lhs = q;
  if (kind == SelfAttentionKind::WMA) {
    made.push_back(b.matmul(q, wa));
    scores_lhs = made.back();
  }
  uint32_t kt = b.transpose(k);
  made.push_back(kt);
  uint32_t s0 = b.matmul(scores_lhs, kt);
  made.push_back(s0);
  uint32_t s = b.scale(s0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  made.push_back(s);
  uint32_t a = b.softmax(s);
  made.push_back(a);
  uint32_t z = b.matmul(a, v);
  made.push_back(z);
  uint32_t h = b.matmul(z, wo);
  made.push_back(h);
  return made;
}

// ---------------------------------------------------------------------------
// Forward construction
// ---------------------------------------------------------------------------

namespace {

struct ForwardInfo {
  GraphBuilder builder;
  std::vector<uint32_t> kernel_weights;  // conv kernels (also in weight_ids)
};

void check_structural(const TransformerConfig& cfg, uint32_t seq_len) {
  if (seq_len < 1) throw Error(ErrorCode::InvalidConfig, "sequence length must be >= 1");
  if (cfg.layers.empty()) throw Error(ErrorCode::InvalidConfig, "model has no layers");
  for (size_t j = 0; j < cfg.layers.size(); ++j) {
    const auto& L = cfg.layers[j];
    const std::string tag = "layer " + std::to_string(j + 1);
    if (L.hidden < 1) throw Error(ErrorCode::InvalidConfig, tag + ": hidden size must be >= 1");
    if (L.heads.empty()) throw Error(ErrorCode::InvalidConfig, tag + ": no heads");
    if (static_cast<int>(L.heads.size()) > L.hidden)
      throw Error(ErrorCode::InvalidConfig, tag + ": more heads than hidden channels");
    if (L.ff.empty()) throw Error(ErrorCode::InvalidConfig, tag + ": empty feed-forward stack");
    for (int f : L.ff)
      if (f < 1) throw Error(ErrorCode::InvalidConfig, tag + ": feed-forward dim must be >= 1");
    for (const auto& h : L.heads) {
      if (h.kind == HeadKind::DSC) {
        if (h.kernel < 1 || h.kernel % 2 == 0)
          throw Error(ErrorCode::InvalidConfig, tag + ": convolution kernel must be odd");
        if (static_cast<uint32_t>(h.kernel) > seq_len)
          throw Error(ErrorCode::KernelTooLarge, tag + ": kernel longer than sequence");
      }
    }
  }
}

}  // namespace

static Graph build_forward(const TransformerConfig& cfg, uint32_t seq_len,
                           const BuildOptions& opts, std::vector<uint32_t>* kernels_out) {
  GraphBuilder b;
  const uint32_t n_seq = seq_len;
  uint32_t x = b.input(n_seq, cfg.layers[0].hidden);

  for (const auto& L : cfg.layers) {
    const uint32_t h = static_cast<uint32_t>(L.hidden);
    if (b.node(x).cols != h) {
      // Hidden size changes between layers; bridge with a trained projection.
      uint32_t wp = b.weight(b.node(x).cols, h);
      x = b.matmul(x, wp);
    }
    uint32_t ln1 = b.layernorm(x);

    // Per-head output widths: h/n each, remainder absorbed by the last head
    // so the concatenation is exactly h wide.
    const int n_heads = static_cast<int>(L.heads.size());
    const uint32_t base = h / n_heads;

    // Transform heads of the same kind share the layer-wide V * X product;
    // only the output projection differs per head.
    uint32_t lt_dft = UINT32_MAX, lt_dct = UINT32_MAX;
    std::vector<uint32_t> parts;
    for (int i = 0; i < n_heads; ++i) {
      const auto& head = L.heads[i];
      const uint32_t d = (i == n_heads - 1) ? h - base * (n_heads - 1) : base;
      uint32_t out = 0;
      switch (head.kind) {
        case HeadKind::SA_SDP:
        case HeadKind::SA_WMA: {
          uint32_t wq = b.weight(h, d), wk = b.weight(h, d), wv = b.weight(h, d);
          uint32_t q = b.matmul(ln1, wq);
          uint32_t k = b.matmul(ln1, wk);
          uint32_t v = b.matmul(ln1, wv);
          uint32_t wa = UINT32_MAX;
          SelfAttentionKind kind = SelfAttentionKind::SDP;
          if (head.kind == HeadKind::SA_WMA) {
            kind = SelfAttentionKind::WMA;
            wa = b.weight(d, d);
          }
          uint32_t wo = b.weight(d, d);
          auto made = map_self_attention(b, kind, q, k, v, wa, wo, L.hidden);
          out = made.back();
          break;
        }
        case HeadKind::LT_DFT:
        case HeadKind::LT_DCT: {
          uint32_t& shared = (head.kind == HeadKind::LT_DFT) ? lt_dft : lt_dct;
          if (shared == UINT32_MAX) {
            Matrix vm = build_transform_matrix(
                head.kind == HeadKind::LT_DFT ? TransformKind::DFT : TransformKind::DCT, n_seq);
            uint32_t vc = b.constant(std::move(vm));
            shared = b.matmul(vc, ln1);
          }
          uint32_t wo = b.weight(h, d);
          out = b.matmul(shared, wo);
          break;
        }
        case HeadKind::DSC: {
          uint32_t w = b.weight(static_cast<uint32_t>(head.kernel), 1);
          if (kernels_out) kernels_out->push_back(w);
          uint32_t band = b.band_expand(w, n_seq);
          uint32_t conv = b.matmul(band, ln1);
          uint32_t wo = b.weight(h, d);
          out = b.matmul(conv, wo);
          break;
        }
      }
      parts.push_back(out);
    }
    uint32_t heads_out = (parts.size() == 1) ? parts[0] : b.concat_cols(parts);
    x = b.add(x, heads_out);

    for (int f : L.ff) {
      uint32_t ln = b.layernorm(x);
      uint32_t w1 = b.weight(h, static_cast<uint32_t>(f));
      uint32_t z1 = b.matmul(ln, w1);
      uint32_t a1 = b.activation(z1, opts.activation);
      uint32_t w2 = b.weight(static_cast<uint32_t>(f), h);
      uint32_t z2 = b.matmul(a1, w2);
      x = b.add(x, z2);
    }
  }

  Graph g = b.take();
  g.output_id = x;
  g.seq_len = seq_len;
  return g;
}

// ---------------------------------------------------------------------------
// Backward construction
// ---------------------------------------------------------------------------

Graph build_graph(const TransformerConfig& cfg, uint32_t seq_len, EvalMode mode,
                  const BuildOptions& opts) {
  check_structural(cfg, seq_len);
  std::vector<uint32_t> kernels;
  Graph g = build_forward(cfg, seq_len, opts, &kernels);
  g.mode = mode;
  if (mode == EvalMode::Inference) return g;

  const size_t forward_count = g.nodes.size();

  // Which forward nodes have trainable ancestors (their gradients matter).
  std::vector<char> needs_grad(forward_count, 0);
  for (size_t i = 0; i < forward_count; ++i) {
    const auto& n = g.nodes[i];
    if (n.kind == NodeKind::Weight || n.kind == NodeKind::BandExpand) {
      needs_grad[i] = 1;
    } else {
      for (uint32_t p : n.preds)
        if (needs_grad[p]) needs_grad[i] = 1;
    }
  }

  GraphBuilder b;
  b.graph() = std::move(g);
  Graph& gg = b.graph();

  GraphNode seed;
  seed.kind = NodeKind::Input;
  seed.dclass = DataClass::Gradient;
  seed.rows = gg.nodes[gg.output_id].rows;
  seed.cols = gg.nodes[gg.output_id].cols;
  uint32_t seed_id = b.push(std::move(seed));
  gg.input_ids.push_back(seed_id);
  gg.grad_seed_id = seed_id;

  std::vector<std::vector<uint32_t>> contrib(forward_count);
  contrib[gg.output_id].push_back(seed_id);

  auto mark_grad = [&](uint32_t id) {
    gg.nodes[id].dclass = DataClass::Gradient;
    return id;
  };
  auto combine = [&](uint32_t node_id) -> uint32_t {
    auto& list = contrib[node_id];
    uint32_t acc = list[0];
    for (size_t i = 1; i < list.size(); ++i) acc = mark_grad(b.add(acc, list[i]));
    return acc;
  };

  for (size_t raw = forward_count; raw-- > 0;) {
    const uint32_t id = static_cast<uint32_t>(raw);
    if (!needs_grad[id] || contrib[id].empty()) continue;
    const uint32_t grad = combine(id);
    // Snapshot: pushing backward nodes may reallocate the node vector.
    const GraphNode n = gg.nodes[id];
    switch (n.kind) {
      case NodeKind::MatMul: {
        const uint32_t a = n.preds[0], bb = n.preds[1];
        if (gg.nodes[a].kind == NodeKind::BandExpand) {
          // Convolution expressed as a banded matmul: the kernel gradient is
          // the correlation of the upstream gradient with the reversed input.
          const uint32_t kernel = gg.nodes[a].preds[0];
          GraphNode cg;
          cg.kind = NodeKind::ConvKernelGrad;
          cg.dclass = DataClass::Gradient;
          cg.rows = gg.nodes[kernel].rows;
          cg.cols = 1;
          cg.iaux = gg.nodes[a].iaux;
          cg.preds = {grad, bb};
          contrib[kernel].push_back(b.push(std::move(cg)));
          if (needs_grad[bb]) {
            uint32_t at = mark_grad(b.transpose(a));
            contrib[bb].push_back(mark_grad(b.matmul(at, grad)));
          }
          break;
        }
        if (needs_grad[a]) {
          uint32_t bt = mark_grad(b.transpose(bb));
          contrib[a].push_back(mark_grad(b.matmul(grad, bt)));
        }
        if (needs_grad[bb]) {
          uint32_t at = mark_grad(b.transpose(a));
          contrib[bb].push_back(mark_grad(b.matmul(at, grad)));
        }
        break;
      }
      case NodeKind::Transpose:
        contrib[n.preds[0]].push_back(mark_grad(b.transpose(grad)));
        break;
      case NodeKind::Scale:
        contrib[n.preds[0]].push_back(mark_grad(b.scale(grad, n.aux)));
        break;
      case NodeKind::Add:
        if (needs_grad[n.preds[0]]) contrib[n.preds[0]].push_back(grad);
        if (needs_grad[n.preds[1]]) contrib[n.preds[1]].push_back(grad);
        break;
      case NodeKind::Hadamard:
        if (needs_grad[n.preds[0]])
          contrib[n.preds[0]].push_back(mark_grad(b.hadamard(grad, n.preds[1])));
        if (needs_grad[n.preds[1]])
          contrib[n.preds[1]].push_back(mark_grad(b.hadamard(grad, n.preds[0])));
        break;
      case NodeKind::Concat: {
        uint32_t off = 0;
        for (uint32_t p : n.preds) {
          const uint32_t w = gg.nodes[p].cols;
          if (needs_grad[p]) contrib[p].push_back(mark_grad(b.slice_cols(grad, off, w)));
          off += w;
        }
        break;
      }
      case NodeKind::Slice:
        throw Error(ErrorCode::InvalidConfig, "slice in forward graph is not differentiable here");
      case NodeKind::Softmax: {
        GraphNode sg;
        sg.kind = NodeKind::SoftmaxGrad;
        sg.dclass = DataClass::Gradient;
        sg.rows = n.rows;
        sg.cols = n.cols;
        sg.preds = {id, grad};
        contrib[n.preds[0]].push_back(b.push(std::move(sg)));
        break;
      }
      case NodeKind::LayerNorm: {
        GraphNode lg;
        lg.kind = NodeKind::LayerNormGrad;
        lg.dclass = DataClass::Gradient;
        lg.rows = n.rows;
        lg.cols = n.cols;
        lg.preds = {n.preds[0], grad};
        contrib[n.preds[0]].push_back(b.push(std::move(lg)));
        break;
      }
      case NodeKind::Activation: {
        GraphNode ag;
        ag.kind = NodeKind::ActivationGrad;
        ag.dclass = DataClass::Gradient;
        ag.rows = n.rows;
        ag.cols = n.cols;
        ag.iaux = n.iaux;
        ag.preds = {n.preds[0], grad};
        contrib[n.preds[0]].push_back(b.push(std::move(ag)));
        break;
      }
      case NodeKind::Weight:
      case NodeKind::BandExpand:
      case NodeKind::Input:
      case NodeKind::ConstMat:
        break;  // leaves; weight grads are finalized below
      default:
        throw Error(ErrorCode::InvalidConfig,
                    "unexpected forward node kind: " + node_kind_name(n.kind));
    }
  }

  for (uint32_t w : gg.weight_ids) {
    if (contrib[w].empty()) continue;
    uint32_t gwid = combine(w);
    gg.grad_of_weight[w] = gwid;
    GraphNode up;
    up.kind = NodeKind::WeightUpdate;
    up.dclass = DataClass::Weight;
    up.rows = gg.nodes[w].rows;
    up.cols = gg.nodes[w].cols;
    up.aux = opts.learning_rate;
    up.preds = {w, gwid};
    gg.updated_weight[w] = b.push(std::move(up));
  }

  return b.take();
}

// ---------------------------------------------------------------------------
// JSON export
// ---------------------------------------------------------------------------

std::string graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["mode"] = (g.mode == EvalMode::Training) ? "training" : "inference";
  j["seq_len"] = g.seq_len;
  j["output"] = g.output_id;
  auto arr = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json nj;
    nj["id"] = n.id;
    nj["kind"] = node_kind_name(n.kind);
    nj["shape"] = {n.rows, n.cols};
    nj["preds"] = n.preds;
    arr.push_back(std::move(nj));
  }
  j["nodes"] = std::move(arr);
  return j.dump(2);
}

}  // namespace txsim
