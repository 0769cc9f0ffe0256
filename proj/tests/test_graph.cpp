#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "txsim/graph.hpp"

using namespace txsim;

namespace {

// ---------------------------------------------------------------------------
// Straight-line reference implementations (oracles). These never touch the
// graph machinery.
// ---------------------------------------------------------------------------

Matrix ref_softmax(const Matrix& m) {
  Matrix out = m;
  for (size_t r = 0; r < out.rows; ++r) {
    double mx = -1e300, sum = 0.0;
    for (size_t c = 0; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
    for (size_t c = 0; c < out.cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - mx);
      sum += out.at(r, c);
    }
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) /= sum;
  }
  return out;
}

Matrix ref_layernorm(const Matrix& m) {
  Matrix out = m;
  for (size_t r = 0; r < out.rows; ++r) {
    double mean = 0, var = 0;
    for (size_t c = 0; c < out.cols; ++c) mean += out.at(r, c);
    mean /= out.cols;
    for (size_t c = 0; c < out.cols; ++c) var += (out.at(r, c) - mean) * (out.at(r, c) - mean);
    var /= out.cols;
    for (size_t c = 0; c < out.cols; ++c)
      out.at(r, c) = (out.at(r, c) - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

Matrix ref_mm(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.cols; ++j) {
      double acc = 0;
      for (size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

// Reference scaled dot-product attention head: softmax(Q K^T / sqrt(h)) V W_o.
Matrix ref_sdp_head(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                    const Matrix& wo, int hidden) {
  Matrix q = ref_mm(x, wq), k = ref_mm(x, wk), v = ref_mm(x, wv);
  Matrix scores(q.rows, k.rows);
  for (size_t i = 0; i < q.rows; ++i)
    for (size_t j = 0; j < k.rows; ++j) {
      double acc = 0;
      for (size_t d = 0; d < q.cols; ++d) acc += q.at(i, d) * k.at(j, d);
      scores.at(i, j) = acc / std::sqrt(static_cast<double>(hidden));
    }
  Matrix attn = ref_softmax(scores);
  return ref_mm(ref_mm(attn, v), wo);
}

// Direct same-padded 1D convolution of each column of x with kernel w.
Matrix ref_conv_cols(const std::vector<double>& w, const Matrix& x) {
  const int n = static_cast<int>(x.rows), k = static_cast<int>(w.size()), half = k / 2;
  Matrix out(x.rows, x.cols);
  for (int r = 0; r < n; ++r)
    for (size_t c = 0; c < x.cols; ++c) {
      double acc = 0;
      for (int m = 0; m < k; ++m) {
        const int src = r + m - half;
        if (src >= 0 && src < n) acc += w[m] * x.at(src, c);
      }
      out.at(r, c) = acc;
    }
  return out;
}

TransformerConfig toy_config(HeadKind kind, int kernel = 0) {
  TransformerConfig cfg;
  LayerConfig l1;
  l1.hidden = 8;
  l1.heads.assign(2, {kind, kernel});
  l1.ff = {12};
  LayerConfig l2 = l1;
  l2.hidden = 12;
  cfg.layers = {l1, l2};
  return cfg;
}

// Mixed-head toy model covering every operation kind.
TransformerConfig toy_mixed() {
  TransformerConfig cfg;
  LayerConfig l1;
  l1.hidden = 8;
  l1.heads = {{HeadKind::SA_SDP, 0}, {HeadKind::SA_WMA, 0}};
  l1.ff = {10};
  LayerConfig l2;
  l2.hidden = 8;
  l2.heads = {{HeadKind::LT_DFT, 0}, {HeadKind::LT_DCT, 0}, {HeadKind::DSC, 3}, {HeadKind::DSC, 5}};
  l2.ff = {6, 8};
  cfg.layers = {l1, l2};
  return cfg;
}

double graph_loss(const Graph& g, const Params& p, const Matrix& x, const Matrix& probe) {
  std::map<uint32_t, Matrix> inputs;
  inputs[g.input_ids[0]] = x;
  EvalResult res = evaluate(g, p, inputs, g.output_id);
  const Matrix& y = res.of(g.output_id);
  double loss = 0;
  for (size_t i = 0; i < y.data.size(); ++i) loss += y.data[i] * probe.data[i];
  return loss;
}

}  // namespace

TEST_CASE("transform matrices match reference transforms") {
  Matrix d2 = build_transform_matrix(TransformKind::DFT, 2);
  CHECK(d2.at(0, 0) == doctest::Approx(1.0));
  CHECK(d2.at(0, 1) == doctest::Approx(1.0));
  CHECK(d2.at(1, 0) == doctest::Approx(1.0));
  CHECK(d2.at(1, 1) == doctest::Approx(-1.0));

  // Reference: real part of the complex DFT matrix.
  for (uint32_t n : {4u, 8u, 16u}) {
    Matrix d = build_transform_matrix(TransformKind::DFT, n);
    for (uint32_t j = 0; j < n; ++j)
      for (uint32_t k = 0; k < n; ++k) {
        std::complex<double> w =
            std::exp(std::complex<double>(0, -2.0 * M_PI * j * k / static_cast<double>(n)));
        CHECK(std::fabs(d.at(j, k) - w.real()) < 1e-12);
      }
  }
  Matrix d4 = build_transform_matrix(TransformKind::DFT, 4);
  CHECK(d4.at(1, 0) == doctest::Approx(1.0));
  CHECK(std::fabs(d4.at(1, 1)) < 1e-12);
  CHECK(d4.at(1, 2) == doctest::Approx(-1.0));
  CHECK(std::fabs(d4.at(1, 3)) < 1e-12);

  // DCT-II orthonormality: V V^T = I.
  Matrix c8 = build_transform_matrix(TransformKind::DCT, 8);
  Matrix prod = ref_mm(c8, kernels::transpose(c8));
  for (size_t i = 0; i < 8; ++i)
    for (size_t j = 0; j < 8; ++j)
      CHECK(std::fabs(prod.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("conv_as_matmul equals direct convolution") {
  CHECK(conv_as_matmul({3.5}, 4).at(2, 2) == doctest::Approx(3.5));
  CHECK(conv_as_matmul({3.5}, 4).at(2, 1) == 0.0);

  DetRng rng(5);
  std::vector<double> w(5);
  for (auto& v : w) v = rng.normal();
  Matrix x = random_matrix(16, 3, rng);
  Matrix band = conv_as_matmul(w, 16);
  Matrix via_mm = ref_mm(band, x);
  Matrix direct = ref_conv_cols(w, x);
  CHECK(max_abs_diff(via_mm, direct) < 1e-9);

  // Band structure: zero outside |i - j| <= k/2.
  for (size_t i = 0; i < band.rows; ++i)
    for (size_t j = 0; j < band.cols; ++j)
      if (std::llabs(static_cast<long long>(i) - static_cast<long long>(j)) > 2)
        CHECK(band.at(i, j) == 0.0);

  CHECK_THROWS_AS(conv_as_matmul({1, 2, 3, 4}, 8), Error);     // even length
  CHECK_THROWS_AS(conv_as_matmul({1, 2, 3, 4, 5}, 3), Error);  // longer than sequence
}

TEST_CASE("mapped SDP attention equals the reference computation") {
  TransformerConfig cfg;
  LayerConfig layer;
  layer.hidden = 8;
  layer.heads.assign(1, {HeadKind::SA_SDP, 0});
  layer.ff = {8};
  cfg.layers = {layer};

  Graph g = build_graph(cfg, 4, EvalMode::Inference);
  Params p = make_params(g, 3);
  DetRng rng(9);
  Matrix x = random_matrix(4, 8, rng);
  std::map<uint32_t, Matrix> inputs{{g.input_ids[0], x}};
  EvalResult res = evaluate(g, p, inputs);

  // Head weights in creation order: wq, wk, wv, wo, then the feed-forward pair.
  std::vector<uint32_t> ws = g.weight_ids;
  REQUIRE(ws.size() == 6);
  const Matrix& wq = p.weights.at(ws[0]);
  const Matrix& wk = p.weights.at(ws[1]);
  const Matrix& wv = p.weights.at(ws[2]);
  const Matrix& wo = p.weights.at(ws[3]);

  Matrix ln = ref_layernorm(x);
  Matrix head = ref_sdp_head(ln, wq, wk, wv, wo, 8);

  // Score matrix is seq x seq.
  bool found_scores = false;
  for (const auto& n : g.nodes)
    if (n.kind == NodeKind::Softmax && n.rows == 4 && n.cols == 4) found_scores = true;
  CHECK(found_scores);

  // The first Add node is the attention residual: x + head.
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Add) {
      Matrix expect = kernels::add(x, head);
      CHECK(max_abs_diff(res.of(n.id), expect) < 1e-6);
      break;
    }
  }
}

TEST_CASE("full forward graph matches a straight-line reference per head kind") {
  for (auto [kind, kernel] : {std::pair<HeadKind, int>{HeadKind::SA_SDP, 0},
                              {HeadKind::SA_WMA, 0},
                              {HeadKind::LT_DFT, 0},
                              {HeadKind::LT_DCT, 0},
                              {HeadKind::DSC, 5}}) {
    TransformerConfig cfg;
    LayerConfig layer;
    layer.hidden = 8;
    layer.heads.assign(2, {kind, kernel});
    layer.ff = {12};
    cfg.layers = {layer};
    const uint32_t n = 8;

    Graph g = build_graph(cfg, n, EvalMode::Inference);
    Params p = make_params(g, 17);
    DetRng rng(21);
    Matrix x = random_matrix(n, 8, rng);
    std::map<uint32_t, Matrix> inputs{{g.input_ids[0], x}};
    EvalResult res = evaluate(g, p, inputs);

    // Reference: pre-norm -> two heads of width 4 -> concat -> residual ->
    // pre-norm -> ff(12) with ReLU -> residual.
    Matrix ln1 = ref_layernorm(x);
    std::vector<Matrix> heads;
    size_t widx = 0;
    auto next_w = [&]() -> const Matrix& { return p.weights.at(g.weight_ids[widx++]); };
    Matrix shared_lt;  // same transform product shared by both heads
    for (int h = 0; h < 2; ++h) {
      switch (kind) {
        case HeadKind::SA_SDP: {
          const Matrix &wq = next_w(), &wk = next_w(), &wv = next_w(), &wo = next_w();
          heads.push_back(ref_sdp_head(ln1, wq, wk, wv, wo, 8));
          break;
        }
        case HeadKind::SA_WMA: {
          const Matrix &wq = next_w(), &wk = next_w(), &wv = next_w();
          const Matrix &wa = next_w(), &wo = next_w();
          Matrix q = ref_mm(ln1, wq), k = ref_mm(ln1, wk), v = ref_mm(ln1, wv);
          Matrix qa = ref_mm(q, wa);
          Matrix scores(qa.rows, k.rows);
          for (size_t i = 0; i < qa.rows; ++i)
            for (size_t j = 0; j < k.rows; ++j) {
              double acc = 0;
              for (size_t d = 0; d < qa.cols; ++d) acc += qa.at(i, d) * k.at(j, d);
              scores.at(i, j) = acc / std::sqrt(8.0);
            }
          heads.push_back(ref_mm(ref_mm(ref_softmax(scores), v), wo));
          break;
        }
        case HeadKind::LT_DFT:
        case HeadKind::LT_DCT: {
          if (h == 0)
            shared_lt = ref_mm(build_transform_matrix(
                                   kind == HeadKind::LT_DFT ? TransformKind::DFT : TransformKind::DCT, n),
                               ln1);
          const Matrix& wo = next_w();
          heads.push_back(ref_mm(shared_lt, wo));
          break;
        }
        case HeadKind::DSC: {
          const Matrix& kw = next_w();
          std::vector<double> wvec(kw.data.begin(), kw.data.end());
          const Matrix& wo = next_w();
          heads.push_back(ref_mm(ref_conv_cols(wvec, ln1), wo));
          break;
        }
      }
    }
    Matrix concat(n, 8);
    for (size_t r = 0; r < n; ++r)
      for (size_t c = 0; c < 4; ++c) {
        concat.at(r, c) = heads[0].at(r, c);
        concat.at(r, 4 + c) = heads[1].at(r, c);
      }
    Matrix x1 = kernels::add(x, concat);
    Matrix ln2 = ref_layernorm(x1);
    const Matrix &w1 = next_w(), &w2 = next_w();
    Matrix z = ref_mm(ln2, w1);
    for (auto& v : z.data) v = v > 0 ? v : 0;
    Matrix out = kernels::add(x1, ref_mm(z, w2));

    CHECK(max_abs_diff(res.of(g.output_id), out) < 1e-6);
  }
}

TEST_CASE("map_self_attention node counts: WMA = SDP + 1") {
  auto count_nodes = [](SelfAttentionKind kind) {
    GraphBuilder b;
    uint32_t x = b.input(4, 8);
    uint32_t wq = b.weight(8, 4), wk = b.weight(8, 4), wv = b.weight(8, 4);
    uint32_t q = b.matmul(x, wq), k = b.matmul(x, wk), v = b.matmul(x, wv);
    uint32_t wa = (kind == SelfAttentionKind::WMA) ? b.weight(4, 4) : UINT32_MAX;
    uint32_t wo = b.weight(4, 4);
    return map_self_attention(b, kind, q, k, v, wa, wo, 8).size();
  };
  const size_t sdp = count_nodes(SelfAttentionKind::SDP);
  const size_t wma = count_nodes(SelfAttentionKind::WMA);
  CHECK(wma == sdp + 1);

  GraphBuilder b;
  uint32_t x = b.input(4, 8);
  uint32_t wq = b.weight(8, 4), wk = b.weight(8, 4), wv = b.weight(8, 4), wo = b.weight(4, 4);
  uint32_t q = b.matmul(x, wq), k = b.matmul(x, wk), v = b.matmul(x, wv);
  auto made = map_self_attention(b, SelfAttentionKind::SDP, q, k, v, UINT32_MAX, wo, 8);
  bool square_scores = false;
  for (uint32_t id : made) {
    const auto& n = b.node(id);
    if (n.kind == NodeKind::Softmax && n.rows == 4 && n.cols == 4) square_scores = true;
  }
  CHECK(square_scores);

  GraphBuilder bad;
  uint32_t xa = bad.input(4, 8), xb = bad.input(5, 8);
  uint32_t w1 = bad.weight(8, 4);
  uint32_t qn = bad.matmul(xa, w1), kn = bad.matmul(xb, w1), vn = bad.matmul(xa, w1);
  CHECK_THROWS_AS(map_self_attention(bad, SelfAttentionKind::SDP, qn, kn, vn, UINT32_MAX, w1, 8),
                  Error);
}

TEST_CASE("standalone backward ops") {
  Matrix e1(3, 1);
  e1.at(0, 0) = 1.0;
  Matrix delta = backward_matmul(e1, identity(3), Matrix(3, 1), ActFn::Identity);
  CHECK(max_abs_diff(delta, e1) == 0.0);

  DetRng rng(33);
  Matrix w = random_matrix(4, 5, rng);
  Matrix d = random_matrix(4, 6, rng), xp = random_matrix(5, 6, rng);
  Matrix w2 = weight_update(d, xp, 0.0, w);
  CHECK(max_abs_diff(w, w2) == 0.0);

  // k = 1 kernel gradient reduces to sum(delta .* x).
  Matrix dd = random_matrix(6, 3, rng), xx = random_matrix(6, 3, rng);
  auto grad = conv_kernel_grad(dd, xx, 1);
  double expect = 0;
  for (size_t i = 0; i < dd.data.size(); ++i) expect += dd.data[i] * xx.data[i];
  CHECK(grad[0] == doctest::Approx(expect).epsilon(1e-12));

  // Kernel gradient vs finite differences of the direct convolution.
  std::vector<double> kernel = {0.3, -0.2, 0.5, 0.1, -0.4};
  Matrix x = random_matrix(8, 4, rng);
  Matrix probe = random_matrix(8, 4, rng);
  auto loss = [&](const std::vector<double>& kv) {
    Matrix y = ref_conv_cols(kv, x);
    double acc = 0;
    for (size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * probe.data[i];
    return acc;
  };
  auto analytic = conv_kernel_grad(probe, x, 5);
  for (size_t m = 0; m < kernel.size(); ++m) {
    auto hi = kernel, lo = kernel;
    hi[m] += 1e-4;
    lo[m] -= 1e-4;
    const double fd = (loss(hi) - loss(lo)) / 2e-4;
    CHECK(std::fabs(analytic[m] - fd) / std::max(1.0, std::fabs(fd)) < 1e-4);
  }

  // Equivalence with differentiating the banded-matmul formulation.
  Matrix band_grad = ref_mm(probe, kernels::transpose(x));
  const int half = 2;
  for (int m = 0; m < 5; ++m) {
    double sum = 0;
    for (int r = 0; r < 8; ++r) {
      const int c = r + m - half;
      if (c >= 0 && c < 8) sum += band_grad.at(r, c);
    }
    CHECK(analytic[m] == doctest::Approx(sum).epsilon(1e-9));
  }

  auto updated = backward_conv(probe, x, 0.1, kernel);
  for (size_t m = 0; m < kernel.size(); ++m)
    CHECK(updated[m] == doctest::Approx(kernel[m] - 0.1 * analytic[m]));
}

TEST_CASE("training graph gradients match central finite differences") {
  TransformerConfig cfg = toy_mixed();
  const uint32_t n = 8;
  Graph g = build_graph(cfg, n, EvalMode::Training);
  Params p = make_params(g, 7);
  DetRng rng(15);
  Matrix x = random_matrix(n, 8, rng);
  Matrix probe = random_matrix(g.nodes[g.output_id].rows, g.nodes[g.output_id].cols, rng);

  std::map<uint32_t, Matrix> inputs;
  inputs[g.input_ids[0]] = x;
  inputs[g.grad_seed_id] = probe;
  EvalResult res = evaluate(g, p, inputs);

  REQUIRE(g.grad_of_weight.size() == g.weight_ids.size());
  const double step = 1e-4;
  for (uint32_t wid : g.weight_ids) {
    const Matrix& analytic = res.of(g.grad_of_weight.at(wid));
    Params pp = p;
    Matrix& wm = pp.weights.at(wid);
    const size_t count = std::min<size_t>(3, wm.data.size());
    for (size_t i = 0; i < count; ++i) {
      const size_t idx = (i * 7919) % wm.data.size();
      const double orig = wm.data[idx];
      wm.data[idx] = orig + step;
      const double hi = graph_loss(g, pp, x, probe);
      wm.data[idx] = orig - step;
      const double lo = graph_loss(g, pp, x, probe);
      wm.data[idx] = orig;
      const double fd = (hi - lo) / (2 * step);
      const double re = std::fabs(analytic.data[idx] - fd) / std::max(1e-6, std::fabs(fd));
      CHECK(re < 1e-4);
    }
  }

  // Weight updates: W' = W - alpha * grad.
  for (const auto& [wid, upid] : g.updated_weight) {
    const Matrix& wv = p.weights.at(wid);
    const Matrix& gw = res.of(g.grad_of_weight.at(wid));
    const Matrix& wn = res.of(upid);
    for (size_t i = 0; i < wv.data.size(); ++i)
      CHECK(wn.data[i] == doctest::Approx(wv.data[i] - 0.01 * gw.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax and layer-norm node invariants") {
  TransformerConfig cfg = toy_config(HeadKind::SA_SDP);
  Graph g = build_graph(cfg, 6, EvalMode::Inference);
  Params p = make_params(g, 23);
  DetRng rng(29);
  std::map<uint32_t, Matrix> inputs{{g.input_ids[0], random_matrix(6, 8, rng)}};
  EvalResult res = evaluate(g, p, inputs);
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Softmax) {
      const Matrix& y = res.of(n.id);
      for (size_t r = 0; r < y.rows; ++r) {
        double sum = 0;
        for (size_t c = 0; c < y.cols; ++c) sum += y.at(r, c);
        CHECK(std::fabs(sum - 1.0) < 1e-10);
      }
    }
    if (n.kind == NodeKind::LayerNorm) {
      const Matrix& y = res.of(n.id);
      for (size_t r = 0; r < y.rows; ++r) {
        double mean = 0, var = 0;
        for (size_t c = 0; c < y.cols; ++c) mean += y.at(r, c);
        mean /= y.cols;
        for (size_t c = 0; c < y.cols; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        var /= y.cols;
        CHECK(std::fabs(mean) < 1e-8);
        CHECK(std::fabs(var - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("training and inference node-count asymmetry") {
  for (const auto& cfg :
       {toy_config(HeadKind::SA_SDP), toy_config(HeadKind::DSC, 5), toy_mixed()}) {
    Graph inf = build_graph(cfg, 8, EvalMode::Inference);
    Graph tr = build_graph(cfg, 8, EvalMode::Training);
    CHECK(tr.nodes.size() >= inf.nodes.size());
    const size_t inf_mm = inf.count_kind(NodeKind::MatMul);
    const size_t tr_mm = tr.count_kind(NodeKind::MatMul);
    CHECK(tr_mm > inf_mm);
    CHECK(tr_mm >= 2 * inf_mm);
  }
}

TEST_CASE("structural validation failures") {
  TransformerConfig cfg;
  CHECK_THROWS_AS(build_graph(cfg, 8, EvalMode::Inference), Error);  // no layers

  cfg = toy_config(HeadKind::DSC, 9);
  CHECK_THROWS_AS(build_graph(cfg, 4, EvalMode::Inference), Error);  // kernel > seq

  cfg = toy_config(HeadKind::DSC, 4);
  CHECK_THROWS_AS(build_graph(cfg, 8, EvalMode::Inference), Error);  // even kernel
}

TEST_CASE("graph JSON export lists nodes with shape and preds") {
  Graph g = build_graph(toy_config(HeadKind::SA_SDP), 4, EvalMode::Inference);
  const std::string j = graph_to_json(g);
  CHECK(j.find("\"kind\": \"matmul\"") != std::string::npos);
  CHECK(j.find("\"preds\"") != std::string::npos);
  CHECK(j.find("\"shape\"") != std::string::npos);
}

TEST_CASE("hidden-size changes insert a projection") {
  TransformerConfig cfg = toy_config(HeadKind::SA_SDP);  // hidden 8 -> 12
  Graph g = build_graph(cfg, 4, EvalMode::Inference);
  Params p = make_params(g, 2);
  DetRng rng(4);
  std::map<uint32_t, Matrix> inputs{{g.input_ids[0], random_matrix(4, 8, rng)}};
  EvalResult res = evaluate(g, p, inputs);
  CHECK(res.of(g.output_id).cols == 12);
}
