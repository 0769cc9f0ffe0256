#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "txsim/sparsity.hpp"

using namespace txsim;

namespace {

Tile random_tile(DetRng& rng, uint32_t b, uint32_t r, uint32_t c) {
  Tile t(b, r, c);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

size_t count_zeros(const Tile& t) {
  size_t n = 0;
  for (double v : t.data) n += (v == 0.0);
  return n;
}

Tile dense_prune(const Tile& t, double tau) {
  Tile out = t;
  for (auto& v : out.data)
    if (std::fabs(v) < tau) v = 0.0;
  return out;
}

Tile dense_tile_matmul(const Tile& a, const Tile& b) {
  Tile out(a.b, a.r, b.c);
  for (uint32_t bi = 0; bi < a.b; ++bi)
    for (uint32_t i = 0; i < a.r; ++i)
      for (uint32_t j = 0; j < b.c; ++j) {
        double acc = 0;
        for (uint32_t k = 0; k < a.c; ++k) acc += a.at(bi, i, k) * b.at(bi, k, j);
        out.at(bi, i, j) = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("prune_tile case split") {
  Tile t(1, 2, 2);
  t.data = {0.5, -0.05, 0.2, 0.001};
  MaskedTile mt = prune_tile(t, 0.1);
  Tile back = unpack(mt);
  CHECK(back.data == std::vector<double>{0.5, 0.0, 0.2, 0.0});
  CHECK(pruning_ratio(mt) == doctest::Approx(0.5));

  // tau = 0 on a tile with no exact zeros: nothing pruned.
  DetRng rng(1);
  Tile g = random_tile(rng, 1, 4, 4);
  MaskedTile m0 = prune_tile(g, 0.0);
  CHECK(pruning_ratio(m0) == 0.0);
  CHECK(m0.pruned_count() == 0);

  // All-zero tile prunes fully at any positive threshold.
  Tile z(2, 3, 3);
  CHECK(pruning_ratio(prune_tile(z, 0.5)) == 1.0);

  CHECK_THROWS_AS(prune_tile(t, -1.0), Error);
}

TEST_CASE("pruning ratio equals brute-force elementwise counting") {
  DetRng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const uint32_t b = 1 + rng.index(3), r = 1 + rng.index(8), c = 1 + rng.index(8);
    Tile t = random_tile(rng, b, r, c);
    const double tau = rng.uniform() * 1.5;
    MaskedTile mt = prune_tile(t, tau);
    size_t expect = 0;
    for (double v : t.data) expect += (std::fabs(v) < tau);
    CHECK(pruning_ratio(mt) ==
          doctest::Approx(static_cast<double>(expect) / t.elems()).epsilon(1e-12));
    CHECK(count_zeros(unpack(mt)) == expect);
  }

  // An unpruned random Gaussian tile has no exact zeros.
  Tile g = random_tile(rng, 2, 16, 16);
  CHECK(pruning_ratio(pack_zero_free(g)) == 0.0);
}

TEST_CASE("monotonicity and idempotence") {
  DetRng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    Tile t = random_tile(rng, 1 + rng.index(2), 2 + rng.index(6), 2 + rng.index(6));
    double tau1 = rng.uniform(), tau2 = rng.uniform();
    if (tau1 > tau2) std::swap(tau1, tau2);
    CHECK(pruning_ratio(prune_tile(t, tau1)) <= pruning_ratio(prune_tile(t, tau2)));

    Tile once = unpack(prune_tile(t, tau1));
    Tile twice = unpack(prune_tile(once, tau1));
    CHECK(once.data == twice.data);
  }
}

TEST_CASE("zero-free packing round trip and byte accounting") {
  // Worked example: 8x8 tile, half zeros, 16-bit elements.
  Tile t(1, 8, 8);
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = (i % 2 == 0) ? 1.5 : 0.0;
  MaskedTile mt = pack_zero_free(t);
  CHECK(mt.payload_bytes(2) == 64);
  CHECK(mt.mask_bytes() == 8);
  CHECK(pruning_ratio(mt) == doctest::Approx(0.5));

  DetRng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    Tile x = random_tile(rng, 1 + rng.index(3), 1 + rng.index(8), 1 + rng.index(8));
    for (auto& v : x.data)
      if (rng.uniform() < 0.4) v = 0.0;
    MaskedTile packed = pack_zero_free(x);
    Tile back = unpack(packed);
    CHECK(back.data == x.data);

    // compressed = dense * (1 - rho) + mask overhead, exactly.
    const double rho = pruning_ratio(packed);
    const uint64_t expect_payload =
        static_cast<uint64_t>(std::llround(x.elems() * (1.0 - rho))) * 2;
    CHECK(packed.payload_bytes(2) == expect_payload);
    CHECK(packed.mask_bytes() == (x.elems() + 7) / 8);
  }

  MaskedTile bad = pack_zero_free(t);
  bad.values.pop_back();
  CHECK_THROWS_AS(unpack(bad), Error);
}

TEST_CASE("masked tile matmul equals dense matmul of pruned tiles") {
  DetRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const uint32_t b = 1 + rng.index(2), m = 2 + rng.index(7), k = 2 + rng.index(7),
                   n = 2 + rng.index(7);
    Tile a = random_tile(rng, b, m, k);
    Tile bb = random_tile(rng, b, k, n);
    const double tau_a = rng.uniform(), tau_b = rng.uniform();
    MaskedTile ma = prune_tile(a, tau_a);
    MaskedTile mb = prune_tile(bb, tau_b);
    auto res = masked_matmul(ma, mb);
    Tile expect = dense_tile_matmul(dense_prune(a, tau_a), dense_prune(bb, tau_b));
    double diff = 0;
    for (size_t i = 0; i < expect.data.size(); ++i)
      diff = std::max(diff, std::fabs(expect.data[i] - res.out.data[i]));
    CHECK(diff < 1e-12);

    uint64_t expect_macs = 0;
    Tile pa = dense_prune(a, tau_a), pb = dense_prune(bb, tau_b);
    for (uint32_t bi = 0; bi < b; ++bi)
      for (uint32_t i = 0; i < m; ++i)
        for (uint32_t kk = 0; kk < k; ++kk)
          for (uint32_t j = 0; j < n; ++j)
            if (pa.at(bi, i, kk) != 0.0 && pb.at(bi, kk, j) != 0.0) ++expect_macs;
    CHECK(res.effectual_macs == expect_macs);
  }
}

TEST_CASE("profiled curve hits the Gaussian median threshold") {
  DetRng rng(6);
  std::vector<double> values(200000);
  for (auto& v : values) v = rng.normal();
  SparsityCurve curve = profile_values(values, Role::Activation, {0.0, 0.3, 0.6745, 1.0, 2.0});
  // 0.6745 is the median of |N(0,1)|.
  CHECK(eval_rho(curve, 0.6745) == doctest::Approx(0.5).epsilon(0.04));
  CHECK(curve.points.front().second == 0.0);  // no exact zeros

  for (size_t i = 1; i < curve.points.size(); ++i)
    CHECK(curve.points[i].second >= curve.points[i - 1].second);
}

TEST_CASE("profile_curve over a real graph is monotone per role") {
  TransformerConfig cfg;
  LayerConfig layer;
  layer.hidden = 8;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {12};
  cfg.layers = {layer, layer};
  Graph g = build_graph(cfg, 8, EvalMode::Training);
  Params p = make_params(g, 11);
  DetRng rng(7);
  std::vector<std::map<uint32_t, Matrix>> inputs;
  for (int i = 0; i < 3; ++i) {
    std::map<uint32_t, Matrix> in;
    in[g.input_ids[0]] = random_matrix(8, 8, rng);
    in[g.grad_seed_id] = random_matrix(8, 8, rng);
    inputs.push_back(std::move(in));
  }
  const std::vector<double> grid{0.0, 0.01, 0.05, 0.1, 0.3, 0.8};
  for (Role role : {Role::Weight, Role::Activation, Role::Gradient}) {
    SparsityCurve curve = profile_curve(g, p, inputs, role, grid);
    CHECK(curve.points.size() == grid.size());
    // rho at tau=0 is the fraction of exact zeros: none among random-init
    // weights, some among activations and gradients (ReLU cutoffs).
    if (role == Role::Weight)
      CHECK(curve.points.front().second == 0.0);
    else
      CHECK(curve.points.front().second < 0.2);
    for (size_t i = 1; i < curve.points.size(); ++i)
      CHECK(curve.points[i].second >= curve.points[i - 1].second);
  }
  CHECK_THROWS_AS(profile_curve(g, p, {}, Role::Weight, grid), Error);
}

TEST_CASE("inverse threshold lookup") {
  SparsityCurve c{Role::Activation, {{0.0, 0.0}, {0.5, 0.4}, {1.0, 0.8}, {2.0, 0.8}}};
  CHECK(lookup_tau(c, 0.0) == 0.0);
  CHECK(lookup_tau(c, 0.2) == doctest::Approx(0.25));
  CHECK(lookup_tau(c, 0.4) == doctest::Approx(0.5));
  CHECK(lookup_tau(c, 0.95) == 2.0);  // above the curve maximum: clamp to last tau
  CHECK(eval_rho(c, 0.25) == doctest::Approx(0.2));
  CHECK(eval_rho(c, 5.0) == doctest::Approx(0.8));

  SparsityCurve empty;
  CHECK_THROWS_AS(lookup_tau(empty, 0.5), Error);
  CHECK_THROWS_AS(eval_rho(empty, 0.5), Error);

  // Round trip on a profiled distribution: re-profiling at lookup_tau(0.5)
  // recovers rho = 0.5 within tolerance.
  DetRng rng(8);
  std::vector<double> values(100000);
  for (auto& v : values) v = rng.normal();
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.15);
  SparsityCurve prof = profile_values(values, Role::Activation, grid);
  const double tau = lookup_tau(prof, 0.5);
  size_t zeros = 0;
  for (double v : values) zeros += (std::fabs(v) < tau);
  CHECK(std::fabs(static_cast<double>(zeros) / values.size() - 0.5) < 0.05);
}

TEST_CASE("threshold resolution per role") {
  CurveSet curves = identity_curves();
  PruneThresholds th;
  th.tau_infer = 0.25;
  th.tau_train = 0.6;
  CHECK(resolve_rho(curves, th, Role::Activation) == doctest::Approx(0.25));
  CHECK(resolve_rho(curves, th, Role::Gradient) == doctest::Approx(0.6));
  // Weights default to the static prune ratio, not tau_I.
  CHECK(resolve_rho(curves, th, Role::Weight) == doctest::Approx(kDefaultWeightPruneRatio));
  th.tau_weight = 0.8;
  CHECK(resolve_rho(curves, th, Role::Weight) == doctest::Approx(0.8));
  CHECK(resolve_rho(curves, th, Role::Const) == 0.0);
}

TEST_CASE("curve JSON round trip") {
  SparsityCurve c{Role::Gradient, {{0.0, 0.0}, {0.5, 0.7}}};
  SparsityCurve back = curve_from_json(curve_to_json(c));
  CHECK(back.role == Role::Gradient);
  CHECK(back.points == c.points);
}

TEST_CASE("training footprint with runtime pruning beats dense") {
  TransformerConfig cfg;
  LayerConfig layer;
  layer.hidden = 16;
  layer.heads.assign(4, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {32};
  cfg.layers = {layer, layer};
  Graph g = build_graph(cfg, 8, EvalMode::Training);

  FootprintReport dense = compute_footprint(g, 2, 0.0, 0.0, 0.0);
  FootprintReport pruned = compute_footprint(g, 2, 0.5, 0.5, 0.9);
  CHECK(pruned.compressed_total() < dense.dense_total());
  // Payload follows dense * (1 - rho) per matrix; rounding is per matrix.
  const double grad_ratio = static_cast<double>(pruned.gradients.payload_bytes) /
                            static_cast<double>(pruned.gradients.dense_bytes);
  CHECK(std::fabs(grad_ratio - 0.1) < 0.02);
  const double w_ratio = static_cast<double>(pruned.weights.payload_bytes) /
                         static_cast<double>(pruned.weights.dense_bytes);
  CHECK(std::fabs(w_ratio - 0.5) < 0.02);

  // Gradients exist only in the training graph.
  Graph inf = build_graph(cfg, 8, EvalMode::Inference);
  FootprintReport inf_fp = compute_footprint(inf, 2, 0.0, 0.0, 0.0);
  CHECK(inf_fp.gradients.dense_bytes == 0);
  CHECK(inf_fp.dense_total() < dense.dense_total());
}
