#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "txsim/codesign.hpp"

using namespace txsim;

namespace {

// Small spaces keep each pair evaluation at a few milliseconds.
DesignSpaces tiny_spaces() {
  DesignSpaces ds;
  ds.accelerator.num_pes = {64, 128};
  ds.accelerator.mac_lanes = {8, 16};
  ds.accelerator.macs_per_lane = {16};
  ds.accelerator.softmax_per_pe = {2, 4};
  ds.accelerator.batch_size = {4};
  ds.accelerator.spatial_tile = {16, 32};
  ds.accelerator.act_buffer_mb = {4, 8};
  ds.accelerator.weight_buffer_mb = {8, 16};
  ds.accelerator.mask_buffer_mb = {1, 2};
  ds.accelerator.mem_configs = {{MemType::RRAM, 8, 2, 4}, {MemType::DRAM, 16, 2, 2}};
  ds.transformer.num_layers = {2};
  ds.transformer.num_heads = {2, 4};
  ds.transformer.hidden_strict = {128};
  ds.transformer.hidden_extended = {128, 256, 512};
  ds.transformer.ff_dims = {256, 512};
  ds.transformer.ff_stack_lengths = {1};
  ds.transformer.dsc_kernels_strict = {5};  // kernel 9 would not fit seq_len 8
  ds.transformer.dsc_kernels_extended = {5};
  return ds;
}

EvalContext tiny_ctx() {
  EvalContext ctx;
  ctx.spaces = tiny_spaces();
  ctx.calib = default_calibration();
  ctx.seq_len = 8;
  ctx.mode = EvalMode::Inference;
  ctx.validation = ValidationMode::Strict;
  ctx.thresholds.tau_infer = 0.25;
  ctx.thresholds.tau_train = 0.5;
  ctx.maxima = compute_reference_maxima(ctx.spaces, ctx.calib, ctx.curves, ctx.thresholds,
                                        ctx.seq_len);
  return ctx;
}

TransformerConfig small_txf() {
  TransformerConfig cfg;
  LayerConfig layer;
  layer.hidden = 128;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {256};
  cfg.layers = {layer, layer};
  return cfg;
}

}  // namespace

TEST_CASE("performance formula") {
  PerfWeights w{0.1, 0.1, 0.2, 0.1, 0.5};
  Measures m;
  m.latency = 0.2;
  m.area = 0.3;
  m.dynamic_energy = 0.1;
  m.leakage_energy = 0.2;
  m.accuracy = 0.8;
  CHECK(std::fabs(performance(m, w) - 0.81) < 1e-12);

  Measures best;
  best.accuracy = 1.0;
  CHECK(std::fabs(performance(best, w) - 1.0) < 1e-12);

  // epsilon = 1 degenerates to accuracy.
  PerfWeights acc_only{0, 0, 0, 0, 1};
  CHECK(std::fabs(performance(m, acc_only) - 0.8) < 1e-12);

  Measures bad = m;
  bad.latency = 1.5;
  CHECK_THROWS_AS(performance(bad, w), Error);
  PerfWeights unnorm{0.5, 0.5, 0.5, 0.1, 0.5};
  CHECK_THROWS_AS(performance(m, unnorm), Error);
}

TEST_CASE("metric linearity and permutation invariance") {
  DetRng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    double w[4];
    double sum = 0;
    for (auto& v : w) {
      v = rng.uniform();
      sum += v;
    }
    double eps = rng.uniform();
    sum += eps;
    PerfWeights pw{w[0] / sum, w[1] / sum, w[2] / sum, w[3] / sum, eps / sum};
    Measures m{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    const double p = performance(m, pw);

    // Swapping the (weight, measure) pairs of the four cost terms leaves the
    // affine form unchanged.
    PerfWeights pw2{pw.gamma, pw.delta, pw.alpha, pw.beta, pw.epsilon};
    Measures m2{m.dynamic_energy, m.leakage_energy, m.latency, m.area, m.accuracy};
    CHECK(std::fabs(performance(m2, pw2) - p) < 1e-12);
  }
}

TEST_CASE("normalization against reference maxima") {
  ReferenceMaxima mx{10.0, 100.0, 1.0, 0.5, "test"};
  SimReport raw;
  raw.latency_ms = 10.0;
  raw.area_mm2 = 0.0;
  raw.dynamic_energy_j = 0.6;
  raw.leakage_energy_j = 5.0;  // above the maximum: clamped
  Measures m = normalize_measures(raw, 0.75, mx);
  CHECK(m.latency == 1.0);
  CHECK(m.area == 0.0);
  CHECK(m.dynamic_energy == doctest::Approx(0.6));
  CHECK(m.leakage_energy == 1.0);
  CHECK(m.accuracy == 0.75);

  CHECK_THROWS_AS(normalize_measures(raw, 0.5, ReferenceMaxima{}), Error);

  // Argmax invariance: scaling raw measures and maxima by a power of two
  // leaves normalized measures bit-identical.
  SimReport raw2 = raw;
  raw2.latency_ms *= 4.0;
  raw2.area_mm2 *= 4.0;
  raw2.dynamic_energy_j *= 4.0;
  raw2.leakage_energy_j *= 4.0;
  ReferenceMaxima mx2 = mx;
  mx2.latency_ms *= 4.0;
  mx2.area_mm2 *= 4.0;
  mx2.dynamic_j *= 4.0;
  mx2.leakage_j *= 4.0;
  Measures m2 = normalize_measures(raw2, 0.75, mx2);
  CHECK(m2.latency == m.latency);
  CHECK(m2.area == m.area);
  CHECK(m2.dynamic_energy == m.dynamic_energy);
  CHECK(m2.leakage_energy == m.leakage_energy);
}

TEST_CASE("synthetic accuracy oracle") {
  TransformerConfig small = small_txf();
  CHECK(synthetic_accuracy(small) == synthetic_accuracy(small));
  CHECK(synthetic_accuracy(small) >= 0.0);
  CHECK(synthetic_accuracy(small) <= 1.0);

  // A strictly larger model scores at least as high.
  TransformerConfig bigger = small;
  bigger.layers.push_back(small.layers[0]);
  bigger.layers.push_back(small.layers[0]);
  bigger.layers[0].ff = {512};
  CHECK(synthetic_accuracy(bigger) >= synthetic_accuracy(small));

  // Head-type diversity earns a bonus at equal parameter count.
  TransformerConfig diverse = small;
  diverse.layers[0].heads = {{HeadKind::LT_DFT, 0}, {HeadKind::LT_DCT, 0}};
  TransformerConfig uniform = small;
  uniform.layers[0].heads = {{HeadKind::LT_DFT, 0}, {HeadKind::LT_DFT, 0}};
  CHECK(synthetic_accuracy(diverse) > synthetic_accuracy(uniform));
}

TEST_CASE("toy trainer oracle is reproducible and beats chance") {
  TransformerConfig toy;
  LayerConfig layer;
  layer.hidden = 16;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {16};
  toy.layers = {layer, layer};
  const double a1 = toy_trainer_accuracy(toy);
  const double a2 = toy_trainer_accuracy(toy);
  CHECK(std::fabs(a1 - a2) <= 0.005);
  CHECK(a1 > 0.5);  // planted rule is learnable above chance
}

TEST_CASE("evaluate_pair penalty and validity paths") {
  EvalContext ctx = tiny_ctx();

  // Garbage embeddings score the penalty value.
  std::vector<double> junk_txf(kTxfEmbedDims, 0.37);
  std::vector<double> junk_acc(kAccEmbedDimsExt, 99.0);
  EvalPoint bad = evaluate_pair(junk_txf, junk_acc, ctx);
  CHECK(bad.p == kPerformanceMin);
  CHECK_FALSE(bad.valid);

  // A valid pair lands in [0, 1].
  DetRng rng(5);
  auto txf = sample_transformer(rng, ctx.spaces.transformer, ValidationMode::Strict);
  auto acc = sample_accelerator(rng, ctx.spaces.accelerator);
  EvalPoint good = evaluate_pair(encode_transformer(txf),
                                 encode_accelerator_ext(acc, ctx.spaces.accelerator), ctx);
  CHECK(good.valid);
  CHECK(good.p >= 0.0);
  CHECK(good.p <= 1.0);

  // User constraint: layer count cap turns an otherwise valid pair into a
  // penalty point.
  EvalContext capped = ctx;
  capped.constraints.max_layers = 1;
  EvalPoint blocked = evaluate_pair(
      encode_transformer(txf), encode_accelerator_ext(acc, ctx.spaces.accelerator), capped);
  CHECK(blocked.p == kPerformanceMin);
  CHECK_FALSE(blocked.valid);
}

TEST_CASE("surrogate fits, predicts, and differentiates") {
  // Degenerate one-point dataset must not crash.
  Surrogate s1;
  SurrogateOptions opts;
  opts.epochs_initial = 50;
  opts.seed = 1;
  s1.fit({{1.0, 2.0, 3.0}}, {0.5}, opts);
  Prediction p = s1.predict({1.0, 2.0, 3.0});
  CHECK(std::isfinite(p.mean));
  CHECK(std::isfinite(p.aleatoric));
  CHECK(std::isfinite(p.epistemic));

  Surrogate unfit;
  CHECK_THROWS_AS(unfit.predict({1.0}), Error);

  // Input gradients vs central finite differences.
  DetRng rng(7);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal() * 3.0;
    double y = 0.1 * x[0] - 0.2 * x[1] + 0.05 * x[2] * x[3];
    xs.push_back(x);
    ys.push_back(y);
  }
  Surrogate s2;
  opts.epochs_initial = 200;
  s2.fit(xs, ys, opts);
  for (int pt = 0; pt < 5; ++pt) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal() * 2.0;
    const double kappa = 0.4;
    auto grad = s2.acquisition_grad(x, kappa);
    double num = 0, den = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::fabs(x[i]));
      auto hi = x, lo = x;
      hi[i] += h;
      lo[i] -= h;
      const double fd = (s2.acquisition(hi, kappa) - s2.acquisition(lo, kappa)) / (2 * h);
      num += (grad[i] - fd) * (grad[i] - fd);
      den += fd * fd;
    }
    CHECK(std::sqrt(num) / std::max(1e-9, std::sqrt(den)) < 1e-5);
  }
}

TEST_CASE("gradient ascent on a quadratic lattice objective finds the optimum") {
  // Known synthetic objective with a known argmax; exercises the proposal
  // machinery (multi-restart ascent, per-step lattice projection, polish,
  // dedupe) with analytic gradients.
  DesignSpaces spaces;
  EvalContext ctx;
  ctx.spaces = spaces;

  AcceleratorConfig target;
  target.batch_tile = 4;
  target.spatial_tile = 32;
  target.activation = Activation::GeLU;
  target.num_pes = 128;
  target.mac_lanes_per_pe = 32;
  target.macs_per_lane = 16;
  target.softmax_per_pe = 4;
  target.batch_size = 4;
  target.act_buffer_mb = 64;
  target.weight_buffer_mb = 128;
  target.mask_buffer_mb = 8;
  target.mem = {MemType::RRAM, 8, 2, 4};

  TransformerConfig fixed_txf;
  LayerConfig layer;
  layer.hidden = 128;
  layer.heads.assign(2, HeadOp{HeadKind::SA_SDP, 0});
  layer.ff = {256};
  fixed_txf.layers = {layer, layer};

  std::vector<double> opt = encode_transformer(fixed_txf);
  {
    auto acc = encode_accelerator_ext(target);
    opt.insert(opt.end(), acc.begin(), acc.end());
  }

  const auto [lo, hi] = embedding_hull(spaces);
  std::vector<double> scale(opt.size());
  for (size_t i = 0; i < scale.size(); ++i) scale[i] = std::max(1.0, 0.3 * (hi[i] - lo[i]));

  ProposalObjective obj;
  obj.scale = scale;
  obj.value = [&](const std::vector<double>& x) {
    double q = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = (x[i] - opt[i]) / scale[i];
      q += d * d;
    }
    return 1.0 - q / static_cast<double>(x.size());
  };
  obj.grad = [&](const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i)
      g[i] = -2.0 * (x[i] - opt[i]) / (scale[i] * scale[i] * static_cast<double>(x.size()));
    return g;
  };

  int hits = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    DetRng rng(seed * 31 + 7);
    std::vector<EvalPoint> dataset;
    for (int i = 0; i < 16; ++i) {
      EvalPoint pt;
      pt.x_txf = encode_transformer(
          sample_transformer(rng, spaces.transformer, ValidationMode::Strict));
      pt.x_acc = encode_accelerator_ext(sample_accelerator(rng, spaces.accelerator));
      std::vector<double> x = pt.x_txf;
      x.insert(x.end(), pt.x_acc.begin(), pt.x_acc.end());
      pt.p = obj.value(x);
      pt.valid = true;
      dataset.push_back(std::move(pt));
    }
    bool found = false;
    for (int it = 0; it < 50 && !found; ++it) {
      auto [ptxf, pacc] = propose_with_objective(obj, rng, ctx, dataset, std::nullopt);
      EvalPoint pt;
      pt.x_txf = ptxf;
      pt.x_acc = pacc;
      std::vector<double> x = ptxf;
      x.insert(x.end(), pacc.begin(), pacc.end());
      pt.p = obj.value(x);
      pt.valid = true;
      dataset.push_back(std::move(pt));
      if (x == opt) found = true;
    }
    if (found) ++hits;
  }
  CHECK(hits >= 18);  // >= 90% of 20 seeds
}

TEST_CASE("search traces are monotone, deterministic, and penalty-sound") {
  EvalContext ctx = tiny_ctx();
  SearchConfig cfg;
  cfg.method = SearchMethod::TransCode;
  cfg.budget = 48;
  cfg.initial_samples = 16;
  cfg.seed = 3;
  cfg.surrogate.epochs_initial = 120;
  cfg.surrogate.epochs_update = 30;

  SearchResult a = run_search(cfg, ctx);
  CHECK(a.trace.size() == 48);
  double best = kPerformanceMin;
  for (const auto& tp : a.trace) {
    if (tp.valid) best = std::max(best, tp.p);
    CHECK(tp.best_p == best);        // running max
    if (!tp.valid) CHECK(tp.p == kPerformanceMin);
  }
  CHECK(a.best.valid);
  CHECK(a.best.p >= 0.0);

  SearchResult b = run_search(cfg, ctx);
  CHECK(trace_to_jsonl(a.trace) == trace_to_jsonl(b.trace));

  // Worker count must not change results.
  SearchConfig workers = cfg;
  workers.workers = 2;
  SearchResult c = run_search(workers, ctx);
  CHECK(trace_to_jsonl(a.trace) == trace_to_jsonl(c.trace));
}

TEST_CASE("hwnas keeps the accelerator frozen") {
  EvalContext ctx = tiny_ctx();
  SearchConfig cfg;
  cfg.method = SearchMethod::HwNas;
  cfg.budget = 24;
  cfg.initial_samples = 8;
  cfg.seed = 11;
  cfg.surrogate.epochs_initial = 80;
  cfg.surrogate.epochs_update = 20;
  AcceleratorConfig frozen;
  frozen.num_pes = 64;
  frozen.mac_lanes_per_pe = 8;
  frozen.macs_per_lane = 16;
  frozen.softmax_per_pe = 2;
  frozen.spatial_tile = 16;
  frozen.batch_tile = 1;
  frozen.batch_size = 4;
  frozen.act_buffer_mb = 4;
  frozen.weight_buffer_mb = 8;
  frozen.mask_buffer_mb = 1;
  frozen.mem = {MemType::RRAM, 8, 2, 4};
  cfg.freeze_acc = frozen;

  SearchResult res = run_search(cfg, ctx);
  const auto frozen_emb = encode_accelerator_ext(frozen, ctx.spaces.accelerator);
  for (const auto& tp : res.trace) CHECK(tp.x_acc == frozen_emb);
}

TEST_CASE("random search baseline stays within the constrained space") {
  EvalContext ctx = tiny_ctx();
  ctx.constraints.max_layers = 2;
  SearchConfig cfg;
  cfg.method = SearchMethod::Random;
  cfg.budget = 16;
  cfg.seed = 2;
  SearchResult res = run_search(cfg, ctx);
  CHECK(res.trace.size() == 16);
  for (const auto& tp : res.trace) CHECK(tp.valid);  // sampling rejects violators
}

TEST_CASE("reference maxima JSON round trip") {
  ReferenceMaxima mx{1.5, 2.5, 3.5e-3, 4.5e-4, "corner"};
  ReferenceMaxima back = maxima_from_json(maxima_to_json(mx));
  CHECK(back.latency_ms == mx.latency_ms);
  CHECK(back.area_mm2 == mx.area_mm2);
  CHECK(back.dynamic_j == mx.dynamic_j);
  CHECK(back.leakage_j == mx.leakage_j);
  CHECK(back.workload == mx.workload);
}
