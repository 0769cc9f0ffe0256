#include "txsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "txsim/graph.hpp"

namespace txsim {

uint64_t transformer_param_count(const TransformerConfig& cfg) {
  uint64_t params = 0;
  int prev_hidden = cfg.layers.empty() ? 0 : cfg.layers[0].hidden;
  for (const auto& L : cfg.layers) {
    const uint64_t h = static_cast<uint64_t>(L.hidden);
    if (static_cast<uint64_t>(prev_hidden) != h) params += uint64_t(prev_hidden) * h;
    const int n = static_cast<int>(L.heads.size());
    const uint64_t base = h / n;
    for (int i = 0; i < n; ++i) {
      const uint64_t d = (i == n - 1) ? h - base * (n - 1) : base;
      switch (L.heads[i].kind) {
        case HeadKind::SA_SDP: params += 3 * h * d + d * d; break;
        case HeadKind::SA_WMA: params += 3 * h * d + 2 * d * d; break;
        case HeadKind::LT_DFT:
        case HeadKind::LT_DCT: params += h * d; break;
        case HeadKind::DSC: params += static_cast<uint64_t>(L.heads[i].kernel) + h * d; break;
      }
    }
    for (int f : L.ff) params += 2 * h * static_cast<uint64_t>(f);
    prev_hidden = L.hidden;
  }
  return params;
}

double synthetic_accuracy(const TransformerConfig& cfg) {
  if (cfg.layers.empty()) throw Error(ErrorCode::InvalidConfig, "empty model");
  const double params = static_cast<double>(transformer_param_count(cfg));
  std::set<int> kinds;
  for (const auto& L : cfg.layers)
    for (const auto& h : L.heads) kinds.insert(head_category(h));
  const double base = 1.0 - std::exp(-params / 1e7);
  const double diversity = static_cast<double>(kinds.size()) / 7.0;
  return std::clamp(0.5 + 0.4 * base + 0.1 * diversity, 0.0, 1.0);
}

double toy_trainer_accuracy(const TransformerConfig& cfg, const ToyTrainerOptions& opts) {
  BuildOptions bopts;
  bopts.learning_rate = opts.learning_rate;
  Graph g = build_graph(cfg, opts.seq_len, EvalMode::Training, bopts);
  Params params = make_params(g, opts.seed);

  const uint32_t n = opts.seq_len;
  const uint32_t h = static_cast<uint32_t>(cfg.layers[0].hidden);
  const uint32_t h_out = g.nodes[g.output_id].cols;
  DetRng data_rng(opts.seed * 0x2545F4914F6CDD1DULL + 11);

  // Planted rule: the label is the sign of a fixed bilinear score of the
  // input sequence.
  Matrix u(h, 1), v(n, 1);
  for (auto& x : u.data) x = data_rng.normal();
  for (auto& x : v.data) x = data_rng.normal();

  auto sample = [&](Matrix& x, double& label) {
    x = Matrix(n, h);
    for (auto& e : x.data) e = data_rng.normal();
    double score = 0.0;
    for (uint32_t r = 0; r < n; ++r)
      for (uint32_t c = 0; c < h; ++c) score += v.data[r] * x.at(r, c) * u.data[c];
    label = score > 0.0 ? 1.0 : -1.0;
  };

  std::vector<Matrix> train_x(opts.train_samples), test_x(opts.test_samples);
  std::vector<double> train_y(opts.train_samples), test_y(opts.test_samples);
  for (int i = 0; i < opts.train_samples; ++i) sample(train_x[i], train_y[i]);
  for (int i = 0; i < opts.test_samples; ++i) sample(test_x[i], test_y[i]);

  // Mean-pooled linear readout trained jointly with the graph weights.
  std::vector<double> w_cls(h_out, 0.0);
  DetRng wrng(opts.seed + 99);
  for (auto& w : w_cls) w = wrng.normal() / std::sqrt(static_cast<double>(h_out));

  auto pooled_score = [&](const Matrix& out, std::vector<double>& pooled) {
    pooled.assign(h_out, 0.0);
    for (uint32_t r = 0; r < out.rows; ++r)
      for (uint32_t c = 0; c < out.cols; ++c) pooled[c] += out.at(r, c);
    double s = 0.0;
    for (uint32_t c = 0; c < h_out; ++c) {
      pooled[c] /= static_cast<double>(out.rows);
      s += pooled[c] * w_cls[c];
    }
    return s;
  };

  const uint32_t input_id = g.input_ids[0];
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (int i = 0; i < opts.train_samples; ++i) {
      std::map<uint32_t, Matrix> inputs;
      inputs[input_id] = train_x[i];
      EvalResult fwd = evaluate(g, params, inputs, g.output_id);
      std::vector<double> pooled;
      const double s = pooled_score(fwd.of(g.output_id), pooled);
      const double y = train_y[i];
      const double dls = -y / (1.0 + std::exp(y * s));  // d logistic / d score

      Matrix seed(n, h_out);
      for (uint32_t r = 0; r < n; ++r)
        for (uint32_t c = 0; c < h_out; ++c)
          seed.at(r, c) = dls * w_cls[c] / static_cast<double>(n);
      inputs[g.grad_seed_id] = std::move(seed);
      EvalResult back = evaluate(g, params, inputs);
      for (const auto& [wid, upid] : g.updated_weight) params.weights[wid] = back.of(upid);
      for (uint32_t c = 0; c < h_out; ++c) w_cls[c] -= opts.learning_rate * dls * pooled[c];
    }
  }

  int correct = 0;
  for (int i = 0; i < opts.test_samples; ++i) {
    std::map<uint32_t, Matrix> inputs;
    inputs[input_id] = test_x[i];
    EvalResult fwd = evaluate(g, params, inputs, g.output_id);
    std::vector<double> pooled;
    const double s = pooled_score(fwd.of(g.output_id), pooled);
    if ((s > 0.0 ? 1.0 : -1.0) == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(opts.test_samples);
}

double accuracy_oracle(const TransformerConfig& cfg, OracleKind kind) {
  return kind == OracleKind::Synthetic ? synthetic_accuracy(cfg) : toy_trainer_accuracy(cfg);
}

}  // namespace txsim
