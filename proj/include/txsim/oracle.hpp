#pragma once

#include <cstdint>

#include "txsim/spaces.hpp"

namespace txsim {

// Trainable parameter count implied by the layer mapping (projections, output
// heads, feed-forward stacks, inter-layer bridges, convolution kernels).
uint64_t transformer_param_count(const TransformerConfig& cfg);

// Deterministic stand-in for a task-accuracy predictor: bounded, increasing
// in parameter count with saturating returns, plus a small bonus for head-type
// diversity. Scores are a documented synthetic scale, not task measurements.
//   acc = 0.5 + 0.4 * (1 - exp(-params / 1e7)) + 0.1 * distinct_head_kinds / 7
double synthetic_accuracy(const TransformerConfig& cfg);

struct ToyTrainerOptions {
  uint32_t seq_len = 8;
  int train_samples = 48;
  int test_samples = 32;
  int epochs = 2;
  double learning_rate = 0.05;
  uint64_t seed = 7;
};

// Trains the model end-to-end through the training graph on a tiny planted
// binary classification task and returns held-out accuracy. Intended for toy
// configurations (hidden sizes well below the real design space).
double toy_trainer_accuracy(const TransformerConfig& cfg, const ToyTrainerOptions& opts = {});

enum class OracleKind { Synthetic, ToyTrainer };

double accuracy_oracle(const TransformerConfig& cfg, OracleKind kind);

}  // namespace txsim
