#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "txsim/matrix.hpp"
#include "txsim/spaces.hpp"

namespace txsim {

enum class EvalMode { Inference, Training };

// Node kinds. MatMul/Softmax/LayerNorm/Activation/Add/Transpose/Scale are the
// hardware-mapped compute kinds; Hadamard and the *Grad kinds appear in
// training graphs and map onto the same module classes. Input/Weight/ConstMat
// are sources; Concat/Slice are layout-only and cost nothing.
enum class NodeKind {
  Input,
  Weight,
  ConstMat,
  BandExpand,  // length-k kernel -> N x N banded matrix
  MatMul,
  Transpose,
  Scale,
  Add,
  Hadamard,
  Concat,
  Slice,
  Softmax,
  LayerNorm,
  Activation,
  SoftmaxGrad,     // preds: softmax output, upstream grad
  LayerNormGrad,   // preds: pre-norm input, upstream grad
  ActivationGrad,  // preds: pre-activation, upstream grad
  ConvKernelGrad,  // preds: upstream grad, layer input; correlation with reversed input
  WeightUpdate,    // preds: weight, weight grad
};

// What a node's output holds, for pruning-role and buffer-placement purposes.
enum class DataClass { Activation, Weight, Gradient, Const };

constexpr double kLayerNormEps = 1e-9;

struct GraphNode {
  uint32_t id = 0;
  NodeKind kind = NodeKind::Input;
  DataClass dclass = DataClass::Activation;
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<uint32_t> preds;
  double aux = 0.0;    // Scale factor / update step / Slice column offset
  int iaux = 0;        // Activation function / conv kernel length
  Matrix payload;      // ConstMat only
};

struct Graph {
  std::vector<GraphNode> nodes;  // ids are indices; construction order is topological
  std::vector<uint32_t> input_ids;
  std::vector<uint32_t> weight_ids;  // trainable leaves (projection matrices, conv kernels)
  uint32_t output_id = 0;
  uint32_t grad_seed_id = UINT32_MAX;              // Training only: dL/d(output) feed
  std::map<uint32_t, uint32_t> grad_of_weight;     // weight id -> gradient node id
  std::map<uint32_t, uint32_t> updated_weight;     // weight id -> updated-weight node id
  EvalMode mode = EvalMode::Inference;
  uint32_t seq_len = 0;

  const GraphNode& node(uint32_t id) const { return nodes[id]; }
  size_t count_kind(NodeKind k) const;
};

std::string node_kind_name(NodeKind k);

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

class GraphBuilder {
 public:
  uint32_t input(uint32_t rows, uint32_t cols, DataClass dc = DataClass::Activation);
  uint32_t weight(uint32_t rows, uint32_t cols);
  uint32_t constant(Matrix m);
  uint32_t band_expand(uint32_t kernel_id, uint32_t n);
  uint32_t matmul(uint32_t a, uint32_t b);
  uint32_t transpose(uint32_t a);
  uint32_t scale(uint32_t a, double c);
  uint32_t add(uint32_t a, uint32_t b);
  uint32_t hadamard(uint32_t a, uint32_t b);
  uint32_t concat_cols(const std::vector<uint32_t>& parts);
  uint32_t slice_cols(uint32_t a, uint32_t col_offset, uint32_t cols);
  uint32_t softmax(uint32_t a);
  uint32_t layernorm(uint32_t a);
  uint32_t activation(uint32_t a, Activation fn);

  Graph take() { return std::move(g_); }
  Graph& graph() { return g_; }
  const GraphNode& node(uint32_t id) const { return g_.nodes[id]; }

  uint32_t push(GraphNode n);

 private:
  Graph g_;
};

enum class SelfAttentionKind { SDP, WMA };

// Emits score matmul(s), 1/sqrt(h) scaling, softmax, value matmul and output
// projection for one attention head. Returns the ids of the created nodes.
std::vector<uint32_t> map_self_attention(GraphBuilder& b, SelfAttentionKind kind, uint32_t q,
                                         uint32_t k, uint32_t v, uint32_t wa, uint32_t wo,
                                         int hidden);

enum class TransformKind { DFT, DCT };

// Real N x N transform matrix: real part of the DFT matrix, or orthonormal
// DCT-II.
Matrix build_transform_matrix(TransformKind kind, uint32_t n);

// Same-padded 1D convolution as a banded matrix: (conv_as_matmul(w, n) * X)
// equals convolving each column of X with w.
Matrix conv_as_matmul(const std::vector<double>& kernel, uint32_t n);

struct BuildOptions {
  Activation activation = Activation::ReLU;
  double learning_rate = 0.01;
};

// Maps a transformer configuration to its forward DAG; Training mode appends
// backward and weight-update nodes reachable from a gradient seed on the
// output. Validation here is structural (shape feasibility), not design-space
// membership; toy models below the space minima are buildable for testing.
Graph build_graph(const TransformerConfig& cfg, uint32_t seq_len, EvalMode mode,
                  const BuildOptions& opts = {});

// ---------------------------------------------------------------------------
// Standalone training-step operations
// ---------------------------------------------------------------------------

enum class ActFn { Identity, ReLU, GeLU };

// delta = W_next^T * delta_next  (elementwise *) f'(preact)
Matrix backward_matmul(const Matrix& delta_next, const Matrix& w_next, const Matrix& preact,
                       ActFn fprime);
// W' = W - alpha * delta * X_prev^T
Matrix weight_update(const Matrix& delta, const Matrix& x_prev, double alpha, const Matrix& w);
// Kernel gradient by correlation with the reversed input; returns the updated kernel.
std::vector<double> backward_conv(const Matrix& delta, const Matrix& x_prev, double alpha,
                                  const std::vector<double>& kernel);
std::vector<double> conv_kernel_grad(const Matrix& delta, const Matrix& x_prev, int k);

// ---------------------------------------------------------------------------
// Numeric evaluation
// ---------------------------------------------------------------------------

struct Params {
  std::map<uint32_t, Matrix> weights;  // weight node id -> value
};

Params make_params(const Graph& g, uint64_t seed);

struct EvalResult {
  std::vector<Matrix> values;  // per node id

  const Matrix& of(uint32_t id) const { return values[id]; }
};

// Evaluates nodes 0..limit (default: all). `inputs` must cover the Input
// nodes in that range; the training gradient seed is only needed when the
// backward half is evaluated.
EvalResult evaluate(const Graph& g, const Params& params,
                    const std::map<uint32_t, Matrix>& inputs, uint32_t limit = UINT32_MAX);

std::string graph_to_json(const Graph& g);

double gelu(double x);
double gelu_prime(double x);

}  // namespace txsim
