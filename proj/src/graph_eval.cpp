#include <cmath>

#include "txsim/graph.hpp"

namespace txsim {

Params make_params(const Graph& g, uint64_t seed) {
  Params p;
  for (uint32_t wid : g.weight_ids) {
    const auto& n = g.nodes[wid];
    DetRng rng(seed ^ (0x51ed2701ULL + wid * 0x9e3779b97f4a7c15ULL));
    const double fan_in = static_cast<double>(n.rows);
    p.weights[wid] = random_matrix(n.rows, n.cols, rng, 1.0 / std::sqrt(fan_in));
  }
  return p;
}

static Matrix eval_softmax_grad(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows, y.cols);
  for (size_t r = 0; r < y.rows; ++r) {
    double dot = 0.0;
    for (size_t c = 0; c < y.cols; ++c) dot += dy.at(r, c) * y.at(r, c);
    for (size_t c = 0; c < y.cols; ++c) dx.at(r, c) = y.at(r, c) * (dy.at(r, c) - dot);
  }
  return dx;
}

static Matrix eval_layernorm_grad(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows, x.cols);
  const double n = static_cast<double>(x.cols);
  for (size_t r = 0; r < x.rows; ++r) {
    double mean = 0.0;
    for (size_t c = 0; c < x.cols; ++c) mean += x.at(r, c);
    mean /= n;
    double var = 0.0;
    for (size_t c = 0; c < x.cols; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double dy_mean = 0.0, dyu_mean = 0.0;
    for (size_t c = 0; c < x.cols; ++c) {
      dy_mean += dy.at(r, c);
      dyu_mean += dy.at(r, c) * (x.at(r, c) - mean);
    }
    dy_mean /= n;
    dyu_mean /= n;
    for (size_t c = 0; c < x.cols; ++c) {
      const double u = x.at(r, c) - mean;
      dx.at(r, c) = inv * (dy.at(r, c) - dy_mean) - u * inv * inv * inv * dyu_mean;
    }
  }
  return dx;
}

EvalResult evaluate(const Graph& g, const Params& params,
                    const std::map<uint32_t, Matrix>& inputs, uint32_t limit) {
  EvalResult res;
  res.values.resize(g.nodes.size());
  for (const auto& n : g.nodes) {
    if (n.id > limit) break;
    Matrix& out = res.values[n.id];
    switch (n.kind) {
      case NodeKind::Input: {
        auto it = inputs.find(n.id);
        if (it == inputs.end())
          throw Error(ErrorCode::EmptyInput, "missing input for node " + std::to_string(n.id));
        if (it->second.rows != n.rows || it->second.cols != n.cols)
          throw Error(ErrorCode::ShapeMismatch, "input shape mismatch at node " + std::to_string(n.id));
        out = it->second;
        break;
      }
      case NodeKind::Weight: {
        auto it = params.weights.find(n.id);
        if (it == params.weights.end())
          throw Error(ErrorCode::EmptyInput, "missing weight for node " + std::to_string(n.id));
        out = it->second;
        break;
      }
      case NodeKind::ConstMat:
        out = n.payload;
        break;
      case NodeKind::BandExpand: {
        const Matrix& km = res.values[n.preds[0]];
        std::vector<double> kernel(km.data.begin(), km.data.end());
        out = conv_as_matmul(kernel, n.rows);
        break;
      }
      case NodeKind::MatMul:
        out = kernels::matmul(res.values[n.preds[0]], res.values[n.preds[1]]);
        break;
      case NodeKind::Transpose:
        out = kernels::transpose(res.values[n.preds[0]]);
        break;
      case NodeKind::Scale:
        out = kernels::scale(res.values[n.preds[0]], n.aux);
        break;
      case NodeKind::Add:
        out = kernels::add(res.values[n.preds[0]], res.values[n.preds[1]]);
        break;
      case NodeKind::Hadamard:
        out = kernels::hadamard(res.values[n.preds[0]], res.values[n.preds[1]]);
        break;
      case NodeKind::Concat: {
        out = Matrix(n.rows, n.cols);
        size_t off = 0;
        for (uint32_t p : n.preds) {
          const Matrix& part = res.values[p];
          for (size_t r = 0; r < part.rows; ++r)
            for (size_t c = 0; c < part.cols; ++c) out.at(r, off + c) = part.at(r, c);
          off += part.cols;
        }
        break;
      }
      case NodeKind::Slice: {
        const Matrix& src = res.values[n.preds[0]];
        const size_t off = static_cast<size_t>(n.aux);
        out = Matrix(n.rows, n.cols);
        for (size_t r = 0; r < out.rows; ++r)
          for (size_t c = 0; c < out.cols; ++c) out.at(r, c) = src.at(r, off + c);
        break;
      }
      case NodeKind::Softmax:
        out = res.values[n.preds[0]];
        kernels::softmax_rows(out);
        break;
      case NodeKind::LayerNorm:
        out = res.values[n.preds[0]];
        kernels::layernorm_rows(out, kLayerNormEps);
        break;
      case NodeKind::Activation: {
        out = res.values[n.preds[0]];
        if (n.iaux == 0) {
          for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
        } else {
          for (auto& v : out.data) v = gelu(v);
        }
        break;
      }
      case NodeKind::SoftmaxGrad:
        out = eval_softmax_grad(res.values[n.preds[0]], res.values[n.preds[1]]);
        break;
      case NodeKind::LayerNormGrad:
        out = eval_layernorm_grad(res.values[n.preds[0]], res.values[n.preds[1]]);
        break;
      case NodeKind::ActivationGrad: {
        const Matrix& z = res.values[n.preds[0]];
        const Matrix& dy = res.values[n.preds[1]];
        out = Matrix(z.rows, z.cols);
        if (n.iaux == 0) {
          for (size_t i = 0; i < z.data.size(); ++i)
            out.data[i] = z.data[i] > 0.0 ? dy.data[i] : 0.0;
        } else {
          for (size_t i = 0; i < z.data.size(); ++i)
            out.data[i] = dy.data[i] * gelu_prime(z.data[i]);
        }
        break;
      }
      case NodeKind::ConvKernelGrad: {
        auto grad = conv_kernel_grad(res.values[n.preds[0]], res.values[n.preds[1]], n.iaux);
        out = Matrix(grad.size(), 1);
        for (size_t i = 0; i < grad.size(); ++i) out.data[i] = grad[i];
        break;
      }
      case NodeKind::WeightUpdate: {
        const Matrix& w = res.values[n.preds[0]];
        const Matrix& gw = res.values[n.preds[1]];
        out = w;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= n.aux * gw.data[i];
        break;
      }
    }
  }
  return res;
}

}  // namespace txsim
