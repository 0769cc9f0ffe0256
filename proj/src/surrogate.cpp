#include "txsim/surrogate.hpp"

#include <algorithm>
#include <cmath>

namespace txsim {

namespace {
constexpr double kLogVarMin = -8.0;
constexpr double kLogVarMax = 4.0;
}  // namespace

void Mlp::init(int in, int hid, int out, DetRng& rng) {
  in_dim = in;
  hidden = hid;
  out_dim = out;
  w1.assign(size_t(hid) * in, 0.0);
  b1.assign(hid, 0.0);
  w2.assign(size_t(out) * hid, 0.0);
  b2.assign(out, 0.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hid));
  for (auto& w : w1) w = rng.normal() * s1;
  for (auto& w : w2) w = rng.normal() * s2;
  m.assign(param_count(), 0.0);
  v.assign(param_count(), 0.0);
  adam_step = 0;
}

void Mlp::forward(const std::vector<double>& x, std::vector<double>& out,
                  std::vector<double>* hidden_act) const {
  std::vector<double> h(hidden);
  for (int j = 0; j < hidden; ++j) {
    double a = b1[j];
    const double* row = &w1[size_t(j) * in_dim];
    for (int i = 0; i < in_dim; ++i) a += row[i] * x[i];
    h[j] = std::tanh(a);
  }
  out.assign(out_dim, 0.0);
  for (int k = 0; k < out_dim; ++k) {
    double a = b2[k];
    const double* row = &w2[size_t(k) * hidden];
    for (int j = 0; j < hidden; ++j) a += row[j] * h[j];
    out[k] = a;
  }
  if (hidden_act) *hidden_act = std::move(h);
}

void Mlp::input_grad(const std::vector<double>& x, const std::vector<double>& coeff,
                     std::vector<double>& grad) const {
  std::vector<double> h;
  std::vector<double> out;
  forward(x, out, &h);
  std::vector<double> t(hidden, 0.0);
  for (int j = 0; j < hidden; ++j) {
    double c = 0.0;
    for (int k = 0; k < out_dim; ++k) c += coeff[k] * w2[size_t(k) * hidden + j];
    t[j] = c * (1.0 - h[j] * h[j]);
  }
  grad.assign(in_dim, 0.0);
  for (int j = 0; j < hidden; ++j) {
    const double* row = &w1[size_t(j) * in_dim];
    for (int i = 0; i < in_dim; ++i) grad[i] += t[j] * row[i];
  }
}

namespace {

// One full-batch Adam epoch. `dloss` maps (prediction, target) to the loss
// gradient w.r.t. each output.
template <typename LossGrad>
void adam_epoch(Mlp& net, const std::vector<std::vector<double>>& xs,
                const std::vector<double>& ys, double lr, LossGrad dloss) {
  const size_t P = net.param_count();
  std::vector<double> grad(P, 0.0);
  std::vector<double> h, out, dout;
  const size_t nw1 = net.w1.size(), nb1 = net.b1.size(), nw2 = net.w2.size();

  for (size_t s = 0; s < xs.size(); ++s) {
    net.forward(xs[s], out, &h);
    dloss(out, ys[s], dout);
    // Output layer.
    for (int k = 0; k < net.out_dim; ++k) {
      for (int j = 0; j < net.hidden; ++j)
        grad[nw1 + nb1 + size_t(k) * net.hidden + j] += dout[k] * h[j];
      grad[nw1 + nb1 + nw2 + k] += dout[k];
    }
    // Hidden layer.
    for (int j = 0; j < net.hidden; ++j) {
      double t = 0.0;
      for (int k = 0; k < net.out_dim; ++k) t += dout[k] * net.w2[size_t(k) * net.hidden + j];
      t *= (1.0 - h[j] * h[j]);
      for (int i = 0; i < net.in_dim; ++i) grad[size_t(j) * net.in_dim + i] += t * xs[s][i];
      grad[nw1 + j] += t;
    }
  }
  const double scale = 1.0 / static_cast<double>(xs.size());
  for (auto& g : grad) g *= scale;

  ++net.adam_step;
  const double b1c = 1.0 - std::pow(0.9, net.adam_step);
  const double b2c = 1.0 - std::pow(0.999, net.adam_step);
  auto apply = [&](double* w, size_t off, size_t count) {
    for (size_t i = 0; i < count; ++i) {
      const size_t p = off + i;
      net.m[p] = 0.9 * net.m[p] + 0.1 * grad[p];
      net.v[p] = 0.999 * net.v[p] + 0.001 * grad[p] * grad[p];
      w[i] -= lr * (net.m[p] / b1c) / (std::sqrt(net.v[p] / b2c) + 1e-8);
    }
  };
  apply(net.w1.data(), 0, nw1);
  apply(net.b1.data(), nw1, nb1);
  apply(net.w2.data(), nw1 + nb1, nw2);
  apply(net.b2.data(), nw1 + nb1 + nw2, net.b2.size());
}

void nll_grad(const std::vector<double>& out, double y, std::vector<double>& dout) {
  const double lv = std::clamp(out[1], kLogVarMin, kLogVarMax);
  const double inv = std::exp(-lv);
  const double diff = out[0] - y;
  dout.assign(2, 0.0);
  dout[0] = diff * inv;
  dout[1] = (out[1] > kLogVarMin && out[1] < kLogVarMax)
                ? 0.5 * (1.0 - diff * diff * inv)
                : 0.0;
}

void mse_grad(const std::vector<double>& out, double y, std::vector<double>& dout) {
  dout.assign(1, 2.0 * (out[0] - y));
}

}  // namespace

void Surrogate::standardize(const std::vector<double>& x, std::vector<double>& out) const {
  out.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean_[i]) / std_[i];
}

void Surrogate::train_epochs(const std::vector<std::vector<double>>& xs,
                             const std::vector<double>& ys, int epochs) {
  std::vector<std::vector<double>> xstd(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) standardize(xs[i], xstd[i]);
  for (int e = 0; e < epochs; ++e) {
    adam_epoch(mv_, xstd, ys, opts_.lr, nll_grad);
    for (auto& member : ensemble_) adam_epoch(member, xstd, ys, opts_.lr, mse_grad);
  }
}

void Surrogate::fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                    const SurrogateOptions& opts) {
  if (xs.empty() || xs.size() != ys.size())
    throw Error(ErrorCode::EmptyInput, "surrogate fit: empty or mismatched dataset");
  opts_ = opts;
  in_dim_ = static_cast<int>(xs[0].size());
  mean_.assign(in_dim_, 0.0);
  std_.assign(in_dim_, 0.0);
  for (const auto& x : xs)
    for (int i = 0; i < in_dim_; ++i) mean_[i] += x[i];
  for (auto& mval : mean_) mval /= static_cast<double>(xs.size());
  for (const auto& x : xs)
    for (int i = 0; i < in_dim_; ++i) std_[i] += (x[i] - mean_[i]) * (x[i] - mean_[i]);
  for (int i = 0; i < in_dim_; ++i) {
    std_[i] = std::sqrt(std_[i] / static_cast<double>(xs.size()));
    const double floor =
        (i < static_cast<int>(opts.std_floor.size())) ? opts.std_floor[i] : 0.0;
    std_[i] = std::max(std_[i], floor);
    if (std_[i] < 1e-9) std_[i] = 1.0;  // constant dimension carries no signal
  }
  DetRng rng(opts.seed);
  mv_.init(in_dim_, opts.hidden, 2, rng);
  ensemble_.resize(opts.ensemble);
  for (auto& member : ensemble_) member.init(in_dim_, opts.hidden, 1, rng);
  fitted_ = true;
  train_epochs(xs, ys, opts.epochs_initial);
}

void Surrogate::update(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
  if (!fitted_) throw Error(ErrorCode::UnfittedSurrogate, "update before fit");
  train_epochs(xs, ys, opts_.epochs_update);
}

Prediction Surrogate::predict(const std::vector<double>& x) const {
  if (!fitted_) throw Error(ErrorCode::UnfittedSurrogate, "predict before fit");
  std::vector<double> xs;
  standardize(x, xs);
  std::vector<double> out;
  mv_.forward(xs, out);
  Prediction p;
  p.aleatoric = std::exp(0.5 * std::clamp(out[1], kLogVarMin, kLogVarMax));
  // The ensemble average is the mean estimate; the heteroscedastic head only
  // contributes the aleatoric width (its own mean fits far more slowly).
  double avg = 0.0;
  std::vector<double> means(ensemble_.size());
  std::vector<double> mo;
  for (size_t k = 0; k < ensemble_.size(); ++k) {
    ensemble_[k].forward(xs, mo);
    means[k] = mo[0];
    avg += mo[0];
  }
  avg /= static_cast<double>(ensemble_.size());
  p.mean = avg;
  double var = 0.0;
  for (double mk : means) var += (mk - avg) * (mk - avg);
  p.epistemic = std::sqrt(var / static_cast<double>(ensemble_.size()));
  return p;
}

double Surrogate::acquisition(const std::vector<double>& x, double kappa) const {
  Prediction p = predict(x);
  return p.mean + kappa * (p.aleatoric + p.epistemic);
}

std::vector<double> Surrogate::acquisition_grad(const std::vector<double>& x, double kappa) const {
  if (!fitted_) throw Error(ErrorCode::UnfittedSurrogate, "gradient before fit");
  std::vector<double> xs;
  standardize(x, xs);
  std::vector<double> out;
  mv_.forward(xs, out);
  const double lv = out[1];
  const double sigma_a = std::exp(0.5 * std::clamp(lv, kLogVarMin, kLogVarMax));

  // kappa * sigma_a through the heteroscedastic head.
  std::vector<double> coeff{0.0, 0.0};
  if (lv > kLogVarMin && lv < kLogVarMax) coeff[1] = kappa * 0.5 * sigma_a;
  std::vector<double> grad;
  mv_.input_grad(xs, coeff, grad);

  // Mean and epistemic terms through the ensemble.
  const size_t K = ensemble_.size();
  std::vector<double> means(K);
  std::vector<double> mo;
  std::vector<std::vector<double>> member_grads(K);
  double avg = 0.0;
  const std::vector<double> one{1.0};
  for (size_t k = 0; k < K; ++k) {
    ensemble_[k].forward(xs, mo);
    means[k] = mo[0];
    avg += mo[0];
    ensemble_[k].input_grad(xs, one, member_grads[k]);
  }
  avg /= static_cast<double>(K);
  for (size_t k = 0; k < K; ++k)
    for (int i = 0; i < in_dim_; ++i)
      grad[i] += member_grads[k][i] / static_cast<double>(K);
  double var = 0.0;
  for (double mk : means) var += (mk - avg) * (mk - avg);
  const double sigma_e = std::sqrt(var / static_cast<double>(K));
  if (sigma_e > 1e-9) {
    std::vector<double> gbar(in_dim_, 0.0);
    for (size_t k = 0; k < K; ++k)
      for (int i = 0; i < in_dim_; ++i) gbar[i] += member_grads[k][i];
    for (auto& gval : gbar) gval /= static_cast<double>(K);
    for (size_t k = 0; k < K; ++k) {
      const double w = kappa * (means[k] - avg) / (static_cast<double>(K) * sigma_e);
      for (int i = 0; i < in_dim_; ++i) grad[i] += w * (member_grads[k][i] - gbar[i]);
    }
  }

  // Chain rule through standardization back to raw coordinates.
  for (int i = 0; i < in_dim_; ++i) grad[i] /= std_[i];
  return grad;
}

void fit_surrogate(Surrogate& s, const std::vector<std::vector<double>>& xs,
                   const std::vector<double>& ys, const SurrogateOptions& opts) {
  s.fit(xs, ys, opts);
}

}  // namespace txsim
