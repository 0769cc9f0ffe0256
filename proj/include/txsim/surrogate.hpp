#pragma once

#include <cstdint>
#include <vector>

#include "txsim/common.hpp"

namespace txsim {

// One-hidden-layer tanh regressor with hand-rolled Adam and analytic
// gradients with respect to both parameters and inputs.
struct Mlp {
  int in_dim = 0, hidden = 0, out_dim = 0;
  std::vector<double> w1, b1, w2, b2;  // w1: hidden x in, w2: out x hidden
  std::vector<double> m, v;            // Adam state over all parameters
  int adam_step = 0;

  void init(int in, int hid, int out, DetRng& rng);
  void forward(const std::vector<double>& x, std::vector<double>& out,
               std::vector<double>* hidden_act = nullptr) const;
  // d out[k] / d x  ->  grad (size in_dim), for a linear combination
  // sum_k coeff[k] * out[k].
  void input_grad(const std::vector<double>& x, const std::vector<double>& coeff,
                  std::vector<double>& grad) const;
  size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

struct SurrogateOptions {
  int hidden = 32;
  int ensemble = 4;
  int epochs_initial = 300;
  int epochs_update = 60;
  double lr = 0.01;
  uint64_t seed = 1;
  // Per-dimension lower bounds on the standardization scale. Dimensions that
  // barely vary in the dataset would otherwise be amplified far outside the
  // training distribution when the optimizer moves them.
  std::vector<double> std_floor;
};

struct Prediction {
  double mean = 0.0;
  double aleatoric = 0.0;  // sigma from the mean/variance head
  double epistemic = 0.0;  // ensemble dispersion
};

// Mean/variance network (heteroscedastic head) plus a small ensemble whose
// spread estimates epistemic uncertainty. Input gradients are analytic.
class Surrogate {
 public:
  void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
           const SurrogateOptions& opts);
  // Warm-start refit on a grown dataset.
  void update(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys);

  bool fitted() const { return fitted_; }
  int input_dim() const { return in_dim_; }
  const std::vector<double>& input_std() const { return std_; }

  Prediction predict(const std::vector<double>& x) const;
  // Gradient of mean + kappa * (aleatoric + epistemic) w.r.t. the raw input.
  std::vector<double> acquisition_grad(const std::vector<double>& x, double kappa) const;
  double acquisition(const std::vector<double>& x, double kappa) const;

 private:
  void standardize(const std::vector<double>& x, std::vector<double>& out) const;
  void train_epochs(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                    int epochs);

  bool fitted_ = false;
  int in_dim_ = 0;
  SurrogateOptions opts_;
  std::vector<double> mean_, std_;
  Mlp mv_;                    // outputs (mu, log sigma^2)
  std::vector<Mlp> ensemble_; // scalar mean regressors
};

void fit_surrogate(Surrogate& s, const std::vector<std::vector<double>>& xs,
                   const std::vector<double>& ys, const SurrogateOptions& opts);

}  // namespace txsim
