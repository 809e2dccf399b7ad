#pragma once

#include <string>
#include <vector>

#include "poison/dataset.hpp"
#include "poison/rng.hpp"

namespace poison {

enum class LearnerKind { adaline, logistic2, softmax_regression, mlp };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

// Architecture descriptor. Parameters live in one flat vector whose layout is
// fixed per kind (see param layout notes below); all gradients and
// Hessian-vector products operate on that flat vector.
//
// Flat layouts (weights row-major, then biases, layer by layer):
//   adaline / logistic2 : [w_0..w_{d-1}, b]                          p = d+1
//   softmax_regression  : [W row-major (K x d), b_0..b_{K-1}]        p = K(d+1)
//   mlp                 : [W1 (h x d), b1 (h), W2 (K x h), b2 (K)]   p = h(d+1)+K(h+1)
struct LearnerSpec {
  LearnerKind kind = LearnerKind::logistic2;
  int input_dim = 0;
  int class_count = 2;
  int hidden_width = 10;  // mlp only
  double lambda = 0.0;    // L2 strength on weights (biases unregularized)

  int param_count() const;
  void validate() const;
};

enum class HvpMode { exact, fd };

// Weights uniform in (-r, r) with r = 1/sqrt(fan-in); biases zero.
Vec init_params(const LearnerSpec& spec, RngStream& rng);

// Learner objective: mean per-sample loss + (lambda/2)||weights||^2.
// Log-loss for logistic2/softmax/mlp, squared error against +/-1 for adaline.
double train_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data);
Vec grad_w(const LearnerSpec& spec, const Vec& w, const Dataset& data);

// Bare loss L (no regularization), the attacker-facing evaluation loss.
double val_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data);
Vec val_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data);

// Gradient of one sample's bare loss w.r.t. its input features.
Vec grad_x(const LearnerSpec& spec, const Vec& w, const Vec& x, int y);

// (d^2/dw^2 of train_loss on `data`) applied to z. Exact mode is analytic
// (linear learners) or a forward-over-reverse double pass (mlp); fd mode is a
// central difference of grad_w along z.
Vec hvp_ww(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z,
           HvpMode mode = HvpMode::exact);

// weight * d/dx [ z . grad_w of one sample's bare loss ]. Callers supply the
// sample's share of the mean training loss as `weight` (1/(n+1) for a
// poisoning point spliced into an n-sample training set).
Vec hvp_xw(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z,
           HvpMode mode = HvpMode::exact, double weight = 1.0);

struct Prediction {
  Mat scores;               // n x K; probabilities, or {-s, s} for adaline
  std::vector<int> labels;  // argmax, ties toward the smaller class index
};

Prediction predict(const LearnerSpec& spec, const Vec& w, const Mat& X);

// Flat-layout views used by checkpoints and the layout round-trip tests.
struct ParamBlocks {
  std::vector<RowMat> weights;  // per layer
  std::vector<Vec> biases;      // per layer
};
ParamBlocks unflatten(const LearnerSpec& spec, const Vec& w);
Vec flatten(const LearnerSpec& spec, const ParamBlocks& blocks);

namespace detail {
// Internal hooks shared by the per-kind translation units.
void check_param(const LearnerSpec& spec, const Vec& w);
void check_sample(const LearnerSpec& spec, const Vec& x, int y);
double reg_value(const LearnerSpec& spec, const Vec& w);
void add_reg_grad(const LearnerSpec& spec, const Vec& w, Vec& g);
void add_reg_hvp(const LearnerSpec& spec, const Vec& z, Vec& out);

double data_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data);
Vec data_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data);
Vec data_hvp(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z);
Vec sample_xw_product(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z);

// Linear-kind implementations (adaline, logistic2, softmax_regression).
double linear_data_loss(const LearnerSpec&, const Vec&, const Dataset&);
Vec linear_data_grad(const LearnerSpec&, const Vec&, const Dataset&);
Vec linear_grad_x(const LearnerSpec&, const Vec&, const Vec&, int);
Vec linear_data_hvp(const LearnerSpec&, const Vec&, const Dataset&, const Vec&);
Vec linear_sample_xw(const LearnerSpec&, const Vec&, const Vec&, int, const Vec&);
Mat linear_scores(const LearnerSpec&, const Vec&, const Mat&);

// MLP implementations (Pearlmutter-style R pass for the exact HVPs).
double mlp_data_loss(const LearnerSpec&, const Vec&, const Dataset&);
Vec mlp_data_grad(const LearnerSpec&, const Vec&, const Dataset&);
Vec mlp_grad_x(const LearnerSpec&, const Vec&, const Vec&, int);
Vec mlp_data_hvp(const LearnerSpec&, const Vec&, const Dataset&, const Vec&);
Vec mlp_sample_xw(const LearnerSpec&, const Vec&, const Vec&, int, const Vec&);
Mat mlp_scores(const LearnerSpec&, const Vec&, const Mat&);
}  // namespace detail

}  // namespace poison
