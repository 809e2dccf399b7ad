#include "poison/learner.hpp"

#include <cmath>

#include "poison/error.hpp"
#include "poison/finite_diff.hpp"

namespace poison {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::adaline: return "adaline";
    case LearnerKind::logistic2: return "logistic2";
    case LearnerKind::softmax_regression: return "softmax-regression";
    case LearnerKind::mlp: return "mlp";
  }
  return "?";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "adaline" || name == "ada") return LearnerKind::adaline;
  if (name == "logistic2" || name == "lr") return LearnerKind::logistic2;
  if (name == "softmax-regression" || name == "softmax") return LearnerKind::softmax_regression;
  if (name == "mlp") return LearnerKind::mlp;
  throw std::invalid_argument("unknown learner kind: " + name);
}

int LearnerSpec::param_count() const {
  int d = input_dim, K = class_count, h = hidden_width;
  switch (kind) {
    case LearnerKind::adaline:
    case LearnerKind::logistic2: return d + 1;
    case LearnerKind::softmax_regression: return K * (d + 1);
    case LearnerKind::mlp: return h * (d + 1) + K * (h + 1);
  }
  return 0;
}

void LearnerSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("LearnerSpec: input_dim must be >= 1");
  if (lambda < 0.0) throw std::invalid_argument("LearnerSpec: lambda must be >= 0");
  bool binary_only = kind == LearnerKind::adaline || kind == LearnerKind::logistic2;
  if (binary_only && class_count != 2)
    throw std::invalid_argument("LearnerSpec: " + to_string(kind) + " requires exactly 2 classes");
  if (!binary_only && class_count < 2)
    throw std::invalid_argument("LearnerSpec: class_count must be >= 2");
  if (kind == LearnerKind::mlp && hidden_width < 1)
    throw std::invalid_argument("LearnerSpec: hidden_width must be >= 1");
}

namespace detail {

void check_param(const LearnerSpec& spec, const Vec& w) {
  if (w.size() != spec.param_count())
    throw ShapeError("parameter vector length " + std::to_string(w.size()) + " != expected " +
                     std::to_string(spec.param_count()));
}

void check_sample(const LearnerSpec& spec, const Vec& x, int y) {
  if (x.size() != spec.input_dim) throw ShapeError("sample feature length mismatch");
  if (y < 0 || y >= spec.class_count)
    throw std::invalid_argument("sample label " + std::to_string(y) + " out of range");
}

// Regularization touches weight entries only; bias entries are skipped by
// walking the documented flat layout.
template <typename F>
static void for_each_weight_block(const LearnerSpec& spec, F&& f) {
  int d = spec.input_dim, K = spec.class_count, h = spec.hidden_width;
  switch (spec.kind) {
    case LearnerKind::adaline:
    case LearnerKind::logistic2: f(0, d); break;
    case LearnerKind::softmax_regression: f(0, K * d); break;
    case LearnerKind::mlp:
      f(0, h * d);
      f(h * d + h, K * h);
      break;
  }
}

double reg_value(const LearnerSpec& spec, const Vec& w) {
  if (spec.lambda == 0.0) return 0.0;
  double s = 0.0;
  for_each_weight_block(spec, [&](int off, int len) { s += w.segment(off, len).squaredNorm(); });
  return 0.5 * spec.lambda * s;
}

void add_reg_grad(const LearnerSpec& spec, const Vec& w, Vec& g) {
  if (spec.lambda == 0.0) return;
  for_each_weight_block(
      spec, [&](int off, int len) { g.segment(off, len) += spec.lambda * w.segment(off, len); });
}

void add_reg_hvp(const LearnerSpec& spec, const Vec& z, Vec& out) {
  add_reg_grad(spec, z, out);
}

double data_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  return spec.kind == LearnerKind::mlp ? mlp_data_loss(spec, w, data)
                                       : linear_data_loss(spec, w, data);
}

Vec data_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  return spec.kind == LearnerKind::mlp ? mlp_data_grad(spec, w, data)
                                       : linear_data_grad(spec, w, data);
}

Vec data_hvp(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z) {
  return spec.kind == LearnerKind::mlp ? mlp_data_hvp(spec, w, data, z)
                                       : linear_data_hvp(spec, w, data, z);
}

Vec sample_xw_product(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z) {
  return spec.kind == LearnerKind::mlp ? mlp_sample_xw(spec, w, x, y, z)
                                       : linear_sample_xw(spec, w, x, y, z);
}

static void check_dataset(const LearnerSpec& spec, const Dataset& data) {
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  if (data.dim() != spec.input_dim)
    throw ShapeError("dataset dim " + std::to_string(data.dim()) + " != spec input_dim " +
                     std::to_string(spec.input_dim));
  if (data.num_classes != spec.class_count)
    throw ShapeError("dataset class count != spec class_count");
}

}  // namespace detail

Vec init_params(const LearnerSpec& spec, RngStream& rng) {
  spec.validate();
  Vec w = Vec::Zero(spec.param_count());
  int d = spec.input_dim, K = spec.class_count, h = spec.hidden_width;
  auto fill_uniform = [&rng, &w](int off, int len, double r) {
    for (int i = 0; i < len; ++i) w[off + i] = rng.uniform(-r, r);
  };
  switch (spec.kind) {
    case LearnerKind::adaline:
    case LearnerKind::logistic2: fill_uniform(0, d, 1.0 / std::sqrt(double(d))); break;
    case LearnerKind::softmax_regression:
      fill_uniform(0, K * d, 1.0 / std::sqrt(double(d)));
      break;
    case LearnerKind::mlp:
      fill_uniform(0, h * d, 1.0 / std::sqrt(double(d)));
      fill_uniform(h * d + h, K * h, 1.0 / std::sqrt(double(h)));
      break;
  }
  return w;
}

double train_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  detail::check_param(spec, w);
  detail::check_dataset(spec, data);
  return detail::data_loss(spec, w, data) + detail::reg_value(spec, w);
}

Vec grad_w(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  detail::check_param(spec, w);
  detail::check_dataset(spec, data);
  Vec g = detail::data_grad(spec, w, data);
  detail::add_reg_grad(spec, w, g);
  return g;
}

double val_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  detail::check_param(spec, w);
  detail::check_dataset(spec, data);
  return detail::data_loss(spec, w, data);
}

Vec val_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  detail::check_param(spec, w);
  detail::check_dataset(spec, data);
  return detail::data_grad(spec, w, data);
}

Vec grad_x(const LearnerSpec& spec, const Vec& w, const Vec& x, int y) {
  detail::check_param(spec, w);
  detail::check_sample(spec, x, y);
  return spec.kind == LearnerKind::mlp ? detail::mlp_grad_x(spec, w, x, y)
                                       : detail::linear_grad_x(spec, w, x, y);
}

Vec hvp_ww(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z,
           HvpMode mode) {
  detail::check_param(spec, w);
  detail::check_param(spec, z);
  detail::check_dataset(spec, data);
  if (mode == HvpMode::fd) {
    // Central difference of grad_w along z, the paper-style limit formula.
    double h = 1e-6 * (1.0 + w.cwiseAbs().maxCoeff());
    double zn = z.norm();
    if (zn == 0.0) return Vec::Zero(w.size());
    Vec dir = z / zn;
    Vec gp = grad_w(spec, Vec(w + h * dir), data);
    Vec gm = grad_w(spec, Vec(w - h * dir), data);
    return (gp - gm) * (zn / (2.0 * h));
  }
  Vec out = detail::data_hvp(spec, w, data, z);
  detail::add_reg_hvp(spec, z, out);
  return out;
}

Vec hvp_xw(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z, HvpMode mode,
           double weight) {
  detail::check_param(spec, w);
  detail::check_param(spec, z);
  detail::check_sample(spec, x, y);
  if (weight == 0.0) return Vec::Zero(x.size());
  if (mode == HvpMode::fd) {
    double h = 1e-6 * (1.0 + w.cwiseAbs().maxCoeff());
    double zn = z.norm();
    if (zn == 0.0) return Vec::Zero(x.size());
    Vec dir = z / zn;
    Vec gp = grad_x(spec, Vec(w + h * dir), x, y);
    Vec gm = grad_x(spec, Vec(w - h * dir), x, y);
    return (gp - gm) * (weight * zn / (2.0 * h));
  }
  return weight * detail::sample_xw_product(spec, w, x, y, z);
}

Prediction predict(const LearnerSpec& spec, const Vec& w, const Mat& X) {
  detail::check_param(spec, w);
  if (X.cols() != spec.input_dim) throw ShapeError("predict: feature dim mismatch");
  Prediction pred;
  pred.scores = spec.kind == LearnerKind::mlp ? detail::mlp_scores(spec, w, X)
                                              : detail::linear_scores(spec, w, X);
  pred.labels.resize(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < spec.class_count; ++k)
      if (pred.scores(i, k) > pred.scores(i, best)) best = k;  // ties keep the smaller index
    pred.labels[static_cast<std::size_t>(i)] = best;
  }
  return pred;
}

ParamBlocks unflatten(const LearnerSpec& spec, const Vec& w) {
  detail::check_param(spec, w);
  int d = spec.input_dim, K = spec.class_count, h = spec.hidden_width;
  ParamBlocks b;
  auto take_mat = [&w](int off, int rows, int cols) {
    return RowMat(Eigen::Map<const RowMat>(w.data() + off, rows, cols));
  };
  auto take_vec = [&w](int off, int len) { return Vec(w.segment(off, len)); };
  switch (spec.kind) {
    case LearnerKind::adaline:
    case LearnerKind::logistic2:
      b.weights.push_back(take_mat(0, 1, d));
      b.biases.push_back(take_vec(d, 1));
      break;
    case LearnerKind::softmax_regression:
      b.weights.push_back(take_mat(0, K, d));
      b.biases.push_back(take_vec(K * d, K));
      break;
    case LearnerKind::mlp:
      b.weights.push_back(take_mat(0, h, d));
      b.biases.push_back(take_vec(h * d, h));
      b.weights.push_back(take_mat(h * d + h, K, h));
      b.biases.push_back(take_vec(h * d + h + K * h, K));
      break;
  }
  return b;
}

Vec flatten(const LearnerSpec& spec, const ParamBlocks& blocks) {
  Vec w(spec.param_count());
  int off = 0;
  if (blocks.weights.size() != blocks.biases.size())
    throw ShapeError("flatten: layer count mismatch");
  for (std::size_t layer = 0; layer < blocks.weights.size(); ++layer) {
    const RowMat& W = blocks.weights[layer];
    Eigen::Map<RowMat>(w.data() + off, W.rows(), W.cols()) = W;
    off += static_cast<int>(W.size());
    const Vec& bias = blocks.biases[layer];
    w.segment(off, bias.size()) = bias;
    off += static_cast<int>(bias.size());
  }
  if (off != spec.param_count()) throw ShapeError("flatten: total size mismatch");
  return w;
}

}  // namespace poison
