#include <cmath>

#include "poison/error.hpp"
#include "poison/learner.hpp"

// One-hidden-layer tanh network with softmax output and log-loss. The exact
// Hessian-vector products run a tangent (R-) pass through the forward and
// backward computations, so each product costs O(p) like a gradient.

namespace poison::detail {

namespace {

struct MlpView {
  Eigen::Map<const RowMat> W1;  // h x d
  Eigen::Map<const Vec> b1;     // h
  Eigen::Map<const RowMat> W2;  // K x h
  Eigen::Map<const Vec> b2;     // K
};

MlpView mlp_view(const LearnerSpec& spec, const Vec& w) {
  int d = spec.input_dim, K = spec.class_count, h = spec.hidden_width;
  const double* base = w.data();
  return {Eigen::Map<const RowMat>(base, h, d), Eigen::Map<const Vec>(base + h * d, h),
          Eigen::Map<const RowMat>(base + h * d + h, K, h),
          Eigen::Map<const Vec>(base + h * d + h + K * h, K)};
}

struct MlpGradView {
  Eigen::Map<RowMat> W1;
  Eigen::Map<Vec> b1;
  Eigen::Map<RowMat> W2;
  Eigen::Map<Vec> b2;
};

MlpGradView mlp_grad_view(const LearnerSpec& spec, Vec& g) {
  int d = spec.input_dim, K = spec.class_count, h = spec.hidden_width;
  double* base = g.data();
  return {Eigen::Map<RowMat>(base, h, d), Eigen::Map<Vec>(base + h * d, h),
          Eigen::Map<RowMat>(base + h * d + h, K, h),
          Eigen::Map<Vec>(base + h * d + h + K * h, K)};
}

struct Forward {
  Vec z1;  // tanh activations
  Vec p;   // class probabilities
};

Forward forward(const MlpView& v, const Vec& x) {
  Forward f;
  f.z1 = (v.W1 * x + v.b1).array().tanh();
  f.p = softmax(Vec(v.W2 * f.z1 + v.b2));
  return f;
}

}  // namespace

double mlp_data_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  auto v = mlp_view(spec, w);
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    Forward f = forward(v, data.X.row(i).transpose());
    acc += log_loss(f.p, data.y[i]);
  }
  return acc / data.size();
}

Vec mlp_data_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  auto v = mlp_view(spec, w);
  Vec g = Vec::Zero(w.size());
  auto gv = mlp_grad_view(spec, g);
  for (int i = 0; i < data.size(); ++i) {
    Vec x = data.X.row(i).transpose();
    Forward f = forward(v, x);
    Vec ds = f.p;
    ds[data.y[i]] -= 1.0;
    Vec da = (v.W2.transpose() * ds).cwiseProduct(Vec(1.0 - f.z1.array().square()));
    gv.W2 += ds * f.z1.transpose();
    gv.b2 += ds;
    gv.W1 += da * x.transpose();
    gv.b1 += da;
  }
  g /= data.size();
  return g;
}

Vec mlp_grad_x(const LearnerSpec& spec, const Vec& w, const Vec& x, int y) {
  auto v = mlp_view(spec, w);
  Forward f = forward(v, x);
  Vec ds = f.p;
  ds[y] -= 1.0;
  Vec da = (v.W2.transpose() * ds).cwiseProduct(Vec(1.0 - f.z1.array().square()));
  return v.W1.transpose() * da;
}

namespace {

// Shared tangent pass. With tangent `t` on the parameters, accumulates
// R{grad_w} into `out_w` and writes R{grad_x} to `out_x` when non-null.
void mlp_r_pass(const MlpView& v, const MlpView& t, const Vec& x, int y, MlpGradView& out_w,
                Vec* out_x) {
  Forward f = forward(v, x);
  Vec one_minus_sq = 1.0 - f.z1.array().square();

  Vec ds = f.p;
  ds[y] -= 1.0;
  Vec dz1 = v.W2.transpose() * ds;
  Vec da = dz1.cwiseProduct(one_minus_sq);

  // R-forward
  Vec r_a = t.W1 * x + t.b1;
  Vec r_z1 = one_minus_sq.cwiseProduct(r_a);
  Vec r_s = t.W2 * f.z1 + v.W2 * r_z1 + t.b2;
  Vec r_p = f.p.cwiseProduct(Vec(r_s.array() - f.p.dot(r_s)));

  // R-backward
  const Vec& r_ds = r_p;
  Vec r_dz1 = t.W2.transpose() * ds + v.W2.transpose() * r_ds;
  Vec r_da =
      r_dz1.cwiseProduct(one_minus_sq) - dz1.cwiseProduct(Vec(2.0 * f.z1.array() * r_z1.array()));

  out_w.W2 += r_ds * f.z1.transpose() + ds * r_z1.transpose();
  out_w.b2 += r_ds;
  out_w.W1 += r_da * x.transpose();
  out_w.b1 += r_da;
  if (out_x) *out_x = t.W1.transpose() * da + v.W1.transpose() * r_da;
}

}  // namespace

Vec mlp_data_hvp(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z) {
  auto v = mlp_view(spec, w);
  auto t = mlp_view(spec, z);
  Vec out = Vec::Zero(w.size());
  auto ov = mlp_grad_view(spec, out);
  for (int i = 0; i < data.size(); ++i) {
    Vec x = data.X.row(i).transpose();
    mlp_r_pass(v, t, x, data.y[i], ov, nullptr);
  }
  out /= data.size();
  return out;
}

Vec mlp_sample_xw(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z) {
  auto v = mlp_view(spec, w);
  auto t = mlp_view(spec, z);
  Vec scratch = Vec::Zero(w.size());
  auto sv = mlp_grad_view(spec, scratch);
  Vec gx(x.size());
  mlp_r_pass(v, t, x, y, sv, &gx);
  return gx;
}

Mat mlp_scores(const LearnerSpec& spec, const Vec& w, const Mat& X) {
  auto v = mlp_view(spec, w);
  Mat scores(X.rows(), spec.class_count);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Forward f = forward(v, X.row(i).transpose());
    scores.row(i) = f.p.transpose();
  }
  return scores;
}

}  // namespace poison::detail
