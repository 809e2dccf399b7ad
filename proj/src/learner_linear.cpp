#include <cmath>

#include "poison/error.hpp"
#include "poison/learner.hpp"

// Analytic losses, gradients, and Hessian-vector products for the three
// convex kinds. Parameters map onto the flat vector as documented in
// learner.hpp; all per-dataset quantities are means over samples.

namespace poison::detail {

namespace {

struct LinView {
  Eigen::Map<const Vec> w;  // d
  double b;
};

LinView lin_view(const LearnerSpec& spec, const Vec& w) {
  return {Eigen::Map<const Vec>(w.data(), spec.input_dim), w[spec.input_dim]};
}

struct SoftmaxView {
  Eigen::Map<const RowMat> W;  // K x d
  Eigen::Map<const Vec> b;    // K
};

SoftmaxView softmax_view(const LearnerSpec& spec, const Vec& w) {
  int d = spec.input_dim, K = spec.class_count;
  return {Eigen::Map<const RowMat>(w.data(), K, d), Eigen::Map<const Vec>(w.data() + K * d, K)};
}

inline double adaline_target(int y) { return y == 1 ? 1.0 : -1.0; }

Mat softmax_rows(const Mat& logits) {
  Mat P(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Vec row = logits.row(i).transpose();
    P.row(i) = softmax(row).transpose();
  }
  return P;
}

Mat softmax_logits(const SoftmaxView& v, const Mat& X) {
  return (X * v.W.transpose()).rowwise() + v.b.transpose();
}

}  // namespace

double linear_data_loss(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  const int n = data.size();
  if (spec.kind == LearnerKind::adaline) {
    auto v = lin_view(spec, w);
    double acc = 0.0;
    Vec s = (data.X * v.w).array() + v.b;
    for (int i = 0; i < n; ++i) acc += mse_loss(s[i], adaline_target(data.y[i]));
    return acc / n;
  }
  if (spec.kind == LearnerKind::logistic2) {
    auto v = lin_view(spec, w);
    Vec s = (data.X * v.w).array() + v.b;
    double acc = 0.0;
    Vec probs(2);
    for (int i = 0; i < n; ++i) {
      double p = sigmoid(s[i]);
      probs << 1.0 - p, p;
      acc += log_loss(probs, data.y[i]);
    }
    return acc / n;
  }
  auto v = softmax_view(spec, w);
  Mat P = softmax_rows(softmax_logits(v, data.X));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += log_loss(P.row(i).transpose(), data.y[i]);
  return acc / n;
}

Vec linear_data_grad(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  const int n = data.size();
  const int d = spec.input_dim;
  Vec g = Vec::Zero(w.size());
  if (spec.kind == LearnerKind::adaline || spec.kind == LearnerKind::logistic2) {
    auto v = lin_view(spec, w);
    Vec s = (data.X * v.w).array() + v.b;
    Vec r(n);
    for (int i = 0; i < n; ++i) {
      r[i] = spec.kind == LearnerKind::adaline
                 ? 2.0 * (s[i] - adaline_target(data.y[i]))
                 : sigmoid(s[i]) - double(data.y[i]);
    }
    g.head(d) = data.X.transpose() * r / n;
    g[d] = r.mean();
    return g;
  }
  auto v = softmax_view(spec, w);
  const int K = spec.class_count;
  Mat R = softmax_rows(softmax_logits(v, data.X));
  for (int i = 0; i < n; ++i) R(i, data.y[i]) -= 1.0;
  Eigen::Map<RowMat>(g.data(), K, d) = R.transpose() * data.X / n;
  g.segment(K * d, K) = R.colwise().mean().transpose();
  return g;
}

Vec linear_grad_x(const LearnerSpec& spec, const Vec& w, const Vec& x, int y) {
  if (spec.kind == LearnerKind::adaline) {
    auto v = lin_view(spec, w);
    double s = v.w.dot(x) + v.b;
    return 2.0 * (s - adaline_target(y)) * v.w;
  }
  if (spec.kind == LearnerKind::logistic2) {
    auto v = lin_view(spec, w);
    double p = sigmoid(v.w.dot(x) + v.b);
    return (p - double(y)) * v.w;
  }
  auto v = softmax_view(spec, w);
  Vec p = softmax(Vec(v.W * x + v.b));
  p[y] -= 1.0;
  return v.W.transpose() * p;
}

Vec linear_data_hvp(const LearnerSpec& spec, const Vec& w, const Dataset& data, const Vec& z) {
  const int n = data.size();
  const int d = spec.input_dim;
  Vec out = Vec::Zero(w.size());
  if (spec.kind == LearnerKind::adaline || spec.kind == LearnerKind::logistic2) {
    auto zv = lin_view(spec, z);
    Vec u = (data.X * zv.w).array() + zv.b;
    Vec c(n);
    if (spec.kind == LearnerKind::adaline) {
      c = 2.0 * u;
    } else {
      auto v = lin_view(spec, w);
      Vec s = (data.X * v.w).array() + v.b;
      for (int i = 0; i < n; ++i) {
        double p = sigmoid(s[i]);
        c[i] = p * (1.0 - p) * u[i];
      }
    }
    out.head(d) = data.X.transpose() * c / n;
    out[d] = c.mean();
    return out;
  }
  const int K = spec.class_count;
  auto v = softmax_view(spec, w);
  auto zv = softmax_view(spec, z);
  Mat P = softmax_rows(softmax_logits(v, data.X));
  Mat U = softmax_logits(zv, data.X);
  Mat Q(n, K);
  for (int i = 0; i < n; ++i) {
    double pu = P.row(i).dot(U.row(i));
    Q.row(i) = P.row(i).cwiseProduct((U.row(i).array() - pu).matrix());
  }
  Eigen::Map<RowMat>(out.data(), K, d) = Q.transpose() * data.X / n;
  out.segment(K * d, K) = Q.colwise().mean().transpose();
  return out;
}

Vec linear_sample_xw(const LearnerSpec& spec, const Vec& w, const Vec& x, int y, const Vec& z) {
  if (spec.kind == LearnerKind::adaline) {
    auto v = lin_view(spec, w);
    auto zv = lin_view(spec, z);
    double s = v.w.dot(x) + v.b;
    double u = zv.w.dot(x) + zv.b;
    return 2.0 * (u * v.w + (s - adaline_target(y)) * zv.w);
  }
  if (spec.kind == LearnerKind::logistic2) {
    auto v = lin_view(spec, w);
    auto zv = lin_view(spec, z);
    double p = sigmoid(v.w.dot(x) + v.b);
    double u = zv.w.dot(x) + zv.b;
    return p * (1.0 - p) * u * v.w + (p - double(y)) * zv.w;
  }
  auto v = softmax_view(spec, w);
  auto zv = softmax_view(spec, z);
  Vec p = softmax(Vec(v.W * x + v.b));
  Vec u = zv.W * x + zv.b;
  Vec q = p.cwiseProduct((u.array() - p.dot(u)).matrix());
  Vec r = p;
  r[y] -= 1.0;
  return zv.W.transpose() * r + v.W.transpose() * q;
}

Mat linear_scores(const LearnerSpec& spec, const Vec& w, const Mat& X) {
  const Eigen::Index n = X.rows();
  if (spec.kind == LearnerKind::adaline) {
    auto v = lin_view(spec, w);
    Vec s = (X * v.w).array() + v.b;
    Mat scores(n, 2);
    scores.col(0) = -s;
    scores.col(1) = s;
    return scores;
  }
  if (spec.kind == LearnerKind::logistic2) {
    auto v = lin_view(spec, w);
    Vec s = (X * v.w).array() + v.b;
    Mat scores(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = sigmoid(s[i]);
      scores(i, 0) = 1.0 - p;
      scores(i, 1) = p;
    }
    return scores;
  }
  auto v = softmax_view(spec, w);
  return softmax_rows(softmax_logits(v, X));
}

}  // namespace poison::detail
