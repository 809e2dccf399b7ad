#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "poison/backgrad.hpp"
#include "poison/error.hpp"

using namespace poison;

namespace {

Dataset random_dataset(int n, int d, int num_classes, RngStream& rng) {
  Dataset data;
  data.num_classes = num_classes;
  data.X.resize(n, d);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.X(i, j) = rng.next_double();
    data.y[i] = static_cast<int>(rng.next_below(num_classes));
  }
  return data;
}

LearnerSpec make_spec(LearnerKind kind, int d, int K, double lambda = 0.0) {
  LearnerSpec spec;
  spec.kind = kind;
  spec.input_dim = d;
  spec.class_count = K;
  spec.lambda = lambda;
  return spec;
}

double rel_err(const Vec& got, const Vec& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-10);
}

// Max eigenvalue of the constant adaline Hessian on train + poison point.
double adaline_hessian_lmax(const Dataset& full, double lambda) {
  int n = full.size(), d = full.dim();
  Mat design(n, d + 1);
  design.leftCols(d) = full.X;
  design.col(d).setOnes();
  Mat h = 2.0 / n * design.transpose() * design;
  for (int j = 0; j < d; ++j) h(j, j) += lambda;
  return h.eigenvalues().real().maxCoeff();
}

}  // namespace

TEST_CASE("T = 0 training means the poison point has no influence") {
  RngStream rng(1, 1);
  Dataset train = random_dataset(10, 3, 2, rng);
  OuterObjective obj;
  obj.val = random_dataset(8, 3, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.init_seed = 3;
  Vec xc = Vec::Constant(3, 0.5);
  LearnerSpec spec = make_spec(LearnerKind::adaline, 3, 2);
  BackgradResult r = backgrad(spec, train, xc, 1, obj, cfg);
  CHECK(r.g_xc.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.g_w == val_grad(spec, r.w_final, obj.val));
}

TEST_CASE("stored-mode backgrad matches the bilevel finite-difference oracle") {
  RngStream rng(2, 1);
  for (LearnerKind kind : {LearnerKind::adaline, LearnerKind::logistic2}) {
    for (int trial = 0; trial < 4; ++trial) {
      int d = 5, n = 20;
      Dataset train = random_dataset(n, d, 2, rng);
      OuterObjective obj;
      obj.val = random_dataset(15, d, 2, rng);
      TrainConfig cfg;
      cfg.iterations = 50;
      cfg.eta = 0.1;
      cfg.init_seed = 100 + trial;
      Vec xc(d);
      for (int j = 0; j < d; ++j) xc[j] = rng.next_double();
      int yc = static_cast<int>(rng.next_below(2));
      LearnerSpec spec = make_spec(kind, d, 2);
      BackgradResult r = backgrad(spec, train, xc, yc, obj, cfg, BackgradMode::stored);
      Vec oracle = bilevel_fd_oracle(spec, train, xc, yc, obj, cfg);
      CHECK(rel_err(r.g_xc, oracle) < 1e-4);
    }
  }
}

TEST_CASE("the oracle also certifies the softmax and mlp paths") {
  RngStream rng(21, 1);
  for (LearnerKind kind : {LearnerKind::softmax_regression, LearnerKind::mlp}) {
    int d = 4, n = 12, K = 3;
    Dataset train = random_dataset(n, d, K, rng);
    OuterObjective obj;
    obj.val = random_dataset(10, d, K, rng);
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.eta = 0.05;
    cfg.init_seed = 5;
    Vec xc(d);
    for (int j = 0; j < d; ++j) xc[j] = rng.next_double();
    LearnerSpec spec = make_spec(kind, d, K);
    spec.hidden_width = 4;
    BackgradResult r = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored);
    Vec oracle = bilevel_fd_oracle(spec, train, xc, 1, obj, cfg);
    CHECK(rel_err(r.g_xc, oracle) < 1e-4);
  }
}

TEST_CASE("all three iterate-recovery modes agree on a well-conditioned quadratic") {
  // Reversal amplifies rounding along the stiffest eigendirection at rate
  // 1/(1 - eta * lambda) per step, and the one-step variant carries an
  // O(eta^2) truncation error wherever gradients are still large. Both fade
  // on a near-isotropic quadratic trained to convergence.
  RngStream rng(3, 1);
  int d = 4, n = 400;
  Dataset train;
  train.num_classes = 2;
  train.X.resize(n, d);
  train.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) train.X(i, j) = rng.normal();
    train.y[i] = static_cast<int>(rng.next_below(2));
  }
  Vec xc = Vec::Constant(d, 0.4);
  Dataset full = train.with_row(xc, 1);
  double lmax = adaline_hessian_lmax(full, 0.0);
  OuterObjective obj;
  obj.val = random_dataset(12, d, 2, rng);
  LearnerSpec spec = make_spec(LearnerKind::adaline, d, 2);

  TrainConfig cfg;
  cfg.eta = 0.25 / lmax;  // eta * lmax < 0.5
  cfg.init_seed = 11;

  cfg.iterations = 100;
  BackgradResult stored = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored);
  BackgradResult reversed = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::reversed);
  BackgradResult fixed = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::fixed_point);
  CHECK(rel_err(reversed.g_xc, stored.g_xc) < 1e-6);
  CHECK(rel_err(fixed.g_xc, stored.g_xc) < 1e-8);
  CHECK(stored.reversal_drift == 0.0);

  // Short horizon: the exact fixed-point reconstruction walks back to w_0
  // while the one-step variant visibly drifts.
  cfg.iterations = 40;
  BackgradResult fixed_short = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::fixed_point);
  BackgradResult reversed_short = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::reversed);
  CHECK(fixed_short.reversal_drift < 1e-8);
  CHECK(reversed_short.reversal_drift > 100.0 * fixed_short.reversal_drift);
}

TEST_CASE("one-step reversal drift shrinks as eta shrinks") {
  RngStream rng(4, 1);
  int d = 3, n = 12;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.3);
  OuterObjective obj;
  obj.val = random_dataset(8, d, 2, rng);
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2);
  double previous_drift = 1e9;
  for (double eta : {0.4, 0.2, 0.1, 0.05}) {
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.eta = eta;
    cfg.init_seed = 2;
    BackgradResult r = backgrad(spec, train, xc, 0, obj, cfg, BackgradMode::reversed);
    CHECK(r.reversal_drift < previous_drift);
    previous_drift = r.reversal_drift;
  }
}

TEST_CASE("fixed-point reversal refuses to run outside its contraction regime") {
  RngStream rng(5, 1);
  int d = 3, n = 10;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.2);
  Dataset full = train.with_row(xc, 1);
  double lmax = adaline_hessian_lmax(full, 0.0);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.eta = 1.5 / lmax;  // forward-stable (< 2/L) but the reverse map is no contraction
  cfg.init_seed = 7;
  OuterObjective obj;
  obj.val = random_dataset(8, d, 2, rng);
  LearnerSpec spec = make_spec(LearnerKind::adaline, d, 2);
  CHECK_THROWS_AS(backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::fixed_point),
                  ReversalError);
}

TEST_CASE("fd-mode HVPs track the exact path through the reverse sweep") {
  RngStream rng(6, 1);
  int d = 4, n = 12;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.6);
  OuterObjective obj;
  obj.val = random_dataset(9, d, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.eta = 0.1;
  cfg.init_seed = 13;
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2);
  BackgradOptions fd_opts;
  fd_opts.hvp_mode = HvpMode::fd;
  BackgradResult exact = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored);
  BackgradResult fd = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored, fd_opts);
  CHECK(rel_err(fd.g_xc, exact.g_xc) < 1e-5);
}

TEST_CASE("the direct validation term adds exactly the per-row input gradient") {
  RngStream rng(7, 1);
  int d = 3, n = 10;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.5);
  Dataset val = random_dataset(6, d, 2, rng);
  val.X.row(2) = xc.transpose();  // the poison point sits in the validation set
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.eta = 0.1;
  cfg.init_seed = 21;
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2);

  OuterObjective plain;
  plain.val = val;
  OuterObjective with_direct = plain;
  with_direct.xc_val_indices = {2};

  BackgradResult base = backgrad(spec, train, xc, 1, plain, cfg);
  BackgradResult direct = backgrad(spec, train, xc, 1, with_direct, cfg);
  Vec expected = base.g_xc + grad_x(spec, base.w_final, xc, val.y[2]) / val.size();
  CHECK((direct.g_xc - expected).cwiseAbs().maxCoeff() < 1e-14);

  OuterObjective bad = plain;
  bad.xc_val_indices = {99};
  CHECK_THROWS_AS(backgrad(spec, train, xc, 1, bad, cfg), std::invalid_argument);
}

TEST_CASE("weight-0 ablation: a point absent from the loss has zero gradient") {
  RngStream rng(8, 1);
  int d = 4, n = 12;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.7);
  OuterObjective obj;
  obj.val = random_dataset(9, d, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.eta = 0.1;
  cfg.init_seed = 17;
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2);
  BackgradOptions ablate;
  ablate.ablate_poison = true;
  BackgradResult r = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored, ablate);
  CHECK(r.g_xc.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("verbose trace emits one line per reverse step") {
  RngStream rng(9, 1);
  Dataset train = random_dataset(8, 3, 2, rng);
  OuterObjective obj;
  obj.val = random_dataset(6, 3, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 7;
  cfg.eta = 0.1;
  cfg.init_seed = 2;
  std::ostringstream trace;
  BackgradOptions opts;
  opts.trace = &trace;
  backgrad(make_spec(LearnerKind::adaline, 3, 2), train, Vec::Constant(3, 0.1), 0, obj, cfg,
           BackgradMode::stored, opts);
  int lines = 0;
  std::string line;
  std::istringstream in(trace.str());
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 7);
}

TEST_CASE("bilevel oracle refuses high-dimensional requests") {
  RngStream rng(10, 1);
  int d = 51;
  Dataset train = random_dataset(10, d, 2, rng);
  OuterObjective obj;
  obj.val = random_dataset(5, d, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 5;
  CHECK_THROWS_AS(bilevel_fd_oracle(make_spec(LearnerKind::adaline, d, 2), train,
                                    Vec::Constant(d, 0.5), 0, obj, cfg),
                  OracleError);
}

TEST_CASE("kkt_gradient matches a dense Hessian solve on adaline") {
  RngStream rng(11, 1);
  int d = 4, n = 14;
  double lambda = 0.05;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.45);
  int yc = 1;
  OuterObjective obj;
  obj.val = random_dataset(10, d, 2, rng);
  LearnerSpec spec = make_spec(LearnerKind::adaline, d, 2);

  Vec got = kkt_gradient(spec, train, xc, yc, obj, lambda);

  // dense route: assemble H and the mixed matrix explicitly
  LearnerSpec reg = make_spec(LearnerKind::adaline, d, 2, lambda);
  Dataset full = train.with_row(xc, yc);
  Vec w_hat = train_to_stationarity(reg, full);
  int p = d + 1;
  Mat design(full.size(), p);
  design.leftCols(d) = full.X;
  design.col(d).setOnes();
  Mat hessian = 2.0 / full.size() * design.transpose() * design;
  for (int j = 0; j < d; ++j) hessian(j, j) += lambda;
  Vec v = hessian.ldlt().solve(val_grad(reg, w_hat, obj.val));
  // mixed d x p matrix for the single poison sample, weight 1/(n+1)
  Mat mixed = Mat::Zero(d, p);
  double s = w_hat.head(d).dot(xc) + w_hat[d];
  double t = yc == 1 ? 1.0 : -1.0;
  mixed.leftCols(d) = 2.0 * (w_hat.head(d) * xc.transpose());
  for (int j = 0; j < d; ++j) mixed(j, j) += 2.0 * (s - t);
  mixed.col(d) = 2.0 * w_hat.head(d);
  Vec expected = -(mixed * v) / full.size();
  CHECK((got - expected).norm() < 1e-9 * std::max(1.0, expected.norm()));
}

TEST_CASE("kkt_gradient agrees with long-horizon backgrad on logistic2") {
  RngStream rng(12, 1);
  int d = 4, n = 16;
  double lambda = 1e-3;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.35);
  OuterObjective obj;
  obj.val = random_dataset(12, d, 2, rng);
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2, lambda);
  TrainConfig cfg;
  cfg.iterations = 2000;
  // step from the curvature bound p(1-p) <= 1/4, so 2000 steps converge
  cfg.eta = 1.5 / (0.25 * adaline_hessian_lmax(train.with_row(xc, 1), 0.0) / 2.0 + lambda);
  cfg.init_seed = 3;
  BackgradResult bg = backgrad(spec, train, xc, 1, obj, cfg, BackgradMode::stored);
  CHECK(grad_w(spec, bg.w_final, train.with_row(xc, 1)).cwiseAbs().maxCoeff() < 1e-6);
  Vec kkt = kkt_gradient(spec, train, xc, 1, obj, lambda);
  double cosine = bg.g_xc.dot(kkt) / (bg.g_xc.norm() * kkt.norm());
  CHECK(cosine > 0.99);
}

TEST_CASE("kkt_gradient reduces to the direct term when the validation loss is stationary") {
  RngStream rng(13, 1);
  int d = 3, n = 12;
  double lambda = 0.01;
  Dataset train = random_dataset(n, d, 2, rng);
  Vec xc = Vec::Constant(d, 0.25);
  LearnerSpec spec = make_spec(LearnerKind::logistic2, d, 2);

  // Build a validation set with exactly zero loss gradient at w_hat: one
  // duplicated feature vector carrying both labels, placed on the decision
  // boundary (score 0, p = 1/2).
  LearnerSpec reg = make_spec(LearnerKind::logistic2, d, 2, lambda);
  Vec w_hat = train_to_stationarity(reg, train.with_row(xc, 1));
  Vec ww = w_hat.head(d);
  Vec x_boundary = -w_hat[d] * ww / ww.squaredNorm();  // score(x) = 0 up to rounding
  Dataset val;
  val.num_classes = 2;
  val.X.resize(2, d);
  val.X.row(0) = x_boundary.transpose();
  val.X.row(1) = x_boundary.transpose();
  val.y = {0, 1};
  OuterObjective obj;
  obj.val = val;
  CHECK(val_grad(reg, w_hat, val).norm() < 1e-12);
  Vec g = kkt_gradient(spec, train, xc, 1, obj, lambda);
  CHECK(g.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("kkt_gradient rejects non-convex kinds and lambda <= 0") {
  RngStream rng(14, 1);
  Dataset train = random_dataset(8, 3, 2, rng);
  OuterObjective obj;
  obj.val = random_dataset(5, 3, 2, rng);
  LearnerSpec mlp = make_spec(LearnerKind::mlp, 3, 2);
  CHECK_THROWS_AS(kkt_gradient(mlp, train, Vec::Constant(3, 0.5), 0, obj, 1e-3),
                  std::invalid_argument);
  LearnerSpec lr = make_spec(LearnerKind::logistic2, 3, 2);
  CHECK_THROWS_AS(kkt_gradient(lr, train, Vec::Constant(3, 0.5), 0, obj, 0.0),
                  std::invalid_argument);
}

TEST_CASE("cg_solve handles SPD systems, zero rhs, and iteration caps") {
  Mat a(3, 3);
  a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  Vec b(3);
  b << 1, -2, 0.5;
  Vec x = cg_solve([&](const Vec& v) { return Vec(a * v); }, b, 1e-12, 100);
  CHECK((a * x - b).norm() <= 1e-10);
  CHECK(cg_solve([&](const Vec& v) { return Vec(a * v); }, Vec::Zero(3), 1e-12, 100).norm() ==
        0.0);
  CHECK_THROWS_AS(cg_solve([&](const Vec& v) { return Vec(a * v); }, b, 1e-14, 1),
                  IllConditionedError);
}
