#include <doctest.h>


#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "poison/error.hpp"
#include "poison/trainer.hpp"

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

LearnerSpec adaline_spec(int d, double lambda = 0.0) {
  LearnerSpec spec;
  spec.kind = LearnerKind::adaline;
  spec.input_dim = d;
  spec.class_count = 2;
  spec.lambda = lambda;
  return spec;
}

}  // namespace

TEST_CASE("gd_loop contracts the 1-d quadratic (w - 3)^2 / 2") {
  auto grad = [](const Vec& w) { return Vec(w.array() - 3.0); };
  Vec w0 = Vec::Zero(1);
  Vec w = gd_loop(grad, w0, 0.5, 4);
  CHECK(w[0] == doctest::Approx(2.8125).epsilon(1e-15));  // 3 (1 - 0.5^4)
}

TEST_CASE("T = 0 returns the initial parameters unchanged") {
  RngStream rng(1, 1);
  Dataset data = random_dataset(6, 3, 2, rng);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.init_seed = 5;
  LearnerSpec spec = adaline_spec(3);
  TrainResult r = gd_train(spec, data, cfg);
  CHECK(r.w == initial_params(spec, cfg));
}

TEST_CASE("training a separable adaline task reaches zero error") {
  // two clusters on a line, labels by side
  Dataset data;
  data.num_classes = 2;
  data.X.resize(8, 1);
  data.y.resize(8);
  for (int i = 0; i < 4; ++i) {
    data.X(i, 0) = 0.1 + 0.05 * i;
    data.y[i] = 0;
    data.X(4 + i, 0) = 0.8 + 0.05 * i;
    data.y[4 + i] = 1;
  }
  LearnerSpec spec = adaline_spec(1);
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.eta = 0.1;
  cfg.init_w = Vec::Zero(2);
  TrainResult r = gd_train(spec, data, cfg);
  CHECK(classification_error(spec, r.w, data) == 0.0);

  // direct least-squares solve separates too and long training approaches it
  Mat design(8, 2);
  design.col(0) = data.X.col(0);
  design.col(1).setOnes();
  Vec t(8);
  for (int i = 0; i < 8; ++i) t[i] = data.y[i] == 1 ? 1.0 : -1.0;
  Vec exact = (design.transpose() * design).ldlt().solve(design.transpose() * t);
  CHECK(classification_error(spec, exact, data) == 0.0);
  cfg.iterations = 20000;
  TrainResult longer = gd_train(spec, data, cfg);
  CHECK((longer.w - exact).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("identical config gives bitwise-identical parameters") {
  RngStream rng(2, 1);
  Dataset data = random_dataset(20, 5, 2, rng);
  LearnerSpec spec = adaline_spec(5, 0.01);
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.eta = 0.05;
  cfg.init_seed = 99;
  Vec w1 = gd_train(spec, data, cfg).w;
  Vec w2 = gd_train(spec, data, cfg).w;
  CHECK(w1 == w2);
}

TEST_CASE("loss decreases monotonically below the curvature limit") {
  RngStream rng(3, 1);
  int d = 4, n = 16;
  Dataset data = random_dataset(n, d, 2, rng);
  // adaline Hessian is constant; eta < 1/lambda_max keeps descent monotone
  Mat design(n, d + 1);
  design.leftCols(d) = data.X;
  design.col(d).setOnes();
  Mat hessian = 2.0 / n * design.transpose() * design;
  double lmax = hessian.eigenvalues().real().maxCoeff();
  LearnerSpec spec = adaline_spec(d);
  TrainConfig cfg;
  cfg.iterations = 100;
  cfg.eta = 0.9 / lmax;
  cfg.init_seed = 4;
  cfg.store_trajectory = true;
  TrainResult r = gd_train(spec, data, cfg);
  const auto& path = r.trajectory->checkpoints;
  for (std::size_t t = 1; t < path.size(); ++t)
    CHECK(train_loss(spec, path[t], data) <= train_loss(spec, path[t - 1], data) + 1e-12);
}

TEST_CASE("stored trajectory replays the update recurrence exactly") {
  RngStream rng(4, 1);
  Dataset data = random_dataset(10, 3, 2, rng);
  LearnerSpec spec = adaline_spec(3, 0.05);
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.eta = 0.07;
  cfg.init_seed = 8;
  cfg.store_trajectory = true;
  TrainResult r = gd_train(spec, data, cfg);
  REQUIRE(r.trajectory.has_value());
  const auto& path = r.trajectory->checkpoints;
  REQUIRE(path.size() == 26);
  CHECK(r.trajectory->dataset_fingerprint == data.fingerprint());
  for (int t = 0; t < 25; ++t) {
    Vec expected = path[t] - cfg.eta * grad_w(spec, path[t], data);
    CHECK((path[t + 1] - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(path.back() == r.w);
}

TEST_CASE("divergence raises an error naming the iteration") {
  RngStream rng(5, 1);
  Dataset data = random_dataset(10, 3, 2, rng);
  LearnerSpec spec = adaline_spec(3);
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.eta = 50.0;  // way over 2/L
  cfg.init_seed = 1;
  try {
    gd_train(spec, data, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration >= 0);
    CHECK(e.iteration < 500);
  }
}

TEST_CASE("trajectory memory budget rejects oversized storage") {
  RngStream rng(6, 1);
  Dataset data = random_dataset(5, 3, 2, rng);
  LearnerSpec spec = adaline_spec(3);
  TrainConfig cfg;
  cfg.iterations = 1000;
  cfg.store_trajectory = true;
  cfg.trajectory_budget_bytes = 1024;  // 1001 * 4 * 8 bytes won't fit
  CHECK_THROWS_WITH_AS(gd_train(spec, data, cfg),
                       doctest::Contains("reversal"), std::runtime_error);
}

TEST_CASE("classification_error: w = 0 softmax predicts class 0 everywhere") {
  Dataset data;
  data.num_classes = 2;
  data.X.resize(10, 2);
  data.y.resize(10);
  RngStream rng(7, 1);
  for (int i = 0; i < 10; ++i) {
    data.X(i, 0) = rng.next_double();
    data.X(i, 1) = rng.next_double();
    data.y[i] = i < 5 ? 0 : 1;  // balanced
  }
  LearnerSpec spec;
  spec.kind = LearnerKind::softmax_regression;
  spec.input_dim = 2;
  spec.class_count = 2;
  CHECK(classification_error(spec, Vec::Zero(spec.param_count()), data) == 0.5);
}

TEST_CASE("confusion conserves counts and matches classification_error") {
  RngStream rng(8, 1);
  Dataset data = random_dataset(40, 4, 3, rng);
  LearnerSpec spec;
  spec.kind = LearnerKind::softmax_regression;
  spec.input_dim = 4;
  spec.class_count = 3;
  Vec w(spec.param_count());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1, 1);
  Confusion c = confusion(spec, w, data);
  CHECK(c.counts.sum() == 40);
  // row sums equal class counts
  for (int k = 0; k < 3; ++k) {
    int count = 0;
    for (int i = 0; i < data.size(); ++i)
      if (data.y[i] == k) ++count;
    CHECK(c.counts.row(k).sum() == count);
  }
  // error equals 1 - trace fraction, and the weighted per-class mean
  double trace_frac = double(c.counts.trace()) / 40.0;
  CHECK(classification_error(spec, w, data) == doctest::Approx(1.0 - trace_frac));
  double weighted = 0.0;
  for (int k = 0; k < 3; ++k) weighted += c.counts.row(k).sum() * c.per_class_error[k];
  CHECK(classification_error(spec, w, data) == doctest::Approx(weighted / 40.0));
}

TEST_CASE("confusion flags classes with no samples") {
  Dataset data;
  data.num_classes = 3;
  data.X = Mat::Constant(4, 2, 0.5);
  data.y = {0, 0, 1, 1};  // class 2 absent
  LearnerSpec spec;
  spec.kind = LearnerKind::softmax_regression;
  spec.input_dim = 2;
  spec.class_count = 3;
  Confusion c = confusion(spec, Vec::Zero(spec.param_count()), data);
  CHECK(c.empty_class == std::vector<bool>{false, false, true});
  CHECK(c.per_class_error[2] == 0.0);
}

TEST_CASE("checkpoint save/load round-trips bitwise") {
  RngStream rng(9, 1);
  LearnerSpec spec = adaline_spec(6);
  Vec w(spec.param_count());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-3, 3);
  auto path = std::filesystem::temp_directory_path() / "poison_ckpt_test.bin";
  save_checkpoint(path, spec, w);
  CHECK(load_checkpoint(path, spec) == w);
  LearnerSpec other = adaline_spec(7);
  CHECK_THROWS_AS(load_checkpoint(path, other), ParseError);
  std::filesystem::remove(path);
}
