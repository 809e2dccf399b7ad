#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "poison/learner.hpp"

namespace poison {

// Fixed-step full-batch gradient descent configuration. Every training is a
// pure function of (spec, data, config): the initial point comes from an
// explicit vector or a seeded parameter init, never from ambient state.
struct TrainConfig {
  int iterations = 100;  // T
  double eta = 0.1;
  bool store_trajectory = false;
  std::uint64_t init_seed = 0;
  std::uint64_t init_stream = 1;  // RngStream id used for parameter init
  std::optional<Vec> init_w;      // takes precedence over the seed when set

  double divergence_norm = 1e8;
  std::size_t trajectory_budget_bytes = std::size_t(512) * 1024 * 1024;
};

// Stored parameter path w_0..w_T plus the metadata a backward pass needs.
struct Trajectory {
  std::vector<Vec> checkpoints;
  double eta = 0.0;
  int iterations = 0;
  std::uint64_t dataset_fingerprint = 0;
};

struct TrainResult {
  Vec w;  // w_T
  std::optional<Trajectory> trajectory;
};

// Resolves w_0 from the config (explicit vector wins over seeded init).
Vec initial_params(const LearnerSpec& spec, const TrainConfig& cfg);

// Runs exactly cfg.iterations updates w <- w - eta * grad. Throws
// DivergenceError (with the iteration index) if the gradient goes non-finite
// or ||w||_inf exceeds the divergence bound.
TrainResult gd_train(const LearnerSpec& spec, const Dataset& data, const TrainConfig& cfg);

// Generic fixed-step descent loop on an arbitrary gradient field. gd_train is
// this loop applied to grad_w; tests drive it with closed-form gradients.
Vec gd_loop(const std::function<Vec(const Vec&)>& grad, Vec w, double eta, int iterations,
            double divergence_norm = 1e8, std::vector<Vec>* trajectory = nullptr);

double classification_error(const LearnerSpec& spec, const Vec& w, const Dataset& data);

struct Confusion {
  Eigen::MatrixXi counts;            // (true class) x (predicted class)
  Vec per_class_error;               // 1 - diag/rowsum; 0 for empty classes
  std::vector<bool> empty_class;     // rows with zero samples
};

Confusion confusion(const LearnerSpec& spec, const Vec& w, const Dataset& data);

// Binary checkpoint: 16-byte header (magic "BGCK", kind, d, K as little-endian
// u32) followed by the flat parameter vector as little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const LearnerSpec& spec, const Vec& w);
Vec load_checkpoint(const std::filesystem::path& path, const LearnerSpec& spec);

}  // namespace poison
