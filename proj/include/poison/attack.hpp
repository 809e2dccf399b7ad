#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "poison/backgrad.hpp"

namespace poison {

// Box constraints on poisoning features, enforced by projection.
struct FeasibleSet {
  Vec lo;
  Vec hi;
  bool round_binary = false;  // optional post-hoc {0,1} rounding report

  static FeasibleSet unit_box(int dim);
  void validate() const;
};

// Coordinate-wise clamp onto the box.
Vec project(const Vec& x, const FeasibleSet& phi);

enum class ObjectiveKind { error_generic, error_specific };
enum class Knowledge { perfect, surrogate_learner };
enum class StepRule { fixed_step, line_search };
enum class InitStrategy { clone_flip, clone_flip_restricted };

// One attack campaign: what the attacker optimizes, what she knows, and how
// far she may push the points.
struct AttackScenario {
  ObjectiveKind objective = ObjectiveKind::error_generic;
  Dataset val;  // relabeled copy D_val' for error-specific attacks

  Knowledge knowledge = Knowledge::perfect;
  std::optional<LearnerSpec> surrogate;  // required for surrogate_learner

  int budget = 1;
  InitStrategy init = InitStrategy::clone_flip;
  std::pair<int, int> restricted_pair{-1, -1};  // class pair for the restricted init

  double eps_stop = 1e-5;
  int max_iters = 100;
  StepRule step_rule = StepRule::fixed_step;
  double eta_attack = 0.2;
  int max_halvings = 8;
  FeasibleSet phi;

  BackgradMode mode = BackgradMode::stored;

  double sign() const { return objective == ObjectiveKind::error_generic ? +1.0 : -1.0; }
  // The learner the attacker differentiates through.
  const LearnerSpec& craft_spec(const LearnerSpec& target) const;
};

struct PoisonPoint {
  Vec x;
  int y = 0;                  // fixed after initialization
  std::vector<double> trace;  // attacker objective A per accepted iteration
  std::vector<Vec> path;      // accepted positions, aligned with trace
  bool stalled = false;
};

struct PoisonSet {
  std::vector<PoisonPoint> points;

  int size() const { return static_cast<int>(points.size()); }
  // Training set with every poisoning point spliced in (optionally skipping one).
  Dataset splice_into(const Dataset& train, int skip_index = -1) const;
};

// Clone-and-flip initialization. Binary sources flip the label; multiclass
// sources draw a uniformly random wrong label. The restricted variant clones
// only from the given class pair and swaps within it.
PoisonSet init_poison(InitStrategy strategy, const Dataset& source, int m, RngStream& rng,
                      std::pair<int, int> restricted_pair = {-1, -1});

// Non-optimized baseline: m validation points sampled without replacement,
// labels flipped uniformly among the wrong classes.
PoisonSet label_flip_baseline(const Dataset& pool, int m, RngStream& rng);

// Attacker objective A(x_c) = sign * L(val, w_T) after a fresh truncated
// training on train + {(x_c, y_c)}. Deterministic in x_c given cfg.
double attack_objective(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                        const Dataset& val, double sign, const TrainConfig& cfg);

// Iterated projected ascent on one poisoning point (others already spliced
// into `train`). Stops on the epsilon criterion, the iteration cap, a
// vanishing gradient, or an exhausted step search.
PoisonPoint optimize_point(const LearnerSpec& spec, const Dataset& train, PoisonPoint point,
                           const AttackScenario& scenario, const TrainConfig& cfg);

// Coordinate passes over the whole set: each point optimized with the others
// held fixed in the training set.
PoisonSet optimize_set(const LearnerSpec& spec, const Dataset& train, PoisonSet set,
                       const AttackScenario& scenario, const TrainConfig& cfg, int passes = 2);

// CSV serialization: feature_0..feature_{d-1},label plus a sidecar trace file
// (point_id,iteration,objective).
void save_poison_csv(const std::filesystem::path& points_path,
                     const std::filesystem::path& trace_path, const PoisonSet& set);

}  // namespace poison
