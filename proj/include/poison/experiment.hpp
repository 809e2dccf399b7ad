#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "poison/attack.hpp"
#include "poison/config.hpp"
#include "poison/data_io.hpp"

namespace poison {

inline constexpr const char* kCodeVersion = "0.1.0";

// One measurement of one trained model. Rows are keyed uniquely by
// (seed, budget, target, surrogate, attack).
struct ResultRow {
  std::uint64_t seed = 0;
  int budget = 0;
  double budget_frac = 0.0;
  std::string target;
  std::string surrogate = "-";
  std::string attack = "none";  // backgrad | label-flip | none
  double test_error = 0.0;
  double val_objective = 0.0;  // loss on the attacker's validation set
  Vec per_class_error;
  bool flagged = false;         // divergence or time-budget truncation
  double wall_seconds = 0.0;    // timings.csv only; excluded from results.csv
};

// Poisoning curves: test error vs budget, with clean and label-flip
// references. Emits results.csv, timings.csv, manifest.txt, and per-seed
// poison-set CSVs into `out_dir`.
void run_curve(const Config& cfg, const std::filesystem::path& out_dir, int threads = 1);

// Surrogate x target cross-evaluation of poison sets (LK-SL transferability).
// Emits results.csv plus matrix.csv (mean test error pivot).
void run_transfer(const Config& cfg, const std::filesystem::path& out_dir, int threads = 1);

// Error-specific attack on a relabeled validation set; also emits per-seed
// clean/poisoned/delta confusion matrices.
void run_error_specific(const Config& cfg, const std::filesystem::path& out_dir, int threads = 1);

// Attacker-objective landscape over a 2-d feasible box plus one optimizer
// path per seed. Emits surface_seed*.csv and path_seed*.csv.
void run_surface(const Config& cfg, const std::filesystem::path& out_dir, int threads = 1);

// Shared helpers, exposed for tests and the acceptance suite.
namespace exp {

Dataset build_population(const Config& cfg);
LearnerSpec resolve_spec(const Config& cfg, const std::string& kind_name, int input_dim,
                         int num_classes);
TrainConfig resolve_train(const Config& cfg, LearnerKind kind, std::uint64_t seed);
int default_iterations(LearnerKind kind);
double default_eta(LearnerKind kind);

std::vector<ResultRow> read_result_rows(const std::filesystem::path& results_csv);

}  // namespace exp

}  // namespace poison
