#include "poison/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "poison/error.hpp"

namespace poison {

namespace {

// Fixed per-purpose RNG stream ids; a row is replayable from (seed, stream).
constexpr std::uint64_t kStreamPoisonInit = 40;
constexpr std::uint64_t kStreamLabelFlipBase = 41;  // + budget index
constexpr std::uint64_t kStreamSurfaceStart = 90;

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct StopWatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void parallel_tasks(int n_tasks, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, n_tasks));
  if (threads == 1) {
    for (int i = 0; i < n_tasks; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int k = 0; k < threads; ++k) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Config resolution
// ---------------------------------------------------------------------------

struct CommonSetup {
  Dataset population;
  SplitPlan plan;  // per-rep seed filled in later
  int reps = 1;
  std::uint64_t base_seed = 1000;
  double row_time_budget_s = 600.0;
};

CommonSetup resolve_common(const Config& cfg) {
  CommonSetup s;
  s.population = exp::build_population(cfg);
  s.plan.n_train = cfg.get_int("split.n_train", 100);
  s.plan.n_val = cfg.get_int("split.n_val", 400);
  s.plan.n_test = cfg.get_int("split.n_test",
                              s.population.size() - s.plan.n_train - s.plan.n_val);
  s.reps = cfg.get_int("run.seeds", 1);
  s.base_seed = static_cast<std::uint64_t>(cfg.get_int("run.base_seed", 1000));
  s.row_time_budget_s = cfg.get_double("run.row_time_budget_s", 600.0);
  if (s.reps < 1) throw ConfigError("run.seeds must be >= 1");
  if (s.plan.n_test < 1) throw ConfigError("split leaves no test samples");
  return s;
}

struct ScenarioSetup {
  ObjectiveKind objective = ObjectiveKind::error_generic;
  Knowledge knowledge = Knowledge::perfect;
  std::string surrogate_kind;  // lk-sl only
  std::vector<int> budgets;    // strictly increasing
  int passes = 2;
  double eps_stop = 1e-5;
  int max_iters = 100;
  StepRule step_rule = StepRule::line_search;
  double eta_attack = 0.2;
  BackgradMode mode = BackgradMode::stored;
  FeasibleSet phi;
  InitStrategy init = InitStrategy::clone_flip;
  std::pair<int, int> restricted_pair{-1, -1};
  RelabelMap relabel_map;  // error-specific only
};

StepRule step_rule_from(const std::string& name) {
  if (name == "fixed") return StepRule::fixed_step;
  if (name == "line-search") return StepRule::line_search;
  throw ConfigError("attack.step_rule must be fixed or line-search, got " + name);
}

BackgradMode mode_from(const std::string& name) {
  if (name == "stored") return BackgradMode::stored;
  if (name == "reversed") return BackgradMode::reversed;
  if (name == "fixed-point") return BackgradMode::fixed_point;
  throw ConfigError("attack.mode must be stored, reversed or fixed-point, got " + name);
}

ScenarioSetup resolve_scenario(const Config& cfg, int input_dim) {
  ScenarioSetup s;
  std::string obj = cfg.get_string("attack.objective", "error-generic");
  if (obj == "error-generic") {
    s.objective = ObjectiveKind::error_generic;
  } else if (obj == "error-specific") {
    s.objective = ObjectiveKind::error_specific;
  } else {
    throw ConfigError("attack.objective must be error-generic or error-specific");
  }
  std::string knowledge = cfg.get_string("attack.knowledge", "pk");
  if (knowledge == "pk") {
    s.knowledge = Knowledge::perfect;
  } else if (knowledge == "lk-sl") {
    s.knowledge = Knowledge::surrogate_learner;
    s.surrogate_kind = cfg.require_string("surrogate.kind");
  } else {
    throw ConfigError("attack.knowledge must be pk or lk-sl");
  }
  s.budgets = cfg.get_int_list("attack.budgets", {cfg.get_int("attack.budget", 1)});
  for (std::size_t i = 0; i < s.budgets.size(); ++i) {
    if (s.budgets[i] < 0 || (i > 0 && s.budgets[i] <= s.budgets[i - 1]))
      throw ConfigError("attack.budgets must be a strictly increasing non-negative schedule");
  }
  s.passes = cfg.get_int("attack.passes", 2);
  s.eps_stop = cfg.get_double("attack.epsilon", 1e-5);
  s.max_iters = cfg.get_int("attack.max_iters", 100);
  s.step_rule = step_rule_from(cfg.get_string("attack.step_rule", "line-search"));
  s.eta_attack = cfg.get_double("attack.eta", 0.2);
  s.mode = mode_from(cfg.get_string("attack.mode", "stored"));
  double lo = cfg.get_double("phi.lo", 0.0);
  double hi = cfg.get_double("phi.hi", 1.0);
  s.phi.lo = Vec::Constant(input_dim, lo);
  s.phi.hi = Vec::Constant(input_dim, hi);
  std::string init = cfg.get_string("attack.init", "clone-flip");
  if (init == "clone-flip") {
    s.init = InitStrategy::clone_flip;
  } else if (init == "clone-flip-restricted") {
    s.init = InitStrategy::clone_flip_restricted;
  } else {
    throw ConfigError("attack.init must be clone-flip or clone-flip-restricted");
  }
  auto relabel_pairs = cfg.get_pair_list("attack.relabel");
  s.relabel_map.pairs = relabel_pairs;
  s.relabel_map.keep_unlisted = cfg.get_bool("attack.relabel_keep", false);
  auto pair_list = cfg.get_int_list("attack.restricted_pair");
  if (pair_list.size() == 2) {
    s.restricted_pair = {pair_list[0], pair_list[1]};
  } else if (!relabel_pairs.empty()) {
    s.restricted_pair = relabel_pairs.front();
  }
  if (s.objective == ObjectiveKind::error_specific && relabel_pairs.empty())
    throw ConfigError("error-specific attacks need attack.relabel (from:to pairs)");
  return s;
}

AttackScenario make_scenario(const ScenarioSetup& s, const Dataset& val, int budget) {
  AttackScenario sc;
  sc.objective = s.objective;
  sc.val = s.objective == ObjectiveKind::error_specific ? relabel(val, s.relabel_map) : val;
  sc.knowledge = s.knowledge;
  sc.budget = budget;
  sc.init = s.init;
  sc.restricted_pair = s.restricted_pair;
  sc.eps_stop = s.eps_stop;
  sc.max_iters = s.max_iters;
  sc.step_rule = s.step_rule;
  sc.eta_attack = s.eta_attack;
  sc.phi = s.phi;
  sc.mode = s.mode;
  return sc;
}

// ---------------------------------------------------------------------------
// Row bookkeeping and file output
// ---------------------------------------------------------------------------

ResultRow eval_model(const LearnerSpec& spec, const Vec& w, const Dataset& test,
                     const Dataset& attacker_val) {
  ResultRow row;
  row.target = to_string(spec.kind);
  row.test_error = classification_error(spec, w, test);
  row.val_objective = val_loss(spec, w, attacker_val);
  row.per_class_error = confusion(spec, w, test).per_class_error;
  return row;
}

ResultRow flagged_row(const LearnerSpec& spec, int num_classes) {
  ResultRow row;
  row.target = to_string(spec.kind);
  row.test_error = std::nan("");
  row.val_objective = std::nan("");
  row.per_class_error = Vec::Constant(num_classes, std::nan(""));
  row.flagged = true;
  return row;
}

bool row_order(const ResultRow& a, const ResultRow& b) {
  auto key = [](const ResultRow& r) {
    return std::make_tuple(r.seed, r.target, r.surrogate, r.attack, r.budget);
  };
  return key(a) < key(b);
}

void write_results(const std::filesystem::path& out_dir, std::vector<ResultRow> rows,
                   int num_classes) {
  std::sort(rows.begin(), rows.end(), row_order);
  std::ofstream os(out_dir / "results.csv");
  if (!os) throw std::runtime_error("cannot write results.csv");
  os << "seed,budget,budget_frac,target,surrogate,attack,test_error,val_objective";
  for (int k = 0; k < num_classes; ++k) os << ",class_err_" << k;
  os << ",flagged\n";
  for (const ResultRow& r : rows) {
    os << r.seed << ',' << r.budget << ',' << fmt9(r.budget_frac) << ',' << r.target << ','
       << r.surrogate << ',' << r.attack << ',' << fmt9(r.test_error) << ','
       << fmt9(r.val_objective);
    for (int k = 0; k < num_classes; ++k)
      os << ',' << (k < r.per_class_error.size() ? fmt9(r.per_class_error[k]) : "nan");
    os << ',' << (r.flagged ? 1 : 0) << '\n';
  }
  // Wall clock goes to a sidecar so results.csv stays bit-reproducible.
  std::ofstream ts(out_dir / "timings.csv");
  ts << "seed,budget,target,surrogate,attack,wall_seconds\n";
  for (const ResultRow& r : rows)
    ts << r.seed << ',' << r.budget << ',' << r.target << ',' << r.surrogate << ',' << r.attack
       << ',' << fmt9(r.wall_seconds) << '\n';
}

void write_manifest(const std::filesystem::path& out_dir, const Config& cfg,
                    const std::string& command, const CommonSetup& setup) {
  std::ofstream os(out_dir / "manifest.txt");
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(cfg.content_hash()));
  os << "artifact=poisoncraft\n"
     << "code_version=" << kCodeVersion << "\n"
     << "command=" << command << "\n"
     << "config_hash=" << hash << "\n"
     << "base_seed=" << setup.base_seed << "\n"
     << "seeds=" << setup.reps << "\n"
     << "stream.split=30\n"
     << "stream.param_init=1\n"
     << "stream.poison_init=" << kStreamPoisonInit << "\n"
     << "stream.label_flip=" << kStreamLabelFlipBase << "+budget_index\n"
     << "stream.surface_start=" << kStreamSurfaceStart << "\n";
  for (int rep = 0; rep < setup.reps; ++rep)
    os << "rep=" << rep << " seed=" << setup.base_seed + rep << "\n";
}

void write_confusion_csv(const std::filesystem::path& path, const Eigen::MatrixXi& counts) {
  std::ofstream os(path);
  os << "true_class";
  for (int j = 0; j < counts.cols(); ++j) os << ",pred_" << j;
  os << '\n';
  for (int i = 0; i < counts.rows(); ++i) {
    os << i;
    for (int j = 0; j < counts.cols(); ++j) os << ',' << counts(i, j);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Crafting helpers
// ---------------------------------------------------------------------------

struct Deadline {
  StopWatch watch;
  double budget_s = 600.0;
  bool exceeded() const { return watch.seconds() > budget_s; }
};

// Incrementally grows the poison set to each budget checkpoint: new points are
// optimized one at a time against the set crafted so far, then `passes`
// coordinate passes re-optimize everything. Returns the set at each budget.
std::vector<PoisonSet> craft_schedule(const LearnerSpec& craft, const Dataset& train,
                                      const Dataset& val, const ScenarioSetup& setup,
                                      const TrainConfig& cfg, std::uint64_t seed,
                                      Deadline& deadline, bool& truncated) {
  std::vector<PoisonSet> out;
  PoisonSet set;
  RngStream rng(seed, kStreamPoisonInit);
  for (int budget : setup.budgets) {
    AttackScenario scenario = make_scenario(setup, val, budget);
    while (set.size() < budget) {
      PoisonSet fresh = init_poison(scenario.init, train, 1, rng, scenario.restricted_pair);
      PoisonPoint p = std::move(fresh.points[0]);
      if (!truncated && !deadline.exceeded()) {
        p = optimize_point(craft, set.splice_into(train), std::move(p), scenario, cfg);
      } else {
        truncated = true;
      }
      set.points.push_back(std::move(p));
    }
    if (budget > 0) {
      if (!truncated && !deadline.exceeded()) {
        set = optimize_set(craft, train, std::move(set), scenario, cfg, setup.passes);
      } else {
        truncated = true;
      }
    }
    out.push_back(set);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Shared setup helpers
// ---------------------------------------------------------------------------

namespace exp {

Dataset build_population(const Config& cfg) {
  std::string source = cfg.require_string("data.source");
  std::uint64_t data_seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 7));
  Dataset d;
  if (source == "synth-spambase") {
    d = synth_binary_task(cfg.get_int("data.n", 1500), cfg.get_int("data.d", 54), data_seed,
                          cfg.get_double("data.separation", 0.35));
  } else if (source == "synth-digits") {
    d = synth_digit_task(cfg.get_int("data.n", 4000), data_seed,
                         cfg.get_double("data.noise", 0.25));
  } else if (source == "synth-3class") {
    d = synth_3class(cfg.get_int("data.n_per_class", 200), data_seed);
  } else if (source == "csv") {
    DelimitedSchema schema;
    schema.label_column = cfg.get_int("data.label_column", -1);
    std::string delim = cfg.get_string("data.delimiter", ",");
    if (delim.size() != 1) throw ConfigError("data.delimiter must be a single character");
    schema.delimiter = delim[0];
    schema.num_classes = cfg.get_int("data.num_classes", 0);
    d = load_delimited(cfg.require_string("data.path"), schema);
  } else if (source == "idx") {
    d = load_idx(cfg.require_string("data.images"), cfg.require_string("data.labels"));
  } else {
    throw ConfigError("unknown data.source: " + source);
  }
  auto keep = cfg.get_int_list("data.classes");
  if (!keep.empty()) d = filter_classes(d, keep, true);
  return d;
}

int default_iterations(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::adaline: return 80;
    case LearnerKind::logistic2: return 100;
    case LearnerKind::softmax_regression: return 100;
    case LearnerKind::mlp: return 200;
  }
  return 100;
}

double default_eta(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::adaline: return 0.1;
    case LearnerKind::logistic2: return 0.1;
    case LearnerKind::softmax_regression: return 0.05;
    case LearnerKind::mlp: return 0.02;
  }
  return 0.1;
}

LearnerSpec resolve_spec(const Config& cfg, const std::string& kind_name, int input_dim,
                         int num_classes) {
  LearnerSpec spec;
  spec.kind = learner_kind_from_string(kind_name);
  spec.input_dim = input_dim;
  spec.class_count = num_classes;
  spec.hidden_width = cfg.get_int("learner.hidden", 10);
  spec.lambda = cfg.get_double("learner.lambda", 0.0);
  spec.validate();
  return spec;
}

TrainConfig resolve_train(const Config& cfg, LearnerKind kind, std::uint64_t seed) {
  TrainConfig tc;
  std::string name = to_string(kind);
  tc.iterations = cfg.get_int("train.T." + name, cfg.get_int("train.T", default_iterations(kind)));
  tc.eta = cfg.get_double("train.eta." + name, cfg.get_double("train.eta", default_eta(kind)));
  tc.init_seed = seed;
  return tc;
}

std::vector<ResultRow> read_result_rows(const std::filesystem::path& results_csv) {
  std::ifstream is(results_csv);
  if (!is) throw ParseError("cannot open " + results_csv.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty results file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int n_class_cols = 0;
  for (const std::string& h : header)
    if (h.rfind("class_err_", 0) == 0) ++n_class_cols;
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw ParseError("ragged results row");
    ResultRow r;
    r.seed = std::strtoull(cells[0].c_str(), nullptr, 10);
    r.budget = std::atoi(cells[1].c_str());
    r.budget_frac = std::atof(cells[2].c_str());
    r.target = cells[3];
    r.surrogate = cells[4];
    r.attack = cells[5];
    r.test_error = std::atof(cells[6].c_str());
    r.val_objective = std::atof(cells[7].c_str());
    r.per_class_error.resize(n_class_cols);
    for (int k = 0; k < n_class_cols; ++k) r.per_class_error[k] = std::atof(cells[8 + k].c_str());
    r.flagged = cells[8 + n_class_cols] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace exp

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

void run_curve(const Config& cfg, const std::filesystem::path& out_dir, int threads) {
  CommonSetup common = resolve_common(cfg);
  ScenarioSetup scen = resolve_scenario(cfg, common.population.dim());
  std::string targets_key = cfg.get_string("target.kinds", cfg.get_string("target.kind", ""));
  if (targets_key.empty()) throw ConfigError("run_curve needs target.kind or target.kinds");
  std::vector<std::string> target_names;
  {
    std::stringstream ss(targets_key);
    std::string item;
    while (std::getline(ss, item, ',')) target_names.push_back(item);
  }
  const int d = common.population.dim();
  const int K = common.population.num_classes;
  std::vector<LearnerSpec> targets;
  for (const auto& name : target_names) targets.push_back(exp::resolve_spec(cfg, name, d, K));
  std::optional<LearnerSpec> surrogate;
  if (scen.knowledge == Knowledge::surrogate_learner)
    surrogate = exp::resolve_spec(cfg, scen.surrogate_kind, d, K);
  // Touch per-kind train keys for all referenced kinds before the unknown-key
  // check; values are re-resolved per seed below.
  for (const auto& t : targets) exp::resolve_train(cfg, t.kind, 0);
  if (surrogate) exp::resolve_train(cfg, surrogate->kind, 0);
  cfg.check_all_consumed();
  std::filesystem::create_directories(out_dir);

  std::vector<std::vector<ResultRow>> per_task(common.reps);
  parallel_tasks(common.reps, threads, [&](int rep) {
    std::uint64_t seed = common.base_seed + rep;
    SplitPlan plan = common.plan;
    plan.seed = seed;
    auto [train, val, test] = split(common.population, plan);
    std::vector<ResultRow>& rows = per_task[rep];
    Dataset attacker_val =
        scen.objective == ObjectiveKind::error_specific ? relabel(val, scen.relabel_map) : val;

    // Clean reference, one row per target.
    for (const LearnerSpec& target : targets) {
      StopWatch sw;
      TrainConfig tc = exp::resolve_train(cfg, target.kind, seed);
      TrainResult clean = gd_train(target, train, tc);
      ResultRow row = eval_model(target, clean.w, test, attacker_val);
      row.seed = seed;
      row.budget_frac = 0.0;
      row.wall_seconds = sw.seconds();
      rows.push_back(std::move(row));
    }

    // Label-flip baseline at every nonzero budget.
    for (std::size_t bi = 0; bi < scen.budgets.size(); ++bi) {
      int budget = scen.budgets[bi];
      if (budget == 0) continue;
      RngStream flip_rng(seed, kStreamLabelFlipBase + bi);
      PoisonSet flips = label_flip_baseline(val, budget, flip_rng);
      for (const LearnerSpec& target : targets) {
        StopWatch sw;
        TrainConfig tc = exp::resolve_train(cfg, target.kind, seed);
        ResultRow row;
        try {
          TrainResult r = gd_train(target, flips.splice_into(train), tc);
          row = eval_model(target, r.w, test, attacker_val);
        } catch (const DivergenceError&) {
          row = flagged_row(target, K);
        }
        row.seed = seed;
        row.budget = budget;
        row.budget_frac = double(budget) / train.size();
        row.attack = "label-flip";
        row.wall_seconds = sw.seconds();
        rows.push_back(std::move(row));
      }
    }

    // Back-gradient attack: craft per target (PK) or once on the surrogate.
    std::vector<LearnerSpec> craft_specs;
    if (scen.knowledge == Knowledge::perfect) {
      craft_specs = targets;
    } else {
      craft_specs = {*surrogate};
    }
    for (const LearnerSpec& craft : craft_specs) {
      Deadline deadline;
      deadline.budget_s = common.row_time_budget_s;
      bool truncated = false;
      TrainConfig craft_tc = exp::resolve_train(cfg, craft.kind, seed);
      std::vector<PoisonSet> sets;
      bool craft_failed = false;
      try {
        sets = craft_schedule(craft, train, val, scen, craft_tc, seed, deadline, truncated);
      } catch (const DivergenceError&) {
        craft_failed = true;
      }
      std::vector<const LearnerSpec*> eval_targets;
      if (scen.knowledge == Knowledge::perfect) {
        eval_targets = {&craft};
      } else {
        for (const auto& t : targets) eval_targets.push_back(&t);
      }
      for (std::size_t bi = 0; bi < scen.budgets.size(); ++bi) {
        int budget = scen.budgets[bi];
        if (budget == 0) continue;
        for (const LearnerSpec* target : eval_targets) {
          StopWatch sw;
          TrainConfig tc = exp::resolve_train(cfg, target->kind, seed);
          ResultRow row;
          if (craft_failed) {
            row = flagged_row(*target, K);
          } else {
            try {
              TrainResult r = gd_train(*target, sets[bi].splice_into(train), tc);
              row = eval_model(*target, r.w, test, attacker_val);
            } catch (const DivergenceError&) {
              row = flagged_row(*target, K);
            }
          }
          row.seed = seed;
          row.budget = budget;
          row.budget_frac = double(budget) / train.size();
          row.surrogate = to_string(craft.kind);
          row.attack = "backgrad";
          row.flagged = row.flagged || truncated;
          row.wall_seconds = sw.seconds();
          rows.push_back(std::move(row));
        }
      }
      if (!craft_failed && !sets.empty() && sets.back().size() > 0) {
        std::string stem = "poison_seed" + std::to_string(seed) + "_" + to_string(craft.kind);
        save_poison_csv(out_dir / (stem + ".csv"), out_dir / (stem + "_trace.csv"), sets.back());
      }
    }
  });

  std::vector<ResultRow> all;
  for (auto& rows : per_task) all.insert(all.end(), rows.begin(), rows.end());
  write_results(out_dir, std::move(all), K);
  write_manifest(out_dir, cfg, "curve", common);
}

void run_transfer(const Config& cfg, const std::filesystem::path& out_dir, int threads) {
  CommonSetup common = resolve_common(cfg);
  ScenarioSetup scen = resolve_scenario(cfg, common.population.dim());
  std::vector<std::string> kind_names;
  {
    std::stringstream ss(cfg.require_string("learners.kinds"));
    std::string item;
    while (std::getline(ss, item, ',')) kind_names.push_back(item);
  }
  if (kind_names.size() < 2) throw ConfigError("run_transfer needs >= 2 learners.kinds");
  if (scen.budgets.size() != 1 || scen.budgets[0] < 1)
    throw ConfigError("run_transfer wants a single positive attack.budget");
  const int budget = scen.budgets[0];
  const int d = common.population.dim();
  const int K = common.population.num_classes;
  std::vector<LearnerSpec> kinds;
  for (const auto& name : kind_names) kinds.push_back(exp::resolve_spec(cfg, name, d, K));
  for (const auto& k : kinds) exp::resolve_train(cfg, k.kind, 0);
  cfg.check_all_consumed();
  std::filesystem::create_directories(out_dir);

  std::vector<std::vector<ResultRow>> per_task(common.reps);
  parallel_tasks(common.reps, threads, [&](int rep) {
    std::uint64_t seed = common.base_seed + rep;
    SplitPlan plan = common.plan;
    plan.seed = seed;
    auto [train, val, test] = split(common.population, plan);
    std::vector<ResultRow>& rows = per_task[rep];

    // Craft one poison set per surrogate kind.
    std::vector<PoisonSet> sets(kinds.size());
    std::vector<bool> failed(kinds.size(), false);
    std::vector<bool> truncated(kinds.size(), false);
    for (std::size_t s = 0; s < kinds.size(); ++s) {
      Deadline deadline;
      deadline.budget_s = common.row_time_budget_s;
      TrainConfig tc = exp::resolve_train(cfg, kinds[s].kind, seed);
      bool trunc = false;
      try {
        auto schedule = craft_schedule(kinds[s], train, val, scen, tc, seed, deadline, trunc);
        sets[s] = std::move(schedule.back());
      } catch (const DivergenceError&) {
        failed[s] = true;
      }
      truncated[s] = trunc;
      if (!failed[s]) {
        std::string stem = "poison_seed" + std::to_string(seed) + "_" + to_string(kinds[s].kind);
        save_poison_csv(out_dir / (stem + ".csv"), out_dir / (stem + "_trace.csv"), sets[s]);
      }
    }

    RngStream flip_rng(seed, kStreamLabelFlipBase);
    PoisonSet flips = label_flip_baseline(val, budget, flip_rng);

    for (const LearnerSpec& target : kinds) {
      TrainConfig tc = exp::resolve_train(cfg, target.kind, seed);
      {
        StopWatch sw;
        TrainResult clean = gd_train(target, train, tc);
        ResultRow row = eval_model(target, clean.w, test, val);
        row.seed = seed;
        row.wall_seconds = sw.seconds();
        rows.push_back(std::move(row));
      }
      {
        StopWatch sw;
        ResultRow row;
        try {
          TrainResult r = gd_train(target, flips.splice_into(train), tc);
          row = eval_model(target, r.w, test, val);
        } catch (const DivergenceError&) {
          row = flagged_row(target, K);
        }
        row.seed = seed;
        row.budget = budget;
        row.budget_frac = double(budget) / train.size();
        row.attack = "label-flip";
        row.wall_seconds = sw.seconds();
        rows.push_back(std::move(row));
      }
      for (std::size_t s = 0; s < kinds.size(); ++s) {
        StopWatch sw;
        ResultRow row;
        if (failed[s]) {
          row = flagged_row(target, K);
        } else {
          try {
            TrainResult r = gd_train(target, sets[s].splice_into(train), tc);
            row = eval_model(target, r.w, test, val);
          } catch (const DivergenceError&) {
            row = flagged_row(target, K);
          }
        }
        row.seed = seed;
        row.budget = budget;
        row.budget_frac = double(budget) / train.size();
        row.surrogate = to_string(kinds[s].kind);
        row.attack = "backgrad";
        row.flagged = row.flagged || truncated[s];
        row.wall_seconds = sw.seconds();
        rows.push_back(std::move(row));
      }
    }
  });

  std::vector<ResultRow> all;
  for (auto& rows : per_task) all.insert(all.end(), rows.begin(), rows.end());

  // Pivot: mean test error per (surrogate row, target column), plus clean and
  // label-flip reference rows.
  {
    std::ofstream os(out_dir / "matrix.csv");
    os << "surrogate";
    for (const auto& t : kinds) os << ',' << to_string(t.kind);
    os << '\n';
    auto mean_error = [&](const std::string& attack, const std::string& surrogate,
                          const std::string& target) {
      double acc = 0.0;
      int count = 0;
      for (const ResultRow& r : all) {
        if (r.attack == attack && r.surrogate == surrogate && r.target == target && !r.flagged) {
          acc += r.test_error;
          ++count;
        }
      }
      return count > 0 ? acc / count : std::nan("");
    };
    os << "clean";
    for (const auto& t : kinds) os << ',' << fmt9(mean_error("none", "-", to_string(t.kind)));
    os << '\n';
    os << "label-flip";
    for (const auto& t : kinds)
      os << ',' << fmt9(mean_error("label-flip", "-", to_string(t.kind)));
    os << '\n';
    for (const auto& s : kinds) {
      os << to_string(s.kind);
      for (const auto& t : kinds)
        os << ',' << fmt9(mean_error("backgrad", to_string(s.kind), to_string(t.kind)));
      os << '\n';
    }
  }
  write_results(out_dir, std::move(all), K);
  write_manifest(out_dir, cfg, "transfer", common);
}

void run_error_specific(const Config& cfg, const std::filesystem::path& out_dir, int threads) {
  CommonSetup common = resolve_common(cfg);
  ScenarioSetup scen = resolve_scenario(cfg, common.population.dim());
  if (scen.objective != ObjectiveKind::error_specific)
    throw ConfigError("run_error_specific needs attack.objective = error-specific");
  std::string target_name = cfg.require_string("target.kind");
  const int d = common.population.dim();
  const int K = common.population.num_classes;
  LearnerSpec target = exp::resolve_spec(cfg, target_name, d, K);
  exp::resolve_train(cfg, target.kind, 0);
  cfg.check_all_consumed();
  std::filesystem::create_directories(out_dir);

  std::vector<std::vector<ResultRow>> per_task(common.reps);
  parallel_tasks(common.reps, threads, [&](int rep) {
    std::uint64_t seed = common.base_seed + rep;
    SplitPlan plan = common.plan;
    plan.seed = seed;
    auto [train, val, test] = split(common.population, plan);
    Dataset val_prime = relabel(val, scen.relabel_map);
    std::vector<ResultRow>& rows = per_task[rep];
    TrainConfig tc = exp::resolve_train(cfg, target.kind, seed);

    StopWatch sw_clean;
    TrainResult clean = gd_train(target, train, tc);
    Confusion clean_conf = confusion(target, clean.w, test);
    {
      ResultRow row = eval_model(target, clean.w, test, val_prime);
      row.seed = seed;
      row.wall_seconds = sw_clean.seconds();
      rows.push_back(std::move(row));
    }
    write_confusion_csv(out_dir / ("confusion_clean_seed" + std::to_string(seed) + ".csv"),
                        clean_conf.counts);

    Deadline deadline;
    deadline.budget_s = common.row_time_budget_s;
    bool truncated = false;
    bool craft_failed = false;
    std::vector<PoisonSet> sets;
    try {
      sets = craft_schedule(target, train, val, scen, tc, seed, deadline, truncated);
    } catch (const DivergenceError&) {
      craft_failed = true;
    }
    for (std::size_t bi = 0; bi < scen.budgets.size(); ++bi) {
      int budget = scen.budgets[bi];
      if (budget == 0) continue;
      StopWatch sw;
      ResultRow row;
      Eigen::MatrixXi poisoned_counts;
      if (craft_failed) {
        row = flagged_row(target, K);
      } else {
        try {
          TrainResult r = gd_train(target, sets[bi].splice_into(train), tc);
          row = eval_model(target, r.w, test, val_prime);
          poisoned_counts = confusion(target, r.w, test).counts;
        } catch (const DivergenceError&) {
          row = flagged_row(target, K);
        }
      }
      row.seed = seed;
      row.budget = budget;
      row.budget_frac = double(budget) / train.size();
      row.surrogate = to_string(target.kind);
      row.attack = "backgrad";
      row.flagged = row.flagged || truncated;
      row.wall_seconds = sw.seconds();
      rows.push_back(std::move(row));
      if (bi + 1 == scen.budgets.size() && poisoned_counts.size() > 0) {
        write_confusion_csv(
            out_dir / ("confusion_poisoned_seed" + std::to_string(seed) + ".csv"),
            poisoned_counts);
        write_confusion_csv(out_dir / ("confusion_delta_seed" + std::to_string(seed) + ".csv"),
                            Eigen::MatrixXi(poisoned_counts - clean_conf.counts));
      }
    }
    if (!craft_failed && !sets.empty() && sets.back().size() > 0) {
      std::string stem = "poison_seed" + std::to_string(seed) + "_" + to_string(target.kind);
      save_poison_csv(out_dir / (stem + ".csv"), out_dir / (stem + "_trace.csv"), sets.back());
    }

    // Label-flip reference at the final budget.
    int final_budget = scen.budgets.back();
    if (final_budget > 0) {
      StopWatch sw;
      RngStream flip_rng(seed, kStreamLabelFlipBase);
      PoisonSet flips = label_flip_baseline(val, final_budget, flip_rng);
      ResultRow row;
      try {
        TrainResult r = gd_train(target, flips.splice_into(train), tc);
        row = eval_model(target, r.w, test, val_prime);
      } catch (const DivergenceError&) {
        row = flagged_row(target, K);
      }
      row.seed = seed;
      row.budget = final_budget;
      row.budget_frac = double(final_budget) / train.size();
      row.attack = "label-flip";
      row.wall_seconds = sw.seconds();
      rows.push_back(std::move(row));
    }
  });

  std::vector<ResultRow> all;
  for (auto& rows : per_task) all.insert(all.end(), rows.begin(), rows.end());
  write_results(out_dir, std::move(all), K);
  write_manifest(out_dir, cfg, "error-specific", common);
}

void run_surface(const Config& cfg, const std::filesystem::path& out_dir, int threads) {
  CommonSetup common = resolve_common(cfg);
  if (common.population.dim() != 2)
    throw ConfigError("run_surface needs a 2-d dataset, got d = " +
                      std::to_string(common.population.dim()));
  ScenarioSetup scen = resolve_scenario(cfg, 2);
  std::string target_name = cfg.get_string("target.kind", "softmax-regression");
  LearnerSpec target = exp::resolve_spec(cfg, target_name, 2, common.population.num_classes);
  const int grid = cfg.get_int("surface.grid", 50);
  const int poison_label = cfg.get_int("surface.poison_label", 0);
  exp::resolve_train(cfg, target.kind, 0);
  cfg.check_all_consumed();
  if (grid < 2) throw ConfigError("surface.grid must be >= 2");
  if (poison_label < 0 || poison_label >= common.population.num_classes)
    throw ConfigError("surface.poison_label out of range");
  std::filesystem::create_directories(out_dir);

  parallel_tasks(common.reps, threads, [&](int rep) {
    std::uint64_t seed = common.base_seed + rep;
    SplitPlan plan = common.plan;
    plan.seed = seed;
    auto [train, val, test] = split(common.population, plan);
    TrainConfig tc = exp::resolve_train(cfg, target.kind, seed);
    AttackScenario scenario = make_scenario(scen, val, 1);
    OuterObjective obj;
    obj.val = scenario.val;
    obj.sign = scenario.sign();

    std::ofstream os(out_dir / ("surface_seed" + std::to_string(seed) + ".csv"));
    os << "x,y,objective,grad_x,grad_y,zero_one_error\n";
    for (int i = 0; i < grid; ++i) {
      double gx = scenario.phi.lo[0] +
                  (scenario.phi.hi[0] - scenario.phi.lo[0]) * double(i) / (grid - 1);
      for (int j = 0; j < grid; ++j) {
        double gy = scenario.phi.lo[1] +
                    (scenario.phi.hi[1] - scenario.phi.lo[1]) * double(j) / (grid - 1);
        Vec x(2);
        x << gx, gy;
        BackgradResult bg = backgrad(target, train, x, poison_label, obj, tc, scenario.mode);
        double zero_one = classification_error(target, bg.w_final, scenario.val);
        os << fmt9(gx) << ',' << fmt9(gy) << ',' << fmt9(bg.val_loss_final) << ','
           << fmt9(bg.g_xc[0]) << ',' << fmt9(bg.g_xc[1]) << ',' << fmt9(zero_one) << '\n';
      }
    }

    // One optimizer run started from a cloned training point of another class.
    RngStream rng(seed, kStreamSurfaceStart);
    std::vector<int> candidates;
    for (int i = 0; i < train.size(); ++i)
      if (train.y[i] != poison_label) candidates.push_back(i);
    if (candidates.empty()) throw ConfigError("surface.poison_label leaves no donor points");
    PoisonPoint start;
    start.x = train.X.row(candidates[rng.next_below(candidates.size())]).transpose();
    start.y = poison_label;
    PoisonPoint done = optimize_point(target, train, std::move(start), scenario, tc);
    std::ofstream ps(out_dir / ("path_seed" + std::to_string(seed) + ".csv"));
    ps << "iteration,x,y,objective\n";
    for (std::size_t k = 0; k < done.path.size(); ++k)
      ps << k << ',' << fmt9(done.path[k][0]) << ',' << fmt9(done.path[k][1]) << ','
         << fmt9(done.trace[k]) << '\n';
  });

  write_manifest(out_dir, cfg, "surface", common);
}

}  // namespace poison
