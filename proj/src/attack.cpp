#include "poison/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "poison/error.hpp"

namespace poison {

FeasibleSet FeasibleSet::unit_box(int dim) {
  FeasibleSet phi;
  phi.lo = Vec::Zero(dim);
  phi.hi = Vec::Ones(dim);
  return phi;
}

void FeasibleSet::validate() const {
  if (lo.size() != hi.size()) throw ShapeError("FeasibleSet: bound length mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i]))
      throw std::invalid_argument("FeasibleSet: lo > hi at coordinate " + std::to_string(i));
}

Vec project(const Vec& x, const FeasibleSet& phi) {
  phi.validate();
  if (x.size() != phi.lo.size()) throw ShapeError("project: dimension mismatch");
  return x.cwiseMax(phi.lo).cwiseMin(phi.hi);
}

const LearnerSpec& AttackScenario::craft_spec(const LearnerSpec& target) const {
  if (knowledge == Knowledge::perfect) return target;
  if (!surrogate)
    throw std::invalid_argument("AttackScenario: surrogate_learner knowledge needs a surrogate");
  return *surrogate;
}

Dataset PoisonSet::splice_into(const Dataset& train, int skip_index) const {
  Dataset out = train;
  for (int i = 0; i < size(); ++i) {
    if (i == skip_index) continue;
    out = out.with_row(points[i].x, points[i].y);
  }
  return out;
}

namespace {

int random_wrong_label(int y, int num_classes, RngStream& rng) {
  int value = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(num_classes - 1)));
  return value >= y ? value + 1 : value;
}

}  // namespace

PoisonSet init_poison(InitStrategy strategy, const Dataset& source, int m, RngStream& rng,
                      std::pair<int, int> restricted_pair) {
  if (m < 1) throw std::invalid_argument("init_poison: budget must be >= 1");
  if (source.size() < 1) throw std::invalid_argument("init_poison: empty source dataset");
  PoisonSet set;
  set.points.reserve(m);
  if (strategy == InitStrategy::clone_flip_restricted) {
    auto [a, b] = restricted_pair;
    if (a < 0 || b < 0 || a >= source.num_classes || b >= source.num_classes || a == b)
      throw std::invalid_argument("init_poison: invalid restricted class pair");
    std::vector<int> pool;
    for (int i = 0; i < source.size(); ++i)
      if (source.y[i] == a || source.y[i] == b) pool.push_back(i);
    bool has_a = false, has_b = false;
    for (int i : pool) (source.y[i] == a ? has_a : has_b) = true;
    if (!has_a || !has_b)
      throw std::invalid_argument("init_poison: restricted class pair absent from source");
    for (int k = 0; k < m; ++k) {
      int idx = pool[rng.next_below(pool.size())];
      PoisonPoint p;
      p.x = source.X.row(idx).transpose();
      p.y = source.y[idx] == a ? b : a;  // swap within the pair
      set.points.push_back(std::move(p));
    }
    return set;
  }
  for (int k = 0; k < m; ++k) {
    int idx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(source.size())));
    PoisonPoint p;
    p.x = source.X.row(idx).transpose();
    p.y = source.num_classes == 2 ? 1 - source.y[idx]
                                  : random_wrong_label(source.y[idx], source.num_classes, rng);
    set.points.push_back(std::move(p));
  }
  return set;
}

PoisonSet label_flip_baseline(const Dataset& pool, int m, RngStream& rng) {
  if (m < 1 || m > pool.size())
    throw std::invalid_argument("label_flip_baseline: budget " + std::to_string(m) +
                                " invalid for pool of " + std::to_string(pool.size()));
  // Partial Fisher-Yates for a without-replacement sample.
  std::vector<int> idx(pool.size());
  for (int i = 0; i < pool.size(); ++i) idx[i] = i;
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(pool.size() - i)));
    std::swap(idx[i], idx[j]);
  }
  PoisonSet set;
  set.points.reserve(m);
  for (int k = 0; k < m; ++k) {
    PoisonPoint p;
    p.x = pool.X.row(idx[k]).transpose();
    p.y = pool.num_classes == 2 ? 1 - pool.y[idx[k]]
                                : random_wrong_label(pool.y[idx[k]], pool.num_classes, rng);
    set.points.push_back(std::move(p));
  }
  return set;
}

double attack_objective(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                        const Dataset& val, double sign, const TrainConfig& cfg) {
  TrainConfig run = cfg;
  run.store_trajectory = false;
  TrainResult r = gd_train(spec, train.with_row(x_c, y_c), run);
  return sign * val_loss(spec, r.w, val);
}

namespace {

struct GradEval {
  Vec g;           // d(L)/d(x_c)
  double a;        // sign * L
};

GradEval eval_backgrad(const LearnerSpec& spec, const Dataset& train, const Vec& x, int y,
                       const AttackScenario& scenario, const TrainConfig& cfg) {
  OuterObjective obj;
  obj.val = scenario.val;
  obj.sign = scenario.sign();
  BackgradResult r = backgrad(spec, train, x, y, obj, cfg, scenario.mode);
  return {std::move(r.g_xc), scenario.sign() * r.val_loss_final};
}

}  // namespace

PoisonPoint optimize_point(const LearnerSpec& spec, const Dataset& train, PoisonPoint point,
                           const AttackScenario& scenario, const TrainConfig& cfg) {
  const double sigma = scenario.sign();
  point.x = project(point.x, scenario.phi);

  GradEval cur = eval_backgrad(spec, train, point.x, point.y, scenario, cfg);
  point.trace.push_back(cur.a);
  point.path.push_back(point.x);

  for (int iter = 0; iter < scenario.max_iters; ++iter) {
    if (cur.g.norm() < 1e-12) return point;  // plateau: declared converged

    Vec accepted_x;
    std::optional<GradEval> next;
    if (scenario.step_rule == StepRule::fixed_step) {
      double s = scenario.eta_attack;
      for (int attempt = 0; attempt <= scenario.max_halvings; ++attempt, s *= 0.5) {
        Vec cand = project(point.x + s * sigma * cur.g, scenario.phi);
        try {
          next = eval_backgrad(spec, train, cand, point.y, scenario, cfg);
          accepted_x = std::move(cand);
          break;
        } catch (const DivergenceError&) {
          // rejected step; retry shorter
        }
      }
      if (!next) {
        point.stalled = true;  // every candidate diverged the training
        return point;
      }
    } else {
      double s = 1.0;
      for (int attempt = 0; attempt <= scenario.max_halvings; ++attempt, s *= 0.5) {
        Vec cand = project(point.x + s * sigma * cur.g, scenario.phi);
        double a_cand;
        try {
          a_cand = attack_objective(spec, train, cand, point.y, scenario.val, sigma, cfg);
        } catch (const DivergenceError&) {
          continue;
        }
        if (a_cand > cur.a) {
          next = eval_backgrad(spec, train, cand, point.y, scenario, cfg);
          accepted_x = std::move(cand);
          break;
        }
      }
      if (!next) return point;  // no improving step exists at any tried scale
    }

    double gain = next->a - cur.a;
    point.x = std::move(accepted_x);
    cur = std::move(*next);
    point.trace.push_back(cur.a);
    point.path.push_back(point.x);
    if (gain < scenario.eps_stop) break;
  }
  return point;
}

PoisonSet optimize_set(const LearnerSpec& spec, const Dataset& train, PoisonSet set,
                       const AttackScenario& scenario, const TrainConfig& cfg, int passes) {
  if (passes < 1) throw std::invalid_argument("optimize_set: passes must be >= 1");
  for (int pass = 0; pass < passes; ++pass) {
    for (int i = 0; i < set.size(); ++i) {
      Dataset held = set.splice_into(train, i);
      set.points[i] = optimize_point(spec, held, std::move(set.points[i]), scenario, cfg);
    }
  }
  return set;
}

void save_poison_csv(const std::filesystem::path& points_path,
                     const std::filesystem::path& trace_path, const PoisonSet& set) {
  std::ofstream pf(points_path);
  if (!pf) throw std::runtime_error("save_poison_csv: cannot open " + points_path.string());
  const int d = set.size() > 0 ? static_cast<int>(set.points[0].x.size()) : 0;
  for (int j = 0; j < d; ++j) pf << "feature_" << j << ',';
  pf << "label\n";
  char buf[64];
  for (const PoisonPoint& p : set.points) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", p.x[j]);
      pf << buf << ',';
    }
    pf << p.y << '\n';
  }
  std::ofstream tf(trace_path);
  if (!tf) throw std::runtime_error("save_poison_csv: cannot open " + trace_path.string());
  tf << "point_id,iteration,objective\n";
  for (int i = 0; i < set.size(); ++i) {
    for (std::size_t k = 0; k < set.points[i].trace.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", set.points[i].trace[k]);
      tf << i << ',' << k << ',' << buf << '\n';
    }
  }
}

}  // namespace poison
