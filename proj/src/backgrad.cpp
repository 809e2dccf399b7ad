#include "poison/backgrad.hpp"

#include <cmath>
#include <ostream>

#include "poison/error.hpp"

namespace poison {

std::string to_string(BackgradMode mode) {
  switch (mode) {
    case BackgradMode::stored: return "stored";
    case BackgradMode::reversed: return "reversed";
    case BackgradMode::fixed_point: return "fixed-point";
  }
  return "?";
}

namespace {

bool is_convex_kind(LearnerKind kind) { return kind != LearnerKind::mlp; }

// Direct chain-rule term: the poisoning point's own rows in the validation
// set. Zero in every shipped scenario but part of the contract.
Vec direct_val_term(const LearnerSpec& spec, const Vec& w_final, const OuterObjective& obj,
                    int dim) {
  Vec g = Vec::Zero(dim);
  if (obj.xc_val_indices.empty()) return g;
  for (int idx : obj.xc_val_indices) {
    if (idx < 0 || idx >= obj.val.size())
      throw std::invalid_argument("OuterObjective: xc_val_indices entry out of range");
    g += grad_x(spec, w_final, Vec(obj.val.X.row(idx).transpose()), obj.val.y[idx]);
  }
  return g / obj.val.size();
}

Vec reverse_one_step(const LearnerSpec& spec, const Dataset& data, const Vec& w_t, double eta) {
  return w_t + eta * grad_w(spec, w_t, data);
}

Vec reverse_fixed_point(const LearnerSpec& spec, const Dataset& data, const Vec& w_t, double eta,
                        const BackgradOptions& opt) {
  Vec v = w_t;
  for (int k = 0; k < opt.fixed_point_max_iters; ++k) {
    Vec next = w_t + eta * grad_w(spec, v, data);
    double step = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (step <= opt.fixed_point_tol * (1.0 + v.cwiseAbs().maxCoeff())) return v;
  }
  throw ReversalError("fixed-point reversal did not contract within " +
                      std::to_string(opt.fixed_point_max_iters) + " iterations");
}

}  // namespace

BackgradResult backgrad(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                        const OuterObjective& obj, const TrainConfig& cfg, BackgradMode mode,
                        const BackgradOptions& options) {
  spec.validate();
  detail::check_sample(spec, x_c, y_c);
  const Dataset full = options.ablate_poison ? train : train.with_row(x_c, y_c);
  const double poison_weight = options.ablate_poison ? 0.0 : 1.0 / full.size();

  TrainConfig fwd = cfg;
  fwd.store_trajectory = mode == BackgradMode::stored;
  const Vec w0 = initial_params(spec, fwd);
  TrainConfig fwd_fixed = fwd;
  fwd_fixed.init_w = w0;
  TrainResult trained = gd_train(spec, full, fwd_fixed);

  BackgradResult result;
  result.mode = mode;
  result.w_final = trained.w;
  result.val_loss_final = val_loss(spec, trained.w, obj.val);
  result.g_w = val_grad(spec, trained.w, obj.val);

  Vec dw = result.g_w;
  Vec dxc = Vec::Zero(spec.input_dim);
  Vec w_cur = trained.w;

  // Reverse sweep over the steps w_{t-1} -> w_t; derivative operators are
  // evaluated at the pre-update iterate w_{t-1}, recovered per `mode`.
  for (int t = cfg.iterations; t >= 1; --t) {
    Vec w_prev;
    switch (mode) {
      case BackgradMode::stored: w_prev = trained.trajectory->checkpoints[t - 1]; break;
      case BackgradMode::reversed: w_prev = reverse_one_step(spec, full, w_cur, cfg.eta); break;
      case BackgradMode::fixed_point:
        w_prev = reverse_fixed_point(spec, full, w_cur, cfg.eta, options);
        break;
    }
    dxc -= cfg.eta * hvp_xw(spec, w_prev, x_c, y_c, dw, options.hvp_mode, poison_weight);
    dw -= cfg.eta * hvp_ww(spec, w_prev, full, dw, options.hvp_mode);
    if (options.trace)
      (*options.trace) << t << ',' << dw.norm() << ',' << dxc.norm() << '\n';
    w_cur = std::move(w_prev);
  }

  if (mode != BackgradMode::stored && cfg.iterations > 0)
    result.reversal_drift = (w_cur - w0).cwiseAbs().maxCoeff();
  result.g_xc = dxc + direct_val_term(spec, trained.w, obj, spec.input_dim);
  if (!result.g_xc.allFinite())
    throw DivergenceError("backgrad: non-finite attack gradient", cfg.iterations);
  return result;
}

Vec bilevel_fd_oracle(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                      const OuterObjective& obj, const TrainConfig& cfg) {
  spec.validate();
  detail::check_sample(spec, x_c, y_c);
  const int d = spec.input_dim;
  if (d > 50)
    throw OracleError("bilevel_fd_oracle: refused for d = " + std::to_string(d) +
                      " (> 50 would need " + std::to_string(2 * d) + " trainings)");
  TrainConfig run = cfg;
  run.store_trajectory = false;
  run.init_w = initial_params(spec, cfg);  // every probe trains from the same w_0

  const double h = 1e-5 * (1.0 + x_c.cwiseAbs().maxCoeff());
  auto outer_loss = [&](const Vec& probe) {
    TrainResult r = gd_train(spec, train.with_row(probe, y_c), run);
    return val_loss(spec, r.w, obj.val);
  };
  Vec g(d);
  Vec probe = x_c;
  for (int i = 0; i < d; ++i) {
    probe[i] = x_c[i] + h;
    double lp = outer_loss(probe);
    probe[i] = x_c[i] - h;
    double lm = outer_loss(probe);
    probe[i] = x_c[i];
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw OracleError("bilevel_fd_oracle: non-finite outer loss at coordinate " +
                        std::to_string(i));
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

Vec cg_solve(const std::function<Vec(const Vec&)>& apply, const Vec& b, double tol,
             int max_iters) {
  const double bnorm = b.norm();
  Vec x = Vec::Zero(b.size());
  if (bnorm == 0.0) return x;
  Vec r = b;
  Vec p = r;
  double rs = r.squaredNorm();
  for (int k = 0; k < max_iters; ++k) {
    Vec ap = apply(p);
    double denom = p.dot(ap);
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw IllConditionedError("cg_solve: operator not positive definite along search direction");
    double alpha = rs / denom;
    x += alpha * p;
    r -= alpha * ap;
    double rs_next = r.squaredNorm();
    if (std::sqrt(rs_next) <= tol * bnorm) return x;
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  throw IllConditionedError(
      "cg_solve: no convergence to relative residual " + std::to_string(tol) + " within " +
      std::to_string(max_iters) + " iterations; consider a larger regularization lambda");
}

Vec train_to_stationarity(const LearnerSpec& spec, const Dataset& data, double tol,
                          int max_newton_iters) {
  spec.validate();
  if (!is_convex_kind(spec.kind))
    throw std::invalid_argument("train_to_stationarity: requires a convex learner kind");
  data.validate();
  const int p = spec.param_count();
  Vec w = Vec::Zero(p);
  for (int it = 0; it < max_newton_iters; ++it) {
    Vec g = grad_w(spec, w, data);
    if (g.cwiseAbs().maxCoeff() < tol) return w;
    Vec step = cg_solve([&](const Vec& z) { return hvp_ww(spec, w, data, z); }, g, 1e-12, 20 * p);
    double f0 = train_loss(spec, w, data);
    double s = 1.0;
    bool accepted = false;
    // Halving line search; Newton steps on these convex losses almost always
    // accept at s = 1.
    for (int half = 0; half < 40 && !accepted; ++half) {
      Vec w_try = w - s * step;
      if (train_loss(spec, w_try, data) <= f0) {
        w = std::move(w_try);
        accepted = true;
      }
      s *= 0.5;
    }
    if (!accepted) break;  // at numerical stationarity; the final check decides
  }
  Vec g = grad_w(spec, w, data);
  if (g.cwiseAbs().maxCoeff() < tol) return w;
  throw IllConditionedError("train_to_stationarity: Newton did not reach the gradient tolerance");
}

Vec kkt_gradient(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                 const OuterObjective& obj, double lambda) {
  if (!is_convex_kind(spec.kind))
    throw std::invalid_argument("kkt_gradient: unsupported for non-convex kind " +
                                to_string(spec.kind));
  if (!(lambda > 0.0))
    throw std::invalid_argument("kkt_gradient: requires lambda > 0 for an invertible Hessian");
  LearnerSpec reg = spec;
  reg.lambda = lambda;
  detail::check_sample(reg, x_c, y_c);

  const Dataset full = train.with_row(x_c, y_c);
  const Vec w_hat = train_to_stationarity(reg, full);
  const int p = reg.param_count();

  Vec rhs = val_grad(reg, w_hat, obj.val);
  Vec v = cg_solve([&](const Vec& z) { return hvp_ww(reg, w_hat, full, z); }, rhs, 1e-9, 10 * p);
  Vec mixed = hvp_xw(reg, w_hat, x_c, y_c, v, HvpMode::exact, 1.0 / full.size());
  return direct_val_term(reg, w_hat, obj, reg.input_dim) - mixed;
}

}  // namespace poison
