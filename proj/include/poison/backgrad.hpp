#pragma once

#include <iosfwd>
#include <vector>

#include "poison/trainer.hpp"

namespace poison {

// Attacker objective A = sign * L(val, w_T). sign is metadata for the attack
// loop; the engine itself always reports the gradient of the loss L.
struct OuterObjective {
  Dataset val;
  double sign = +1.0;  // +1 error-generic (maximize), -1 error-specific (minimize)

  // Rows of `val` that coincide with the poisoning point. Almost always empty;
  // when set they contribute the direct dL/dx_c term of the chain rule.
  std::vector<int> xc_val_indices;
};

// How the backward pass recovers the iterates w_{T-1}..w_0:
//   stored      - checkpoints kept from the forward pass
//   reversed    - one-step reversal w_{t-1} = w_t + eta * grad(w_t)
//   fixed_point - solve w_{t-1} = w_t + eta * grad(w_{t-1}) by iteration
enum class BackgradMode { stored, reversed, fixed_point };

std::string to_string(BackgradMode mode);

struct BackgradOptions {
  HvpMode hvp_mode = HvpMode::exact;
  int fixed_point_max_iters = 50;
  double fixed_point_tol = 1e-14;

  // Test hook: train without the poisoning point (its loss weight becomes 0).
  bool ablate_poison = false;

  // When set, one "t,dw_norm,dxc_norm" line per reverse step.
  std::ostream* trace = nullptr;
};

struct BackgradResult {
  Vec g_xc;  // d(L(val, w_T)) / d(x_c) through the training run
  Vec g_w;   // grad of the validation loss at w_T (diagnostic)
  BackgradMode mode = BackgradMode::stored;

  // ||w_0_reconstructed - w_0_true||_inf, reversal modes only.
  double reversal_drift = 0.0;

  // Forward-pass byproducts, reused by the attack loop.
  Vec w_final;
  double val_loss_final = 0.0;
};

// Reverse-mode differentiation of L(val, w_T) through a T-step gradient
// descent on train + {(x_c, y_c)}. The forward training runs internally from
// the config's initial point.
BackgradResult backgrad(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                        const OuterObjective& obj, const TrainConfig& cfg,
                        BackgradMode mode = BackgradMode::stored,
                        const BackgradOptions& options = {});

// Brute-force bilevel oracle: central differences of [train T steps, evaluate
// L(val, w_T)] per coordinate of x_c. Refuses d > 50 (2d trainings).
Vec bilevel_fd_oracle(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                      const OuterObjective& obj, const TrainConfig& cfg);

// Implicit (KKT) gradient for convex kinds at an exactly-trained optimum:
// solves (hessian of the training objective) v = grad L by matrix-free
// conjugate gradients and returns dL/dx_c - (mixed second derivative) v.
// `lambda` (> 0) replaces the spec's regularization strength.
Vec kkt_gradient(const LearnerSpec& spec, const Dataset& train, const Vec& x_c, int y_c,
                 const OuterObjective& obj, double lambda);

// Newton descent with matrix-free CG until ||grad||_inf < tol. Exposed for
// the KKT tests; requires a convex kind.
Vec train_to_stationarity(const LearnerSpec& spec, const Dataset& data, double tol = 1e-7,
                          int max_newton_iters = 100);

// Matrix-free conjugate gradients for SPD operators; returns the solution and
// throws IllConditionedError if the relative residual misses `tol` within
// `max_iters`.
Vec cg_solve(const std::function<Vec(const Vec&)>& apply, const Vec& b, double tol,
             int max_iters);

}  // namespace poison
