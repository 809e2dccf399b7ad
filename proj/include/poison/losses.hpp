#pragma once

#include <Eigen/Core>

namespace poison {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Probabilities below this floor are clamped inside log_loss so attacker
// objectives stay finite under confidently wrong predictions.
inline constexpr double kProbFloor = 1e-12;

// Numerically stable softmax (max-subtracted). Requires finite logits, K >= 2.
Vec softmax(const Vec& logits);

// -log(probs[y]) with the probability floor. probs must be a distribution.
double log_loss(const Vec& probs, int y);

// Per-sample squared error against a +/-1 target.
double mse_loss(double score, double target);

// Stable logistic sigmoid.
double sigmoid(double s);

}  // namespace poison
