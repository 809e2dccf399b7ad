#include "poison/losses.hpp"

#include <cmath>

#include "poison/error.hpp"

namespace poison {

Vec softmax(const Vec& logits) {
  if (logits.size() < 2) throw ShapeError("softmax: need at least 2 logits");
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
  double m = logits.maxCoeff();
  Vec e(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) e[i] = std::exp(logits[i] - m);
  return e / e.sum();
}

double log_loss(const Vec& probs, int y) {
  if (y < 0 || y >= probs.size())
    throw std::invalid_argument("log_loss: label " + std::to_string(y) + " out of range");
  double p = probs[y];
  if (p < kProbFloor) p = kProbFloor;
  return -std::log(p);
}

double mse_loss(double score, double target) {
  if (!std::isfinite(score)) throw std::invalid_argument("mse_loss: non-finite score");
  double r = score - target;
  return r * r;
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace poison
