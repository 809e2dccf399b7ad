#include "poison/dataset.hpp"

#include <cstring>

#include "poison/error.hpp"

namespace poison {

void Dataset::validate() const {
  if (static_cast<int>(y.size()) != size())
    throw ShapeError("Dataset: label count " + std::to_string(y.size()) +
                     " != row count " + std::to_string(size()));
  if (num_classes < 2) throw std::invalid_argument("Dataset: need at least 2 classes");
  if (!X.allFinite()) throw std::invalid_argument("Dataset: non-finite feature values");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= num_classes)
      throw std::invalid_argument("Dataset: label " + std::to_string(y[i]) +
                                  " out of range at row " + std::to_string(i));
  }
}

Dataset Dataset::with_row(const Vec& x, int label) const {
  if (x.size() != X.cols()) throw ShapeError("Dataset::with_row: feature length mismatch");
  Dataset out;
  out.num_classes = num_classes;
  out.X.resize(X.rows() + 1, X.cols());
  out.X.topRows(X.rows()) = X;
  out.X.row(X.rows()) = x.transpose();
  out.y = y;
  out.y.push_back(label);
  return out;
}

Dataset Dataset::select(const std::vector<int>& idx) const {
  Dataset out;
  out.num_classes = num_classes;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
  out.y.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
    out.y[k] = y[idx[k]];
  }
  return out;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  std::int64_t rows = X.rows(), cols = X.cols();
  mix_bytes(&rows, sizeof rows);
  mix_bytes(&cols, sizeof cols);
  mix_bytes(X.data(), sizeof(double) * static_cast<std::size_t>(X.size()));
  mix_bytes(y.data(), sizeof(int) * y.size());
  mix_bytes(&num_classes, sizeof num_classes);
  return h;
}

}  // namespace poison
