#pragma once

#include <cstdint>
#include <vector>

#include "poison/losses.hpp"

namespace poison {

// Feature matrix (row per sample) plus class labels. Duplicate rows are
// allowed; labels must lie in [0, num_classes).
struct Dataset {
  Mat X;
  std::vector<int> y;
  int num_classes = 0;

  int size() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }

  // Throws ShapeError / std::invalid_argument when invariants are broken.
  void validate() const;

  // Copy with one extra sample appended (used to splice in a poisoning point).
  Dataset with_row(const Vec& x, int label) const;

  // Subset by row indices, labels preserved.
  Dataset select(const std::vector<int>& idx) const;

  // FNV-1a over the raw feature/label bytes; identifies a dataset in
  // trajectory metadata and manifests.
  std::uint64_t fingerprint() const;
};

}  // namespace poison
