#pragma once

#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "poison/dataset.hpp"
#include "poison/rng.hpp"

namespace poison {

// Delimited-text schema: which column holds the class label, what separates
// fields, and an optional fixed class count (otherwise max label + 1).
struct DelimitedSchema {
  int label_column = -1;  // -1 means last column
  char delimiter = ',';
  int num_classes = 0;  // 0 = infer
};

Dataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema = {});

// Full-precision writer; load_delimited(save_delimited(D)) reproduces D
// exactly. Label goes to the schema's column position.
void save_delimited(const std::filesystem::path& path, const Dataset& data,
                    const DelimitedSchema& schema = {});

// IDX image/label pair (big-endian, magic 0x803 / 0x801). Pixels are divided
// by 255 so features land in [0, 1].
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Three isotropic Gaussian blobs (sigma 0.5) at (0,0), (2,0), (1,1.8).
Dataset synth_3class(int n_per_class, std::uint64_t seed);

// Binary-feature two-class task in the spirit of bag-of-words spam data:
// class-conditional Bernoulli feature rates, `separation` controlling how far
// the per-class rates are pulled apart. One call builds the whole population;
// experiments then split it per repetition seed.
Dataset synth_binary_task(int n, int d, std::uint64_t seed, double separation = 0.35);

// Ten-class 8x8 grayscale "digit" task: smooth per-class prototypes plus
// pixel noise, with classes 3 and 8 built as near duplicates so they confuse
// the way the real digits do. Features in [0, 1], d = 64.
Dataset synth_digit_task(int n, std::uint64_t seed, double noise = 0.25);

struct SplitPlan {
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  std::uint64_t seed = 0;
};

// Seeded uniform shuffle, then disjoint slices in (train, val, test) order.
std::tuple<Dataset, Dataset, Dataset> split(const Dataset& data, const SplitPlan& plan);

// Keep only the listed classes; with remap, labels become 0..K'-1 in
// keep-order. A kept class with no samples warns on stderr but is not fatal.
Dataset filter_classes(const Dataset& data, const std::vector<int>& keep, bool remap = true);

struct RelabelMap {
  std::vector<std::pair<int, int>> pairs;  // from -> to
  bool keep_unlisted = false;              // drop rows of unlisted classes otherwise
};

// Rewrite labels per the map; features untouched. Used to build the
// attacker's desired-label validation set D_val'.
Dataset relabel(const Dataset& data, const RelabelMap& map);

}  // namespace poison
