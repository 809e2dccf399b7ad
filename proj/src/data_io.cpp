#include "poison/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "poison/error.hpp"

namespace poison {

namespace {

// Fixed stream ids so every generated artifact is replayable from its seed.
constexpr std::uint64_t kStreamSplit = 30;
constexpr std::uint64_t kStream3Class = 31;
constexpr std::uint64_t kStreamBinaryTask = 32;
constexpr std::uint64_t kStreamDigitTask = 33;

double parse_double(const std::string& cell, long line) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ParseError("unparsable numeric cell '" + cell + "'", line);
  return v;
}

int parse_label(const std::string& cell, long line) {
  double v = parse_double(cell, line);
  double rounded = std::nearbyint(v);
  if (!(std::abs(v - rounded) < 1e-9) || rounded < 0)
    throw ParseError("label cell '" + cell + "' is not a non-negative integer", line);
  return static_cast<int>(rounded);
}

}  // namespace

Dataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  long line_no = 0;
  int expected_cols = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, schema.delimiter)) cells.push_back(cell);
    if (!line.empty() && line.back() == schema.delimiter) cells.push_back("");
    if (expected_cols < 0) {
      expected_cols = static_cast<int>(cells.size());
      if (expected_cols < 2) throw ParseError("need at least one feature and a label", line_no);
      int lc = schema.label_column < 0 ? expected_cols - 1 : schema.label_column;
      if (lc >= expected_cols)
        throw ParseError("label column " + std::to_string(lc) + " out of range for " +
                             std::to_string(expected_cols) + " columns",
                         line_no);
    }
    if (static_cast<int>(cells.size()) != expected_cols)
      throw ParseError("ragged row: got " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(expected_cols),
                       line_no);
    int lc = schema.label_column < 0 ? expected_cols - 1 : schema.label_column;
    std::vector<double> feat;
    feat.reserve(expected_cols - 1);
    for (int j = 0; j < expected_cols; ++j) {
      if (j == lc) {
        labels.push_back(parse_label(cells[j], line_no));
      } else {
        feat.push_back(parse_double(cells[j], line_no));
      }
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw ParseError("no data rows in " + path.string());
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) d.X(i, j) = rows[i][j];
  d.y = std::move(labels);
  int max_label = *std::max_element(d.y.begin(), d.y.end());
  d.num_classes = schema.num_classes > 0 ? schema.num_classes : std::max(2, max_label + 1);
  d.validate();
  return d;
}

void save_delimited(const std::filesystem::path& path, const Dataset& data,
                    const DelimitedSchema& schema) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_delimited: cannot open " + path.string());
  const int cols = data.dim() + 1;
  const int lc = schema.label_column < 0 ? cols - 1 : schema.label_column;
  if (lc >= cols) throw std::invalid_argument("save_delimited: label column out of range");
  char buf[64];
  for (int i = 0; i < data.size(); ++i) {
    int feat_idx = 0;
    for (int j = 0; j < cols; ++j) {
      if (j > 0) os << schema.delimiter;
      if (j == lc) {
        os << data.y[i];
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", data.X(i, feat_idx++));
        os << buf;
      }
    }
    os << '\n';
  }
}

namespace {

std::uint32_t read_u32_be(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("truncated IDX header while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw ParseError("cannot open " + images_path.string());
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw ParseError("cannot open " + labels_path.string());

  if (read_u32_be(imgs, "image magic") != 0x00000803u)
    throw ParseError("bad IDX image magic in " + images_path.string());
  std::uint32_t n_img = read_u32_be(imgs, "image count");
  std::uint32_t rows = read_u32_be(imgs, "row count");
  std::uint32_t cols = read_u32_be(imgs, "column count");

  if (read_u32_be(labs, "label magic") != 0x00000801u)
    throw ParseError("bad IDX label magic in " + labels_path.string());
  std::uint32_t n_lab = read_u32_be(labs, "label count");
  if (n_img != n_lab)
    throw ParseError("IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                     std::to_string(n_lab) + " labels");
  if (n_img == 0) throw ParseError("empty IDX files");

  const std::size_t d = std::size_t(rows) * cols;
  Dataset data;
  data.X.resize(n_img, static_cast<Eigen::Index>(d));
  data.y.resize(n_img);
  std::vector<unsigned char> pixel_row(d);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    imgs.read(reinterpret_cast<char*>(pixel_row.data()), static_cast<std::streamsize>(d));
    if (!imgs) throw ParseError("truncated IDX pixel data at image " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j)
      data.X(i, static_cast<Eigen::Index>(j)) = pixel_row[j] / 255.0;
    int lab = labs.get();
    if (lab == EOF) throw ParseError("truncated IDX label data at image " + std::to_string(i));
    data.y[i] = lab;
  }
  int max_label = *std::max_element(data.y.begin(), data.y.end());
  data.num_classes = std::max(2, max_label + 1);
  data.validate();
  return data;
}

Dataset synth_3class(int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("synth_3class: n_per_class must be >= 1");
  const double means[3][2] = {{0.0, 0.0}, {2.0, 0.0}, {1.0, 1.8}};
  const double sigma = 0.5;
  RngStream rng(seed, kStream3Class);
  Dataset d;
  d.num_classes = 3;
  d.X.resize(3 * n_per_class, 2);
  d.y.resize(3 * n_per_class);
  int row = 0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      d.X(row, 0) = means[c][0] + sigma * rng.normal();
      d.X(row, 1) = means[c][1] + sigma * rng.normal();
      d.y[row] = c;
    }
  }
  return d;
}

Dataset synth_binary_task(int n, int d, std::uint64_t seed, double separation) {
  if (n < 1 || d < 2) throw std::invalid_argument("synth_binary_task: bad size");
  RngStream rng(seed, kStreamBinaryTask);
  // A minority of features carry class signal; the rest are shared noise,
  // which keeps the task learnable but imperfect at small training sizes.
  const int n_signal = std::max(4, d / 6);
  Vec rate0(d), rate1(d);
  for (int j = 0; j < d; ++j) {
    double base = rng.uniform(0.08, 0.6);
    double delta = j < n_signal ? separation * rng.uniform(0.5, 1.0) : 0.0;
    if (j % 2 == 1) delta = -delta;
    rate0[j] = std::clamp(base - delta / 2.0, 0.02, 0.98);
    rate1[j] = std::clamp(base + delta / 2.0, 0.02, 0.98);
  }
  Dataset data;
  data.num_classes = 2;
  data.X.resize(n, d);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    int y = rng.next_below(2) == 0 ? 0 : 1;
    data.y[i] = y;
    const Vec& r = y == 0 ? rate0 : rate1;
    for (int j = 0; j < d; ++j) data.X(i, j) = rng.next_double() < r[j] ? 1.0 : 0.0;
  }
  return data;
}

namespace {

// 3x3 box blur on an 8x8 grid, edges clamped.
void blur8(Vec& img) {
  Vec out(64);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      double acc = 0.0;
      int cnt = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr > 7 || cc < 0 || cc > 7) continue;
          acc += img[rr * 8 + cc];
          ++cnt;
        }
      }
      out[r * 8 + c] = acc / cnt;
    }
  }
  img = out;
}

void normalize01(Vec& img) {
  double lo = img.minCoeff(), hi = img.maxCoeff();
  if (hi - lo < 1e-12) {
    img.setConstant(0.5);
  } else {
    img = (img.array() - lo) / (hi - lo);
  }
}

}  // namespace

Dataset synth_digit_task(int n, std::uint64_t seed, double noise) {
  if (n < 1) throw std::invalid_argument("synth_digit_task: n must be >= 1");
  RngStream rng(seed, kStreamDigitTask);
  // Binary masks blurred into smooth prototypes. Class 8 reuses the class-3
  // mask with a few flipped pixels so the pair overlaps heavily.
  std::vector<Vec> masks(10);
  for (int c = 0; c < 10; ++c) {
    if (c == 8) {
      masks[8] = masks[3];
      for (int k = 0; k < 8; ++k) {
        int pix = static_cast<int>(rng.next_below(64));
        masks[8][pix] = 1.0 - masks[8][pix];
      }
      continue;
    }
    masks[c].resize(64);
    for (int j = 0; j < 64; ++j) masks[c][j] = rng.next_below(2) ? 1.0 : 0.0;
  }
  std::vector<Vec> prototypes(10);
  for (int c = 0; c < 10; ++c) {
    prototypes[c] = masks[c];
    blur8(prototypes[c]);
    blur8(prototypes[c]);
    normalize01(prototypes[c]);
  }
  Dataset data;
  data.num_classes = 10;
  data.X.resize(n, 64);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.next_below(10));
    data.y[i] = c;
    for (int j = 0; j < 64; ++j)
      data.X(i, j) = std::clamp(prototypes[c][j] + noise * rng.normal(), 0.0, 1.0);
  }
  return data;
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& data, const SplitPlan& plan) {
  if (plan.n_train < 0 || plan.n_val < 0 || plan.n_test < 0 ||
      plan.n_train + plan.n_val + plan.n_test > data.size())
    throw std::invalid_argument("split: infeasible plan for dataset of " +
                                std::to_string(data.size()) + " rows");
  std::vector<int> idx(data.size());
  for (int i = 0; i < data.size(); ++i) idx[i] = i;
  RngStream rng(plan.seed, kStreamSplit);
  for (int i = data.size() - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  auto take = [&](int offset, int count) {
    std::vector<int> part(idx.begin() + offset, idx.begin() + offset + count);
    return data.select(part);
  };
  return {take(0, plan.n_train), take(plan.n_train, plan.n_val),
          take(plan.n_train + plan.n_val, plan.n_test)};
}

Dataset filter_classes(const Dataset& data, const std::vector<int>& keep, bool remap) {
  if (keep.empty()) throw std::invalid_argument("filter_classes: empty keep list");
  std::vector<int> new_label(data.num_classes, -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= data.num_classes)
      throw std::invalid_argument("filter_classes: class " + std::to_string(keep[k]) +
                                  " out of range");
    new_label[keep[k]] = remap ? static_cast<int>(k) : keep[k];
  }
  std::vector<int> rows;
  std::vector<bool> seen(data.num_classes, false);
  for (int i = 0; i < data.size(); ++i) {
    if (new_label[data.y[i]] >= 0) {
      rows.push_back(i);
      seen[data.y[i]] = true;
    }
  }
  for (int c : keep)
    if (!seen[c]) std::cerr << "filter_classes: warning: kept class " << c << " has no samples\n";
  Dataset out = data.select(rows);
  for (int& label : out.y) label = new_label[label];
  out.num_classes = remap ? static_cast<int>(keep.size()) : data.num_classes;
  return out;
}

Dataset relabel(const Dataset& data, const RelabelMap& map) {
  std::vector<int> target(data.num_classes, -1);
  for (auto [from, to] : map.pairs) {
    if (from < 0 || from >= data.num_classes || to < 0 || to >= data.num_classes)
      throw std::invalid_argument("relabel: class out of range in map");
    target[from] = to;
  }
  std::vector<int> rows;
  for (int i = 0; i < data.size(); ++i)
    if (target[data.y[i]] >= 0 || map.keep_unlisted) rows.push_back(i);
  Dataset out = data.select(rows);
  for (int& label : out.y)
    if (target[label] >= 0) label = target[label];
  return out;
}

}  // namespace poison
