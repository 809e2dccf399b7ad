#include "poison/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "poison/error.hpp"

namespace poison {

Vec initial_params(const LearnerSpec& spec, const TrainConfig& cfg) {
  if (cfg.init_w) {
    detail::check_param(spec, *cfg.init_w);
    return *cfg.init_w;
  }
  RngStream rng(cfg.init_seed, cfg.init_stream);
  return init_params(spec, rng);
}

Vec gd_loop(const std::function<Vec(const Vec&)>& grad, Vec w, double eta, int iterations,
            double divergence_norm, std::vector<Vec>* trajectory) {
  if (iterations < 0) throw std::invalid_argument("gd_loop: negative iteration count");
  if (!(eta > 0.0)) throw std::invalid_argument("gd_loop: learning rate must be positive");
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back(w);
  }
  for (int t = 0; t < iterations; ++t) {
    Vec g = grad(w);
    if (!g.allFinite()) throw DivergenceError("gd_loop: non-finite gradient", t);
    w -= eta * g;
    if (!w.allFinite() || w.cwiseAbs().maxCoeff() > divergence_norm)
      throw DivergenceError("gd_loop: parameter norm exceeded divergence bound", t);
    if (trajectory) trajectory->push_back(w);
  }
  return w;
}

TrainResult gd_train(const LearnerSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  spec.validate();
  data.validate();
  if (cfg.store_trajectory) {
    std::size_t bytes = std::size_t(cfg.iterations + 1) * std::size_t(spec.param_count()) * 8;
    if (bytes > cfg.trajectory_budget_bytes)
      throw std::runtime_error(
          "gd_train: stored trajectory would need " + std::to_string(bytes) +
          " bytes, over the budget; use a reversal mode instead of storing");
  }
  Vec w0 = initial_params(spec, cfg);
  TrainResult result;
  std::vector<Vec> checkpoints;
  result.w = gd_loop([&](const Vec& w) { return grad_w(spec, w, data); }, std::move(w0), cfg.eta,
                     cfg.iterations, cfg.divergence_norm,
                     cfg.store_trajectory ? &checkpoints : nullptr);
  if (cfg.store_trajectory) {
    Trajectory traj;
    traj.checkpoints = std::move(checkpoints);
    traj.eta = cfg.eta;
    traj.iterations = cfg.iterations;
    traj.dataset_fingerprint = data.fingerprint();
    result.trajectory = std::move(traj);
  }
  return result;
}

double classification_error(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  if (data.size() < 1) throw std::invalid_argument("classification_error: empty dataset");
  Prediction pred = predict(spec, w, data.X);
  int wrong = 0;
  for (int i = 0; i < data.size(); ++i)
    if (pred.labels[i] != data.y[i]) ++wrong;
  return double(wrong) / data.size();
}

Confusion confusion(const LearnerSpec& spec, const Vec& w, const Dataset& data) {
  if (data.size() < 1) throw std::invalid_argument("confusion: empty dataset");
  const int K = spec.class_count;
  Confusion c;
  c.counts = Eigen::MatrixXi::Zero(K, K);
  Prediction pred = predict(spec, w, data.X);
  for (int i = 0; i < data.size(); ++i) c.counts(data.y[i], pred.labels[i]) += 1;
  c.per_class_error = Vec::Zero(K);
  c.empty_class.assign(K, false);
  for (int k = 0; k < K; ++k) {
    int row_sum = c.counts.row(k).sum();
    if (row_sum == 0) {
      c.empty_class[k] = true;
    } else {
      c.per_class_error[k] = 1.0 - double(c.counts(k, k)) / row_sum;
    }
  }
  return c;
}

namespace {

constexpr char kMagic[4] = {'B', 'G', 'C', 'K'};

void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void put_f64_le(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LearnerSpec& spec, const Vec& w) {
  detail::check_param(spec, w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, 4);
  put_u32_le(os, static_cast<std::uint32_t>(spec.kind));
  put_u32_le(os, static_cast<std::uint32_t>(spec.input_dim));
  put_u32_le(os, static_cast<std::uint32_t>(spec.class_count));
  for (Eigen::Index i = 0; i < w.size(); ++i) put_f64_le(os, w[i]);
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Vec load_checkpoint(const std::filesystem::path& path, const LearnerSpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("load_checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("load_checkpoint: bad magic in " + path.string());
  auto kind = static_cast<LearnerKind>(get_u32_le(is));
  auto d = static_cast<int>(get_u32_le(is));
  auto K = static_cast<int>(get_u32_le(is));
  if (kind != spec.kind || d != spec.input_dim || K != spec.class_count)
    throw ParseError("load_checkpoint: header does not match the expected learner spec");
  Vec w(spec.param_count());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = get_f64_le(is);
  if (!is) throw ParseError("load_checkpoint: truncated parameter data");
  return w;
}

}  // namespace poison
