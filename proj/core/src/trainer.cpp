#include "comptll/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "binio.hpp"
#include "comptll/coeff_plane.hpp"
#include "comptll/error.hpp"
#include "comptll/ops.hpp"
#include "comptll/rng.hpp"
#include "json.hpp"

namespace comptll {
namespace {

constexpr const char* kStateMagic = "CTLO";
constexpr std::uint8_t kStateVersion = 1;

struct Progress {
  int epoch = 0;  // last completed
  double best_dice = -1;
  int best_epoch = 0;
};

std::vector<std::uint8_t> serialize_state(const UNetParams& params, const AdamState& st,
                                          const Progress& pr) {
  binio::Writer w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kStateMagic), 4});
  w.u8(kStateVersion);
  w.u32(static_cast<std::uint32_t>(pr.epoch));
  w.u64(st.step);
  w.f64(pr.best_dice);
  w.u32(static_cast<std::uint32_t>(pr.best_epoch));
  w.u32(static_cast<std::uint32_t>(st.m.size()));
  std::size_t k = 0;
  for (const auto& t : params.tensors) {
    if (!t.trainable) continue;
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(st.m[k].size()));
    for (float x : st.m[k]) w.f32(x);
    for (float x : st.v[k]) w.f32(x);
    ++k;
  }
  return w.take();
}

void deserialize_state(std::span<const std::uint8_t> bytes, const UNetParams& params,
                       AdamState& st, Progress& pr) {
  binio::Reader r(bytes);
  r.expect_magic(kStateMagic);
  if (r.u8() != kStateVersion) {
    throw FormatError(FormatError::Kind::kUnsupported, 4, "unknown optimizer state version");
  }
  pr.epoch = static_cast<int>(r.u32());
  st.step = r.u64();
  pr.best_dice = r.f64();
  pr.best_epoch = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  st.m.clear();
  st.v.clear();
  for (const auto& t : params.tensors) {
    if (!t.trainable) continue;
    if (st.m.size() == count) break;
    const std::size_t at = r.pos();
    if (r.str() != t.name) {
      throw FormatError(FormatError::Kind::kMalformed, at,
                        "optimizer state does not match model tensor " + t.name);
    }
    const std::uint32_t n = r.u32();
    if (n != t.tensor.numel()) {
      throw FormatError(FormatError::Kind::kSizeMismatch, at, "moment size mismatch for " + t.name);
    }
    r.need(static_cast<std::size_t>(n) * 8);
    std::vector<float> m(n), v(n);
    for (auto& x : m) x = r.f32();
    for (auto& x : v) x = r.f32();
    st.m.push_back(std::move(m));
    st.v.push_back(std::move(v));
  }
  std::size_t trainable = 0;
  for (const auto& t : params.tensors) trainable += t.trainable ? 1 : 0;
  if (count != trainable || st.m.size() != trainable) {
    throw FormatError(FormatError::Kind::kSizeMismatch, r.pos(), "optimizer state tensor count");
  }
  if (!r.done()) {
    throw FormatError(FormatError::Kind::kSizeMismatch, r.pos(), "trailing bytes in optimizer state");
  }
}

void init_state(const UNetParams& params, AdamState& st) {
  st = {};
  for (const auto& t : params.tensors) {
    if (!t.trainable) continue;
    st.m.emplace_back(t.tensor.numel(), 0.0f);
    st.v.emplace_back(t.tensor.numel(), 0.0f);
  }
}

ad::Tensor stack(const std::vector<const Sample*>& batch, bool targets) {
  const int side = batch.front()->side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::vector<float> data(plane * batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    float* dst = data.data() + i * plane;
    if (targets) {
      const auto& px = batch[i]->target.pixels;
      for (std::size_t j = 0; j < plane; ++j) dst[j] = px[j] ? 1.0f : 0.0f;
    } else {
      std::copy(batch[i]->input.begin(), batch[i]->input.end(), dst);
    }
  }
  return ad::Tensor::from({static_cast<int>(batch.size()), 1, side, side}, std::move(data));
}

void append_line(const std::filesystem::path& path, const std::string& line, bool truncate) {
  std::ofstream out(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out << line << '\n';
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("learning_rate must be positive");
  }
  if (!(loss_mix >= 0.0 && loss_mix <= 1.0)) throw DomainError("loss_mix must be in [0,1]");
}

ad::Tensor loss(const ad::Tensor& pred, const ad::Tensor& target, double loss_mix) {
  if (!(loss_mix >= 0.0 && loss_mix <= 1.0)) throw DomainError("loss_mix must be in [0,1]");
  if (pred.shape() != target.shape()) {
    throw DomainError("loss: prediction " + ad::to_string(pred.shape()) + " vs target " +
                      ad::to_string(target.shape()));
  }
  const ad::Tensor bce = ad::binary_cross_entropy(pred, target);
  const ad::Tensor dice = ad::dice_loss(pred, target);
  return ad::add(ad::scale(bce, static_cast<float>(loss_mix)),
                 ad::scale(dice, static_cast<float>(1.0 - loss_mix)));
}

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, std::uint64_t t, double lr, const AdamOptions& opts,
                 const std::string& what) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DomainError("adam: state size mismatch for " + what);
  }
  if (t == 0) throw DomainError("adam: step count starts at 1");
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) {
      throw DomainError("adam: non-finite gradient " + std::to_string(g) + " in " + what +
                        "[" + std::to_string(i) + "] at step " + std::to_string(t));
    }
    const double mi = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
    const double vi = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + opts.eps);
    param[i] = static_cast<float>(param[i] - update);
  }
}

void adam_step(UNetParams& params, AdamState& state, double lr, const AdamOptions& opts) {
  if (state.m.empty()) init_state(params, state);
  ++state.step;
  std::size_t k = 0;
  std::vector<float> zeros;
  for (auto& t : params.tensors) {
    if (!t.trainable) continue;
    if (k >= state.m.size() || state.m[k].size() != t.tensor.numel()) {
      throw DomainError("adam: optimizer state does not match " + t.name);
    }
    std::span<const float> g = t.tensor.grad();
    if (g.empty()) {
      zeros.assign(t.tensor.numel(), 0.0f);
      g = zeros;
    }
    adam_update(t.tensor.data(), g, state.m[k], state.v[k], state.step, lr, opts, t.name);
    ++k;
  }
}

ProbMap predict_sample(UNetParams& params, const Sample& sample) {
  CoeffPlane plane;
  plane.side = sample.side;
  plane.values = sample.input;
  const auto prob = predict_plane(params, plane);
  ProbMap map;
  map.width = sample.mask.width;
  map.height = sample.mask.height;
  map.values = project_to_image(prob, sample.side, map.width, map.height);
  return map;
}

EvalSummary evaluate(UNetParams& params, const std::vector<Sample>& samples,
                     const PostProcessOptions& post) {
  EvalSummary out;
  if (samples.empty()) return out;
  for (const auto& s : samples) {
    const BinaryMask pred = post_process(predict_sample(params, s), post);
    const SegReport r = report(confusion(pred, s.mask));
    out.dice += r.dice;
    out.iou += r.iou;
    out.per_image.push_back(r);
  }
  out.dice /= static_cast<double>(samples.size());
  out.iou /= static_cast<double>(samples.size());
  return out;
}

std::string to_json_line(const EpochLog& row) {
  const nlohmann::json j = {{"epoch", row.epoch},
                            {"loss", row.loss},
                            {"dice", row.dice},
                            {"iou", row.iou},
                            {"wall_ms", row.wall_ms}};
  return j.dump();
}

TrainResult train(UNetParams& params, const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (data.train.empty()) throw DomainError("train: empty training split");
  if (data.val.empty()) throw DomainError("train: empty validation split");
  if (data.side != params.config.input_side) {
    throw DomainError("train: dataset side " + std::to_string(data.side) +
                      " does not match model input side " +
                      std::to_string(params.config.input_side));
  }

  const auto& dir = config.checkpoint_dir;
  const bool persist = !dir.empty();
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }

  AdamState state;
  Progress progress;
  TrainResult result;
  if (persist && config.resume && std::filesystem::exists(dir / "train_state.bin")) {
    UNetParams restored = load_checkpoint(dir / "last.ctlu");
    if (!(restored.config == params.config)) {
      throw DomainError("resume: checkpoint config differs from the requested model");
    }
    params = std::move(restored);
    deserialize_state(read_file(dir / "train_state.bin"), params, state, progress);
    result.best_dice = progress.best_dice;
    result.best_epoch = progress.best_epoch;
  } else {
    init_state(params, state);
    if (persist) std::ofstream(dir / "metrics.jsonl", std::ios::trunc);
  }

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  for (int epoch = progress.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(epoch_seed);
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    std::uint64_t step = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.train[order[i]]);
      const ad::Tensor x = stack(batch, false);
      const ad::Tensor t = stack(batch, true);
      const ad::Tensor pred = forward(params, x, ad::Mode::kTrain, mix_seed(epoch_seed, step++));
      ad::Tensor l = loss(pred, t, config.loss_mix);
      const double lv = l.item();
      if (!std::isfinite(lv)) {
        throw DomainError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += lv * static_cast<double>(batch.size());
      params.zero_grad();
      l.backward();
      adam_step(params, state, config.learning_rate);
    }
    params.zero_grad();

    const EvalSummary val = evaluate(params, data.val, config.post);
    EpochLog row;
    row.epoch = epoch;
    row.loss = loss_sum / static_cast<double>(n);
    row.dice = val.dice;
    row.iou = val.iou;
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0).count();

    const bool improved = row.dice > result.best_dice;
    if (improved) {
      result.best_dice = row.dice;
      result.best_epoch = epoch;
    }
    progress = {epoch, result.best_dice, result.best_epoch};
    if (persist) {
      if (improved) save_checkpoint(params, dir / "best.ctlu");
      save_checkpoint(params, dir / "last.ctlu");
      write_file(dir / "train_state.bin", serialize_state(params, state, progress));
      append_line(dir / "metrics.jsonl", to_json_line(row), false);
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace comptll
