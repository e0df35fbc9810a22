#ifndef COMPTLL_TRAINER_HPP_
#define COMPTLL_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "comptll/dataset.hpp"
#include "comptll/metrics.hpp"
#include "comptll/tensor.hpp"
#include "comptll/unet.hpp"

namespace comptll {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 5;
  double learning_rate = 1e-3;
  double loss_mix = 0.5;  // weight of BCE; the rest goes to soft-Dice
  std::uint64_t seed = 42;
  // last.ctlu, best.ctlu, train_state.bin and metrics.jsonl land here. Empty
  // disables all file output.
  std::filesystem::path checkpoint_dir;
  bool resume = false;
  PostProcessOptions post;

  void validate() const;
};

// loss_mix * BCE + (1 - loss_mix) * (1 - soft-Dice), soft-Dice smoothed by 1.
// Throws DomainError on a shape mismatch.
ad::Tensor loss(const ad::Tensor& pred, const ad::Tensor& target, double loss_mix);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments per trainable tensor, in UNetParams order.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update on a flat parameter; `t` is the 1-based step.
// A non-finite gradient throws DomainError naming `what` and the index.
void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v, std::uint64_t t, double lr,
                 const AdamOptions& opts = {}, const std::string& what = "param");

// Applies adam_update to every trainable tensor using its accumulated
// gradient (tensors without a gradient see a zero gradient).
void adam_step(UNetParams& params, AdamState& state, double lr,
               const AdamOptions& opts = {});

struct EpochLog {
  int epoch = 0;  // 1-based
  double loss = 0;
  double dice = 0;  // percentages, validation split after post-processing
  double iou = 0;
  double wall_ms = 0;
};

struct EvalSummary {
  double dice = 0;
  double iou = 0;
  std::vector<SegReport> per_image;
};

// Eval-mode prediction projected back to each page's resolution and
// post-processed; mean per-image DICE and IoU.
EvalSummary evaluate(UNetParams& params, const std::vector<Sample>& samples,
                     const PostProcessOptions& post = {});

// Predicts a full-resolution probability map for one sample.
ProbMap predict_sample(UNetParams& params, const Sample& sample);

struct TrainResult {
  std::vector<EpochLog> log;
  double best_dice = -1;
  int best_epoch = 0;
};

// Seeded mini-batch training. Epoch e shuffles with mix_seed(seed, e); the
// last partial batch is kept. With resume set and a saved state in
// checkpoint_dir, params and optimizer state are restored and training
// continues after the last completed epoch.
TrainResult train(UNetParams& params, const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

std::string to_json_line(const EpochLog& row);

}  // namespace comptll

#endif  // COMPTLL_TRAINER_HPP_
