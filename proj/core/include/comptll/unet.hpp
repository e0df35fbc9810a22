#ifndef COMPTLL_UNET_HPP_
#define COMPTLL_UNET_HPP_

// Encoder-decoder segmentation network over single-channel coefficient
// planes. Default layer plan (depth 4, base 64):
//
//   enc s (s = 0..3): [conv -> BN -> spatial dropout -> ReLU] x 2, then 2x2 pool
//                     channels 64, 128, 256, 512; first conv 7x7, rest 3x3
//   bottleneck:       same block at 1024 channels
//   dec s (s = 3..0): 2x2 stride-2 transposed conv halving channels,
//                     concat [skip, up], block at the skip's channel count
//   head:             1x1 conv to one channel, sigmoid
//
// which gives 19 convolutions and 4 transposed convolutions.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "comptll/coeff_plane.hpp"
#include "comptll/tensor.hpp"

namespace comptll {

enum class PoolMode : std::uint8_t { kAverage = 0, kMax = 1 };

struct UNetConfig {
  int input_side = 512;
  int base_channels = 64;
  int depth = 4;
  PoolMode pool_mode = PoolMode::kAverage;
  double dropout_rate = 0.1;
  double width_mult = 1.0;
  int first_kernel = 7;

  // Channel count of the first encoder stage after applying width_mult.
  int stage_channels(int stage) const;
  // Throws DomainError when the plan cannot be built.
  void validate() const;

  bool operator==(const UNetConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
  bool trainable = true;  // false for batch-norm running statistics
};

struct LayerCounts {
  int convs = 0;
  int transposed_convs = 0;
};

struct UNetParams {
  UNetConfig config;
  std::vector<NamedTensor> tensors;

  ad::Tensor& get(const std::string& name);
  const ad::Tensor& get(const std::string& name) const;
  std::size_t trainable_count() const;  // number of trainable scalars
  LayerCounts layer_counts() const;
  void zero_grad();
};

// He-uniform weights from `seed`, zero biases, unit BN scale.
UNetParams build(const UNetConfig& config, std::uint64_t seed);

// x: [N, 1, side, side]. Returns sigmoid probabilities of the same shape.
// Dropout masks derive from `dropout_seed` in train mode.
ad::Tensor forward(UNetParams& params, const ad::Tensor& x, ad::Mode mode,
                   std::uint64_t dropout_seed = 0);

// Double-precision copy of a parameter set. Runs the same graph as forward();
// meant for numerical checks, not training.
struct UNetParams64 {
  struct Entry {
    std::string name;
    ad::BasicTensor<double> tensor;
    bool trainable = true;
  };
  UNetConfig config;
  std::vector<Entry> tensors;

  ad::BasicTensor<double>& get(const std::string& name);
};

UNetParams64 to_double(const UNetParams& params);
ad::BasicTensor<double> forward(UNetParams64& params, const ad::BasicTensor<double>& x,
                                ad::Mode mode, std::uint64_t dropout_seed = 0);

// Eval-mode inference on one plane without recording gradients. Returns
// side * side probabilities.
std::vector<float> predict_plane(UNetParams& params, const CoeffPlane& plane);

// Checkpoint: "CTLU", version, config block, then named f32 tensors.
void save_checkpoint(const UNetParams& params, const std::filesystem::path& path);
UNetParams load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const UNetParams& params);
UNetParams deserialize_checkpoint(std::span<const std::uint8_t> bytes);

// splitmix64 mixing used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace comptll

#endif  // COMPTLL_UNET_HPP_
