#include "comptll/unet.hpp"

#include <cmath>
#include <random>
#include <type_traits>
#include <utility>

#include "comptll/error.hpp"
#include "comptll/ops.hpp"

namespace comptll {
namespace {

using ad::Tensor;

std::string stage_name(const char* kind, int s) { return kind + std::to_string(s); }

class ParamBuilder {
 public:
  ParamBuilder(UNetParams& p, std::uint64_t seed) : p_(p), rng_(seed) {}

  void conv(const std::string& name, int in, int out, int k) {
    weight(name + ".weight", {out, in, k, k}, in * k * k);
    p_.tensors.push_back({name + ".bias", Tensor::zeros({out}, true), true});
  }

  void transposed(const std::string& name, int in, int out, int k) {
    weight(name + ".weight", {in, out, k, k}, in * k * k);
    p_.tensors.push_back({name + ".bias", Tensor::zeros({out}, true), true});
  }

  void batch_norm(const std::string& name, int ch) {
    p_.tensors.push_back({name + ".gamma", Tensor::full({ch}, 1.0f, true), true});
    p_.tensors.push_back({name + ".beta", Tensor::zeros({ch}, true), true});
    p_.tensors.push_back({name + ".running_mean", Tensor::zeros({ch}), false});
    p_.tensors.push_back({name + ".running_var", Tensor::full({ch}, 1.0f), false});
  }

  void block(const std::string& name, int in, int out, int first_k) {
    conv(name + ".conv1", in, out, first_k);
    batch_norm(name + ".bn1", out);
    conv(name + ".conv2", out, out, 3);
    batch_norm(name + ".bn2", out);
  }

 private:
  void weight(const std::string& name, ad::Shape shape, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    auto t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      v = static_cast<float>((2.0 * u - 1.0) * bound);
    }
    p_.tensors.push_back({name, t, true});
  }

  UNetParams& p_;
  std::mt19937_64 rng_;
};

template <typename P>
struct Forward {
  using T = typename std::remove_cvref_t<decltype(std::declval<P&>().get(""))>::value_type;
  using BT = ad::BasicTensor<T>;

  P& p;
  ad::Mode mode;
  std::uint64_t seed;
  int dropout_index = 0;

  BT conv_bn(const BT& x, const std::string& conv, const std::string& bn) {
    const BT& w = p.get(conv + ".weight");
    BT h = ad::conv2d(x, w, p.get(conv + ".bias"), 1, w.dim(2) / 2);
    h = ad::batch_norm(h, p.get(bn + ".gamma"), p.get(bn + ".beta"),
                       p.get(bn + ".running_mean"), p.get(bn + ".running_var"), mode);
    h = ad::spatial_dropout(h, p.config.dropout_rate,
                            mix_seed(seed, static_cast<std::uint64_t>(dropout_index++)),
                            mode);
    return ad::relu(h);
  }

  BT block(const BT& x, const std::string& name) {
    BT h = conv_bn(x, name + ".conv1", name + ".bn1");
    return conv_bn(h, name + ".conv2", name + ".bn2");
  }

  BT pool(const BT& x) const {
    return p.config.pool_mode == PoolMode::kAverage ? ad::avg_pool2(x) : ad::max_pool2(x);
  }

  BT run(const BT& x) {
    const UNetConfig& c = p.config;
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != c.input_side ||
        x.dim(3) != c.input_side) {
      throw DomainError("forward: expected input [N,1," + std::to_string(c.input_side) +
                        "," + std::to_string(c.input_side) + "], got " +
                        ad::to_string(x.shape()));
    }
    std::vector<BT> skips;
    BT h = x;
    for (int s = 0; s < c.depth; ++s) {
      h = block(h, stage_name("enc", s));
      skips.push_back(h);
      h = pool(h);
    }
    h = block(h, "bottleneck");
    for (int s = c.depth - 1; s >= 0; --s) {
      const std::string name = stage_name("dec", s);
      h = ad::conv_transpose2d(h, p.get(name + ".up.weight"), p.get(name + ".up.bias"), 2, 0);
      h = ad::concat(skips[static_cast<std::size_t>(s)], h);
      skips[static_cast<std::size_t>(s)] = BT();
      h = block(h, name);
    }
    h = ad::conv2d(h, p.get("head.weight"), p.get("head.bias"), 1, 0);
    return ad::sigmoid(h);
  }
};

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

int UNetConfig::stage_channels(int stage) const {
  const auto base = static_cast<int>(std::lround(base_channels * width_mult));
  return base << stage;
}

void UNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw DomainError("depth must be in [1,8]");
  if (input_side < 1 || input_side % (1 << depth) != 0) {
    throw DomainError("input_side " + std::to_string(input_side) +
                      " is not divisible by 2^depth = " + std::to_string(1 << depth));
  }
  if (base_channels * width_mult < 1.0 || stage_channels(0) < 1) {
    throw DomainError("base_channels * width_mult must be >= 1");
  }
  if (first_kernel < 1 || first_kernel % 2 == 0) {
    throw DomainError("first_kernel must be odd");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw DomainError("dropout_rate must be in [0,1)");
  }
}

Tensor& UNetParams::get(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw DomainError("no parameter named " + name);
}

const Tensor& UNetParams::get(const std::string& name) const {
  return const_cast<UNetParams*>(this)->get(name);
}

std::size_t UNetParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (t.trainable) n += t.tensor.numel();
  }
  return n;
}

LayerCounts UNetParams::layer_counts() const {
  LayerCounts c;
  for (const auto& t : tensors) {
    const auto& n = t.name;
    if (!n.ends_with(".weight")) continue;
    if (n.find(".up.") != std::string::npos) {
      ++c.transposed_convs;
    } else {
      ++c.convs;
    }
  }
  return c;
}

void UNetParams::zero_grad() {
  for (auto& t : tensors) t.tensor.zero_grad();
}

UNetParams build(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  UNetParams p;
  p.config = config;
  ParamBuilder b(p, seed);
  int in = 1;
  for (int s = 0; s < config.depth; ++s) {
    const int out = config.stage_channels(s);
    b.block(stage_name("enc", s), in, out, s == 0 ? config.first_kernel : 3);
    in = out;
  }
  b.block("bottleneck", in, config.stage_channels(config.depth), 3);
  in = config.stage_channels(config.depth);
  for (int s = config.depth - 1; s >= 0; --s) {
    const int out = config.stage_channels(s);
    b.transposed(stage_name("dec", s) + ".up", in, out, 2);
    b.block(stage_name("dec", s), 2 * out, out, 3);
    in = out;
  }
  b.conv("head", in, 1, 1);
  return p;
}

Tensor forward(UNetParams& params, const Tensor& x, ad::Mode mode,
               std::uint64_t dropout_seed) {
  return Forward<UNetParams>{params, mode, dropout_seed}.run(x);
}

UNetParams64 to_double(const UNetParams& params) {
  UNetParams64 out;
  out.config = params.config;
  for (const auto& nt : params.tensors) {
    std::vector<double> v(nt.tensor.data().begin(), nt.tensor.data().end());
    out.tensors.push_back(
        {nt.name, ad::BasicTensor<double>::from(nt.tensor.shape(), std::move(v), nt.trainable),
         nt.trainable});
  }
  return out;
}

ad::BasicTensor<double>& UNetParams64::get(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw DomainError("no parameter named " + name);
}

ad::BasicTensor<double> forward(UNetParams64& params, const ad::BasicTensor<double>& x,
                                ad::Mode mode, std::uint64_t dropout_seed) {
  return Forward<UNetParams64>{params, mode, dropout_seed}.run(x);
}

std::vector<float> predict_plane(UNetParams& params, const CoeffPlane& plane) {
  if (plane.side != params.config.input_side) {
    throw DomainError("plane side " + std::to_string(plane.side) +
                      " does not match model input side " +
                      std::to_string(params.config.input_side));
  }
  ad::NoGradGuard no_grad;
  const Tensor x = Tensor::from({1, 1, plane.side, plane.side}, plane.values);
  const Tensor y = forward(params, x, ad::Mode::kEval);
  return {y.data().begin(), y.data().end()};
}

}  // namespace comptll
