#include <cmath>
#include <random>

#include "comptll/error.hpp"
#include "comptll/image.hpp"
#include "comptll/ops.hpp"
#include "comptll/unet.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace comptll;
using ad::Tensor;

namespace {

UNetConfig small_config(int side = 64) {
  UNetConfig c;
  c.input_side = side;
  c.width_mult = 0.0625;
  return c;
}

Tensor random_input(int n, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.2f, 0.2f);
  std::vector<float> v(static_cast<std::size_t>(n) * side * side);
  for (auto& x : v) x = u(rng);
  return Tensor::from({n, 1, side, side}, v);
}

// Trainable scalars from the layer plan, counted independently of build().
std::size_t plan_param_count(int base, int depth, int first_k) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
  auto bn = [](std::size_t ch) { return 2 * ch; };
  std::size_t total = 0;
  std::size_t in = 1;
  for (int s = 0; s < depth; ++s) {
    const std::size_t out = static_cast<std::size_t>(base) << s;
    total += conv(in, out, s == 0 ? first_k : 3) + bn(out) + conv(out, out, 3) + bn(out);
    in = out;
  }
  const std::size_t bott = static_cast<std::size_t>(base) << depth;
  total += conv(in, bott, 3) + bn(bott) + conv(bott, bott, 3) + bn(bott);
  in = bott;
  for (int s = depth - 1; s >= 0; --s) {
    const std::size_t out = static_cast<std::size_t>(base) << s;
    total += out * in * 2 * 2 + out;  // transposed 2x2
    total += conv(2 * out, out, 3) + bn(out) + conv(out, out, 3) + bn(out);
    in = out;
  }
  return total + conv(in, 1, 1);
}

}  // namespace

TEST_SUITE("unet") {
  TEST_CASE("default plan has 19 convolutions and 4 transposed convolutions") {
    const UNetParams p = build(UNetConfig{}, 1);
    const LayerCounts c = p.layer_counts();
    CHECK(c.convs == 19);
    CHECK(c.transposed_convs == 4);
    CHECK(p.get("head.weight").shape() == ad::Shape{1, 64, 1, 1});
    CHECK(p.get("enc0.conv1.weight").shape() == ad::Shape{64, 1, 7, 7});
    CHECK(p.get("bottleneck.conv2.weight").shape() == ad::Shape{1024, 1024, 3, 3});
    CHECK(p.get("dec0.up.weight").shape() == ad::Shape{128, 64, 2, 2});
    CHECK(p.get("dec3.conv1.weight").shape() == ad::Shape{512, 1024, 3, 3});
  }

  TEST_CASE("parameter count matches the layer plan") {
    CHECK(build(UNetConfig{}, 1).trainable_count() == plan_param_count(64, 4, 7));
    CHECK(build(small_config(), 1).trainable_count() == plan_param_count(4, 4, 7));
    UNetConfig shallow = small_config();
    shallow.depth = 2;
    shallow.first_kernel = 3;
    CHECK(build(shallow, 1).trainable_count() == plan_param_count(4, 2, 3));
  }

  TEST_CASE("He-uniform initialisation bounds") {
    const UNetParams p = build(small_config(), 3);
    for (const auto& t : p.tensors) {
      if (!t.name.ends_with(".weight")) continue;
      const auto& s = t.tensor.shape();
      const bool up = t.name.find(".up.") != std::string::npos;
      const int fan_in = (up ? s[0] : s[1]) * s[2] * s[3];
      const double bound = std::sqrt(6.0 / fan_in);
      double max_abs = 0;
      for (float v : t.tensor.data()) max_abs = std::max(max_abs, double(std::abs(v)));
      CHECK(max_abs <= bound);
      CHECK(max_abs > 0.5 * bound);
    }
    CHECK(p.get("enc0.bn1.gamma").data()[0] == 1.0f);
    CHECK(p.get("enc0.conv1.bias").data()[0] == 0.0f);
    CHECK(build(small_config(), 3).get("enc1.conv1.weight").data()[5] ==
          p.get("enc1.conv1.weight").data()[5]);
    CHECK(build(small_config(), 4).get("enc1.conv1.weight").data()[5] !=
          p.get("enc1.conv1.weight").data()[5]);
  }

  TEST_CASE("reduced width runs on 64x64 and keeps the resolution") {
    UNetParams p = build(small_config(64), 2);
    const Tensor y = forward(p, random_input(2, 64, 1), ad::Mode::kTrain, 9);
    CHECK(y.shape() == ad::Shape{2, 1, 64, 64});
    for (float v : y.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }

  TEST_CASE("eval mode is deterministic and finite on a zero plane") {
    UNetParams p = build(small_config(64), 5);
    CoeffPlane plane;
    plane.side = 64;
    plane.values.assign(64 * 64, 0.0f);
    const auto a = predict_plane(p, plane);
    const auto b = predict_plane(p, plane);
    CHECK(a == b);
    for (float v : a) CHECK(std::isfinite(v));
  }

  TEST_CASE("pool mode changes values, never shapes") {
    UNetConfig avg = small_config(64), mx = small_config(64);
    mx.pool_mode = PoolMode::kMax;
    UNetParams pa = build(avg, 1), pm = build(mx, 1);
    const Tensor x = random_input(1, 64, 4);
    ad::NoGradGuard guard;
    const Tensor ya = forward(pa, x, ad::Mode::kEval);
    const Tensor ym = forward(pm, x, ad::Mode::kEval);
    CHECK(ya.shape() == ym.shape());
    CHECK(std::vector<float>(ya.data().begin(), ya.data().end()) !=
          std::vector<float>(ym.data().begin(), ym.data().end()));
  }

  TEST_CASE("input validation") {
    UNetConfig bad = small_config(60);
    CHECK_THROWS_AS(build(bad, 1), DomainError);
    UNetConfig tiny = small_config(64);
    tiny.width_mult = 0.01;
    CHECK_THROWS_AS(build(tiny, 1), DomainError);
    UNetConfig even = small_config(64);
    even.first_kernel = 4;
    CHECK_THROWS_AS(build(even, 1), DomainError);
    UNetParams p = build(small_config(64), 1);
    CHECK_THROWS_AS(forward(p, random_input(1, 32, 1), ad::Mode::kEval), DomainError);
    CoeffPlane plane;
    plane.side = 256;
    plane.values.assign(256 * 256, 0.0f);
    CHECK_THROWS_AS(predict_plane(p, plane), DomainError);
  }

  TEST_CASE("network gradient matches the directional finite difference") {
    // Single weights are too noisy to probe through a float32 network with
    // ReLU kinks; the derivative along the full gradient direction is not.
    // Its central difference must approach |g| as the step shrinks.
    UNetConfig c = small_config(32);
    c.dropout_rate = 0.0;
    UNetParams p = build(c, 7);
    const Tensor x = random_input(2, 32, 8);
    std::mt19937_64 rng(9);
    std::vector<float> t(2 * 32 * 32);
    for (auto& v : t) v = static_cast<float>(rng() & 1);
    const Tensor target = Tensor::from({2, 1, 32, 32}, t);

    // Running statistics drift on every train-mode pass; keep them fixed.
    std::vector<std::vector<float>> stats, w0, g0;
    for (auto& nt : p.tensors) {
      if (!nt.trainable) stats.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
    }
    auto restore = [&] {
      std::size_t k = 0;
      for (auto& nt : p.tensors) {
        if (nt.trainable) continue;
        std::copy(stats[k].begin(), stats[k].end(), nt.tensor.data().begin());
        ++k;
      }
    };
    auto loss_value = [&] {
      ad::NoGradGuard guard;
      const Tensor y = forward(p, x, ad::Mode::kTrain);
      restore();
      double acc = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double q = std::clamp<double>(y.data()[i], 1e-7, 1 - 1e-7);
        acc -= t[i] * std::log(q) + (1 - t[i]) * std::log(1 - q);
      }
      return acc / static_cast<double>(t.size());
    };

    p.zero_grad();
    ad::binary_cross_entropy(forward(p, x, ad::Mode::kTrain), target).backward();
    restore();
    double norm = 0;
    for (auto& nt : p.tensors) {
      if (!nt.trainable) continue;
      w0.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
      g0.emplace_back(nt.tensor.grad().begin(), nt.tensor.grad().end());
      for (float v : g0.back()) norm += double(v) * v;
    }
    norm = std::sqrt(norm);
    REQUIRE(norm > 0);
    auto shift = [&](double s) {
      std::size_t k = 0;
      for (auto& nt : p.tensors) {
        if (!nt.trainable) continue;
        auto d = nt.tensor.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(w0[k][i] + s * g0[k][i] / norm);
        ++k;
      }
    };
    auto rel_error = [&](double h) {
      shift(h);
      const double plus = loss_value();
      shift(-h);
      const double minus = loss_value();
      shift(0);
      return std::abs((plus - minus) / (2 * h) - norm) / norm;
    };
    const double coarse = rel_error(1e-2), fine = rel_error(1e-3);
    INFO("relative error " << coarse << " at h=1e-2, " << fine << " at h=1e-3");
    CHECK(fine < coarse);
    CHECK(fine < 0.02);
  }

  TEST_CASE("first-layer BCE gradient matches finite differences in double precision") {
    // A float32 forward pass is too noisy for per-coordinate differences, so
    // the same graph runs on a double copy of the parameters.
    UNetConfig c = small_config(32);
    c.dropout_rate = 0.0;
    const UNetParams base = build(c, 7);
    UNetParams64 p = to_double(base);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    std::vector<double> xv(2 * 32 * 32), t(2 * 32 * 32);
    for (auto& v : xv) v = u(rng);
    for (auto& v : t) v = static_cast<double>(rng() & 1);
    const auto x = ad::BasicTensor<double>::from({2, 1, 32, 32}, xv);
    const auto target = ad::BasicTensor<double>::from({2, 1, 32, 32}, t);

    std::vector<std::vector<double>> stats;
    for (auto& e : p.tensors) {
      if (!e.trainable) stats.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    }
    auto restore = [&] {
      std::size_t k = 0;
      for (auto& e : p.tensors) {
        if (e.trainable) continue;
        std::copy(stats[k].begin(), stats[k].end(), e.tensor.data().begin());
        ++k;
      }
    };
    auto loss_value = [&] {
      ad::NoGradGuard guard;
      const double l = ad::binary_cross_entropy(forward(p, x, ad::Mode::kTrain), target).item();
      restore();
      return l;
    };

    // The double graph reproduces the float network.
    {
      UNetParams f = build(c, 7);
      std::vector<float> xf(xv.begin(), xv.end());
      ad::NoGradGuard guard;
      const Tensor yf = forward(f, Tensor::from({2, 1, 32, 32}, xf), ad::Mode::kEval);
      const auto yd = forward(p, x, ad::Mode::kEval);
      double worst = 0;
      for (std::size_t i = 0; i < xv.size(); ++i) worst = std::max(worst, std::abs(yf.data()[i] - yd.data()[i]));
      CHECK(worst < 1e-4);
    }

    ad::binary_cross_entropy(forward(p, x, ad::Mode::kTrain), target).backward();
    restore();
    auto& w = p.get("enc0.conv1.weight");
    const std::vector<double> g(w.grad().begin(), w.grad().end());
    std::mt19937_64 pick(3);
    for (int k = 0; k < 3; ++k) {
      const std::size_t idx = pick() % g.size();
      const double orig = w.data()[idx], h = 1e-6;
      w.data()[idx] = orig + h;
      const double plus = loss_value();
      w.data()[idx] = orig - h;
      const double minus = loss_value();
      w.data()[idx] = orig;
      const double numeric = (plus - minus) / (2 * h);
      INFO("index " << idx << " analytic " << g[idx] << " numeric " << numeric);
      CHECK(std::abs(numeric) > 1e-6);
      CHECK(std::abs(g[idx] - numeric) / std::max(std::abs(numeric), 1e-8) < 1e-3);
    }
  }

  TEST_CASE("checkpoint round trip") {
    testutil::TempDir dir("ckpt");
    UNetParams p = build(small_config(64), 11);
    // Move running stats off their defaults so they are exercised too.
    forward(p, random_input(2, 64, 3), ad::Mode::kTrain, 1);
    save_checkpoint(p, dir / "m.ctlu");
    UNetParams q = load_checkpoint(dir / "m.ctlu");
    CHECK(q.config == p.config);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      CHECK(q.tensors[i].name == p.tensors[i].name);
      CHECK(std::vector<float>(q.tensors[i].tensor.data().begin(), q.tensors[i].tensor.data().end()) ==
            std::vector<float>(p.tensors[i].tensor.data().begin(), p.tensors[i].tensor.data().end()));
    }
    CoeffPlane plane;
    plane.side = 64;
    const Tensor in = random_input(1, 64, 5);
    plane.values.assign(in.data().begin(), in.data().end());
    CHECK(predict_plane(p, plane) == predict_plane(q, plane));
    CHECK(std::filesystem::file_size(dir / "m.ctlu") < 2'000'000u);
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const auto bytes = serialize_checkpoint(build(small_config(64), 1));
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    try {
      deserialize_checkpoint(cut);
      FAIL("accepted a truncated checkpoint");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::kTruncated);
    }
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);
    auto version = bytes;
    version[4] = 99;
    CHECK_THROWS_AS(deserialize_checkpoint(version), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(trailing), FormatError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/m.ctlu"), IoError);
  }

  TEST_CASE("mix_seed separates streams") {
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(0, 0) != 0);
  }
}
