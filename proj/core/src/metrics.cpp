#include "comptll/metrics.hpp"

#include <string>

#include "comptll/error.hpp"

namespace comptll {

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto p : pixels) n += p;
  return n;
}

BinaryMask mask_from_image(const GrayImage& img) {
  BinaryMask m(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) m.pixels[i] = img.samples[i] ? 1 : 0;
  return m;
}

GrayImage mask_to_image(const BinaryMask& mask) {
  GrayImage img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) img.samples[i] = mask.pixels[i] ? 255 : 0;
  return img;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw DomainError("mask dimensions differ: " + std::to_string(pred.width) + "x" +
                      std::to_string(pred.height) + " vs " + std::to_string(gt.width) +
                      "x" + std::to_string(gt.height));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0;
    const bool g = gt.pixels[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

SegReport report(const ConfusionCounts& c) {
  const bool both_empty = c.tp == 0 && c.fp == 0 && c.fn == 0;
  auto pct = [both_empty](double num, double den) {
    if (den == 0.0) return both_empty ? 100.0 : 0.0;
    return 100.0 * num / den;
  };
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  SegReport r;
  r.precision = pct(tp, tp + fp);
  r.recall = pct(tp, tp + fn);
  r.f_measure = r.precision + r.recall == 0.0
                    ? 0.0
                    : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  r.dice = pct(2.0 * tp, 2.0 * tp + fp + fn);
  r.iou = pct(tp, tp + fp + fn);
  return r;
}

int label_components(const BinaryMask& mask, std::vector<int>& labels) {
  const int w = mask.width, h = mask.height;
  labels.assign(mask.pixels.size(), 0);
  std::vector<int> stack;
  int next = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.pixels[static_cast<std::size_t>(start)] || labels[static_cast<std::size_t>(start)]) continue;
    ++next;
    labels[static_cast<std::size_t>(start)] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int x = p % w, y = p / w;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= w || q[1] < 0 || q[1] >= h) continue;
        const auto qi = static_cast<std::size_t>(q[1] * w + q[0]);
        if (mask.pixels[qi] && !labels[qi]) {
          labels[qi] = next;
          stack.push_back(static_cast<int>(qi));
        }
      }
    }
  }
  return next;
}

BinaryMask close3x3(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  BinaryMask dil(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy) {
        for (int dx = -1; dx <= 1 && !v; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && xx < w && yy >= 0 && yy < h && mask.at(xx, yy)) v = 1;
        }
      }
      dil.at(x, y) = v;
    }
  }
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (int dy = -1; dy <= 1 && v; ++dy) {
        for (int dx = -1; dx <= 1 && v; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && xx < w && yy >= 0 && yy < h && !dil.at(xx, yy)) v = 0;
        }
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

BinaryMask post_process(const ProbMap& prob, const PostProcessOptions& options) {
  if (!(options.threshold > 0.0f && options.threshold < 1.0f)) {
    throw DomainError("threshold must be in (0,1)");
  }
  if (prob.values.size() != static_cast<std::size_t>(prob.width) * prob.height) {
    throw DomainError("probability map size disagrees with its dimensions");
  }
  BinaryMask m(prob.width, prob.height);
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    m.pixels[i] = prob.values[i] >= options.threshold ? 1 : 0;
  }
  if (options.min_area > 1) {
    std::vector<int> labels;
    const int n = label_components(m, labels);
    std::vector<std::size_t> area(static_cast<std::size_t>(n) + 1, 0);
    for (int l : labels) ++area[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] && area[static_cast<std::size_t>(labels[i])] <
                           static_cast<std::size_t>(options.min_area)) {
        m.pixels[i] = 0;
      }
    }
  }
  for (int i = 0; i < options.closing_passes; ++i) m = close3x3(m);
  return m;
}

}  // namespace comptll
