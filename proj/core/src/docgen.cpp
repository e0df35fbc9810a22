#include "comptll/docgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

#include "comptll/error.hpp"
#include "comptll/jpeg.hpp"
#include "comptll/rng.hpp"
#include "comptll/unet.hpp"
#include "json.hpp"

namespace comptll {
namespace {

using json = nlohmann::json;

constexpr int kMinColumnWidth = 48;
constexpr int kMinPitch = 12;

int margin_for(int side) { return side / 16; }
int gutter_for(int side) { return side / 24; }

int column_width(int side, int columns) {
  return (side - 2 * margin_for(side) - (columns - 1) * gutter_for(side)) / columns;
}

// floor(a / b) for b > 0.
long long floor_div(long long a, long long b) {
  const long long q = a / b;
  return (a % b != 0 && a < 0) ? q - 1 : q;
}

class Page {
 public:
  Page(GrayImage& img, BinaryMask& mask) : img_(img), mask_(mask) {}

  void ink(int x, int y, int level) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto& px = img_.at(x, y);
    px = static_cast<std::uint8_t>(std::min<int>(px, level));
  }

  void brush(int x, int y, int thick, int level) {
    const int lo = -(thick - 1) / 2;
    for (int dy = lo; dy < lo + thick; ++dy) {
      for (int dx = lo; dx < lo + thick; ++dx) ink(x + dx, y + dy, level);
    }
  }

  // Bresenham segment drawn with a square brush.
  void segment(int x0, int y0, int x1, int y1, int thick, int level) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      brush(x0, y0, thick, level);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void label(int x, int y) {
    if (x < 0 || y < 0 || x >= mask_.width || y >= mask_.height) return;
    mask_.at(x, y) = 1;
  }

  void darken_column(int x, int amount) {
    if (x < 0 || x >= img_.width) return;
    for (int y = 0; y < img_.height; ++y) {
      auto& px = img_.at(x, y);
      px = static_cast<std::uint8_t>(std::max(0, px - amount));
    }
  }

 private:
  GrayImage& img_;
  BinaryMask& mask_;
};

// Skewed, gently oscillating baseline. Slope is tan(angle) in Q16, using the
// small-angle form angle_mdeg * pi / 180000 * 65536.
struct Baseline {
  int x0 = 0;
  int y0 = 0;
  long long slope_q16 = 0;
  int amplitude = 0;
  int period = 64;

  int at(int x) const {
    const long long rel = x - x0;
    int y = y0 + static_cast<int>(floor_div(rel * slope_q16, 65536));
    if (amplitude > 0) {
      const long long t = ((rel % period) + period) % period;
      y += static_cast<int>(std::llabs(2 * t - period) * 2 * amplitude / period) - amplitude;
    }
    return y;
  }
};

struct LineStyle {
  int xheight = 0;
  int ascender = 0;
  int descender = 0;
  int touch_depth = 0;  // 0 unless descenders reach the next line
  int thick = 1;
  int ink = 40;
};

// Draws one pseudo-text line as connected cursive-like strokes; returns the
// x extent actually inked.
std::pair<int, int> draw_line(Page& page, Rng& rng, const Baseline& base,
                              const LineStyle& st, int x_start, int x_end) {
  int x = x_start;
  int last = x_start;
  while (x < x_end) {
    const int glyphs = static_cast<int>(rng.uniform_int(2, 7));
    int pen_x = x;
    int pen_y = base.at(x);
    for (int g = 0; g < glyphs; ++g) {
      const int gw = static_cast<int>(
          rng.uniform_int(std::max(3, st.xheight * 6 / 10), std::max(4, st.xheight * 11 / 10)));
      if (pen_x + gw > x_end) break;
      const int kind = static_cast<int>(rng.uniform_int(0, 99));
      const int xa = pen_x + gw / 3, xb = pen_x + 2 * gw / 3, xe = pen_x + gw;
      const int jitter = static_cast<int>(rng.uniform_int(-1, 1));
      if (kind < 55) {  // hump
        const int top = st.xheight + jitter;
        page.segment(pen_x, pen_y, xa, base.at(xa) - top, st.thick, st.ink);
        page.segment(xa, base.at(xa) - top, xb, base.at(xb) - top, st.thick, st.ink);
        page.segment(xb, base.at(xb) - top, xe, base.at(xe), st.thick, st.ink);
      } else if (kind < 70) {  // ascender
        const int top = st.ascender + jitter;
        page.segment(pen_x, pen_y, xa, base.at(xa) - top, st.thick, st.ink);
        page.segment(xa, base.at(xa) - top, xa, base.at(xa), st.thick, st.ink);
        page.segment(xa, base.at(xa), xe, base.at(xe), st.thick, st.ink);
      } else if (kind < 82) {  // descender, possibly reaching the next line
        const int depth = st.touch_depth > 0 ? st.touch_depth : st.descender;
        page.segment(pen_x, pen_y, xa, base.at(xa), st.thick, st.ink);
        page.segment(xa, base.at(xa) - st.xheight, xa, base.at(xa) + depth, st.thick, st.ink);
        page.segment(xa, base.at(xa), xe, base.at(xe), st.thick, st.ink);
      } else {  // closed loop
        const int top = st.xheight + jitter;
        const int mid = (pen_x + xe) / 2;
        page.segment(pen_x, pen_y, mid, base.at(mid) - top, st.thick, st.ink);
        page.segment(mid, base.at(mid) - top, xe, base.at(xe) - top / 2, st.thick, st.ink);
        page.segment(xe, base.at(xe) - top / 2, mid, base.at(mid), st.thick, st.ink);
        page.segment(mid, base.at(mid), xe, base.at(xe), st.thick, st.ink);
      }
      pen_x = xe;
      pen_y = base.at(xe);
      last = std::max(last, xe);
    }
    x = pen_x + static_cast<int>(rng.uniform_int(std::max(2, st.xheight / 2), std::max(3, st.xheight)));
  }
  return {x_start, last};
}

void draw_marginalia(Page& page, Rng& rng, int side, int margin) {
  const bool left = rng.bernoulli(0.5);
  const int x_lo = left ? 2 : side - margin + 2;
  const int x_hi = left ? margin - 3 : side - 3;
  if (x_hi <= x_lo) return;
  const int strokes = static_cast<int>(rng.uniform_int(2, 6));
  int x = static_cast<int>(rng.uniform_int(x_lo, x_hi));
  int y = static_cast<int>(rng.uniform_int(margin, side - margin));
  const int ink = static_cast<int>(rng.uniform_int(30, 90));
  for (int s = 0; s < strokes; ++s) {
    const int nx = std::clamp(x + static_cast<int>(rng.uniform_int(-margin / 2, margin / 2)), x_lo, x_hi);
    const int ny = std::clamp(y + static_cast<int>(rng.uniform_int(-margin, margin)), 0, side - 1);
    page.segment(x, y, nx, ny, static_cast<int>(rng.uniform_int(1, 2)), ink);
    x = nx;
    y = ny;
  }
}

}  // namespace

int strip_thickness(int pitch) { return std::max(5, pitch * 6 / 100); }

void DocSpec::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("invalid DocSpec: " + m); };
  if (side < 64) fail("side must be >= 64");
  if (min_columns < 1 || max_columns > 4 || min_columns > max_columns) {
    fail("columns range must satisfy 1 <= min <= max <= 4");
  }
  if (min_lines < 1 || min_lines > max_lines) {
    fail("lines per column range must satisfy 1 <= min <= max");
  }
  if (!(min_skew_deg <= max_skew_deg) || std::abs(min_skew_deg) > 15.0 ||
      std::abs(max_skew_deg) > 15.0) {
    fail("skew range must be nonempty and within +-15 degrees");
  }
  for (double p : {touch_probability, marginalia_probability, stripe_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must be in [0,1]");
  }
  if (!(noise_level >= 0.0 && noise_level <= 64.0)) fail("noise_level must be in [0,64]");
  if (column_width(side, max_columns) < kMinColumnWidth) {
    fail("column too narrow: " + std::to_string(column_width(side, max_columns)) +
         " px at " + std::to_string(max_columns) + " columns");
  }
  if ((side - 2 * margin_for(side)) / max_lines < kMinPitch) {
    fail("line pitch below " + std::to_string(kMinPitch) + " px");
  }
}

LabeledDoc generate_one(const DocSpec& spec, int index) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const int side = spec.side;
  const int margin = margin_for(side);

  LabeledDoc doc;
  doc.spec = spec;
  char id[32];
  std::snprintf(id, sizeof id, "doc_%05d", index);
  doc.id = id;
  const int background = static_cast<int>(rng.uniform_int(205, 235));
  doc.image = GrayImage(side, side, static_cast<std::uint8_t>(background));
  doc.mask = BinaryMask(side, side);
  Page page(doc.image, doc.mask);

  const int columns = static_cast<int>(rng.uniform_int(spec.min_columns, spec.max_columns));
  const int colw = column_width(side, columns);
  const long long skew_lo = std::llround(spec.min_skew_deg * 1000.0);
  const long long skew_hi = std::llround(spec.max_skew_deg * 1000.0);

  for (int c = 0; c < columns; ++c) {
    const int cx0 = margin + c * (colw + gutter_for(side));
    const int cx1 = cx0 + colw;
    const int lines = static_cast<int>(rng.uniform_int(spec.min_lines, spec.max_lines));
    const int pitch = (side - 2 * margin) / lines;
    const int thickness = strip_thickness(pitch);
    const long long column_skew = rng.uniform_int(skew_lo, skew_hi);
    for (int l = 0; l < lines; ++l) {
      Baseline base;
      base.x0 = cx0 + static_cast<int>(rng.uniform_int(0, colw / 10));
      base.y0 = margin + pitch * l + pitch * 65 / 100 +
                static_cast<int>(rng.uniform_int(-pitch / 8, pitch / 8));
      const long long mdeg =
          std::clamp(column_skew + rng.uniform_int(-300, 300), skew_lo, skew_hi);
      base.slope_q16 = mdeg * 1144 / 1000;
      base.amplitude = static_cast<int>(rng.uniform_int(0, pitch >= 24 ? 2 : 1));
      base.period = static_cast<int>(rng.uniform_int(48, 96));

      LineStyle st;
      st.xheight = std::max(3, pitch * 30 / 100);
      st.ascender = pitch * 55 / 100;
      st.descender = pitch * 22 / 100;
      st.thick = static_cast<int>(rng.uniform_int(1, std::clamp(pitch / 14, 1, 3)));
      st.ink = static_cast<int>(rng.uniform_int(15, 80));
      if (l + 1 < lines && rng.bernoulli(spec.touch_probability)) {
        st.touch_depth = pitch * 85 / 100;
      }

      const int x_end = cx1 - static_cast<int>(rng.uniform_int(0, colw / 4));
      const auto [xs, xe] = draw_line(page, rng, base, st, base.x0, x_end);
      if (xe <= xs) continue;
      const int lo = -(thickness / 2);
      for (int x = xs; x <= xe; ++x) {
        const int yb = base.at(x);
        for (int dy = lo; dy < lo + thickness; ++dy) page.label(x, yb + dy);
      }
      ++doc.line_count;
    }
  }

  if (rng.bernoulli(spec.marginalia_probability)) draw_marginalia(page, rng, side, margin);
  if (rng.bernoulli(spec.stripe_probability)) {
    const int x = static_cast<int>(rng.uniform_int(0, side - 1));
    const int width = static_cast<int>(rng.uniform_int(2, 6));
    const int amount = static_cast<int>(rng.uniform_int(30, 60));
    for (int dx = 0; dx < width; ++dx) page.darken_column(x + dx, amount);
  }

  // Speckle: Irwin-Hall sum of 12 uniform bytes has mean 1530 and standard
  // deviation ~256, rescaled in fixed point to noise_level.
  const long long sigma_q8 = std::llround(spec.noise_level * 256.0);
  if (sigma_q8 > 0) {
    for (auto& px : doc.image.samples) {
      long long s = 0;
      std::uint64_t r = rng.next();
      for (int i = 0; i < 8; ++i, r >>= 8) s += static_cast<long long>(r & 0xFF);
      r = rng.next();
      for (int i = 0; i < 4; ++i, r >>= 8) s += static_cast<long long>(r & 0xFF);
      const long long noise = floor_div((s - 1530) * sigma_q8, 65536);
      px = static_cast<std::uint8_t>(std::clamp<long long>(px + noise, 0, 255));
    }
  }
  return doc;
}

std::vector<LabeledDoc> generate(const DocSpec& spec, int count) {
  if (count < 1) throw DomainError("document count must be >= 1");
  spec.validate();
  std::vector<LabeledDoc> docs;
  docs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) docs.push_back(generate_one(spec, i));
  return docs;
}

std::size_t validation_count(std::size_t n) {
  if (n < 2) return 0;
  return std::max<std::size_t>(1, n / 10);
}

std::vector<ManifestEntry> export_dataset(const std::vector<LabeledDoc>& docs,
                                          const std::filesystem::path& dir, int quality) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t n_test = validation_count(docs.size());
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const LabeledDoc& d = docs[i];
    ManifestEntry e;
    e.id = d.id;
    e.image = d.id + ".pgm";
    e.jpeg = d.id + ".jpg";
    e.mask = d.id + ".mask.pgm";
    e.split = i + n_test >= docs.size() ? "test" : "train";
    e.width = d.image.width;
    e.height = d.image.height;
    write_pgm(d.image, dir / e.image);
    write_file(dir / e.jpeg, encode(d.image, quality));
    write_pgm(mask_to_image(d.mask), dir / e.mask);
    entries.push_back(std::move(e));
  }
  write_manifest(entries, dir / "manifest.jsonl");
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  for (const auto& e : entries) {
    const json row = {{"id", e.id},       {"image", e.image}, {"jpeg", e.jpeg},
                      {"mask", e.mask},   {"split", e.split}, {"width", e.width},
                      {"height", e.height}};
    out << row.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json row = json::parse(line);
      ManifestEntry e;
      e.id = row.at("id").get<std::string>();
      e.image = row.at("image").get<std::string>();
      e.jpeg = row.at("jpeg").get<std::string>();
      e.mask = row.at("mask").get<std::string>();
      e.split = row.at("split").get<std::string>();
      e.width = row.at("width").get<int>();
      e.height = row.at("height").get<int>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DomainError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

}  // namespace comptll
