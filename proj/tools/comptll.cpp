// Command-line front end: codec, dataset generation, training, inference,
// evaluation and benchmarks.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "comptll/bench.hpp"
#include "comptll/coeff_plane.hpp"
#include "comptll/dataset.hpp"
#include "comptll/docgen.hpp"
#include "comptll/error.hpp"
#include "comptll/image.hpp"
#include "comptll/jpeg.hpp"
#include "comptll/metrics.hpp"
#include "comptll/trainer.hpp"
#include "comptll/unet.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace comptll;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::uint64_t effective_seed(std::uint64_t flag) {
  if (const char* env = std::getenv("COMPTLL_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw DomainError(std::string("COMPTLL_SEED is not an integer: ") + env);
    return v;
  }
  return flag;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

PoolMode parse_pool(const std::string& s) {
  if (s == "avg") return PoolMode::kAverage;
  if (s == "max") return PoolMode::kMax;
  throw DomainError("unknown pooling mode '" + s + "' (avg or max)");
}

struct EncodeArgs {
  int quality = 50;
  std::string in, out;
};

struct GenArgs {
  int count = 200;
  std::uint64_t seed = 42;
  int side = 512;
  int quality = 50;
  std::string out;
};

struct TrainArgs {
  std::string data, out;
  int epochs = 50;
  int batch = 5;
  double width_mult = 1.0;
  std::uint64_t seed = 42;
  double lr = 1e-3;
  double loss_mix = 0.5;
  int side = 0;
  std::string pool = "avg";
  double dropout = 0.1;
  bool resume = false;
};

struct PredictArgs {
  std::string model, in, out;
  float threshold = 0.5f;
  int min_area = 64;
};

struct EvalArgs {
  std::string pred_dir, gt_dir, report;
};

struct BenchArgs {
  std::string images, model, report;
  int reps = 5;
};

int run_gen(const GenArgs& a) {
  DocSpec spec;
  spec.seed = effective_seed(a.seed);
  spec.side = a.side;
  const auto docs = generate(spec, a.count);
  const auto entries = export_dataset(docs, a.out, a.quality);
  std::cout << "wrote " << entries.size() << " documents to " << a.out << '\n';
  return kExitOk;
}

int infer_side(const fs::path& dir) {
  const auto entries = read_manifest(dir / "manifest.jsonl");
  if (entries.empty()) throw DomainError("empty manifest in " + dir.string());
  const int w = std::max(entries.front().width, entries.front().height);
  for (int s : {256, 512, 1024}) {
    if (w <= s) return s;
  }
  return 1024;
}

int run_train(const TrainArgs& a) {
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.loss_mix = a.loss_mix;
  tc.seed = effective_seed(a.seed);
  tc.checkpoint_dir = a.out;
  tc.resume = a.resume;
  tc.validate();

  UNetConfig mc;
  mc.input_side = a.side > 0 ? a.side : infer_side(a.data);
  mc.width_mult = a.width_mult;
  mc.pool_mode = parse_pool(a.pool);
  mc.dropout_rate = a.dropout;
  mc.validate();

  const Dataset data = load_dataset(a.data, mc.input_side);
  std::cout << "train epochs=" << tc.epochs << " batch=" << tc.batch_size
            << " lr=" << tc.learning_rate << " loss_mix=" << tc.loss_mix
            << " seed=" << tc.seed << " side=" << mc.input_side
            << " width_mult=" << mc.width_mult << " train=" << data.train.size()
            << " val=" << data.val.size() << (tc.resume ? " resume=1" : "") << '\n';
  UNetParams params = build(mc, mix_seed(tc.seed, 0x6d6f64656cULL));
  const TrainResult r = train(params, data, tc, [](const EpochLog& row) {
    std::cout << to_json_line(row) << std::endl;
  });
  std::cout << "best_dice=" << r.best_dice << " best_epoch=" << r.best_epoch << '\n';
  return kExitOk;
}

int run_predict(const PredictArgs& a) {
  UNetParams params = load_checkpoint(a.model);
  const auto bytes = read_file(a.in);
  const QuantizedBlockGrid grid = partial_decode(bytes);
  const CoeffPlane plane = assemble_plane(grid, params.config.input_side);
  const auto prob = predict_plane(params, plane);
  ProbMap map;
  map.width = grid.orig_width;
  map.height = grid.orig_height;
  map.values = project_to_image(prob, plane.side, map.width, map.height);
  PostProcessOptions opt;
  opt.threshold = a.threshold;
  opt.min_area = a.min_area;
  write_pgm(mask_to_image(post_process(map, opt)), a.out);
  return kExitOk;
}

int run_evaluate(const EvalArgs& a) {
  if (!fs::is_directory(a.gt_dir)) throw IoError("not a directory: " + a.gt_dir);
  if (!fs::is_directory(a.pred_dir)) throw IoError("not a directory: " + a.pred_dir);
  std::vector<fs::path> names;
  for (const auto& e : fs::directory_iterator(a.gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") names.push_back(e.path().filename());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DomainError("no .pgm ground truth in " + a.gt_dir);

  json rows = json::array();
  ConfusionCounts total;
  double dice_sum = 0, iou_sum = 0;
  int ok = 0, failed = 0;
  for (const auto& name : names) {
    json row = {{"name", name.string()}};
    try {
      const BinaryMask gt = mask_from_image(read_pgm(fs::path(a.gt_dir) / name));
      const BinaryMask pred = mask_from_image(read_pgm(fs::path(a.pred_dir) / name));
      const ConfusionCounts c = confusion(pred, gt);
      const SegReport r = report(c);
      total += c;
      dice_sum += r.dice;
      iou_sum += r.iou;
      ++ok;
      row.update({{"precision", r.precision}, {"recall", r.recall}, {"f_measure", r.f_measure},
                  {"dice", r.dice}, {"iou", r.iou}});
    } catch (const std::exception& e) {
      row["error"] = e.what();
      ++failed;
    }
    rows.push_back(row);
  }
  const SegReport agg = report(total);
  const json doc = {
      {"schema", "comptll.evaluation/1"},
      {"images", rows},
      {"aggregate",
       {{"evaluated", ok}, {"failed", failed},
        {"pooled", {{"precision", agg.precision}, {"recall", agg.recall},
                    {"f_measure", agg.f_measure}, {"dice", agg.dice}, {"iou", agg.iou}}},
        {"mean_dice", ok ? dice_sum / ok : 0.0},
        {"mean_iou", ok ? iou_sum / ok : 0.0}}}};
  write_text(a.report, doc.dump(2));
  if (failed > 0) {
    std::cerr << "evaluate: " << failed << " image(s) could not be scored; see " << a.report << '\n';
    return kExitDomain;
  }
  return kExitOk;
}

int run_bench(const BenchArgs& a) {
  if (!fs::is_directory(a.images)) throw IoError("not a directory: " + a.images);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(a.images)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".jpg" || ext == ".jpeg")) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<JpegStream> streams;
  for (const auto& p : paths) streams.push_back(read_file(p));
  if (streams.empty()) throw DomainError("no JPEG files in " + a.images);

  json doc = {{"schema", "comptll.bench/1"}};
  doc["decode"] = json::parse(to_json(bench_decode(streams, a.reps)));
  doc["storage"] = json::parse(to_json(bench_storage(streams)));
  if (!a.model.empty()) {
    UNetParams params = load_checkpoint(a.model);
    doc["pipeline"] = json::parse(to_json(bench_pipeline(streams, params, a.reps)));
  }
  write_text(a.report, doc.dump(2));
  std::cout << "decode reduction " << doc["decode"]["reduction_pct"].get<double>() << "%, jpeg storage reduction "
            << doc["storage"]["jpeg_reduction_pct"].get<double>() << "%\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-line localization on JPEG coefficient planes"};
  app.require_subcommand(1);
  int rc = kExitOk;
  std::function<int()> action;

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Encode a PGM as baseline JPEG");
  c_enc->add_option("--quality", enc.quality, "Quality 1..100")->check(CLI::Range(1, 100));
  c_enc->add_option("in", enc.in, "Input .pgm")->required();
  c_enc->add_option("out", enc.out, "Output .jpg")->required();
  c_enc->callback([&] {
    action = [&] {
      write_file(enc.out, encode(read_pgm(enc.in), enc.quality));
      return kExitOk;
    };
  });

  EncodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Fully decode a JPEG to PGM");
  c_dec->add_option("in", dec.in, "Input .jpg")->required();
  c_dec->add_option("out", dec.out, "Output .pgm")->required();
  c_dec->callback([&] {
    action = [&] {
      write_pgm(full_decode(read_file(dec.in)), dec.out);
      return kExitOk;
    };
  });

  EncodeArgs ext;
  auto* c_ext = app.add_subcommand("extract-coeffs", "Entropy-decode a JPEG into a QDB container");
  c_ext->add_option("in", ext.in, "Input .jpg")->required();
  c_ext->add_option("out", ext.out, "Output .qdb")->required();
  c_ext->callback([&] {
    action = [&] {
      write_qdb_file(partial_decode(read_file(ext.in)), ext.out);
      return kExitOk;
    };
  });

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic labeled corpus");
  c_gen->add_option("--count", gen.count, "Number of pages")->check(CLI::PositiveNumber);
  c_gen->add_option("--seed", gen.seed, "Generator seed (COMPTLL_SEED overrides)");
  c_gen->add_option("--side", gen.side, "Page side in pixels");
  c_gen->add_option("--quality", gen.quality, "JPEG quality")->check(CLI::Range(1, 100));
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->callback([&] { action = [&] { return run_gen(gen); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model on a gen-data directory");
  c_tr->add_option("--data", tr.data, "Dataset directory")->required();
  c_tr->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  c_tr->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  c_tr->add_option("--width-mult", tr.width_mult, "Channel width multiplier")->capture_default_str();
  c_tr->add_option("--seed", tr.seed, "Seed (COMPTLL_SEED overrides)")->capture_default_str();
  c_tr->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  c_tr->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_tr->add_option("--loss-mix", tr.loss_mix, "BCE weight in [0,1]")->capture_default_str();
  c_tr->add_option("--side", tr.side, "Model input side (default: from the data)");
  c_tr->add_option("--pool", tr.pool, "avg or max")->capture_default_str();
  c_tr->add_option("--dropout", tr.dropout, "Spatial dropout rate")->capture_default_str();
  c_tr->add_flag("--resume", tr.resume, "Continue from the state in --out");
  c_tr->callback([&] { action = [&] { return run_train(tr); }; });

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "Predict a baseline mask for a JPEG page");
  c_pr->add_option("--model", pr.model, "Checkpoint")->required();
  c_pr->add_option("in", pr.in, "Input .jpg")->required();
  c_pr->add_option("out", pr.out, "Output mask .pgm")->required();
  c_pr->add_option("--threshold", pr.threshold, "Probability threshold");
  c_pr->add_option("--min-area", pr.min_area, "Smallest kept component (pixels)");
  c_pr->callback([&] { action = [&] { return run_predict(pr); }; });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  c_ev->add_option("--pred-dir", ev.pred_dir, "Predicted masks")->required();
  c_ev->add_option("--gt-dir", ev.gt_dir, "Ground-truth masks")->required();
  c_ev->add_option("--report", ev.report, "Output JSON")->required();
  c_ev->callback([&] { action = [&] { return run_evaluate(ev); }; });

  BenchArgs bn;
  auto* c_bn = app.add_subcommand("bench", "Decode, storage and pipeline cost comparison");
  c_bn->add_option("--images", bn.images, "Directory of JPEG files")->required();
  c_bn->add_option("--model", bn.model, "Checkpoint for the pipeline comparison");
  c_bn->add_option("--report", bn.report, "Output JSON")->required();
  c_bn->add_option("--reps", bn.reps, "Repetitions")->check(CLI::PositiveNumber);
  c_bn->callback([&] { action = [&] { return run_bench(bn); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    rc = action ? action() : kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return rc;
}
