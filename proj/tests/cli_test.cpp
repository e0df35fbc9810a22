#include <sys/wait.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "comptll/docgen.hpp"
#include "comptll/image.hpp"
#include "comptll/jpeg.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace comptll;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout and stderr captured to a file under `dir`.
Run cli(const testutil::TempDir& dir, const std::string& args, const std::string& env = "") {
  const fs::path log = dir / "cli.log";
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" COMPTLL_CLI_PATH "\" " + args +
                          " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  r.out.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double psnr_db(const GrayImage& a, const GrayImage& b) {
  double se = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = double(a.samples[i]) - b.samples[i];
    se += d * d;
  }
  const double mse = se / a.samples.size();
  return mse == 0 ? 99.0 : 10 * std::log10(255.0 * 255.0 / mse);
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    testutil::TempDir d("cli_help");
    const Run help = cli(d, "--help");
    CHECK(help.code == 0);
    for (const char* sub : {"encode", "decode", "extract-coeffs", "gen-data", "train", "predict",
                            "evaluate", "bench"}) {
      CHECK(help.out.find(sub) != std::string::npos);
    }
    CHECK(cli(d, "").code == 2);
    CHECK(cli(d, "frobnicate").code == 2);
    CHECK(cli(d, "encode --quality 0 a b").code == 2);
  }

  TEST_CASE("encode, decode and extract-coeffs") {
    testutil::TempDir d("cli_codec");
    const GrayImage img = testutil::smooth_image(100, 70, 3);
    write_pgm(img, d / "in.pgm");
    REQUIRE(cli(d, "encode --quality 95 " + q(d / "in.pgm") + " " + q(d / "a.jpg")).code == 0);
    CHECK(slurp(d / "a.jpg") == encode(img, 95));
    REQUIRE(cli(d, "decode " + q(d / "a.jpg") + " " + q(d / "back.pgm")).code == 0);
    const GrayImage back = read_pgm(d / "back.pgm");
    CHECK(back.width == 100);
    CHECK(back.height == 70);
    CHECK(psnr_db(img, back) >= 40.0);
    REQUIRE(cli(d, "extract-coeffs " + q(d / "a.jpg") + " " + q(d / "a.qdb")).code == 0);
    const auto qdb = slurp(d / "a.qdb");
    REQUIRE(qdb.size() > 4);
    CHECK(std::string(qdb.begin(), qdb.begin() + 4) == "QDB1");
    CHECK(read_qdb_file(d / "a.qdb") == partial_decode(slurp(d / "a.jpg")));

    CHECK(cli(d, "decode " + q(d / "missing.jpg") + " " + q(d / "x.pgm")).code == 2);
    std::ofstream(d / "junk.jpg") << "not a jpeg";
    const Run bad = cli(d, "decode " + q(d / "junk.jpg") + " " + q(d / "x.pgm"));
    CHECK(bad.code != 0);
    CHECK(!bad.out.empty());
  }

  TEST_CASE("gen-data is seeded and honours COMPTLL_SEED") {
    testutil::TempDir d("cli_gen");
    REQUIRE(cli(d, "gen-data --count 4 --side 256 --seed 5 --out " + q(d / "a")).code == 0);
    REQUIRE(cli(d, "gen-data --count 4 --side 256 --seed 5 --out " + q(d / "b")).code == 0);
    const auto rows = read_manifest(d / "a" / "manifest.jsonl");
    REQUIRE(rows.size() == 4);
    CHECK(rows[3].split == "test");
    for (const auto& r : rows) {
      CHECK(r.width == 256);
      CHECK(slurp(d / "a" / r.jpeg) == slurp(d / "b" / r.jpeg));
    }
    REQUIRE(cli(d, "gen-data --count 1 --side 256 --seed 1 --out " + q(d / "c"),
                "COMPTLL_SEED=5").code == 0);
    CHECK(slurp(d / "c" / rows[0].jpeg) == slurp(d / "a" / rows[0].jpeg));
    CHECK(cli(d, "gen-data --count 1 --side 32 --out " + q(d / "e")).code == 1);
  }

  TEST_CASE("train, resume, predict and evaluate") {
    testutil::TempDir d("cli_train");
    REQUIRE(cli(d, "gen-data --count 3 --side 256 --seed 8 --out " + q(d / "data")).code == 0);

    const Run one = cli(d, "train --data " + q(d / "data") +
                              " --epochs 1 --width-mult 0.0625 --out " + q(d / "run"));
    INFO(one.out);
    REQUIRE(one.code == 0);
    auto out = lines_of(one.out);
    REQUIRE(out.size() >= 2);
    CHECK(out[0].find("epochs=1 ") != std::string::npos);
    CHECK(out[0].find("batch=5 ") != std::string::npos);
    CHECK(out[0].find("side=256") != std::string::npos);
    CHECK(nlohmann::json::parse(out[1])["epoch"] == 1);

    const Run more = cli(d, "train --data " + q(d / "data") +
                               " --epochs 2 --width-mult 0.0625 --resume --out " + q(d / "run"));
    INFO(more.out);
    REQUIRE(more.code == 0);
    out = lines_of(more.out);
    REQUIRE(out.size() >= 2);
    CHECK(nlohmann::json::parse(out[1])["epoch"] == 2);
    std::ifstream metrics(d / "run" / "metrics.jsonl");
    int rows = 0;
    for (std::string l; std::getline(metrics, l);) ++rows;
    CHECK(rows == 2);

    const auto manifest = read_manifest(d / "data" / "manifest.jsonl");
    const fs::path jpg = d / "data" / manifest[0].jpeg;
    fs::create_directories(d / "pred");
    fs::create_directories(d / "gt");
    const std::string predict = "predict --model " + q(d / "run" / "best.ctlu") + " " + q(jpg) + " ";
    REQUIRE(cli(d, predict + q(d / "pred" / "p.pgm")).code == 0);
    REQUIRE(cli(d, predict + q(d / "p2.pgm")).code == 0);
    const GrayImage pred = read_pgm(d / "pred" / "p.pgm");
    CHECK(pred.width == 256);
    CHECK(pred.height == 256);
    CHECK(slurp(d / "pred" / "p.pgm") == slurp(d / "p2.pgm"));
    for (auto s : pred.samples) CHECK((s == 0 || s == 255));

    // Identical directories score 100; a missing prediction is reported and fails.
    fs::copy_file(d / "pred" / "p.pgm", d / "gt" / "p.pgm");
    const std::string eval = "evaluate --pred-dir " + q(d / "pred") + " --gt-dir " + q(d / "gt");
    REQUIRE(cli(d, eval + " --report " + q(d / "r.json")).code == 0);
    std::ifstream rin(d / "r.json");
    const auto report = nlohmann::json::parse(rin);
    CHECK(report["aggregate"]["mean_dice"] == 100.0);
    CHECK(report["images"].size() == 1);
    fs::copy_file(d / "data" / manifest[0].mask, d / "gt" / "other.pgm");
    const Run missing = cli(d, eval + " --report " + q(d / "r2.json"));
    CHECK(missing.code != 0);
    std::ifstream r2in(d / "r2.json");
    const auto r2 = nlohmann::json::parse(r2in);
    CHECK(r2["aggregate"]["failed"] == 1);

    fs::create_directories(d / "imgs");
    fs::copy_file(jpg, d / "imgs" / "a.jpg");
    REQUIRE(cli(d, "bench --images " + q(d / "imgs") + " --reps 1 --model " +
                       q(d / "run" / "best.ctlu") + " --report " + q(d / "b.json")).code == 0);
    std::ifstream bin(d / "b.json");
    const auto bench = nlohmann::json::parse(bin);
    CHECK(bench.contains("decode"));
    CHECK(bench.contains("storage"));
    CHECK(bench.contains("pipeline"));
  }

  TEST_CASE("train defaults") {
    testutil::TempDir d("cli_defaults");
    const Run help = cli(d, "train --help");
    CHECK(help.code == 0);
    CHECK(help.out.find("--epochs INT [50]") != std::string::npos);
    CHECK(help.out.find("--batch INT [5]") != std::string::npos);
    REQUIRE(cli(d, "gen-data --count 1 --side 256 --out " + q(d / "data")).code == 0);
    CHECK(cli(d, "train --data " + q(d / "data") + " --lr -1 --out " + q(d / "run")).code == 1);
    CHECK(cli(d, "train --data " + q(d / "missing") + " --out " + q(d / "run")).code == 2);
  }
}
