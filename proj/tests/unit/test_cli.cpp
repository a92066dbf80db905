#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "hetero/error.hpp"
#include "hetero_cli/cli.hpp"
#include "hetero_cli/config.hpp"

using namespace hetero;
using namespace hetero::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const char* base = std::getenv("HETERO_TEST_TMP");
  const fs::path root = base ? fs::path(base) : fs::temp_directory_path() / ("hetero_cli_" + std::to_string(::getpid()));
  const fs::path p = root / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run hetero_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hetero");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("config handling") {
  Json c = default_config();
  apply_override(c, "train.ridge=1e-4");
  CHECK(c["train"]["ridge"].get<double>() == 1e-4);
  apply_override(c, "data.counts=[5,6,7]");
  CHECK(c["data"]["counts"].size() == 3);
  apply_override(c, "data.path=/tmp/x.csv");
  CHECK(c["data"]["path"] == "/tmp/x.csv");
  CHECK_THROWS_AS(apply_override(c, "train.rigde=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.ridge=\"big\""), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "noequals"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\n  \"train\": {\n    \"ridge\": ,\n  }\n}", "cfg.json"),
                       doctest::Contains("cfg.json:3"), ConfigError);
  Json user = parse_config(R"({"purify": {"iterations": 3}})");
  merge_config(c, user);
  CHECK(c["purify"]["iterations"] == 3);
  CHECK_THROWS_WITH_AS(merge_config(c, parse_config(R"({"purify": {"iters": 3}})")),
                       doctest::Contains("purify.iters"), ConfigError);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(hetero_cli({}).code == kUsage);
  CHECK(hetero_cli({"frobnicate"}).code == kUsage);
  CHECK(hetero_cli({"--help"}).code == kOk);
  const auto dir = fresh_dir("usage");
  CHECK(hetero_cli({"generate", "--out-dir", dir.string(), "--set", "train.nope=1"}).code == kUsage);
  std::ofstream(dir / "bad.json") << "{\n\"train\": {\"ridge\": 1e-3,}\n";
  const auto r = hetero_cli({"generate", "--out-dir", dir.string(), "--config", (dir / "bad.json").string()});
  CHECK(r.code == kUsage);
  CHECK(r.err.find(":2") != std::string::npos);
  CHECK(hetero_cli({"generate", "--config", (dir / "missing.json").string()}).code == kUsage);
}

TEST_CASE("generate") {
  const auto dir = fresh_dir("generate");
  auto r = hetero_cli({"generate", "--out-dir", dir.string(), "--set", "data.counts=[70,30]"});
  REQUIRE(r.code == kOk);
  CHECK(lines(dir / "dataset.csv") == 101);
  CHECK(fs::exists(dir / "generate.resolved.json"));
  const std::string first = slurp(dir / "dataset.csv");
  REQUIRE(hetero_cli({"generate", "--out-dir", dir.string(), "--set", "data.counts=[70,30]"}).code == kOk);
  CHECK(slurp(dir / "dataset.csv") == first);
  REQUIRE(hetero_cli({"generate", "--out-dir", dir.string(), "--set", "data.counts=[70,15,15]"}).code == kOk);
  CHECK(lines(dir / "dataset.csv") == 101);
  CHECK(slurp(dir / "dataset.csv") != first);
  const std::string header = slurp(dir / "dataset.csv").substr(0, slurp(dir / "dataset.csv").find('\n'));
  CHECK(header.substr(header.size() - 15) == "label,component");
  const auto resolved = parse_config(slurp(dir / "generate.resolved.json"));
  CHECK(resolved["data"]["counts"].size() == 3);
}

TEST_CASE("convert reports data-format errors with exit 3") {
  const auto dir = fresh_dir("convert");
  const std::vector<unsigned char> bad{0, 0, 0x0D, 1, 0, 0, 0, 1, 0};
  std::ofstream(dir / "img.idx", std::ios::binary).write(reinterpret_cast<const char*>(bad.data()), 9);
  std::ofstream(dir / "lbl.idx", std::ios::binary).write(reinterpret_cast<const char*>(bad.data()), 9);
  const auto r = hetero_cli({"convert", "--out-dir", dir.string(), "--images", (dir / "img.idx").string(), "--labels",
                             (dir / "lbl.idx").string(), "--output", (dir / "out.csv").string()});
  CHECK(r.code == kDataFormat);
  CHECK(r.err.find("magic") != std::string::npos);
}

TEST_CASE("train, influence and purify on a small mixture") {
  const auto dir = fresh_dir("pipeline");
  const std::vector<std::string> data{"--set", "data.counts=[40,20]", "data.test_counts=[60]"};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), {"--out-dir", dir.string()});
    head.insert(head.end(), data.begin(), data.end());
    return hetero_cli(head);
  };
  REQUIRE(with({"train"}).code == kOk);
  CHECK(parse_config(slurp(dir / "model.json")).contains("theta"));
  REQUIRE(with({"influence"}).code == kOk);
  CHECK(parse_config(slurp(dir / "moments.json"))["n"] == 60);
  CHECK(lines(dir / "influence_matrix.csv") >= 60);
  const auto p = with({"purify", "--set", "purify.iterations=2", "purify.remove_per_iter=3"});
  REQUIRE(p.code == kOk);
  CHECK(lines(dir / "trace.csv") == 4);
  CHECK(p.out.find("max test accuracy") != std::string::npos);
  const auto s = with({"sweep", "--set", "sweep.total=60", "sweep.grid_points=3", "sweep.replicates=2"});
  REQUIRE(s.code == kOk);
  CHECK(lines(dir / "sweep.csv") == 7);
  CHECK(lines(dir / "sweep_aggregate.csv") == 4);
}

TEST_CASE("verify exits 2 when a tolerance is missed") {
  const auto dir = fresh_dir("verify");
  const std::vector<std::string> small{"--set", "verify.n=[20]", "verify.s=[1]", "verify.k=[2]"};
  auto go = [&](std::vector<std::string> extra) {
    std::vector<std::string> a{"verify", "--out-dir", dir.string()};
    a.insert(a.end(), small.begin(), small.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return hetero_cli(a);
  };
  const auto ok = go({});
  CHECK(ok.code == kOk);
  CHECK(fs::exists(dir / "verify.json"));
  CHECK(ok.out.find("residual") != std::string::npos);
  CHECK(go({"verify.c_hat=0", "verify.lemmas=false"}).code == kVerificationFailed);
}
