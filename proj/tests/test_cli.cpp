#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("abstain_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  int run(const std::string& args, const std::string& log = "log.txt") const {
    const std::string cmd = "cd '" + dir.string() + "' && '" ABSTAIN_CLI_PATH "' " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string read(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
};

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("gen-data") {
  Sandbox sb;
  REQUIRE(sb.run("gen-data --n 1000 --flip-margin 0.75 --flip-prob 0.5 --seed 7 --out syn.csv") == 0);
  const auto csv = sb.read("syn.csv");
  CHECK(line_count(csv) == 1001);
  const auto meta = nlohmann::json::parse(sb.read("syn.meta.json"));
  CHECK(meta["class_counts"]["+1"] == 500);
  CHECK(meta["class_counts"]["-1"] == 500);
  CHECK(meta["seed"] == 7);
  CHECK(fs::exists(sb.dir / "syn.manifest.json"));

  REQUIRE(sb.run("gen-data --n 1000 --flip-margin 0.75 --flip-prob 0.5 --seed 7 --out again.csv") == 0);
  CHECK(sb.read("again.csv") == csv);

  CHECK(sb.run("gen-data --n 999 --flip-prob 0.5 --out odd.csv") == 2);
  CHECK(sb.run("gen-data --n 10") == 2);
  CHECK(sb.run("gen-data --n ten --flip-prob 0.5") == 2);
}

TEST_CASE("usage errors") {
  Sandbox sb;
  CHECK(sb.run("") == 2);
  CHECK(sb.run("frobnicate") == 2);
  CHECK(sb.run("train --data x.csv --optimizer adam") == 2);
  CHECK(sb.run("--help") == 0);
}

TEST_CASE("train, eval, bound and replay") {
  Sandbox sb;
  REQUIRE(sb.run("gen-data --n 200 --flip-prob 0.5 --seed 1 --out syn.csv") == 0);
  REQUIRE(sb.run("gen-data --n 200 --flip-prob 0.5 --seed 2 --out test.csv") == 0);
  REQUIRE(sb.run("train --data syn.csv --epochs 3 --widths 8,8 --seed 4 --out-dir run") == 0);
  CHECK(fs::exists(sb.dir / "run/model.json"));
  CHECK(line_count(sb.read("run/history.csv")) == 4);
  CHECK(sb.read("run/history.csv").rfind("epoch,loss,risk,rejection_rate,rho_mean\n", 0) == 0);

  REQUIRE(sb.run("eval --model run/model.json --data test.csv --out-dir ev") == 0);
  const auto metrics = nlohmann::json::parse(sb.read("ev/metrics.json"));
  CHECK(metrics["n"] == 200);

  REQUIRE(sb.run("bound --model run/model.json --data syn.csv --test test.csv --out-dir bd") == 0);
  const auto bound = nlohmann::json::parse(sb.read("bd/bound.json"));
  for (const char* key : {"m", "empirical_risk", "test_risk", "beta", "rho_bar", "bound", "terms"})
    CHECK(bound.contains(key));

  const auto model = sb.read("run/model.json");
  const auto history = sb.read("run/history.csv");
  fs::remove(sb.dir / "run/model.json");
  REQUIRE(sb.run("replay --manifest run/manifest.json") == 0);
  CHECK(sb.read("run/model.json") == model);
  CHECK(sb.read("run/history.csv") == history);
}

TEST_CASE("runtime failures exit 1") {
  Sandbox sb;
  REQUIRE(sb.run("gen-data --n 100 --flip-prob 0.5 --out syn.csv") == 0);
  REQUIRE(sb.run("train --data syn.csv --epochs 1 --widths 4 --out-dir m") == 0);
  std::ofstream(sb.dir / "wide.csv") << "1,2,3,1\n4,5,6,0\n";
  CHECK(sb.run("eval --model m/model.json --data wide.csv --out-dir e") == 1);
  CHECK(sb.run("eval --model m/model.json --data missing.csv --out-dir e", "err.txt") == 1);
  CHECK(sb.read("err.txt").find("missing.csv") != std::string::npos);
  CHECK(sb.run("train --data syn.csv --epochs 1 --widths 4 --rej instance --out-dir inst") == 0);
  CHECK(sb.run("bound --model inst/model.json --data syn.csv --out-dir b") == 1);

  // A changed input blocks replay.
  std::ofstream(sb.dir / "syn.csv", std::ios::app) << "0.5,0.5,1\n";
  CHECK(sb.run("replay --manifest m/manifest.json") == 1);
}

TEST_CASE("calibration-check writes a report") {
  Sandbox sb;
  REQUIRE(sb.run("calibration-check --etas 0.3,0.6 --ds 0.2 --rhos 1 --z-step 1e-3 --tol 1e-3 --out-dir cal") == 0);
  const auto rep = nlohmann::json::parse(sb.read("cal/calibration.json"));
  CHECK(rep["cells"].size() == 2);
  CHECK(rep["gamma_verified"] == true);
  CHECK(rep["summary"]["score_agreements"] == 2);
}
