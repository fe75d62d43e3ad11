#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ilt/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::string& args, const fs::path& scratch) {
  const auto out_path = scratch / "stdout.txt";
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd = std::string(ILT_CLI_PATH) + " " + args + " >" + out_path.string() +
                          " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ilt::test::read_file(out_path),
          ilt::test::read_file(err_path)};
}

json small_config_json(const fs::path& out) {
  auto c = ilt::test::small_config();
  c.output_dir = out.string();
  return ilt::to_json(c);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream(path) << j.dump(2) << '\n';
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing config") {
    const auto dir = ilt::test::temp_dir("cli_missing");
    const auto r = run_cli("train -c " + (dir / "nope.json").string(), dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("config not found: " + (dir / "nope.json").string()) != std::string::npos);
  }

  TEST_CASE("bad field names the field and type") {
    const auto dir = ilt::test::temp_dir("cli_bad");
    auto j = small_config_json(dir / "run");
    j["train"]["batch_size"] = "large";
    write_json(dir / "c.json", j);
    const auto r = run_cli("train -c " + (dir / "c.json").string(), dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("train.batch_size") != std::string::npos);
    CHECK(r.err.find("expected non-negative integer, got string") != std::string::npos);
  }

  TEST_CASE("train writes artifacts and leaves the input config alone") {
    const auto dir = ilt::test::temp_dir("cli_train");
    auto j = small_config_json(dir / "run");
    j["weighting"]["scheme"] = "ilt";
    write_json(dir / "c.json", j);
    const auto before = ilt::test::read_file(dir / "c.json");
    const auto r = run_cli("train -c " + (dir / "c.json").string(), dir);
    CHECK(r.code == 0);
    for (const char* f : {"config.json", "metrics.csv", "aggregate.json", "run.log"}) {
      CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
    }
    CHECK(fs::exists(dir / "run" / "snapshots"));
    CHECK(ilt::test::read_file(dir / "c.json") == before);

    SUBCASE("rerun from the persisted copy is byte-identical") {
      const auto r2 = run_cli("train -c " + (dir / "run" / "config.json").string() + " -o " +
                                  (dir / "rerun").string(),
                              dir);
      CHECK(r2.code == 0);
      CHECK(ilt::test::read_file(dir / "rerun" / "metrics.csv") ==
            ilt::test::read_file(dir / "run" / "metrics.csv"));
    }
    SUBCASE("seed override changes only the seed") {
      const auto first = json::parse(ilt::test::read_file(dir / "run" / "config.json"));
      const auto r3 = run_cli("train -c " + (dir / "c.json").string() + " --seed 99", dir);
      CHECK(r3.code == 0);
      const auto second = json::parse(ilt::test::read_file(dir / "run" / "config.json"));
      const auto patch = json::diff(first, second);
      REQUIRE(patch.size() == 1);
      CHECK(patch[0]["path"] == "/seed");
      CHECK(second["seed"] == 99);
    }
    SUBCASE("detect writes reports") {
      j["corruption"] = {{"task", "classification"}, {"fraction", 0.4}};
      write_json(dir / "k.json", j);
      REQUIRE(run_cli("train -c " + (dir / "k.json").string() + " -o " + (dir / "k").string(), dir)
                  .code == 0);
      const auto d = run_cli("detect -r " + (dir / "k").string() + " -p 0.4 --trajectory-ids 0 1", dir);
      CHECK(d.code == 0);
      CHECK(fs::exists(dir / "k" / "detection.json"));
      CHECK(fs::exists(dir / "k" / "ranking_run0.csv"));
      CHECK(fs::exists(dir / "k" / "trajectories_run0.csv"));
      const auto report = json::parse(ilt::test::read_file(dir / "k" / "detection.json"));
      CHECK(report["defined"] == true);
      CHECK(report["runs"][0]["corrupt_count"] == 48);
    }
  }

  TEST_CASE("gradcheck") {
    const auto dir = ilt::test::temp_dir("cli_gradcheck");
    const auto ok = run_cli("gradcheck", dir);
    CHECK(ok.code == 0);
    for (const char* g : {"model_theta", "loss_dpred", "loss_ds_regression", "loss_ds_classification",
                          "mtu_s", "gls_factors"}) {
      CHECK_MESSAGE(ok.out.find(g) != std::string::npos, g);
    }
    CHECK(count_lines(ok.out) >= 6);
    const auto bad = run_cli("gradcheck --perturb-cls-ds 0.01", dir);
    CHECK(bad.code == 2);
    CHECK(bad.err.find("loss_ds_classification") != std::string::npos);
  }

  TEST_CASE("sweep") {
    const auto dir = ilt::test::temp_dir("cli_sweep");
    json sweep{{"base", small_config_json(dir / "unused")},
               {"schemes", {"equal", "ilt"}},
               {"corruptions", {{{"task", "none"}, {"fraction", 0.0}},
                                {{"task", "classification"}, {"fraction", 0.4}}}},
               {"output_dir", (dir / "sweep").string()}};
    write_json(dir / "s.json", sweep);
    const auto r = run_cli("sweep -c " + (dir / "s.json").string(), dir);
    CHECK(r.code == 0);
    const auto csv = ilt::test::read_file(dir / "sweep" / "sweep.csv");
    CHECK(count_lines(csv) == 5);
    std::istringstream in(csv);
    std::string header, line;
    std::getline(in, header);
    int undefined = 0, not_applicable = 0;
    while (std::getline(in, line)) {
      if (line.find("undefined") != std::string::npos) ++undefined;
      if (line.find("n/a") != std::string::npos) ++not_applicable;
    }
    CHECK(undefined == 1);
    CHECK(not_applicable == 2);

    SUBCASE("cells match standalone training") {
      for (const auto& entry : fs::directory_iterator(dir / "sweep")) {
        if (!entry.is_directory()) continue;
        const auto cell = entry.path();
        const auto standalone = dir / ("solo_" + cell.filename().string());
        REQUIRE(run_cli("train -c " + (cell / "config.json").string() + " -o " + standalone.string(),
                        dir)
                    .code == 0);
        CHECK(ilt::test::read_file(standalone / "metrics.csv") ==
              ilt::test::read_file(cell / "metrics.csv"));
        const auto a = json::parse(ilt::test::read_file(standalone / "aggregate.json"));
        const auto b = json::parse(ilt::test::read_file(cell / "aggregate.json"));
        CHECK(a["metrics"] == b["metrics"]);
      }
    }
  }

  TEST_CASE("gen-data and print-defaults") {
    const auto dir = ilt::test::temp_dir("cli_gen");
    write_json(dir / "c.json", small_config_json(dir / "run"));
    const auto r = run_cli("gen-data -c " + (dir / "c.json").string() + " -o " + (dir / "data").string(),
                           dir);
    CHECK(r.code == 0);
    CHECK(ilt::test::read_file(dir / "data" / "train.txt").rfind("# n=120 d=4 K=2", 0) == 0);
    const auto d = run_cli("--print-defaults", dir);
    CHECK(d.code == 0);
    CHECK(json::parse(d.out) == ilt::to_json(ilt::RunConfig{}));
  }
}
