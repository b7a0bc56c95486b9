#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qsym/cli.hpp"

using namespace qsym;

namespace {

const std::string kFixtures = QSYM_FIXTURES_DIR;

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("qsym_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliRun {
  int exit_code = 0;
  std::string out;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  CliRun r;
  r.exit_code = run_cli(std::move(args));
  std::cout.rdbuf(old);
  r.out = captured.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli: cnd table emits 81 rows with the all-zero state pinned") {
  const CliRun r = run({"cnd", "table"});
  REQUIRE(r.exit_code == 0);
  std::istringstream is(r.out);
  std::string line;
  REQUIRE(std::getline(is, line));
  REQUIRE(line == "index,state,n_tr,alpha");
  int rows = 0;
  bool pinned = false;
  while (std::getline(is, line)) {
    ++rows;
    if (line == "40,0000,80,0.0125") pinned = true;
  }
  REQUIRE(rows == 81);
  REQUIRE(pinned);
}

TEST_CASE("cli: qtc prints one state string per step") {
  const CliRun r = run({"qtc", kFixtures + "/sample10.jsonl", "--pair", "1,2"});
  REQUIRE(r.exit_code == 0);
  std::istringstream is(r.out);
  std::string line;
  int count = 0;
  while (std::getline(is, line)) {
    REQUIRE(line.size() == 4);
    for (char c : line) REQUIRE((c == '-' || c == '0' || c == '+'));
    ++count;
  }
  REQUIRE(count == 4);  // 5 common frames -> 4 states
}

TEST_CASE("cli: unknown subcommand and unknown flags exit 1") {
  REQUIRE(run({"frobnicate"}).exit_code == 1);
  REQUIRE(run({"cnd", "table", "--bogus"}).exit_code == 1);
  REQUIRE(run({}).exit_code == 1);
}

TEST_CASE("cli: train with zero inputs exits 2 with a no-scenes diagnostic") {
  TempDir tmp;
  const CliRun r = run({"train", "-o", tmp.file("m.qsym")});
  REQUIRE(r.exit_code == 2);
}

TEST_CASE("cli: synth -> train -> replay -> eval -> bench workflow") {
  TempDir tmp;
  const std::string rec = tmp.file("episode.jsonl");
  REQUIRE(run({"synth", "cross-path", "-o", rec, "--agents", "2", "--noise-sd", "0.02",
               "--duration", "18", "--seed", "9"})
              .exit_code == 0);

  // Tiny dimensions keep the test quick.
  const std::vector<std::string> dims{"--epochs", "2",  "--obs-len", "8",    "--pred-len", "3",
                                      "--k", "2",       "--embed-dim", "4",  "--encoder-hidden",
                                      "8",  "--decoder-hidden", "8", "--pool-dim", "8",
                                      "--noise-dim", "2"};
  const std::string model_a = tmp.file("baseline.qsym");
  const std::string model_b = tmp.file("neurosym.qsym");
  std::vector<std::string> train_a{"train", rec, "--mode", "baseline", "-o", model_a,
                                   "--seed", "21"};
  train_a.insert(train_a.end(), dims.begin(), dims.end());
  REQUIRE(run(train_a).exit_code == 0);
  std::vector<std::string> train_b{"train", rec, "--mode", "neurosym", "-o", model_b,
                                   "--seed", "21"};
  train_b.insert(train_b.end(), dims.begin(), dims.end());
  REQUIRE(run(train_b).exit_code == 0);

  // replay twice with the same seed: byte-identical reports.
  const std::string rep1 = tmp.file("r1.json");
  const std::string rep2 = tmp.file("r2.json");
  const std::string plots = tmp.file("plots.csv");
  REQUIRE(run({"replay", rec, "--model", model_a, "--report", rep1, "--plots", plots,
               "--seed", "5", "--k", "3", "--zero-runtime"})
              .exit_code == 0);
  REQUIRE(run({"replay", rec, "--model", model_a, "--report", rep2, "--seed", "5", "--k", "3",
               "--zero-runtime"})
              .exit_code == 0);
  const std::string bytes1 = slurp(rep1);
  REQUIRE(!bytes1.empty());
  REQUIRE(bytes1 == slurp(rep2));
  const nlohmann::json report = nlohmann::json::parse(bytes1);
  REQUIRE(report.contains("ade"));
  REQUIRE(report.contains("runtime"));

  // Plot CSV: header plus (windows x agents x k x pred_len) rows.
  std::istringstream plot_is(slurp(plots));
  std::string line;
  REQUIRE(std::getline(plot_is, line));
  REQUIRE(line == "window_id,agent_id,step,gt_x,gt_y,pred_x,pred_y,sample_index");
  int plot_rows = 0;
  while (std::getline(plot_is, line)) ++plot_rows;
  const int scored = report.at("n_sequences").get<int>();
  REQUIRE(plot_rows >= scored * 3);  // at least one agent per window

  // eval: side-by-side JSON.
  const CliRun ev = run({"eval", rec, "--model-a", model_a, "--model-b", model_b, "--k", "3",
                         "--seed", "5", "--zero-runtime"});
  REQUIRE(ev.exit_code == 0);
  const nlohmann::json cmp = nlohmann::json::parse(ev.out);
  REQUIRE(cmp.contains("model_a"));
  REQUIRE(cmp.contains("model_b"));
  REQUIRE(cmp.at("model_a").at("n_sequences").get<int>() > 0);

  // bench: latency stats and a two-model ratio.
  const CliRun bench = run({"bench", "--model", model_a, "--model-b", model_b, "--agents", "2",
                            "--k", "4", "--reps", "5"});
  REQUIRE(bench.exit_code == 0);
  const nlohmann::json bj = nlohmann::json::parse(bench.out);
  REQUIRE(bj.at("model_a").at("mean_s").get<double>() > 0.0);
  REQUIRE(bj.at("mean_ratio_b_over_a").get<double>() > 0.0);
}

TEST_CASE("cli: stitch applies manual merges and writes the cleaned recording") {
  TempDir tmp;
  const std::string out = tmp.file("clean.jsonl");
  const std::string report = tmp.file("merges.json");
  const CliRun r = run({"stitch", kFixtures + "/split_tracks.jsonl", "-o", out, "--merge",
                        "6:3", "--report", report});
  REQUIRE(r.exit_code == 0);
  const Recording cleaned = read_recording(out);
  std::set<AgentId> ids;
  for (const TrackSample& e : cleaned.events) ids.insert(e.id);
  REQUIRE(ids == std::set<AgentId>{1, 2, 3});
  const nlohmann::json merges = nlohmann::json::parse(slurp(report));
  REQUIRE(merges.is_array());
  REQUIRE(merges.size() == 3);  // one manual + two automatic
  bool manual_seen = false;
  for (const auto& m : merges) {
    if (m.at("manual").get<bool>()) {
      manual_seen = true;
      REQUIRE(m.at("from").get<int>() == 6);
      REQUIRE(m.at("to").get<int>() == 3);
    }
  }
  REQUIRE(manual_seen);
}

TEST_CASE("cli: data errors exit 2") {
  TempDir tmp;
  REQUIRE(run({"qtc", tmp.file("missing.jsonl"), "--pair", "1,2"}).exit_code == 2);
  REQUIRE(run({"replay", kFixtures + "/sample10.jsonl", "--model", tmp.file("no.qsym")})
              .exit_code == 2);
  REQUIRE(run({"synth", "sideways", "-o", tmp.file("x.jsonl")}).exit_code == 2);
  REQUIRE(run({"qtc", kFixtures + "/sample10.jsonl", "--pair", "1,9"}).exit_code == 2);
}

TEST_CASE("cli: QSYM_SEED drives the default seed") {
  TempDir tmp;
  const std::string r1 = tmp.file("a.jsonl");
  const std::string r2 = tmp.file("b.jsonl");
  const std::string r3 = tmp.file("c.jsonl");
  ::setenv("QSYM_SEED", "12345", 1);
  REQUIRE(run({"synth", "cross-path", "-o", r1, "--duration", "4"}).exit_code == 0);
  REQUIRE(run({"synth", "cross-path", "-o", r2, "--duration", "4"}).exit_code == 0);
  ::unsetenv("QSYM_SEED");
  REQUIRE(run({"synth", "cross-path", "-o", r3, "--duration", "4"}).exit_code == 0);
  REQUIRE(slurp(r1) == slurp(r2));
  REQUIRE(slurp(r1) != slurp(r3));  // default seed 7 differs from 12345
}
