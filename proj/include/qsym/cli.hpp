#pragma once

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsym/cnd.hpp"
#include "qsym/data.hpp"
#include "qsym/nodes.hpp"
#include "qsym/predictor.hpp"
#include "qsym/qtc.hpp"
#include "qsym/stitch.hpp"
#include "qsym/synth.hpp"

namespace qsym {

namespace cli_detail {

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("QSYM_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw DataError("QSYM_SEED is not an unsigned integer");
    }
  }
  return 7;
}

inline std::pair<AgentId, AgentId> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw DataError("--pair expects two ids as A,B");
  try {
    const unsigned long a = std::stoul(s.substr(0, comma));
    const unsigned long b = std::stoul(s.substr(comma + 1));
    return {static_cast<AgentId>(a), static_cast<AgentId>(b)};
  } catch (...) {
    throw DataError("--pair expects two ids as A,B");
  }
}

inline const Track& find_track(const Scene& scene, AgentId id) {
  for (const Track& t : scene.tracks) {
    if (t.id == id) return t;
  }
  throw DataError("agent " + std::to_string(id) + " not present in recording");
}

/// Detects the dataset flavour by extension: .jsonl recordings, .csv THOR
/// exports, anything else UCY-style whitespace tables.
inline Scene load_any_scene(const std::string& path) {
  const auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".jsonl")) return recording_to_scene(read_recording(path));
  if (ends_with(".csv")) return load_thor(path);
  return load_ucy(path);
}

inline PoolMode parse_mode(const std::string& s) {
  if (s == "baseline") return PoolMode::Baseline;
  if (s == "neurosym") return PoolMode::NeuroSym;
  throw DataError("unknown mode '" + s + "' (expected baseline or neurosym)");
}

struct BenchStats {
  double mean_s = 0.0;
  double max_s = 0.0;
  double p50_s = 0.0;
};

inline ObservationWindow bench_window(int agents, std::uint32_t obs_len, double rate_hz) {
  ObservationWindow window;
  const double dt = 1.0 / rate_hz;
  for (int i = 0; i < agents; ++i) {
    std::vector<Vec2> positions;
    for (std::uint32_t s = 0; s < obs_len; ++s) {
      positions.push_back({1.2 * dt * static_cast<double>(s), static_cast<double>(i)});
    }
    window.agent_positions.emplace(static_cast<AgentId>(i + 1), std::move(positions));
  }
  window.t_last = (obs_len - 1) * dt;
  return window;
}

inline BenchStats bench_model(const PredictorModel& model, const ObservationWindow& window,
                              int k, int reps, std::uint64_t seed) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  // One warm-up call keeps allocator effects out of the stats.
  (void)predict(model, window, k, seed);
  for (int i = 0; i < reps; ++i) {
    const PredictionBatch batch = predict(model, window, k, seed + static_cast<std::uint64_t>(i));
    times.push_back(batch.inference_seconds);
  }
  BenchStats st;
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double t : times) {
    sum += t;
    st.max_s = std::max(st.max_s, t);
  }
  st.mean_s = sum / static_cast<double>(times.size());
  st.p50_s = sorted[sorted.size() / 2];
  return st;
}

inline nlohmann::json bench_to_json(const BenchStats& st) {
  nlohmann::json j;
  j["mean_s"] = st.mean_s;
  j["max_s"] = st.max_s;
  j["p50_s"] = st.p50_s;
  return j;
}

}  // namespace cli_detail

/// Command-line entry point; returns the process exit code.
/// 0 success, 1 usage error, 2 data/contract error.
inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"qualitative-calculus weighted social trajectory prediction toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  try {
    seed = cli_detail::default_seed();
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  // qtc ----------------------------------------------------------------
  auto* qtc_cmd = app.add_subcommand("qtc", "print the QTC state sequence of an agent pair");
  std::string qtc_rec;
  std::string qtc_pair;
  double qtc_eps = 1e-3;
  qtc_cmd->add_option("recording", qtc_rec, "recording (.jsonl)")->required();
  qtc_cmd->add_option("--pair", qtc_pair, "agent ids as A,B")->required();
  qtc_cmd->add_option("--eps", qtc_eps, "dead-band in metres");

  // cnd ----------------------------------------------------------------
  auto* cnd_cmd = app.add_subcommand("cnd", "conceptual neighbourhood inspection");
  cnd_cmd->require_subcommand(1);
  auto* cnd_table_cmd = cnd_cmd->add_subcommand("table", "dump the 81-state table as CSV");
  std::string cnd_out;
  cnd_table_cmd->add_option("-o,--output", cnd_out, "output file (default: stdout)");

  // synth --------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic recording");
  std::string synth_scenario;
  std::string synth_out;
  SynthParams synth_params;
  synth_cmd->add_option("scenario", synth_scenario, "all-forward | cross-path")->required();
  synth_cmd->add_option("-o,--output", synth_out, "output recording (.jsonl)")->required();
  synth_cmd->add_option("--agents", synth_params.n_agents, "number of agents");
  synth_cmd->add_option("--speed", synth_params.speed, "walking speed m/s");
  synth_cmd->add_option("--noise-sd", synth_params.noise_sd, "position noise sd (m)");
  synth_cmd->add_option("--duration", synth_params.duration, "episode length (s)");
  synth_cmd->add_option("--corridor", synth_params.corridor_len, "all-forward corridor length (m)");
  synth_cmd->add_option("--clearance", synth_params.clearance, "cross-path clearance (m)");
  auto* synth_seed_opt = synth_cmd->add_option("--seed", synth_params.seed, "generator seed");

  // train --------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a predictor on dataset files");
  std::vector<std::string> train_inputs;
  std::string train_mode = "baseline";
  std::string train_out;
  std::string train_trace;
  int train_epochs = 40;
  double train_lr = 3e-3;
  PredictorConfig train_cfg;
  train_cmd->add_option("scenes", train_inputs, "recordings (.jsonl), THOR CSVs, or UCY tables");
  train_cmd->add_option("--mode", train_mode, "baseline | neurosym");
  train_cmd->add_option("-o,--output", train_out, "output model file")->required();
  train_cmd->add_option("--epochs", train_epochs, "training epochs");
  train_cmd->add_option("--lr", train_lr, "learning rate");
  train_cmd->add_option("--obs-len", train_cfg.obs_len, "observed window length");
  train_cmd->add_option("--pred-len", train_cfg.pred_len, "prediction horizon");
  train_cmd->add_option("--k", train_cfg.k_train, "variety samples per step");
  train_cmd->add_option("--embed-dim", train_cfg.embed_dim, "embedding width");
  train_cmd->add_option("--encoder-hidden", train_cfg.encoder_hidden, "encoder hidden size");
  train_cmd->add_option("--decoder-hidden", train_cfg.decoder_hidden, "decoder hidden size");
  train_cmd->add_option("--pool-dim", train_cfg.pool_mlp_dim, "pooling width");
  train_cmd->add_option("--noise-dim", train_cfg.noise_dim, "decoder noise width");
  train_cmd->add_option("--trace", train_trace, "write per-epoch loss CSV here");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_cfg.seed, "init/train seed");

  // replay --------------------------------------------------------------
  auto* replay_cmd = app.add_subcommand("replay", "run the full pipeline over a recording");
  std::string replay_rec, replay_model, replay_report, replay_plots, replay_sched = "serial";
  std::string replay_score = "best";
  PipelineOptions replay_opts;
  bool replay_realtime = false;
  replay_cmd->add_option("recording", replay_rec, "recording (.jsonl)")->required();
  replay_cmd->add_option("--model", replay_model, "model file")->required();
  replay_cmd->add_option("--report", replay_report, "metrics report JSON path");
  replay_cmd->add_option("--plots", replay_plots, "plot-data CSV path");
  replay_cmd->add_flag("--realtime", replay_realtime, "honor recorded timing");
  replay_cmd->add_option("--k", replay_opts.k, "samples per prediction");
  replay_cmd->add_option("--gap-tolerance", replay_opts.gap_tolerance, "grid steps before reset");
  replay_cmd->add_option("--scheduler", replay_sched, "serial | threads");
  replay_cmd->add_option("--score", replay_score, "best | mean (over the k samples)");
  replay_cmd->add_flag("--zero-runtime", replay_opts.zero_runtime,
                       "omit volatile timing from the report");
  auto* replay_seed_opt = replay_cmd->add_option("--seed", replay_opts.seed, "inference seed");

  // eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "side-by-side metrics of two models");
  std::string eval_rec, eval_model_a, eval_model_b, eval_report, eval_score = "best";
  PipelineOptions eval_opts;
  eval_cmd->add_option("recording", eval_rec, "recording (.jsonl)")->required();
  eval_cmd->add_option("--model-a", eval_model_a, "first model file")->required();
  eval_cmd->add_option("--model-b", eval_model_b, "second model file")->required();
  eval_cmd->add_option("--report", eval_report, "write the JSON comparison here");
  eval_cmd->add_option("--k", eval_opts.k, "samples per prediction");
  eval_cmd->add_option("--score", eval_score, "best | mean");
  eval_cmd->add_flag("--zero-runtime", eval_opts.zero_runtime, "omit volatile timing");
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_opts.seed, "inference seed");

  // stitch --------------------------------------------------------------
  auto* stitch_cmd = app.add_subcommand("stitch", "merge split tracker identities");
  std::string stitch_rec, stitch_out, stitch_report;
  std::vector<std::string> stitch_merges;
  StitchConfig stitch_cfg;
  stitch_cmd->add_option("recording", stitch_rec, "recording (.jsonl)")->required();
  stitch_cmd->add_option("-o,--output", stitch_out, "cleaned recording path")->required();
  stitch_cmd->add_option("--merge", stitch_merges, "manual merge FROM:TO (repeatable)");
  stitch_cmd->add_option("--max-gap", stitch_cfg.max_gap, "max gap (s)");
  stitch_cmd->add_option("--max-dist", stitch_cfg.max_dist, "max extrapolation distance (m)");
  stitch_cmd->add_option("--report", stitch_report, "write the merge report JSON here");

  // bench ---------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "inference latency statistics");
  std::string bench_model, bench_model_b;
  int bench_agents = 2;
  int bench_k = 20;
  int bench_reps = 100;
  std::uint64_t bench_seed = seed;
  bench_cmd->add_option("--model", bench_model, "model file")->required();
  bench_cmd->add_option("--model-b", bench_model_b, "optional second model for a ratio");
  bench_cmd->add_option("--agents", bench_agents, "agents in the benchmark window");
  bench_cmd->add_option("--k", bench_k, "samples per prediction");
  bench_cmd->add_option("--reps", bench_reps, "benchmark repetitions");
  bench_cmd->add_option("--seed", bench_seed, "noise seed");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("qsym");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 1;
  }

  // Seeds not given explicitly fall back to QSYM_SEED (or 7).
  if (synth_seed_opt->count() == 0) synth_params.seed = seed;
  if (train_seed_opt->count() == 0) train_cfg.seed = seed;
  if (replay_seed_opt->count() == 0) replay_opts.seed = seed;
  if (eval_seed_opt->count() == 0) eval_opts.seed = seed;

  try {
    if (qtc_cmd->parsed()) {
      const auto [a, b] = cli_detail::parse_pair(qtc_pair);
      const Scene scene = recording_to_scene(read_recording(qtc_rec));
      const auto states =
          qtc_sequence(cli_detail::find_track(scene, a), cli_detail::find_track(scene, b), qtc_eps);
      for (const QtcState& s : states) std::cout << to_string(s) << '\n';
      std::cerr << states.size() << " states for pair (" << a << "," << b << ")\n";
      return 0;
    }

    if (cnd_table_cmd->parsed()) {
      if (cnd_out.empty()) {
        write_cnd_csv(default_cnd(), std::cout);
      } else {
        std::ofstream os(cnd_out, std::ios::trunc);
        if (!os) throw DataError("cannot open output: " + cnd_out);
        write_cnd_csv(default_cnd(), os);
      }
      return 0;
    }

    if (synth_cmd->parsed()) {
      Scenario scenario;
      if (synth_scenario == "all-forward") {
        scenario = Scenario::AllForward;
      } else if (synth_scenario == "cross-path") {
        scenario = Scenario::CrossPath;
      } else {
        throw DataError("unknown scenario '" + synth_scenario +
                        "' (expected all-forward or cross-path)");
      }
      const Recording rec = synthesize(scenario, synth_params);
      write_recording(rec, synth_out);
      std::cerr << "wrote " << rec.events.size() << " events to " << synth_out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (train_inputs.empty()) throw DataError("no scenes given");
      train_cfg.mode = cli_detail::parse_mode(train_mode);
      std::vector<Scene> scenes;
      for (const std::string& path : train_inputs) scenes.push_back(cli_detail::load_any_scene(path));
      PredictorModel model = PredictorModel::init(train_cfg);
      const TrainResult result = train(model, scenes, train_epochs, train_lr);
      save_model(model, train_out);
      if (!train_trace.empty()) {
        std::ofstream os(train_trace, std::ios::trunc);
        if (!os) throw DataError("cannot open trace file: " + train_trace);
        os << "epoch,loss\n";
        for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
          os << i << ',' << fmt_double(result.epoch_loss[i]) << '\n';
        }
      }
      std::cerr << "trained " << to_string(train_cfg.mode) << " model for " << train_epochs
                << " epochs";
      if (!result.epoch_loss.empty()) {
        std::cerr << " (loss " << fmt_double(result.epoch_loss.front()) << " -> "
                  << fmt_double(result.epoch_loss.back()) << ")";
      }
      std::cerr << "; saved to " << train_out << "\n";
      return 0;
    }

    if (replay_cmd->parsed()) {
      if (replay_sched != "serial" && replay_sched != "threads") {
        throw DataError("unknown scheduler '" + replay_sched + "'");
      }
      if (replay_score != "best" && replay_score != "mean") {
        throw DataError("unknown score rule '" + replay_score + "'");
      }
      replay_opts.rule = replay_score == "best" ? ScoreRule::BestOfK : ScoreRule::MeanOfK;
      replay_opts.threaded = replay_sched == "threads";
      replay_opts.realtime = replay_realtime;
      replay_opts.plots_path = replay_plots;
      const Recording rec = read_recording(replay_rec);
      const PredictorModel model = load_model(replay_model);
      replay_opts.pred_len = model.config.pred_len;
      const MetricsReport report = run_pipeline(rec, model, replay_opts);
      if (replay_report.empty()) {
        std::cout << report_to_json(report).dump(2) << '\n';
      } else {
        write_report(report, replay_report);
      }
      std::cerr << "ade " << fmt_double(report.ade) << " m, fde " << fmt_double(report.fde)
                << " m over " << report.n_sequences << " windows / " << report.n_agents
                << " agents (" << report.unscored << " unscored)\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      if (eval_score != "best" && eval_score != "mean") {
        throw DataError("unknown score rule '" + eval_score + "'");
      }
      eval_opts.rule = eval_score == "best" ? ScoreRule::BestOfK : ScoreRule::MeanOfK;
      const Recording rec = read_recording(eval_rec);
      const PredictorModel model_a = load_model(eval_model_a);
      const PredictorModel model_b = load_model(eval_model_b);
      PipelineOptions opts_a = eval_opts;
      opts_a.pred_len = model_a.config.pred_len;
      PipelineOptions opts_b = eval_opts;
      opts_b.pred_len = model_b.config.pred_len;
      const MetricsReport a = run_pipeline(rec, model_a, opts_a);
      const MetricsReport b = run_pipeline(rec, model_b, opts_b);
      nlohmann::json j;
      j["model_a"] = report_to_json(a);
      j["model_b"] = report_to_json(b);
      if (eval_report.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        std::ofstream os(eval_report, std::ios::trunc);
        if (!os) throw DataError("cannot open report file: " + eval_report);
        os << j.dump(2) << '\n';
      }
      std::cerr << "A(" << to_string(model_a.config.mode) << "): ade " << fmt_double(a.ade)
                << " fde " << fmt_double(a.fde) << " | B(" << to_string(model_b.config.mode)
                << "): ade " << fmt_double(b.ade) << " fde " << fmt_double(b.fde) << "\n";
      return 0;
    }

    if (stitch_cmd->parsed()) {
      for (const std::string& m : stitch_merges) {
        const auto colon = m.find(':');
        if (colon == std::string::npos) throw DataError("--merge expects FROM:TO");
        try {
          const auto from = static_cast<AgentId>(std::stoul(m.substr(0, colon)));
          const auto to = static_cast<AgentId>(std::stoul(m.substr(colon + 1)));
          stitch_cfg.manual_merges[from] = to;
        } catch (const DataError&) {
          throw;
        } catch (...) {
          throw DataError("--merge expects FROM:TO with numeric ids");
        }
      }
      const Recording rec = read_recording(stitch_rec);
      const StitchResult result = stitch_tracks(rec, stitch_cfg);
      write_recording(result.recording, stitch_out);
      if (!stitch_report.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const MergeRecord& m : result.merges) {
          nlohmann::json e;
          e["from"] = m.from;
          e["to"] = m.to;
          e["gap_s"] = m.gap_s;
          e["dist_m"] = m.dist_m;
          e["manual"] = m.manual;
          j.push_back(e);
        }
        std::ofstream os(stitch_report, std::ios::trunc);
        if (!os) throw DataError("cannot open report file: " + stitch_report);
        os << j.dump(2) << '\n';
      }
      for (const MergeRecord& m : result.merges) {
        std::cerr << "merged " << m.from << " -> " << m.to;
        if (m.manual) {
          std::cerr << " (manual)\n";
        } else {
          std::cerr << " (gap " << fmt_double(m.gap_s) << " s, dist " << fmt_double(m.dist_m)
                    << " m)\n";
        }
      }
      std::cerr << result.merges.size() << " merges; wrote " << stitch_out << "\n";
      return 0;
    }

    if (bench_cmd->parsed()) {
      if (bench_agents < 1) throw DataError("--agents must be at least 1");
      if (bench_reps < 1) throw DataError("--reps must be at least 1");
      const PredictorModel model = load_model(bench_model);
      const ObservationWindow window =
          cli_detail::bench_window(bench_agents, model.config.obs_len, kCanonicalRateHz);
      const auto stats = cli_detail::bench_model(model, window, bench_k, bench_reps, bench_seed);
      nlohmann::json j;
      j["agents"] = bench_agents;
      j["k"] = bench_k;
      j["reps"] = bench_reps;
      if (bench_model_b.empty()) {
        j["latency"] = cli_detail::bench_to_json(stats);
      } else {
        const PredictorModel model_b = load_model(bench_model_b);
        PredictorConfig dims_a = model.config;
        PredictorConfig dims_b = model_b.config;
        dims_a.mode = dims_b.mode = PoolMode::Baseline;
        dims_a.seed = dims_b.seed = 0;
        if (!(dims_a == dims_b)) {
          std::cerr << "warning: model dimensions differ; the ratio is not like-for-like\n";
        }
        const ObservationWindow window_b =
            cli_detail::bench_window(bench_agents, model_b.config.obs_len, kCanonicalRateHz);
        const auto stats_b =
            cli_detail::bench_model(model_b, window_b, bench_k, bench_reps, bench_seed);
        j["model_a"] = cli_detail::bench_to_json(stats);
        j["model_b"] = cli_detail::bench_to_json(stats_b);
        j["mean_ratio_b_over_a"] = stats_b.mean_s / stats.mean_s;
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace qsym
