#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qsym/bus.hpp"
#include "qsym/predictor.hpp"
#include "qsym/recording.hpp"

namespace qsym {

inline constexpr double kCanonicalRateHz = 2.5;

enum class ReplaySpeed { Realtime, Max };
enum class ScoreRule { BestOfK, MeanOfK };

// --- source ----------------------------------------------------------------

/// Publishes a recording's events to the raw-tracks topic followed by an
/// end-of-stream marker. Realtime mode reproduces the recorded inter-event
/// delays; max mode runs as fast as subscriber queues allow.
class ReplaySource {
 public:
  ReplaySource(Bus& bus, const Recording& recording, ReplaySpeed speed)
      : bus_(bus), recording_(recording), speed_(speed) {
    validate_recording(recording_);
  }

  /// Publish one event (or the end marker); serial-scheduler entry point.
  bool step() {
    if (done_) return false;
    if (next_ < recording_.events.size()) {
      bus_.publish(kRawTracksTopic, recording_.events[next_]);
      ++next_;
      return true;
    }
    bus_.publish(kRawTracksTopic, EndOfStream{});
    done_ = true;
    return true;
  }

  /// Blocking run; threaded entry point.
  void run() {
    const auto wall_start = std::chrono::steady_clock::now();
    const double t0 = recording_.events.empty() ? 0.0 : recording_.events.front().t;
    while (!done_) {
      if (speed_ == ReplaySpeed::Realtime && next_ < recording_.events.size()) {
        const double offset = recording_.events[next_].t - t0;
        std::this_thread::sleep_until(wall_start + std::chrono::duration_cast<
                                                       std::chrono::steady_clock::duration>(
                                                       std::chrono::duration<double>(offset)));
      }
      step();
    }
  }

  bool done() const { return done_; }

 private:
  Bus& bus_;
  Recording recording_;
  ReplaySpeed speed_;
  std::size_t next_ = 0;
  bool done_ = false;
};

/// One-shot convenience wrapper around ReplaySource.
inline void replay(const Recording& recording, Bus& bus, ReplaySpeed speed) {
  ReplaySource source(bus, recording, speed);
  source.run();
}

// --- inference ---------------------------------------------------------------

struct InferenceOptions {
  int k = 20;
  std::uint64_t seed = 7;
  int gap_tolerance = 1;  // grid steps; larger gaps reset the agent's buffer
  double rate_hz = kCanonicalRateHz;
  std::optional<double> alpha_override;  // testing hook; forces every pair weight
};

/// Consumes raw track samples, maintains per-agent sliding buffers, and once
/// every agent of the current frame has obs_len consecutive on-grid samples
/// publishes the observed window and a sampled prediction batch.
class InferenceNode {
 public:
  InferenceNode(Bus& bus, const PredictorModel& model, InferenceOptions opts,
                const CndTable& cnd = default_cnd())
      : bus_(bus), model_(model), opts_(opts), cnd_(cnd),
        sub_(bus.subscribe(kRawTracksTopic)) {
    if (opts_.k < 1) throw ContractError("inference node: k must be at least 1");
    if (opts_.gap_tolerance < 1) throw ContractError("inference node: gap_tolerance must be >= 1");
    if (!(opts_.rate_hz > 0.0)) throw ContractError("inference node: rate must be positive");
  }

  bool step() {
    if (done_) return false;
    Message msg;
    if (!sub_->try_pop(msg)) return false;
    handle(msg);
    return true;
  }

  void run() {
    while (!done_) handle(sub_->pop());
  }

  bool done() const { return done_; }
  std::uint64_t windows_emitted() const { return next_window_id_; }

 private:
  void handle(const Message& msg) {
    if (std::holds_alternative<EndOfStream>(msg)) {
      flush_frame();
      bus_.publish(kGroundTruthTopic, EndOfStream{});
      bus_.publish(kPredictionsTopic, EndOfStream{});
      done_ = true;
      return;
    }
    const auto& sample = std::get<TrackSample>(msg);
    if (!on_grid(sample.t, opts_.rate_hz)) {
      // Off-grid samples are tracking errors: drop them and restart the agent.
      buffers_.erase(sample.id);
      return;
    }
    const std::int64_t k = grid_index(sample.t, opts_.rate_hz);
    if (frame_open_ && k != frame_k_) flush_frame();
    frame_open_ = true;
    frame_k_ = k;
    frame_[sample.id] = sample.pos();  // duplicate in-frame sample: latest wins
  }

  void flush_frame() {
    if (!frame_open_) return;
    for (const auto& [id, pos] : frame_) {
      auto& buf = buffers_[id];
      if (!buf.empty()) {
        const std::int64_t gap = frame_k_ - buf.back().first;
        if (gap > opts_.gap_tolerance) buf.clear();  // filtered-out rule
      }
      buf.emplace_back(frame_k_, pos);
      while (buf.size() > model_.config.obs_len) buf.pop_front();
    }

    // Emit when every agent of this frame has a full consecutive window.
    // Grid keys strictly increase, so size W spanning W-1 steps means no gap.
    const std::uint32_t w = model_.config.obs_len;
    bool ready = !frame_.empty();
    for (const auto& [id, pos] : frame_) {
      const auto& buf = buffers_[id];
      if (buf.size() < w || buf.back().first != frame_k_ ||
          buf.back().first - buf.front().first != static_cast<std::int64_t>(w) - 1) {
        ready = false;
        break;
      }
    }
    if (ready) {
      ObservationWindow window;
      window.t_last = static_cast<double>(frame_k_) / opts_.rate_hz;
      for (const auto& [id, pos] : frame_) {
        std::vector<Vec2> positions;
        for (const auto& [gk, p] : buffers_[id]) positions.push_back(p);
        window.agent_positions.emplace(id, std::move(positions));
      }
      PredictionBatch batch = predict(model_, window, opts_.k, opts_.seed + next_window_id_,
                                      cnd_, opts_.alpha_override);
      batch.window_id = next_window_id_;
      bus_.publish(kGroundTruthTopic, WindowMsg{next_window_id_, window});
      bus_.publish(kPredictionsTopic, std::move(batch));
      ++next_window_id_;
    }
    frame_.clear();
    frame_open_ = false;
  }

  Bus& bus_;
  const PredictorModel& model_;
  InferenceOptions opts_;
  const CndTable& cnd_;
  Bus::SubscriptionPtr sub_;
  std::map<AgentId, Vec2> frame_;
  std::int64_t frame_k_ = 0;
  bool frame_open_ = false;
  std::map<AgentId, std::deque<std::pair<std::int64_t, Vec2>>> buffers_;
  std::uint64_t next_window_id_ = 0;
  bool done_ = false;
};

// --- analytics ---------------------------------------------------------------

struct AnalyticsOptions {
  std::uint32_t pred_len = 12;
  double rate_hz = kCanonicalRateHz;
  ScoreRule rule = ScoreRule::BestOfK;
  bool zero_runtime = false;      // drop volatile timing from the report
  std::string plots_path;         // empty: no plot-data file
};

/// Buffers prediction batches until enough future ground truth arrives, then
/// scores displacement errors per (window, agent) and aggregates a final
/// report at end-of-stream. Aggregation runs over canonically sorted scores
/// so the report is identical under any scheduler interleaving.
class AnalyticsNode {
 public:
  AnalyticsNode(Bus& bus, AnalyticsOptions opts)
      : opts_(opts),
        pred_sub_(bus.subscribe(kPredictionsTopic)),
        raw_sub_(bus.subscribe(kRawTracksTopic)),
        gt_sub_(bus.subscribe(kGroundTruthTopic)) {
    if (opts_.pred_len < 1) throw ContractError("analytics node: pred_len must be >= 1");
  }

  bool step() {
    if (done_) return false;
    Message msg;
    bool progress = false;
    if (raw_sub_->try_pop(msg)) {
      handle_raw(msg);
      progress = true;
    }
    if (pred_sub_->try_pop(msg)) {
      handle_prediction(msg);
      progress = true;
    }
    if (gt_sub_->try_pop(msg)) {
      handle_gt(msg);
      progress = true;
    }
    return progress;
  }

  void run() {
    // Drain each subscription on its own; buffering makes order irrelevant.
    std::thread raw_thread([&] {
      while (!raw_done_) handle_raw(raw_sub_->pop());
    });
    std::thread gt_thread([&] {
      while (!gt_done_) handle_gt(gt_sub_->pop());
    });
    while (!pred_done_) handle_prediction(pred_sub_->pop());
    raw_thread.join();
    gt_thread.join();
    try_finalize();
  }

  bool done() const { return done_; }

  const MetricsReport& report() const {
    if (!done_) throw ContractError("analytics node: report requested before end-of-stream");
    return report_;
  }

 private:
  struct Score {
    std::uint64_t window_id = 0;
    AgentId agent = 0;
    double ade = 0.0;
    double fde = 0.0;
  };

  struct PendingAgent {
    std::uint64_t window_id = 0;
    double t_last = 0.0;
    AgentId agent = 0;
    std::vector<std::vector<Vec2>> samples;
  };

  void handle_raw(const Message& msg) {
    if (std::holds_alternative<EndOfStream>(msg)) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        raw_done_ = true;
      }
      try_finalize();
      return;
    }
    const auto& s = std::get<TrackSample>(msg);
    if (!on_grid(s.t, opts_.rate_hz)) return;
    {
      std::lock_guard<std::mutex> lock(mu_);
      gt_[s.id][grid_index(s.t, opts_.rate_hz)] = s.pos();
    }
    score_ready();
  }

  void handle_gt(const Message& msg) {
    if (std::holds_alternative<EndOfStream>(msg)) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        gt_done_ = true;
      }
      try_finalize();
      return;
    }
    std::lock_guard<std::mutex> lock(mu_);
    ++observed_windows_;
  }

  void handle_prediction(const Message& msg) {
    if (std::holds_alternative<EndOfStream>(msg)) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        pred_done_ = true;
      }
      try_finalize();
      return;
    }
    const auto& batch = std::get<PredictionBatch>(msg);
    {
      std::lock_guard<std::mutex> lock(mu_);
      runtimes_.push_back(batch.inference_seconds);
      for (const auto& [agent, samples] : batch.samples) {
        PendingAgent p;
        p.window_id = batch.window_id;
        p.t_last = batch.t_last;
        p.agent = agent;
        p.samples = samples;
        pending_.push_back(std::move(p));
      }
    }
    score_ready();
  }

  // Ground truth for steps t_last+1 .. t_last+pred_len, if fully available.
  bool future_of(const PendingAgent& p, std::vector<Vec2>& out) const {
    const auto it = gt_.find(p.agent);
    if (it == gt_.end()) return false;
    const std::int64_t k_last = grid_index(p.t_last, opts_.rate_hz);
    out.clear();
    for (std::uint32_t j = 1; j <= opts_.pred_len; ++j) {
      const auto g = it->second.find(k_last + static_cast<std::int64_t>(j));
      if (g == it->second.end()) return false;
      out.push_back(g->second);
    }
    return true;
  }

  void score_ready() {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<Vec2> future;
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (!future_of(*it, future)) {
        ++it;
        continue;
      }
      Score sc;
      sc.window_id = it->window_id;
      sc.agent = it->agent;
      if (opts_.rule == ScoreRule::BestOfK) {
        sc.ade = ade(it->samples.front(), future);
        sc.fde = fde(it->samples.front(), future);
        for (const auto& traj : it->samples) {
          sc.ade = std::min(sc.ade, ade(traj, future));
          sc.fde = std::min(sc.fde, fde(traj, future));
        }
      } else {
        double sa = 0.0, sf = 0.0;
        for (const auto& traj : it->samples) {
          sa += ade(traj, future);
          sf += fde(traj, future);
        }
        sc.ade = sa / static_cast<double>(it->samples.size());
        sc.fde = sf / static_cast<double>(it->samples.size());
      }
      if (!opts_.plots_path.empty()) {
        for (std::size_t si = 0; si < it->samples.size(); ++si) {
          for (std::uint32_t stepi = 0; stepi < opts_.pred_len; ++stepi) {
            plot_rows_.push_back({it->window_id, it->agent, stepi + 1, future[stepi],
                                  it->samples[si][stepi], si});
          }
        }
      }
      scores_.push_back(sc);
      it = pending_.erase(it);
    }
  }

  void try_finalize() {
    std::lock_guard<std::mutex> lock(mu_);
    if (done_ || !raw_done_ || !pred_done_ || !gt_done_) return;

    std::sort(scores_.begin(), scores_.end(), [](const Score& a, const Score& b) {
      if (a.window_id != b.window_id) return a.window_id < b.window_id;
      return a.agent < b.agent;
    });
    double ade_sum = 0.0, fde_sum = 0.0;
    std::set<std::uint64_t> windows;
    std::set<AgentId> agents;
    for (const Score& s : scores_) {
      ade_sum += s.ade;
      fde_sum += s.fde;
      windows.insert(s.window_id);
      agents.insert(s.agent);
    }
    report_.ade = scores_.empty() ? 0.0 : ade_sum / static_cast<double>(scores_.size());
    report_.fde = scores_.empty() ? 0.0 : fde_sum / static_cast<double>(scores_.size());
    report_.n_sequences = windows.size();
    report_.n_agents = agents.size();
    report_.unscored = pending_.size();
    if (!opts_.zero_runtime && !runtimes_.empty()) {
      double sum = 0.0, mx = 0.0;
      for (double r : runtimes_) {
        sum += r;
        mx = std::max(mx, r);
      }
      report_.runtime.mean_s = sum / static_cast<double>(runtimes_.size());
      report_.runtime.max_s = mx;
    }
    if (!opts_.plots_path.empty()) write_plots();
    done_ = true;
  }

  void write_plots() {
    std::sort(plot_rows_.begin(), plot_rows_.end(), [](const PlotRow& a, const PlotRow& b) {
      if (a.window_id != b.window_id) return a.window_id < b.window_id;
      if (a.agent != b.agent) return a.agent < b.agent;
      if (a.sample != b.sample) return a.sample < b.sample;
      return a.step < b.step;
    });
    std::ofstream os(opts_.plots_path, std::ios::trunc);
    if (!os) throw DataError("cannot open plot-data file: " + opts_.plots_path);
    os << "window_id,agent_id,step,gt_x,gt_y,pred_x,pred_y,sample_index\n";
    for (const PlotRow& r : plot_rows_) {
      os << r.window_id << ',' << r.agent << ',' << r.step << ',' << fmt_double(r.gt.x) << ','
         << fmt_double(r.gt.y) << ',' << fmt_double(r.pred.x) << ',' << fmt_double(r.pred.y)
         << ',' << r.sample << '\n';
    }
  }

  struct PlotRow {
    std::uint64_t window_id;
    AgentId agent;
    std::uint32_t step;  // 1-based prediction step
    Vec2 gt;
    Vec2 pred;
    std::size_t sample;
  };

  AnalyticsOptions opts_;
  Bus::SubscriptionPtr pred_sub_;
  Bus::SubscriptionPtr raw_sub_;
  Bus::SubscriptionPtr gt_sub_;

  std::mutex mu_;
  std::map<AgentId, std::map<std::int64_t, Vec2>> gt_;
  std::vector<PendingAgent> pending_;
  std::vector<Score> scores_;
  std::vector<PlotRow> plot_rows_;
  std::vector<double> runtimes_;
  std::uint64_t observed_windows_ = 0;
  bool raw_done_ = false;
  bool pred_done_ = false;
  bool gt_done_ = false;
  bool done_ = false;
  MetricsReport report_;
};

// --- report serialization ----------------------------------------------------

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ade"] = r.ade;
  j["fde"] = r.fde;
  j["n_sequences"] = r.n_sequences;
  j["n_agents"] = r.n_agents;
  j["unscored"] = r.unscored;
  j["runtime"]["mean_s"] = r.runtime.mean_s;
  j["runtime"]["max_s"] = r.runtime.max_s;
  return j;
}

inline void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open report file: " + path);
  os << report_to_json(r).dump(2) << '\n';
}

// --- full pipeline -------------------------------------------------------------

struct PipelineOptions {
  int k = 20;
  std::uint64_t seed = 7;
  int gap_tolerance = 1;
  std::uint32_t pred_len = 12;
  ScoreRule rule = ScoreRule::BestOfK;
  bool realtime = false;
  bool threaded = false;  // realtime implies threaded
  bool zero_runtime = false;
  std::string plots_path;
  std::optional<double> alpha_override;
};

/// Wires source -> inference -> analytics over a fresh bus and runs to
/// end-of-stream. The serial scheduler round-robins the nodes for bit-exact
/// runs; the threaded scheduler gives each node its own thread.
inline MetricsReport run_pipeline(const Recording& recording, const PredictorModel& model,
                                  const PipelineOptions& opts) {
  if (std::abs(recording.header.rate_hz - kCanonicalRateHz) > 1e-9) {
    throw DataError("recording rate " + fmt_double(recording.header.rate_hz) +
                    " Hz does not match the pipeline rate " + fmt_double(kCanonicalRateHz) +
                    " Hz");
  }
  const bool threaded = opts.threaded || opts.realtime;
  Bus bus(threaded ? 1024 : 0);

  InferenceOptions inf_opts;
  inf_opts.k = opts.k;
  inf_opts.seed = opts.seed;
  inf_opts.gap_tolerance = opts.gap_tolerance;
  inf_opts.rate_hz = recording.header.rate_hz;
  inf_opts.alpha_override = opts.alpha_override;

  AnalyticsOptions ana_opts;
  ana_opts.pred_len = opts.pred_len;
  ana_opts.rate_hz = recording.header.rate_hz;
  ana_opts.rule = opts.rule;
  ana_opts.zero_runtime = opts.zero_runtime;
  ana_opts.plots_path = opts.plots_path;

  // Subscription order: inference first so it sees samples before analytics
  // frees them; irrelevant for correctness, fixed for determinism.
  InferenceNode inference(bus, model, inf_opts);
  AnalyticsNode analytics(bus, ana_opts);
  ReplaySource source(bus, recording, opts.realtime ? ReplaySpeed::Realtime : ReplaySpeed::Max);

  if (threaded) {
    std::thread src_thread([&] { source.run(); });
    std::thread inf_thread([&] { inference.run(); });
    analytics.run();
    src_thread.join();
    inf_thread.join();
  } else {
    while (!analytics.done()) {
      bool progress = false;
      if (source.step()) progress = true;
      if (inference.step()) progress = true;
      if (analytics.step()) progress = true;
      if (!progress && !analytics.done()) {
        throw ContractError("pipeline: scheduler stalled before end-of-stream");
      }
    }
  }
  return analytics.report();
}

}  // namespace qsym
