#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qsym/recording.hpp"

namespace qsym {

struct StitchConfig {
  double max_gap = 1.0;   // seconds between a track's end and a successor's start
  double max_dist = 0.5;  // metres between extrapolation and the successor's start
  std::map<AgentId, AgentId> manual_merges;  // from -> to, applied first
};

struct MergeRecord {
  AgentId from = 0;
  AgentId to = 0;
  double gap_s = 0.0;
  double dist_m = 0.0;
  bool manual = false;
};

struct StitchResult {
  Recording recording;
  std::vector<MergeRecord> merges;
};

namespace detail {

struct Segment {
  AgentId id = 0;
  std::vector<TrackSample> samples;  // sorted by t
  bool consumed = false;             // it already flows into a later segment
  AgentId root = 0;                  // canonical output id

  double start() const { return samples.front().t; }
  double end() const { return samples.back().t; }

  // Constant-velocity extrapolation from the last two samples; a
  // single-sample segment is treated as stationary.
  Vec2 extrapolate(double t) const {
    const TrackSample& last = samples.back();
    Vec2 v{0.0, 0.0};
    if (samples.size() >= 2) {
      const TrackSample& prev = samples[samples.size() - 2];
      const double dt = last.t - prev.t;
      if (dt > 0.0) v = {(last.x - prev.x) / dt, (last.y - prev.y) / dt};
    }
    return {last.x + v.x * (t - last.t), last.y + v.y * (t - last.t)};
  }
};

inline std::vector<Segment> split_by_id(const Recording& rec) {
  std::map<AgentId, Segment> by_id;
  for (const TrackSample& e : rec.events) {
    Segment& seg = by_id[e.id];
    seg.id = e.id;
    seg.root = e.id;
    if (!seg.samples.empty() && e.t <= seg.samples.back().t) {
      throw DataError("stitch: id " + std::to_string(e.id) +
                      " has non-increasing timestamps at t=" + std::to_string(e.t));
    }
    seg.samples.push_back(e);
  }
  std::vector<Segment> segments;
  segments.reserve(by_id.size());
  for (auto& [id, seg] : by_id) segments.push_back(std::move(seg));
  return segments;
}

}  // namespace detail

/// Merges tracker identities that belong to the same physical agent.
/// Manual merges are applied first and never overridden; the automatic pass
/// then greedily associates, in chronological order of track starts, every
/// new track with an ended one whose constant-velocity extrapolation lands
/// within max_dist of its first sample inside a max_gap time window.
/// Tracks overlapping in time are never merged.
inline StitchResult stitch_tracks(const Recording& rec, const StitchConfig& cfg) {
  if (!(cfg.max_gap > 0.0)) throw ContractError("stitch: max_gap must be positive");
  if (!(cfg.max_dist > 0.0)) throw ContractError("stitch: max_dist must be positive");
  validate_recording(rec);

  StitchResult result;
  result.recording.header = rec.header;

  // Resolve manual merges transitively and reject cycles.
  std::map<AgentId, AgentId> manual;
  for (const auto& [from, to] : cfg.manual_merges) {
    AgentId target = to;
    std::set<AgentId> seen{from};
    auto it = cfg.manual_merges.find(target);
    while (it != cfg.manual_merges.end()) {
      if (!seen.insert(target).second) {
        throw DataError("stitch: manual merge cycle involving id " + std::to_string(from));
      }
      target = it->second;
      it = cfg.manual_merges.find(target);
    }
    if (seen.contains(target)) {
      throw DataError("stitch: manual merge cycle involving id " + std::to_string(from));
    }
    manual[from] = target;
  }

  // Validate manual merges against time overlap, then rewrite ids.
  {
    std::map<AgentId, std::set<double>> times;
    for (const TrackSample& e : rec.events) times[e.id].insert(e.t);
    for (const auto& [from, to] : manual) {
      if (!times.contains(from) || !times.contains(to)) continue;
      const auto& a = times[from];
      const auto& b = times[to];
      if (*a.begin() <= *b.rbegin() && *b.begin() <= *a.rbegin()) {
        throw DataError("stitch: manual merge " + std::to_string(from) + "->" +
                        std::to_string(to) + " joins tracks overlapping in time");
      }
    }
  }

  Recording renamed;
  renamed.header = rec.header;
  renamed.events = rec.events;
  for (TrackSample& e : renamed.events) {
    auto it = manual.find(e.id);
    if (it != manual.end()) e.id = it->second;
  }
  for (const auto& [from, to] : manual) {
    MergeRecord mr;
    mr.from = from;
    mr.to = to;
    mr.manual = true;
    result.merges.push_back(mr);
  }

  auto segments = detail::split_by_id(renamed);

  // Chronological greedy association over track starts.
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (segments[a].start() != segments[b].start()) {
      return segments[a].start() < segments[b].start();
    }
    return segments[a].id < segments[b].id;
  });

  for (std::size_t oi : order) {
    detail::Segment& incoming = segments[oi];
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t j = 0; j < segments.size(); ++j) {
      detail::Segment& ended = segments[j];
      if (&ended == &incoming || ended.consumed) continue;
      const double gap = incoming.start() - ended.end();
      if (!(gap > 0.0) || gap > cfg.max_gap) continue;
      const Vec2 predicted = ended.extrapolate(incoming.start());
      const double d = dist(predicted, incoming.samples.front().pos());
      if (d > cfg.max_dist) continue;
      if (best < 0 || d < best_dist ||
          (d == best_dist && segments[static_cast<std::size_t>(best)].id > ended.id)) {
        best = static_cast<int>(j);
        best_dist = d;
      }
    }
    if (best >= 0) {
      detail::Segment& ended = segments[static_cast<std::size_t>(best)];
      ended.consumed = true;
      incoming.root = ended.root;
      MergeRecord mr;
      mr.from = incoming.id;
      mr.to = ended.root;
      mr.gap_s = incoming.start() - ended.end();
      mr.dist_m = best_dist;
      result.merges.push_back(mr);
    }
  }

  for (const detail::Segment& seg : segments) {
    for (TrackSample e : seg.samples) {
      e.id = seg.root;
      result.recording.events.push_back(e);
    }
  }
  std::sort(result.recording.events.begin(), result.recording.events.end(),
            [](const TrackSample& a, const TrackSample& b) {
              if (a.t != b.t) return a.t < b.t;
              return a.id < b.id;
            });
  return result;
}

}  // namespace qsym
