#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsym {

/// Shortest decimal string that round-trips to the same double. Keeps CSV
/// and JSON outputs stable across runs.
inline std::string fmt_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Raised when a caller violates a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Raised on malformed files, incompatible formats, or bad external data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using AgentId = std::uint32_t;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(b - a); }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline bool is_finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

/// One timestamped 2-D position of one identified agent.
struct TrackSample {
  double t = 0.0;
  AgentId id = 0;
  double x = 0.0;
  double y = 0.0;

  Vec2 pos() const { return {x, y}; }
};

/// Time-ordered samples of a single agent; timestamps strictly increase.
struct Track {
  AgentId id = 0;
  std::vector<TrackSample> samples;
};

inline void validate_track(const Track& track) {
  for (std::size_t i = 0; i < track.samples.size(); ++i) {
    const TrackSample& s = track.samples[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y)) {
      throw ContractError("track " + std::to_string(track.id) + ": non-finite sample");
    }
    if (s.id != track.id) {
      throw ContractError("track " + std::to_string(track.id) + ": sample with foreign id");
    }
    if (i > 0 && !(s.t > track.samples[i - 1].t)) {
      throw ContractError("track " + std::to_string(track.id) + ": timestamps not strictly increasing");
    }
  }
}

/// Multi-agent episode on a common uniform time grid.
struct Scene {
  std::vector<Track> tracks;
  double rate_hz = 2.5;
};

// --- uniform-grid helpers ----------------------------------------------
//
// Timestamps are grid-indexed by rounding t * rate; the slack absorbs the
// floating-point error accumulated by t = k / rate.

inline std::int64_t grid_index(double t, double rate_hz) {
  return std::llround(t * rate_hz);
}

inline bool on_grid(double t, double rate_hz, double slack = 1e-6) {
  return std::abs(t * rate_hz - static_cast<double>(grid_index(t, rate_hz))) <= slack;
}

/// Smallest grid point k / rate_hz at or after t.
inline double grid_align_up(double t, double rate_hz) {
  const auto k = static_cast<std::int64_t>(std::ceil(t * rate_hz - 1e-9));
  return static_cast<double>(k) / rate_hz;
}

/// Piecewise-linear resampling onto the uniform grid t0, t0 + 1/rate, ...
/// Output covers every grid point inside the input time span; nothing is
/// extrapolated. Grid points that coincide with an input sample copy it
/// verbatim, so resampling at the input's own rate and phase is the identity.
inline Track resample_track_from(const Track& track, double rate_hz, double t0) {
  if (track.samples.size() < 2) {
    throw ContractError("resample_track: need at least 2 samples");
  }
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw ContractError("resample_track: rate must be positive");
  }
  const double dt = 1.0 / rate_hz;
  const double t_begin = track.samples.front().t;
  const double t_end = track.samples.back().t;
  constexpr double time_slack = 1e-9;

  Track out;
  out.id = track.id;
  std::int64_t j = 0;
  if (t0 < t_begin - time_slack) {
    j = static_cast<std::int64_t>(std::ceil((t_begin - t0) * rate_hz - 1e-9));
  }
  std::size_t seg = 0;
  for (;; ++j) {
    const double t = t0 + static_cast<double>(j) * dt;
    if (t > t_end + time_slack) break;
    while (seg + 2 < track.samples.size() && track.samples[seg + 1].t <= t) ++seg;
    const TrackSample& lo = track.samples[seg];
    const TrackSample& hi = track.samples[seg + 1];
    TrackSample s;
    s.t = t;
    s.id = track.id;
    if (std::abs(t - lo.t) <= time_slack) {
      s.x = lo.x;
      s.y = lo.y;
    } else if (std::abs(t - hi.t) <= time_slack) {
      s.x = hi.x;
      s.y = hi.y;
    } else {
      const double w = (t - lo.t) / (hi.t - lo.t);
      s.x = lo.x + w * (hi.x - lo.x);
      s.y = lo.y + w * (hi.y - lo.y);
    }
    out.samples.push_back(s);
  }
  return out;
}

inline Track resample_track(const Track& track, double rate_hz) {
  if (track.samples.size() < 2) {
    throw ContractError("resample_track: need at least 2 samples");
  }
  return resample_track_from(track, rate_hz, track.samples.front().t);
}

// --- displacement-error metrics ----------------------------------------

/// Mean Euclidean distance between predicted and ground-truth steps.
inline double ade(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt) {
  if (pred.size() != gt.size()) throw ContractError("ade: length mismatch");
  if (pred.empty()) throw ContractError("ade: empty trajectories");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += dist(pred[i], gt[i]);
  return sum / static_cast<double>(pred.size());
}

/// Euclidean distance between the final predicted and ground-truth points.
inline double fde(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt) {
  if (pred.size() != gt.size()) throw ContractError("fde: length mismatch");
  if (pred.empty()) throw ContractError("fde: empty trajectories");
  return dist(pred.back(), gt.back());
}

// --- observation windows ------------------------------------------------

/// Fixed-length observation slice: every agent present carries exactly W
/// consecutive on-grid positions ending at t_last.
struct ObservationWindow {
  std::map<AgentId, std::vector<Vec2>> agent_positions;
  double t_last = 0.0;

  std::size_t width() const {
    return agent_positions.empty() ? 0 : agent_positions.begin()->second.size();
  }
};

inline void validate_window(const ObservationWindow& w) {
  const std::size_t width = w.width();
  if (width < 2) throw ContractError("observation window: need at least 2 samples per agent");
  for (const auto& [id, positions] : w.agent_positions) {
    if (positions.size() != width) {
      throw ContractError("observation window: agent " + std::to_string(id) + " has ragged length");
    }
    for (Vec2 p : positions) {
      if (!is_finite(p)) {
        throw ContractError("observation window: agent " + std::to_string(id) + " has non-finite position");
      }
    }
  }
}

/// One training/evaluation slice of a Scene. Agents in `obs` have obs_len
/// consecutive samples ending at t_last; agents in `fut` additionally have
/// pred_len consecutive samples after t_last.
struct SceneWindow {
  double t_last = 0.0;
  std::map<AgentId, std::vector<Vec2>> obs;
  std::map<AgentId, std::vector<Vec2>> fut;
};

/// Slides a window of obs_len + pred_len over the scene's grid. A window is
/// kept when at least one agent covers the full span (those become `fut`
/// agents); agents covering just the observed span join as neighbours.
inline std::vector<SceneWindow> extract_windows(const Scene& scene, std::size_t obs_len,
                                                std::size_t pred_len) {
  if (obs_len < 2) throw ContractError("extract_windows: obs_len must be at least 2");
  if (pred_len < 1) throw ContractError("extract_windows: pred_len must be at least 1");

  struct GridTrack {
    AgentId id;
    std::map<std::int64_t, Vec2> at;
  };
  std::vector<GridTrack> grid;
  std::int64_t k_min = 0, k_max = -1;
  bool any = false;
  for (const Track& track : scene.tracks) {
    GridTrack g{track.id, {}};
    for (const TrackSample& s : track.samples) {
      if (!on_grid(s.t, scene.rate_hz)) continue;
      g.at[grid_index(s.t, scene.rate_hz)] = s.pos();
    }
    if (g.at.empty()) continue;
    if (!any) {
      k_min = g.at.begin()->first;
      k_max = g.at.rbegin()->first;
      any = true;
    } else {
      k_min = std::min(k_min, g.at.begin()->first);
      k_max = std::max(k_max, g.at.rbegin()->first);
    }
    grid.push_back(std::move(g));
  }
  std::vector<SceneWindow> windows;
  if (!any) return windows;

  const auto span = [](const GridTrack& g, std::int64_t from, std::size_t len,
                       std::vector<Vec2>& out) {
    out.clear();
    for (std::size_t i = 0; i < len; ++i) {
      auto it = g.at.find(from + static_cast<std::int64_t>(i));
      if (it == g.at.end()) return false;
      out.push_back(it->second);
    }
    return true;
  };

  std::vector<Vec2> buf;
  for (std::int64_t k_last = k_min + static_cast<std::int64_t>(obs_len) - 1; k_last <= k_max;
       ++k_last) {
    SceneWindow w;
    w.t_last = static_cast<double>(k_last) / scene.rate_hz;
    const std::int64_t k_first = k_last - static_cast<std::int64_t>(obs_len) + 1;
    for (const GridTrack& g : grid) {
      if (!span(g, k_first, obs_len, buf)) continue;
      w.obs[g.id] = buf;
      if (span(g, k_last + 1, pred_len, buf)) w.fut[g.id] = buf;
    }
    if (!w.fut.empty()) windows.push_back(std::move(w));
  }
  return windows;
}

// --- aggregate metrics ---------------------------------------------------

struct RuntimeStats {
  double mean_s = 0.0;
  double max_s = 0.0;
};

/// Aggregated displacement errors plus per-inference runtime summary.
struct MetricsReport {
  double ade = 0.0;
  double fde = 0.0;
  std::uint64_t n_sequences = 0;
  std::uint64_t n_agents = 0;
  std::uint64_t unscored = 0;
  RuntimeStats runtime;
};

}  // namespace qsym
