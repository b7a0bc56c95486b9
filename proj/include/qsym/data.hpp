#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qsym/core.hpp"
#include "qsym/recording.hpp"

namespace qsym {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  std::string token;
  while (is >> token) fields.push_back(token);
  return fields;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  return fields;
}

inline double parse_real(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError(where + ": trailing characters in '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw DataError(where + ": not a number: '" + s + "'");
  } catch (const std::out_of_range&) {
    throw DataError(where + ": number out of range: '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw DataError(where + ": trailing characters in '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw DataError(where + ": not an integer: '" + s + "'");
  } catch (const std::out_of_range&) {
    throw DataError(where + ": integer out of range: '" + s + "'");
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Whitespace-separated rows `frame ped_id x y`; sample time is
/// frame / frame_rate_hz, so the result sits on the uniform grid directly.
inline Scene load_ucy(const std::string& path, double frame_rate_hz = 2.5) {
  if (!(frame_rate_hz > 0.0)) throw ContractError("load_ucy: frame rate must be positive");
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset: " + path);

  std::map<long long, std::map<long long, Vec2>> rows;  // ped -> frame -> pos
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_ws(line);
    if (fields.size() != 4) {
      throw DataError(where + ": expected 4 fields (frame ped_id x y), got " +
                      std::to_string(fields.size()));
    }
    const long long frame = detail::parse_int(fields[0], where);
    const long long ped = detail::parse_int(fields[1], where);
    const double x = detail::parse_real(fields[2], where);
    const double y = detail::parse_real(fields[3], where);
    if (frame < 0) throw DataError(where + ": negative frame number");
    if (ped < 0) throw DataError(where + ": negative pedestrian id");
    if (!std::isfinite(x) || !std::isfinite(y)) throw DataError(where + ": non-finite position");
    auto [it, inserted] = rows[ped].emplace(frame, Vec2{x, y});
    if (!inserted) {
      throw DataError(where + ": duplicate sample for frame " + std::to_string(frame) +
                      ", pedestrian " + std::to_string(ped));
    }
  }

  Scene scene;
  scene.rate_hz = frame_rate_hz;
  for (const auto& [ped, frames] : rows) {
    Track track;
    track.id = static_cast<AgentId>(ped);
    for (const auto& [frame, pos] : frames) {
      track.samples.push_back(
          {static_cast<double>(frame) / frame_rate_hz, track.id, pos.x, pos.y});
    }
    scene.tracks.push_back(std::move(track));
  }
  return scene;
}

/// CSV with header `t,subject_id,x,y` and arbitrary (possibly unsorted)
/// timestamps; tracks are sorted and resampled onto the canonical grid.
inline Scene load_thor(const std::string& path, double target_rate_hz = 2.5) {
  if (!(target_rate_hz > 0.0)) throw ContractError("load_thor: target rate must be positive");
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  ++line_no;
  {
    auto header = detail::split_csv(detail::trim(line));
    for (auto& h : header) h = detail::trim(h);
    const std::vector<std::string> expected{"t", "subject_id", "x", "y"};
    if (header != expected) {
      throw DataError(path + ":1: expected header 't,subject_id,x,y'");
    }
  }

  std::map<long long, std::vector<TrackSample>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(detail::trim(line));
    if (fields.size() != 4) {
      throw DataError(where + ": expected 4 fields (t,subject_id,x,y), got " +
                      std::to_string(fields.size()));
    }
    const double t = detail::parse_real(detail::trim(fields[0]), where);
    const long long subject = detail::parse_int(detail::trim(fields[1]), where);
    const double x = detail::parse_real(detail::trim(fields[2]), where);
    const double y = detail::parse_real(detail::trim(fields[3]), where);
    if (subject < 0) throw DataError(where + ": negative subject id");
    if (!std::isfinite(t) || !std::isfinite(x) || !std::isfinite(y)) {
      throw DataError(where + ": non-finite value");
    }
    rows[subject].push_back({t, static_cast<AgentId>(subject), x, y});
  }

  Scene scene;
  scene.rate_hz = target_rate_hz;
  for (auto& [subject, samples] : rows) {
    std::sort(samples.begin(), samples.end(),
              [](const TrackSample& a, const TrackSample& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (samples[i].t == samples[i - 1].t) {
        throw DataError(path + ": subject " + std::to_string(subject) +
                        " has duplicate timestamp " + std::to_string(samples[i].t));
      }
    }
    if (samples.size() < 2) continue;  // nothing to resample
    Track raw;
    raw.id = static_cast<AgentId>(subject);
    raw.samples = std::move(samples);
    Track resampled = resample_track_from(raw, target_rate_hz,
                                          grid_align_up(raw.samples.front().t, target_rate_hz));
    if (!resampled.samples.empty()) scene.tracks.push_back(std::move(resampled));
  }
  return scene;
}

/// Flattens a scene to a replayable event stream, ordered by time then id.
inline Recording scene_to_recording(const Scene& scene, const std::string& source = "scene") {
  Recording rec;
  rec.header.source = source;
  rec.header.rate_hz = scene.rate_hz;
  for (const Track& track : scene.tracks) {
    validate_track(track);
    rec.events.insert(rec.events.end(), track.samples.begin(), track.samples.end());
  }
  std::sort(rec.events.begin(), rec.events.end(), [](const TrackSample& a, const TrackSample& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.id < b.id;
  });
  return rec;
}

/// Groups events back into tracks. On-grid tracks pass through verbatim
/// (the inverse of scene_to_recording); off-grid tracks are resampled onto
/// the phase-0 grid at rate_hz.
inline Scene recording_to_scene(const Recording& rec, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ContractError("recording_to_scene: rate must be positive");
  validate_recording(rec);
  std::map<AgentId, Track> by_id;
  for (const TrackSample& e : rec.events) {
    Track& track = by_id[e.id];
    track.id = e.id;
    if (!track.samples.empty() && e.t <= track.samples.back().t) {
      throw DataError("recording: id " + std::to_string(e.id) +
                      " has non-increasing timestamps at t=" + std::to_string(e.t));
    }
    track.samples.push_back(e);
  }
  Scene scene;
  scene.rate_hz = rate_hz;
  for (auto& [id, track] : by_id) {
    const bool aligned = std::all_of(track.samples.begin(), track.samples.end(),
                                     [&](const TrackSample& s) { return on_grid(s.t, rate_hz); });
    if (aligned) {
      scene.tracks.push_back(std::move(track));
    } else {
      if (track.samples.size() < 2) continue;
      Track resampled = resample_track_from(track, rate_hz,
                                            grid_align_up(track.samples.front().t, rate_hz));
      if (!resampled.samples.empty()) scene.tracks.push_back(std::move(resampled));
    }
  }
  return scene;
}

inline Scene recording_to_scene(const Recording& rec) {
  return recording_to_scene(rec, rec.header.rate_hz);
}

}  // namespace qsym
