#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsym/core.hpp"

namespace qsym {

struct RecordingHeader {
  std::string source;
  double rate_hz = 2.5;
};

/// Timestamped event stream of tracked positions, the replayable analogue of
/// a sensor log. Event times are non-decreasing.
struct Recording {
  RecordingHeader header;
  std::vector<TrackSample> events;
};

inline void validate_recording(const Recording& rec) {
  if (!(rec.header.rate_hz > 0.0)) throw DataError("recording: rate_hz must be positive");
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const TrackSample& e = rec.events[i];
    if (!std::isfinite(e.t) || !std::isfinite(e.x) || !std::isfinite(e.y)) {
      throw DataError("recording: non-finite event at position " + std::to_string(i));
    }
    if (i > 0 && e.t < rec.events[i - 1].t) {
      throw DataError("recording: decreasing timestamp at position " + std::to_string(i));
    }
  }
}

/// JSON-lines format: header line {"header":{"source":...,"rate_hz":...}}
/// first, then one event {"t":...,"id":...,"x":...,"y":...} per line.
inline Recording read_recording(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open recording: " + path);
  Recording rec;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    try {
      if (!have_header) {
        if (!j.contains("header")) {
          throw DataError(path + ":" + std::to_string(line_no) + ": first line must be the header");
        }
        rec.header.source = j["header"].value("source", std::string{});
        rec.header.rate_hz = j["header"].at("rate_hz").get<double>();
        have_header = true;
        continue;
      }
      TrackSample e;
      e.t = j.at("t").get<double>();
      e.id = j.at("id").get<AgentId>();
      e.x = j.at("x").get<double>();
      e.y = j.at("y").get<double>();
      rec.events.push_back(e);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  if (!have_header) throw DataError(path + ": empty recording (missing header line)");
  validate_recording(rec);
  return rec;
}

inline void write_recording(const Recording& rec, std::ostream& os) {
  nlohmann::json header;
  header["header"]["source"] = rec.header.source;
  header["header"]["rate_hz"] = rec.header.rate_hz;
  os << header.dump() << '\n';
  for (const TrackSample& e : rec.events) {
    nlohmann::json j;
    j["t"] = e.t;
    j["id"] = e.id;
    j["x"] = e.x;
    j["y"] = e.y;
    os << j.dump() << '\n';
  }
}

inline void write_recording(const Recording& rec, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open recording for writing: " + path);
  write_recording(rec, os);
  if (!os) throw DataError("failed writing recording: " + path);
}

}  // namespace qsym
