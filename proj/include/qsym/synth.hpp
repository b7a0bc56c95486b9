#pragma once

#include <cmath>
#include <string>

#include "qsym/recording.hpp"
#include "qsym/rng.hpp"

namespace qsym {

enum class Scenario { AllForward, CrossPath };

struct SynthParams {
  int n_agents = 2;
  double speed = 1.2;        // m/s
  double noise_sd = 0.0;     // per-sample Gaussian position noise
  double duration = 24.0;    // s
  std::uint64_t seed = 1;
  double rate_hz = 2.5;
  double corridor_len = 8.0;  // all-forward traversal length
  double lane_gap = 1.0;      // all-forward lane spacing
  double clearance = 0.6;     // cross-path separation at the crossing
  double cross_radius = 3.5;  // cross-path endpoint distance from the centre
};

namespace detail {

// Position along a back-and-forth traversal of length `leg`.
inline double triangle(double s, double leg) {
  const double period = 2.0 * leg;
  double u = std::fmod(s, period);
  if (u < 0.0) u += period;
  return u <= leg ? u : period - u;
}

}  // namespace detail

/// Deterministic synthetic episodes mirroring the two experimental motion
/// patterns: parallel co-directional walking and mutually crossing paths
/// with an avoidance offset near the crossing point.
inline Recording synthesize(Scenario scenario, const SynthParams& p) {
  if (p.n_agents < 1) throw ContractError("synthesize: n_agents must be at least 1");
  if (!(p.duration > 0.0)) throw ContractError("synthesize: duration must be positive");
  if (!(p.speed > 0.0)) throw ContractError("synthesize: speed must be positive");
  if (!(p.rate_hz > 0.0)) throw ContractError("synthesize: rate must be positive");
  if (p.noise_sd < 0.0) throw ContractError("synthesize: noise_sd must be non-negative");
  if (scenario == Scenario::CrossPath && !(p.clearance > 0.0)) {
    throw ContractError("synthesize: clearance must be positive");
  }

  Rng rng(p.seed);
  Recording rec;
  rec.header.rate_hz = p.rate_hz;
  const auto n_steps = static_cast<std::int64_t>(std::floor(p.duration * p.rate_hz));

  if (scenario == Scenario::AllForward) {
    rec.header.source = "synth:all-forward";
    // Same speed and phase for every lane keeps pairwise distances constant.
    for (std::int64_t k = 0; k <= n_steps; ++k) {
      const double t = static_cast<double>(k) / p.rate_hz;
      for (int i = 0; i < p.n_agents; ++i) {
        const double x = detail::triangle(p.speed * t, p.corridor_len);
        const double y = static_cast<double>(i) * p.lane_gap;
        TrackSample s;
        s.t = t;
        s.id = static_cast<AgentId>(i + 1);
        s.x = x + p.noise_sd * rng.normal();
        s.y = y + p.noise_sd * rng.normal();
        rec.events.push_back(s);
      }
    }
    return rec;
  }

  rec.header.source = "synth:cross-path";
  // Agents traverse diameters of a circle around the centre, all in phase,
  // so every pair meets exactly at the centre. Each agent side-steps to the
  // right of its heading with a Gaussian bump peaking at the crossing; the
  // amplitude is chosen so the closest pair passes at `clearance`.
  const Vec2 centre{4.0, 2.5};
  const double theta0 = rng.uniform(0.0, 6.283185307179586);
  const double amplitude =
      0.5 * p.clearance / std::sin(3.141592653589793 / (2.0 * p.n_agents));
  const double sigma = std::max(1.0, 1.5 * amplitude);
  const double radius = p.cross_radius;
  const double leg = 2.0 * radius;

  for (std::int64_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) / p.rate_hz;
    for (int i = 0; i < p.n_agents; ++i) {
      const double theta = theta0 + 3.141592653589793 * static_cast<double>(i) /
                                        static_cast<double>(p.n_agents);
      const Vec2 dir{std::cos(theta), std::sin(theta)};
      const Vec2 start = centre - radius * dir;

      const double s = p.speed * t;
      const double along = detail::triangle(s, leg);
      const double phase = std::fmod(s, 2.0 * leg);
      const bool outbound = phase <= leg;
      const Vec2 heading = outbound ? dir : -1.0 * dir;
      const Vec2 right{heading.y, -heading.x};
      const double d_centre = along - radius;  // crossing sits mid-leg
      const double offset = amplitude * std::exp(-(d_centre * d_centre) / (sigma * sigma));

      const Vec2 pos = start + along * dir + offset * right;
      TrackSample sample;
      sample.t = t;
      sample.id = static_cast<AgentId>(i + 1);
      sample.x = pos.x + p.noise_sd * rng.normal();
      sample.y = pos.y + p.noise_sd * rng.normal();
      rec.events.push_back(sample);
    }
  }
  return rec;
}

}  // namespace qsym
