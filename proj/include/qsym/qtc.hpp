#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "qsym/core.hpp"

namespace qsym {

enum class QtcSymbol : std::uint8_t { Minus = 0, Zero = 1, Plus = 2 };

inline char symbol_char(QtcSymbol s) {
  switch (s) {
    case QtcSymbol::Minus: return '-';
    case QtcSymbol::Zero: return '0';
    default: return '+';
  }
}

/// Four-symbol qualitative state of a moving agent pair. q1/q2 encode
/// approach vs recession of each agent relative to the other; q3/q4 encode
/// the side (left/right/along) of each agent's motion relative to the
/// connecting line.
struct QtcState {
  QtcSymbol q1 = QtcSymbol::Zero;
  QtcSymbol q2 = QtcSymbol::Zero;
  QtcSymbol q3 = QtcSymbol::Zero;
  QtcSymbol q4 = QtcSymbol::Zero;

  friend bool operator==(const QtcState&, const QtcState&) = default;

  std::array<QtcSymbol, 4> symbols() const { return {q1, q2, q3, q4}; }
};

inline std::string to_string(const QtcState& s) {
  return {symbol_char(s.q1), symbol_char(s.q2), symbol_char(s.q3), symbol_char(s.q4)};
}

inline constexpr int kQtcStateCount = 81;

/// Canonical base-3 index: Minus=0, Zero=1, Plus=2; q1 most significant.
inline int state_index(const QtcState& s) {
  return static_cast<int>(s.q1) * 27 + static_cast<int>(s.q2) * 9 +
         static_cast<int>(s.q3) * 3 + static_cast<int>(s.q4);
}

inline QtcState index_state(int index) {
  if (index < 0 || index >= kQtcStateCount) {
    throw ContractError("index_state: index out of range");
  }
  QtcState s;
  s.q1 = static_cast<QtcSymbol>(index / 27);
  s.q2 = static_cast<QtcSymbol>((index / 9) % 3);
  s.q3 = static_cast<QtcSymbol>((index / 3) % 3);
  s.q4 = static_cast<QtcSymbol>(index % 3);
  return s;
}

namespace detail {

// Distance comparison with a dead-band of eps meters.
inline QtcSymbol approach_symbol(double d_prev, double d_curr, double eps) {
  if (d_prev - d_curr > eps) return QtcSymbol::Minus;  // closing in
  if (d_curr - d_prev > eps) return QtcSymbol::Plus;   // receding
  return QtcSymbol::Zero;
}

// Side of the mover's displacement relative to the line towards the other
// agent. The cross product is compared against eps * |displacement| *
// |connecting| so the dead-band is unit-consistent; an agent at rest has
// zero cross product and lands on Zero.
inline QtcSymbol side_symbol(Vec2 displacement, Vec2 connecting, double eps) {
  const double c = cross(displacement, connecting);
  const double band = eps * norm(displacement) * norm(connecting);
  if (c < -band) return QtcSymbol::Minus;  // moving to the left of the line
  if (c > band) return QtcSymbol::Plus;    // moving to the right
  return QtcSymbol::Zero;
}

}  // namespace detail

/// QTC_C1 state of the pair (A, B) across one time step.
inline QtcState qtc_c1_state(Vec2 a_prev, Vec2 a_curr, Vec2 b_prev, Vec2 b_curr,
                             double eps = 1e-3) {
  if (!is_finite(a_prev) || !is_finite(a_curr) || !is_finite(b_prev) || !is_finite(b_curr)) {
    throw ContractError("qtc_c1_state: non-finite position");
  }
  if (!(eps >= 0.0)) throw ContractError("qtc_c1_state: eps must be non-negative");

  QtcState s;
  s.q1 = detail::approach_symbol(dist(a_prev, b_curr), dist(a_curr, b_curr), eps);
  s.q2 = detail::approach_symbol(dist(b_prev, a_curr), dist(b_curr, a_curr), eps);
  s.q3 = detail::side_symbol(a_curr - a_prev, b_curr - a_curr, eps);
  s.q4 = detail::side_symbol(b_curr - b_prev, a_curr - b_curr, eps);
  return s;
}

/// One state per consecutive pair of grid-matched samples, in time order.
inline std::vector<QtcState> qtc_sequence(const Track& track_a, const Track& track_b,
                                          double eps = 1e-3) {
  constexpr double time_slack = 1e-6;
  std::vector<std::pair<Vec2, Vec2>> common;  // (A position, B position)
  std::size_t ia = 0, ib = 0;
  while (ia < track_a.samples.size() && ib < track_b.samples.size()) {
    const double ta = track_a.samples[ia].t;
    const double tb = track_b.samples[ib].t;
    if (std::abs(ta - tb) <= time_slack) {
      common.emplace_back(track_a.samples[ia].pos(), track_b.samples[ib].pos());
      ++ia;
      ++ib;
    } else if (ta < tb) {
      ++ia;
    } else {
      ++ib;
    }
  }
  if (common.size() < 2) {
    throw ContractError("qtc_sequence: tracks share fewer than 2 grid samples");
  }
  std::vector<QtcState> states;
  states.reserve(common.size() - 1);
  for (std::size_t i = 0; i + 1 < common.size(); ++i) {
    states.push_back(qtc_c1_state(common[i].first, common[i + 1].first, common[i].second,
                                  common[i + 1].second, eps));
  }
  return states;
}

}  // namespace qsym
