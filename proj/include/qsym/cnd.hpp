#pragma once

#include <algorithm>
#include <array>
#include <ostream>
#include <vector>

#include "qsym/qtc.hpp"

namespace qsym {

/// Conceptual neighbourhood graph over the 81 QTC_C1 states with the uniform
/// transition likelihood alpha = 1 / N_Tr per state.
struct CndTable {
  std::array<std::vector<int>, kQtcStateCount> neighbors;  // sorted state indices
  std::array<int, kQtcStateCount> n_tr{};
  std::array<double, kQtcStateCount> alpha{};
};

/// Edge rule: each symbol independently stays or moves one conceptual step
/// (Minus<->Zero, Zero<->Plus, never Minus<->Plus), at least one symbol
/// changes. Self-transitions are excluded from N_Tr.
inline CndTable build_cnd() {
  CndTable table;
  const auto options = [](QtcSymbol s) -> std::vector<QtcSymbol> {
    switch (s) {
      case QtcSymbol::Minus: return {QtcSymbol::Minus, QtcSymbol::Zero};
      case QtcSymbol::Zero: return {QtcSymbol::Minus, QtcSymbol::Zero, QtcSymbol::Plus};
      default: return {QtcSymbol::Zero, QtcSymbol::Plus};
    }
  };
  for (int idx = 0; idx < kQtcStateCount; ++idx) {
    const QtcState s = index_state(idx);
    std::vector<int>& nb = table.neighbors[idx];
    for (QtcSymbol a : options(s.q1)) {
      for (QtcSymbol b : options(s.q2)) {
        for (QtcSymbol c : options(s.q3)) {
          for (QtcSymbol d : options(s.q4)) {
            const int j = state_index(QtcState{a, b, c, d});
            if (j != idx) nb.push_back(j);
          }
        }
      }
    }
    std::sort(nb.begin(), nb.end());
    table.n_tr[idx] = static_cast<int>(nb.size());
    table.alpha[idx] = 1.0 / static_cast<double>(table.n_tr[idx]);
  }
  return table;
}

/// Shared immutable table; built once, safe for concurrent reads.
inline const CndTable& default_cnd() {
  static const CndTable table = build_cnd();
  return table;
}

inline double alpha_of(const CndTable& table, const QtcState& state) {
  return table.alpha[state_index(state)];
}

/// Attaches each state's transition likelihood to the following step: the
/// label of the interaction at t weights t+1. The first step has no
/// predecessor and gets the neutral weight 1.
inline std::vector<double> alpha_sequence(const std::vector<QtcState>& states,
                                          const CndTable& table) {
  if (states.empty()) throw ContractError("alpha_sequence: empty state sequence");
  std::vector<double> out(states.size());
  out[0] = 1.0;
  for (std::size_t k = 1; k < states.size(); ++k) {
    out[k] = alpha_of(table, states[k - 1]);
  }
  return out;
}

/// 81-row table dump: index, state string, N_Tr, alpha.
inline void write_cnd_csv(const CndTable& table, std::ostream& os) {
  os << "index,state,n_tr,alpha\n";
  for (int idx = 0; idx < kQtcStateCount; ++idx) {
    os << idx << ',' << to_string(index_state(idx)) << ',' << table.n_tr[idx] << ','
       << fmt_double(table.alpha[idx]) << '\n';
  }
}

}  // namespace qsym
