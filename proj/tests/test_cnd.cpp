#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <set>
#include <sstream>

#include "qsym/cnd.hpp"

using namespace qsym;

namespace {

// Independent enumeration oracle: two states are neighbours iff they differ
// and every symbol moves by at most one step in the digit encoding.
bool oracle_neighbors(int i, int j) {
  if (i == j) return false;
  int a = i, b = j;
  for (int s = 0; s < 4; ++s) {
    const int da = a % 3;
    const int db = b % 3;
    if (std::abs(da - db) > 1) return false;
    a /= 3;
    b /= 3;
  }
  return true;
}

QtcState sym(char a, char b, char c, char d) {
  const auto conv = [](char ch) {
    if (ch == '-') return QtcSymbol::Minus;
    if (ch == '0') return QtcSymbol::Zero;
    return QtcSymbol::Plus;
  };
  return {conv(a), conv(b), conv(c), conv(d)};
}

}  // namespace

TEST_CASE("cnd: matches the independent enumeration oracle") {
  const CndTable table = build_cnd();
  for (int i = 0; i < kQtcStateCount; ++i) {
    std::set<int> expected;
    for (int j = 0; j < kQtcStateCount; ++j) {
      if (oracle_neighbors(i, j)) expected.insert(j);
    }
    REQUIRE(std::set<int>(table.neighbors[i].begin(), table.neighbors[i].end()) == expected);
    REQUIRE(table.n_tr[i] == static_cast<int>(expected.size()));
  }
}

TEST_CASE("cnd: all-zero state has 80 neighbours, all-nonzero 15") {
  const CndTable& table = default_cnd();
  REQUIRE(table.n_tr[state_index(sym('0', '0', '0', '0'))] == 80);
  REQUIRE(table.n_tr[state_index(sym('-', '-', '-', '-'))] == 15);
  REQUIRE(table.n_tr[state_index(sym('+', '-', '+', '-'))] == 15);
}

TEST_CASE("cnd: no direct minus-to-plus jump") {
  const CndTable& table = default_cnd();
  const int from = state_index(sym('-', '-', '-', '-'));
  const int to = state_index(sym('+', '-', '-', '-'));
  const auto& nb = table.neighbors[from];
  REQUIRE(std::find(nb.begin(), nb.end(), to) == nb.end());
}

TEST_CASE("cnd: neighbour relation is symmetric over all pairs") {
  const CndTable& table = default_cnd();
  for (int i = 0; i < kQtcStateCount; ++i) {
    for (int j : table.neighbors[i]) {
      const auto& back = table.neighbors[j];
      REQUIRE(std::find(back.begin(), back.end(), i) != back.end());
    }
  }
}

TEST_CASE("cnd: per-state transition mass sums to one") {
  const CndTable& table = default_cnd();
  for (int i = 0; i < kQtcStateCount; ++i) {
    REQUIRE(table.n_tr[i] >= 1);
    REQUIRE(table.alpha[i] > 0.0);
    REQUIRE(table.alpha[i] <= 1.0);
    const double mass = table.alpha[i] * static_cast<double>(table.n_tr[i]);
    REQUIRE(std::abs(mass - 1.0) <= 1e-12);
  }
}

TEST_CASE("cnd: the achievable neighbour counts are exactly {15,23,35,53,80}") {
  const CndTable& table = default_cnd();
  std::set<int> counts(table.n_tr.begin(), table.n_tr.end());
  REQUIRE(counts == std::set<int>{15, 23, 35, 53, 80});
  // Frozen alpha fixture: 3^z * 2^(4-z) - 1 for z zero-symbols.
  std::set<double> alphas(table.alpha.begin(), table.alpha.end());
  REQUIRE(alphas == std::set<double>{1.0 / 15, 1.0 / 23, 1.0 / 35, 1.0 / 53, 1.0 / 80});
}

TEST_CASE("alpha_of: enumerated examples") {
  const CndTable& table = default_cnd();
  REQUIRE(alpha_of(table, sym('0', '0', '0', '0')) == Catch::Approx(0.0125).margin(1e-15));
  REQUIRE(alpha_of(table, sym('-', '-', '-', '-')) == Catch::Approx(1.0 / 15).margin(1e-15));
  for (int i = 0; i < kQtcStateCount; ++i) {
    REQUIRE(alpha_of(table, index_state(i)) ==
            1.0 / static_cast<double>(table.neighbors[i].size()));
  }
}

TEST_CASE("alpha_sequence: label shifts onto the following step") {
  const CndTable& table = default_cnd();
  REQUIRE(alpha_sequence({sym('0', '0', '0', '0')}, table) == std::vector<double>{1.0});

  const auto seq = alpha_sequence({sym('0', '0', '0', '0'), sym('-', '0', '0', '0')}, table);
  REQUIRE(seq.size() == 2);
  REQUIRE(seq[0] == 1.0);
  REQUIRE(seq[1] == Catch::Approx(0.0125).margin(1e-15));

  std::vector<QtcState> states;
  for (int i = 0; i < 10; ++i) states.push_back(index_state((i * 17) % 81));
  const auto out = alpha_sequence(states, table);
  REQUIRE(out.size() == states.size());
  for (std::size_t k = 1; k < out.size(); ++k) {
    REQUIRE(out[k] == alpha_of(table, states[k - 1]));
  }
  REQUIRE_THROWS_AS(alpha_sequence({}, table), ContractError);
}

TEST_CASE("cnd csv: 81 data rows with the all-zero row pinned") {
  std::ostringstream os;
  write_cnd_csv(default_cnd(), os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  REQUIRE(line == "index,state,n_tr,alpha");
  int rows = 0;
  bool saw_zero_state = false;
  while (std::getline(is, line)) {
    ++rows;
    if (line.find(",0000,") != std::string::npos) {
      REQUIRE(line == "40,0000,80,0.0125");
      saw_zero_state = true;
    }
  }
  REQUIRE(rows == 81);
  REQUIRE(saw_zero_state);
}
