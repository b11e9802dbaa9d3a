#pragma once

// Reference implementations written from the definitions, sharing nothing
// with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "wmlab/christ.hpp"
#include "wmlab/evaluation.hpp"

namespace oracle {

inline std::uint64_t sm(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Green membership for the position after `prefix`.
inline std::vector<char> green(std::uint64_t key, std::size_t h, const std::vector<wmlab::TokenId>& prefix,
                               std::size_t V, double gamma) {
  std::uint64_t seed;
  if (h == 0) {
    seed = sm(key);
  } else {
    seed = key;
    std::size_t start = prefix.size() > h ? prefix.size() - h : 0;
    for (std::size_t i = start; i < prefix.size(); ++i) seed = sm(seed ^ (prefix[i] + 1ull));
  }
  std::vector<std::size_t> perm(V);
  for (std::size_t i = 0; i < V; ++i) perm[i] = i;
  std::uint64_t state = seed;
  for (std::size_t i = V - 1; i >= 1; --i) {
    state += 0x9E3779B97F4A7C15ull;
    double u = static_cast<double>(sm(state) >> 11) / 9007199254740992.0;
    std::size_t j = static_cast<std::size_t>(u * static_cast<double>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::size_t n = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(V) + 1e-9));
  std::vector<char> g(V, 0);
  for (std::size_t k = 0; k < n; ++k) g[perm[k]] = 1;
  return g;
}

struct Recount {
  std::size_t green = 0, scored = 0;
  double z = 0;
};

inline Recount recount(std::uint64_t key, std::size_t h, const std::vector<wmlab::TokenId>& ids,
                       std::size_t V, double gamma) {
  Recount r;
  for (std::size_t t = h; t < ids.size(); ++t) {
    std::vector<wmlab::TokenId> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(t));
    r.green += static_cast<std::size_t>(green(key, h, prefix, V, gamma)[ids[t]]);
    ++r.scored;
  }
  const double T = static_cast<double>(r.scored);
  r.z = (static_cast<double>(r.green) - gamma * T) / std::sqrt(T * gamma * (1 - gamma));
  return r;
}

// Every midpoint, F1 by direct counting; ties go to the lowest threshold.
inline std::pair<double, double> best_f1(const wmlab::ScoreSet& s) {
  std::vector<double> all(s.positives);
  all.insert(all.end(), s.negatives.begin(), s.negatives.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cands{-INFINITY};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cands.push_back((all[i] + all[i + 1]) / 2);
  cands.push_back(INFINITY);
  double best = -1, best_t = 0;
  for (double t : cands) {
    double tp = 0, fp = 0;
    for (double v : s.positives) tp += v >= t;
    for (double v : s.negatives) fp += v >= t;
    const double fn = static_cast<double>(s.positives.size()) - tp;
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0;
    const double r = tp / (tp + fn);
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0;
    if (f1 > best) {
      best = f1;
      best_t = t;
    }
  }
  return {best, best_t};
}

inline double gamma_q(double a, double x) {
  using hp = boost::multiprecision::cpp_bin_float_50;
  return static_cast<double>(boost::math::gamma_q(hp(a), hp(x)));
}

// Plain full-table edit distance against one window, minimized over offsets.
inline double alignment(const wmlab::EditKey& key, const std::vector<wmlab::TokenId>& y, double gap) {
  const std::size_t T = y.size();
  double best = 1e300;
  for (std::size_t o = 0; o < key.length; ++o) {
    std::vector<std::vector<double>> D(T + 1, std::vector<double>(T + 1));
    for (std::size_t i = 0; i <= T; ++i) D[i][0] = gap * static_cast<double>(i);
    for (std::size_t j = 0; j <= T; ++j) D[0][j] = gap * static_cast<double>(j);
    for (std::size_t i = 1; i <= T; ++i)
      for (std::size_t j = 1; j <= T; ++j) {
        double xi = key.value((o + j - 1) % key.length, y[i - 1]);
        double c = std::min(1.0, std::max(0.0, 1.0 - (-std::log(1.0 - xi)) / 5.0));
        D[i][j] = std::min({D[i - 1][j - 1] + c, D[i - 1][j] + gap, D[i][j - 1] + gap});
      }
    best = std::min(best, D[T][T]);
  }
  return best;
}

}  // namespace oracle
