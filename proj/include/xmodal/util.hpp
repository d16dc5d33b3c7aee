#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace xmodal {

// Deterministic draw helpers. The mt19937_64 engine itself is bit-exact across
// platforms; the standard library *distributions* are not, so the few mappings
// we need are spelled out here to keep corpora and training runs reproducible.
inline std::size_t rng_index(std::mt19937_64& g, std::size_t n) {
  return static_cast<std::size_t>(g() % n);
}

inline double rng_unit(std::mt19937_64& g) {
  // 53-bit mantissa in [0, 1)
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double rng_uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * rng_unit(g);
}

inline double rng_normal(std::mt19937_64& g) {
  // Box-Muller, no cached spare so every call consumes exactly two draws.
  double u1 = (static_cast<double>(g() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  double u2 = rng_unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

template <typename T>
void shuffle_indices(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng_index(g, i)]);
  }
}

// Runs fn(i) for i in [0, n). Work items must write only to their own slots;
// all reductions happen serially afterwards, so results are identical for any
// thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t w = 0; w < nt; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += nt) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("XMODAL_LOG");
    if (!env) return LogLevel::Info;
    std::string v(env);
    if (v == "quiet" || v == "0") return LogLevel::Quiet;
    if (v == "debug" || v == "2") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[xmodal] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[xmodal:debug] " << msg << "\n";
}

}  // namespace xmodal
