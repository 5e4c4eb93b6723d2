#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace angio {

// Deterministic random source. All distribution mapping is done here from
// raw mt19937_64 draws so that streams are byte-reproducible across
// platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi). Degenerate lo == hi returns lo.
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller on two uniform draws.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return engine_(); }

  // Engine state round-trip, used by training checkpoints.
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

// Derives the seed of a named sub-stream from a master seed. Independent
// names give independent streams; the mapping is fixed (FNV-1a over the
// name, mixed with splitmix64) and documented here as the fan-out rule.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream_name);
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream_name, std::uint64_t index);

}  // namespace angio
