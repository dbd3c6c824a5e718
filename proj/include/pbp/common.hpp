#ifndef PBP_COMMON_HPP
#define PBP_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace pbp {

// Contract violations (bad dimensions, invalid arguments).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, degenerate variances, numeric breakdowns.
struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};

// Checkpoint / file format problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Fans a single master seed out to named, counter-indexed sub-streams.
// Adding a new consumer (a new name) never perturbs existing streams.
class SeedSplitter {
 public:
  explicit SeedSplitter(uint64_t master) : master_(master) {}

  uint64_t derive(std::string_view name, uint64_t counter = 0) const {
    return splitmix64(splitmix64(master_ ^ fnv1a(name)) + counter);
  }

  std::mt19937_64 stream(std::string_view name, uint64_t counter = 0) const {
    return std::mt19937_64(derive(name, counter));
  }

  uint64_t master() const { return master_; }

 private:
  uint64_t master_;
};

}  // namespace pbp

#endif  // PBP_COMMON_HPP
