#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace advof {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto distinct exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct NotFoundError : Error {
  using Error::Error;
};
struct GenerationError : Error {
  using Error::Error;
};
struct AlignmentError : Error {
  using Error::Error;
};
struct CalibrationError : Error {
  using Error::Error;
};
struct OptimizationError : Error {
  using Error::Error;
};
struct FusionError : Error {
  FusionError(const std::string& msg, std::string report_text)
      : Error(msg), report(std::move(report_text)) {}
  std::string report;
};
struct ConfigError : Error {
  using Error::Error;
};
struct EvaluationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the project flows through this wrapper
// so that results are reproducible bit-for-bit for a fixed seed. The raw
// mt19937_64 stream is mapped to doubles with fixed arithmetic instead of
// std::uniform_real_distribution, whose output is implementation-defined.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. One draw consumes two stream values.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    uint64_t span = uint64_t(int64_t(hi) - int64_t(lo)) + 1;
    return lo + int(gen_() % span);
  }

  uint64_t next() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Derives a decorrelated sub-seed for a named stream (splitmix64 finalizer).
inline uint64_t sub_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace advof
