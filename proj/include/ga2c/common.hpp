#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ga2c {

using NodeId = std::uint32_t;

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map configuration problems to exit code 2 and runtime failures to 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error("index error: " + msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

class ConstraintError : public Error {
 public:
  explicit ConstraintError(const std::string& msg) : Error("constraint error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("configuration error: " + msg) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

class EmptyGraphError : public Error {
 public:
  explicit EmptyGraphError(const std::string& msg) : Error("empty graph: " + msg) {}
};

class EmptyDistributionError : public Error {
 public:
  explicit EmptyDistributionError(const std::string& msg)
      : Error("empty distribution: " + msg) {}
};

class NoCandidateError : public Error {
 public:
  explicit NoCandidateError(const std::string& msg) : Error("no candidate: " + msg) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& msg) : Error("empty input: " + msg) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error("training error: " + msg) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded RNG stream. All randomness in the artifact flows through Rng so
// that runs are reproducible from a single config seed; derive() forks an
// independent stream for a labelled sub-task (per-target episodes, etc.).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  Rng derive(std::uint64_t label) const {
    return Rng(splitmix64(seed_ ^ splitmix64(label + 0x1234abcdULL)));
  }

  double uniform() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
  }

  // Open-interval uniform, safe under log().
  double uniform_open() {
    double u = uniform();
    while (u <= 0.0 || u >= 1.0) u = uniform();
    return u;
  }

  double gumbel() { return -std::log(-std::log(uniform_open())); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace ga2c
