#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace soundedit {

// ============================ error taxonomy ============================

/// Wrong tensor/image/sequence dimensions.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failures: zero-norm cosines, non-finite losses, non-PSD matrices.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File and serialization failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Transient external-service failures (e.g. a prompt client); the caller may
/// retry the same request.
struct RetryableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ============================ hashing ============================

/// FNV-1a over raw bytes; used for parameter fingerprints and seed derivation.
uint64_t fnv1a64(const void* data, size_t n, uint64_t state = 0xcbf29ce484222325ULL);
uint64_t fnv1a64(const std::string& s);

// ============================ random stream ============================

/// Deterministic random stream with a fully documented draw discipline so
/// test oracles can replicate sequences exactly:
///   - engine: std::mt19937_64 seeded directly with `seed` (bit-exact across
///     standard libraries).
///   - uniform(): next_u64() >> 11, scaled by 2^-53 -> [0, 1).
///   - normal(): Box-Muller, consumes exactly two uniforms per call:
///       u1 = max(uniform(), 2^-53), u2 = uniform()
///       z  = sqrt(-2 ln u1) * cos(2*pi*u2)
///     (no caching of the second deviate, so call order maps 1:1 to draws).
///   - uniform_int(lo, hi): lo + next_u64() % (hi - lo + 1), inclusive.
///   - fork(label): independent stream seeded with
///       fnv1a64(label) ^ (base_seed * 0x9E3779B97F4A7C15).
class RandomStream {
  public:
    explicit RandomStream(uint64_t seed);

    uint64_t next_u64();
    double uniform();
    double normal();
    int uniform_int(int lo, int hi);

    RandomStream fork(const std::string& label) const;

    uint64_t base_seed() const { return base_seed_; }

    /// Engine state round-trip for checkpointing.
    std::string save_state() const;
    void restore_state(const std::string& text);

  private:
    uint64_t base_seed_;
    std::mt19937_64 engine_;
};

}  // namespace soundedit
