#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace driftvec {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent seed for a named sub-stream. All randomness in the
/// library flows from one user seed through this function, so results never
/// depend on how many numbers an unrelated stream consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::initializer_list<std::uint64_t> keys = {});

/// Counter-based generator (SplitMix64). Cheap to construct, so callers create
/// one per (factor, step) instead of sharing a stateful engine. Normal draws use
/// Box-Muller so output is identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double normal();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// k distinct values from [0, n) in ascending order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace driftvec
