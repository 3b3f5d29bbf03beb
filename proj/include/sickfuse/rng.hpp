#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sickfuse {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named purpose ("init", "dropout", "fold/3", ...)
/// so a single user seed can feed every random stream without correlation.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

inline Rng make_rng(std::uint64_t base, std::string_view stream) {
  return Rng(derive_seed(base, stream));
}

}  // namespace sickfuse
