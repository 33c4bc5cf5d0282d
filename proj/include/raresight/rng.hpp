#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace raresight {

using Rng = std::mt19937_64;

/// Derive an independent stream seed from a root seed, a stage name and an
/// index. Derivation is order-independent: adding a stage never shifts the
/// draws of another.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stage, std::uint64_t index = 0)
{
    return Rng(derive_seed(root, stage, index));
}

} // namespace raresight
