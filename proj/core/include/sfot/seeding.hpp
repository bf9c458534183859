#pragma once

#include <cstdint>
#include <string_view>

namespace sfot {

/// Derives an independent stream seed from a base seed and labels, so that
/// parallel work items draw reproducible randomness regardless of order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view command, std::string_view item);

}  // namespace sfot
