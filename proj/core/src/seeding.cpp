#include "sfot/seeding.hpp"

namespace sfot {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view command, std::string_view item) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, command);
  h = fnv1a(h, "/");
  h = fnv1a(h, item);
  return splitmix64(splitmix64(base) ^ h);
}

}  // namespace sfot
