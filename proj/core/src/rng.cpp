#include "fedd2s/rng.hpp"

namespace fedd2s {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::initializer_list<std::uint64_t> coords) {
    auto h = splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(stream)));
    for (auto c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

}  // namespace fedd2s
