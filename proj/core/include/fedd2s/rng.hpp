#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedd2s {

using Rng = std::mt19937_64;

/// Stream tags keep independent random streams apart.
enum class Stream : std::uint64_t {
    selection = 1,
    global_init = 2,
    client_init = 3,
    batches = 4,
    partition = 5,
    split = 6,
    data = 7,
};

/// Mixes a base seed with a tag and coordinates (client, round, epoch, ...)
/// into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::initializer_list<std::uint64_t> coords = {});

}  // namespace fedd2s
