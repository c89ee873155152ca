#pragma once

#include "fedd2s/protocol.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedd2s {

/// Little-endian triplet transport. Each record is
///   u32 payload_bytes
///   u32 client_id | u16 layer | blob h1 | blob hl | u32 n_labels | u16 labels[n_labels]
/// where a blob is u32 rank | u32 dims[rank] | f64 values[prod(dims)].
std::vector<std::uint8_t> encode_triplets(std::uint32_t client_id, std::span<const KnowledgeTriplet> triplets);

struct DecodedTriplets {
    std::uint32_t client_id = 0;
    std::vector<KnowledgeTriplet> triplets;
};

/// Throws ProtocolError on truncated or inconsistent input, or when records
/// from more than one client are mixed.
DecodedTriplets decode_triplets(std::span<const std::uint8_t> bytes);

}  // namespace fedd2s
