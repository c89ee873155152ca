#include "fedd2s/wire.hpp"

#include "fedd2s/errors.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace fedd2s {

namespace {

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_unsigned_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }

    void put_f64(double value) { put(std::bit_cast<std::uint64_t>(value)); }

    void put_blob(const Tensor& t) {
        put(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put(static_cast<std::uint32_t>(d));
        for (double v : t.values()) put_f64(v);
    }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    bool done() const noexcept { return pos_ == bytes_.size(); }
    std::size_t position() const noexcept { return pos_; }

    template <typename T>
    T get() {
        if (bytes_.size() - pos_ < sizeof(T)) {
            throw ProtocolError("triplet stream truncated at byte " + std::to_string(pos_));
        }
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{bytes_[pos_ + i]} << (8 * i));
        pos_ += sizeof(T);
        return value;
    }

    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    Tensor get_blob() {
        const auto rank = get<std::uint32_t>();
        if (rank == 0 || rank > 8) throw ProtocolError("bad tensor rank " + std::to_string(rank) + " at byte " + std::to_string(pos_));
        Shape shape;
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = get<std::uint32_t>();
            if (d == 0) throw ProtocolError("zero tensor dimension at byte " + std::to_string(pos_));
            shape.push_back(d);
            count *= d;
            if (count > (bytes_.size() - pos_) / 8 + 1) throw ProtocolError("tensor larger than the stream at byte " + std::to_string(pos_));
        }
        std::vector<double> values(count);
        for (auto& v : values) v = get_f64();
        return Tensor(std::move(shape), std::move(values));
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_triplets(std::uint32_t client_id, std::span<const KnowledgeTriplet> triplets) {
    std::vector<std::uint8_t> out;
    for (const auto& t : triplets) {
        if (t.layer > std::numeric_limits<std::uint16_t>::max()) throw ProtocolError("layer index does not fit u16");
        std::vector<std::uint8_t> payload;
        Writer w(payload);
        w.put(client_id);
        w.put(static_cast<std::uint16_t>(t.layer));
        w.put_blob(t.h1);
        w.put_blob(t.hl);
        w.put(static_cast<std::uint32_t>(t.labels.size()));
        for (auto y : t.labels) {
            if (y < 0 || y > std::numeric_limits<std::uint16_t>::max()) throw ProtocolError("label does not fit u16");
            w.put(static_cast<std::uint16_t>(y));
        }
        Writer(out).put(static_cast<std::uint32_t>(payload.size()));
        out.insert(out.end(), payload.begin(), payload.end());
    }
    return out;
}

DecodedTriplets decode_triplets(std::span<const std::uint8_t> bytes) {
    DecodedTriplets result;
    std::size_t offset = 0;
    bool first = true;
    while (offset < bytes.size()) {
        if (bytes.size() - offset < 4) throw ProtocolError("truncated record length at byte " + std::to_string(offset));
        const auto length = Reader(bytes.subspan(offset, 4)).get<std::uint32_t>();
        offset += 4;
        if (bytes.size() - offset < length) {
            throw ProtocolError("record at byte " + std::to_string(offset - 4) + " claims " + std::to_string(length) +
                                " bytes, only " + std::to_string(bytes.size() - offset) + " remain");
        }
        Reader r(bytes.subspan(offset, length));
        const auto client = r.get<std::uint32_t>();
        if (first) {
            result.client_id = client;
            first = false;
        } else if (client != result.client_id) {
            throw ProtocolError("triplet stream mixes clients " + std::to_string(result.client_id) + " and " +
                                std::to_string(client));
        }
        KnowledgeTriplet t;
        t.layer = r.get<std::uint16_t>();
        t.h1 = r.get_blob();
        t.hl = r.get_blob();
        const auto n = r.get<std::uint32_t>();
        t.labels.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) t.labels.push_back(static_cast<std::int32_t>(r.get<std::uint16_t>()));
        if (!r.done()) throw ProtocolError("record at byte " + std::to_string(offset - 4) + " has trailing bytes");
        if (t.h1.rows() != n || t.hl.rows() != n) {
            throw ProtocolError("record at byte " + std::to_string(offset - 4) + ": batch sizes disagree");
        }
        result.triplets.push_back(std::move(t));
        offset += length;
    }
    return result;
}

}  // namespace fedd2s
