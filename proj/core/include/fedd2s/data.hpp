#pragma once

#include "fedd2s/losses.hpp"
#include "fedd2s/rng.hpp"
#include "fedd2s/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedd2s {

/// Samples shaped (K, H, W, C) with values in [0, 1] and one class index per sample.
struct Dataset {
    Tensor inputs;
    Labels labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
    /// Throws ArgumentError when the invariants do not hold.
    void validate() const;
    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
};

/// Per-client index lists into a parent dataset.
struct PartitionPlan {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> clients;
    std::vector<std::size_t> discarded;

    std::string to_json() const;
    static PartitionPlan from_json(const std::string& text);
};

struct ClientSplit {
    Dataset train;
    Dataset test;
};

/// Draws d ~ Dir(alpha 1_C) per client and fills an equal quota |D|/N per client
/// from per-class pools without replacement. Rounding shortfalls are backfilled
/// from the largest remaining pools; leftover samples are recorded as discarded.
PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t n_clients, double alpha, std::uint64_t seed);

/// Samples from Dir(alpha 1_k) using gamma variates.
std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng);

/// 20% (floor, at least one) test split, stratified when every class present has >= 2 samples.
ClientSplit train_test_split(const Dataset& ds, std::uint64_t seed, double test_fraction = 0.2);

/// Seeded permutation for (seed, epoch), chunked into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n_samples, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch);

/// IDX image file (magic 0x0803 for (N,H,W) or 0x0804 for (N,H,W,C), unsigned bytes)
/// paired with an IDX label file (magic 0x0801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Header `label,p0,p1,...`. Pixels in 0..255 are rescaled when any value exceeds 1.
/// `sample_shape` reshapes each row; empty means (P, 1, 1) for P pixels, or a
/// square (s, s, 1) when P is a perfect square.
Dataset load_csv(const std::filesystem::path& path, Shape sample_shape = {});
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Gaussian clusters (unit variance) whose centres are `separation` apart,
/// min-max scaled to [0, 1] and laid out as an (H, W, 1) grid with H*W = dims.
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dims, double separation,
                    std::uint64_t seed);

}  // namespace fedd2s
