#include "fedd2s/data.hpp"

#include "fedd2s/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedd2s {

Shape Dataset::sample_shape() const {
    const auto& s = inputs.shape();
    return Shape(s.begin() + 1, s.end());
}

void Dataset::validate() const {
    if (inputs.rank() < 2) throw ArgumentError("dataset inputs must be batched");
    if (inputs.rows() != labels.size()) {
        throw ArgumentError("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
                            std::to_string(labels.size()) + " labels");
    }
    for (auto y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ArgumentError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.inputs = inputs.gather_rows(indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
    out.num_classes = num_classes;
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

// ---------------------------------------------------------------------------
// Partitioning

std::string PartitionPlan::to_json() const {
    nlohmann::json doc;
    doc["alpha"] = alpha;
    doc["seed"] = seed;
    doc["clients"] = clients;
    doc["discarded"] = discarded;
    return doc.dump(2);
}

PartitionPlan PartitionPlan::from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        PartitionPlan plan;
        plan.alpha = doc.at("alpha").get<double>();
        plan.seed = doc.at("seed").get<std::uint64_t>();
        plan.clients = doc.at("clients").get<std::vector<std::vector<std::size_t>>>();
        plan.discarded = doc.at("discarded").get<std::vector<std::size_t>>();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("partition plan: ") + e.what());
    }
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> d(k);
    double total = 0.0;
    for (auto& v : d) {
        v = gamma(rng);
        total += v;
    }
    if (!(total > 0.0)) {
        // Every gamma variate underflowed (tiny alpha): all mass on one class.
        std::fill(d.begin(), d.end(), 0.0);
        d[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
        return d;
    }
    for (auto& v : d) v /= total;
    return d;
}

PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t n_clients, double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0)) throw ArgumentError("dirichlet alpha must be positive");
    if (n_clients < 1) throw ArgumentError("need at least one client");
    ds.validate();
    if (ds.size() < n_clients) {
        throw ArgumentError("dataset of " + std::to_string(ds.size()) + " samples cannot feed " +
                            std::to_string(n_clients) + " clients");
    }
    Rng rng(derive_seed(seed, Stream::partition));
    const auto classes = ds.num_classes;

    std::vector<std::vector<std::size_t>> pools(classes);
    for (std::size_t i = 0; i < ds.size(); ++i) pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::size_t> cursor(classes, 0);
    auto remaining = [&](std::size_t c) { return pools[c].size() - cursor[c]; };

    const std::size_t quota = ds.size() / n_clients;
    PartitionPlan plan;
    plan.alpha = alpha;
    plan.seed = seed;
    plan.clients.resize(n_clients);

    for (std::size_t n = 0; n < n_clients; ++n) {
        const auto d = sample_dirichlet(classes, alpha, rng);
        std::vector<std::size_t> take(classes);
        std::size_t total = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            const auto want = static_cast<std::size_t>(std::llround(d[c] * static_cast<double>(quota)));
            take[c] = std::min(want, remaining(c));
            total += take[c];
        }
        while (total > quota) {
            const auto c = static_cast<std::size_t>(std::max_element(take.begin(), take.end()) - take.begin());
            --take[c];
            --total;
        }
        // Shortfalls from drained pools follow the client's own mixture,
        // renormalized over the classes that still have samples.
        while (total < quota) {
            const auto need = quota - total;
            double mass = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (remaining(c) > take[c]) mass += d[c];
            }
            if (!(mass > 0.0)) break;
            std::size_t added = 0;
            std::size_t favourite = classes;
            for (std::size_t c = 0; c < classes; ++c) {
                const auto left = remaining(c) - take[c];
                if (left == 0) continue;
                if (favourite == classes || d[c] > d[favourite]) favourite = c;
                const auto extra = std::min(left, static_cast<std::size_t>(d[c] / mass * static_cast<double>(need)));
                take[c] += extra;
                added += extra;
            }
            if (added == 0) {
                ++take[favourite];
                added = 1;
            }
            total += added;
        }
        while (total < quota) {
            std::size_t best = classes;
            std::size_t best_left = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                const auto left = remaining(c) - take[c];
                if (left > best_left) {
                    best = c;
                    best_left = left;
                }
            }
            if (best == classes) {
                throw PartitionError("class pools exhausted while filling client " + std::to_string(n));
            }
            ++take[best];
            ++total;
        }
        auto& mine = plan.clients[n];
        mine.reserve(quota);
        for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t k = 0; k < take[c]; ++k) mine.push_back(pools[c][cursor[c]++]);
        }
        if (mine.empty()) throw PartitionError("client " + std::to_string(n) + " received no samples");
    }
    for (std::size_t c = 0; c < classes; ++c) {
        plan.discarded.insert(plan.discarded.end(), pools[c].begin() + static_cast<std::ptrdiff_t>(cursor[c]),
                              pools[c].end());
    }
    std::sort(plan.discarded.begin(), plan.discarded.end());
    return plan;
}

ClientSplit train_test_split(const Dataset& ds, std::uint64_t seed, double test_fraction) {
    ds.validate();
    if (ds.size() < 5) throw ArgumentError("train/test split needs at least 5 samples, got " + std::to_string(ds.size()));
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("test fraction must lie in (0, 1)");
    Rng rng(derive_seed(seed, Stream::split));
    const auto n = ds.size();
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n))));

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    const bool stratified = std::all_of(by_class.begin(), by_class.end(),
                                        [](const auto& v) { return v.empty() || v.size() >= 2; });

    std::vector<std::size_t> test;
    if (stratified) {
        std::vector<std::size_t> quota(ds.num_classes, 0);
        std::vector<double> frac(ds.num_classes, 0.0);
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            const double exact = static_cast<double>(n_test * by_class[c].size()) / static_cast<double>(n);
            quota[c] = std::min(static_cast<std::size_t>(std::floor(exact)), by_class[c].empty() ? 0 : by_class[c].size() - 1);
            frac[c] = exact - static_cast<double>(quota[c]);
            assigned += quota[c];
        }
        std::vector<std::size_t> order(ds.num_classes);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
        while (assigned < n_test) {
            bool progressed = false;
            for (auto c : order) {
                if (assigned == n_test) break;
                if (!by_class[c].empty() && quota[c] + 1 < by_class[c].size()) {
                    ++quota[c];
                    ++assigned;
                    progressed = true;
                }
            }
            if (!progressed) break;
        }
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            auto pool = by_class[c];
            std::shuffle(pool.begin(), pool.end(), rng);
            test.insert(test.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        }
    }
    if (test.size() != n_test) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
    }
    std::sort(test.begin(), test.end());
    std::vector<std::size_t> train;
    train.reserve(n - n_test);
    for (std::size_t i = 0, t = 0; i < n; ++i) {
        if (t < test.size() && test[t] == i) {
            ++t;
        } else {
            train.push_back(i);
        }
    }
    return {ds.subset(train), ds.subset(test)};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n_samples, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch) {
    if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, Stream::batches, {epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n_samples; start += batch_size) {
        const auto stop = std::min(n_samples, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

struct IdxHeader {
    unsigned type = 0;
    std::vector<std::size_t> dims;
    std::size_t payload = 0;  // byte offset of the data
};

IdxHeader read_idx_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    auto fail = [&](std::size_t offset, const std::string& why) {
        return IngestionError(path.string() + ": byte offset " + std::to_string(offset) + ": " + why);
    };
    if (bytes.size() < 4) throw fail(bytes.size(), "truncated magic number");
    if (bytes[0] != 0 || bytes[1] != 0) throw fail(0, "magic number must start with two zero bytes");
    IdxHeader h;
    h.type = bytes[2];
    if (h.type != 0x08) throw fail(2, "only unsigned-byte IDX payloads are supported");
    const std::size_t rank = bytes[3];
    if (rank == 0) throw fail(3, "IDX rank must be positive");
    std::size_t offset = 4;
    for (std::size_t i = 0; i < rank; ++i) {
        if (offset + 4 > bytes.size()) throw fail(offset, "truncated dimension field");
        const std::size_t d = (std::size_t{bytes[offset]} << 24) | (std::size_t{bytes[offset + 1]} << 16) |
                              (std::size_t{bytes[offset + 2]} << 8) | std::size_t{bytes[offset + 3]};
        if (d == 0) throw fail(offset, "zero dimension");
        h.dims.push_back(d);
        offset += 4;
    }
    h.payload = offset;
    const auto expected = shape_size(h.dims);
    if (bytes.size() - offset < expected) throw fail(bytes.size(), "payload shorter than declared dimensions");
    if (bytes.size() - offset > expected) throw fail(offset + expected, "trailing bytes after payload");
    return h;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img_bytes = read_bytes(images);
    const auto lbl_bytes = read_bytes(labels);
    const auto ih = read_idx_header(img_bytes, images);
    const auto lh = read_idx_header(lbl_bytes, labels);
    if (ih.dims.size() != 3 && ih.dims.size() != 4) {
        throw IngestionError(images.string() + ": byte offset 3: image file must have rank 3 or 4");
    }
    if (lh.dims.size() != 1) throw IngestionError(labels.string() + ": byte offset 3: label file must have rank 1");
    if (lh.dims[0] != ih.dims[0]) {
        throw IngestionError(labels.string() + ": byte offset 4: " + std::to_string(lh.dims[0]) + " labels for " +
                             std::to_string(ih.dims[0]) + " images");
    }
    Shape shape(ih.dims.begin(), ih.dims.end());
    if (shape.size() == 3) shape.push_back(1);
    std::vector<double> values(shape_size(shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = img_bytes[ih.payload + i] / 255.0;
    Dataset ds;
    ds.inputs = Tensor(std::move(shape), std::move(values));
    std::int32_t max_label = 0;
    for (std::size_t i = 0; i < lh.dims[0]; ++i) {
        const auto y = static_cast<std::int32_t>(lbl_bytes[lh.payload + i]);
        ds.labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, Shape sample_shape) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "label") {
        throw IngestionError(path.string() + ": header must be 'label,p0,p1,...'");
    }
    const auto pixels = header.size() - 1;
    std::vector<double> values;
    Labels labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col > pixels) break;
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw IngestionError(path.string() + ": row " + std::to_string(row) + ", column " +
                                     std::to_string(col + 1) + " (" + header[col] + "): '" + cell +
                                     "' is not a number");
            }
            if (!std::isfinite(v)) {
                throw IngestionError(path.string() + ": row " + std::to_string(row) + ", column " +
                                     std::to_string(col + 1) + " (" + header[col] + "): non-finite value");
            }
            if (col == 0) {
                if (v < 0 || v != std::floor(v)) {
                    throw IngestionError(path.string() + ": row " + std::to_string(row) +
                                         ", column 1 (label): labels must be non-negative integers");
                }
                labels.push_back(static_cast<std::int32_t>(v));
            } else {
                values.push_back(v);
            }
            ++col;
        }
        if (col != header.size()) {
            throw IngestionError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                                 " columns, header has " + std::to_string(header.size()));
        }
    }
    if (labels.empty()) throw IngestionError(path.string() + ": no data rows");
    const double peak = *std::max_element(values.begin(), values.end());
    const double scale = peak > 1.0 ? 255.0 : 1.0;
    for (auto& v : values) {
        v /= scale;
        if (v < 0.0 || v > 1.0) throw IngestionError(path.string() + ": pixel values must lie in 0..1 or 0..255");
    }
    if (sample_shape.empty()) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
        sample_shape = side * side == pixels ? Shape{side, side, 1} : Shape{pixels, 1, 1};
    }
    if (shape_size(sample_shape) != pixels) {
        throw IngestionError(path.string() + ": sample shape " + shape_string(sample_shape) + " does not hold " +
                             std::to_string(pixels) + " pixels");
    }
    Shape shape{labels.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Dataset ds;
    ds.inputs = Tensor(std::move(shape), std::move(values));
    ds.num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
    ds.labels = std::move(labels);
    return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label";
    const auto pixels = ds.inputs.row_size();
    for (std::size_t p = 0; p < pixels; ++p) out << ",p" << p;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.inputs.row(i)) out << ',' << v;
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dims, double separation,
                    std::uint64_t seed) {
    if (classes < 1 || per_class < 1 || dims < 1) throw ArgumentError("synth_blobs parameters must be positive");
    if (!(separation >= 0.0)) throw ArgumentError("blob separation must be non-negative");
    Rng rng(derive_seed(seed, Stream::data));
    std::normal_distribution<double> normal(0.0, 1.0);

    // Orthogonal centres sit exactly `separation` apart; beyond `dims` classes
    // random directions of the same norm are used.
    const double radius = separation / std::sqrt(2.0);
    std::vector<std::vector<double>> centres(classes, std::vector<double>(dims, 0.0));
    for (std::size_t c = 0; c < classes; ++c) {
        if (c < dims) {
            centres[c][c] = radius;
        } else {
            double norm = 0.0;
            for (auto& v : centres[c]) {
                v = normal(rng);
                norm += v * v;
            }
            for (auto& v : centres[c]) v *= radius / std::sqrt(norm);
        }
    }

    std::vector<double> values;
    values.reserve(classes * per_class * dims);
    Labels labels;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < per_class; ++k) {
            for (std::size_t j = 0; j < dims; ++j) values.push_back(centres[c][j] + normal(rng));
            labels.push_back(static_cast<std::int32_t>(c));
        }
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double low = *lo, span = *hi - *lo;
    for (auto& v : values) v = span > 0.0 ? (v - low) / span : 0.0;

    std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(dims)));
    while (dims % h != 0) --h;
    Dataset ds;
    ds.inputs = Tensor({classes * per_class, h, dims / h, 1}, std::move(values));
    ds.labels = std::move(labels);
    ds.num_classes = classes;
    return ds;
}

}  // namespace fedd2s
