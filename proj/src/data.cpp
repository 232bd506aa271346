#include "spikegan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "spikegan/errors.hpp"
#include "spikegan/rng.hpp"

namespace spikegan {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw DataError("read failed: " + path);
    return bytes;
}

namespace {

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

// Header: two zero bytes, a type code (0x08 = unsigned byte), a rank byte,
// then one big-endian u32 extent per dimension.
void check_idx_header(const std::vector<uint8_t>& bytes, uint8_t want_rank, const std::string& origin) {
    if (bytes.size() < 4) throw DataError(origin + ": truncated header");
    if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || bytes[3] != want_rank)
        throw DataError(origin + ": bad magic (expected unsigned-byte rank-" + std::to_string(want_rank) +
                        " container)");
    if (bytes.size() < 4 + 4 * static_cast<size_t>(want_rank)) throw DataError(origin + ": truncated dimensions");
}

int64_t idx_payload_count(const std::vector<uint8_t>& bytes, uint8_t rank, const std::string& origin,
                          std::vector<int64_t>& dims) {
    dims.clear();
    int64_t total = 1;
    for (uint8_t d = 0; d < rank; ++d) {
        const int64_t e = static_cast<int64_t>(be32(bytes.data() + 4 + 4 * d));
        if (e <= 0) throw DataError(origin + ": non-positive dimension");
        if (total > (int64_t(1) << 40) / e) throw DataError(origin + ": dimension overflow");
        total *= e;
        dims.push_back(e);
    }
    const size_t header = 4 + 4 * static_cast<size_t>(rank);
    const size_t have = bytes.size() - header;
    if (have < static_cast<size_t>(total))
        throw DataError(origin + ": truncated payload (" + std::to_string(have) + " bytes for " +
                        std::to_string(total) + " claimed)");
    if (have > static_cast<size_t>(total)) throw DataError(origin + ": trailing bytes after payload");
    return total;
}

}  // namespace

ImageDataset parse_idx_images(const std::vector<uint8_t>& bytes, const std::string& origin) {
    check_idx_header(bytes, 3, origin);
    std::vector<int64_t> dims;
    const int64_t total = idx_payload_count(bytes, 3, origin, dims);
    ImageDataset ds;
    ds.name = origin;
    ds.images = Tensor<uint8_t>({dims[0], 1, dims[1], dims[2]},
                                std::vector<uint8_t>(bytes.begin() + 16, bytes.begin() + 16 + total));
    return ds;
}

std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes, const std::string& origin) {
    check_idx_header(bytes, 1, origin);
    std::vector<int64_t> dims;
    const int64_t total = idx_payload_count(bytes, 1, origin, dims);
    return std::vector<uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + total);
}

ImageDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    ImageDataset ds = parse_idx_images(read_file_bytes(images_path), images_path);
    if (!labels_path.empty()) {
        ds.labels = parse_idx_labels(read_file_bytes(labels_path), labels_path);
        if (static_cast<int64_t>(ds.labels.size()) != ds.count())
            throw DataError("label count " + std::to_string(ds.labels.size()) + " does not match image count " +
                            std::to_string(ds.count()));
    }
    return ds;
}

Tensor<float> normalize(const Tensor<uint8_t>& images) {
    Tensor<float> out(images.shape());
    for (int64_t i = 0; i < images.size(); ++i) out[i] = static_cast<float>(images[i]) / 127.5f - 1.0f;
    return out;
}

Tensor<uint8_t> denormalize(const Tensor<float>& images) {
    Tensor<uint8_t> out(images.shape());
    for (int64_t i = 0; i < images.size(); ++i) {
        const float v = (images[i] + 1.0f) * 127.5f;
        out[i] = static_cast<uint8_t>(std::min(255.0f, std::max(0.0f, std::round(v))));
    }
    return out;
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int64_t batch_size, uint64_t seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (batch_size > n)
        throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(n));
    std::vector<int64_t> perm(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    std::vector<std::vector<int64_t>> batches;
    const int64_t nb = n / batch_size;
    batches.reserve(static_cast<size_t>(nb));
    for (int64_t b = 0; b < nb; ++b)
        batches.emplace_back(perm.begin() + b * batch_size, perm.begin() + (b + 1) * batch_size);
    return batches;
}

Tensor<float> gather_batch(const Tensor<float>& data, const std::vector<int64_t>& idx) {
    if (data.rank() < 1) throw ShapeError("gather_batch: rank-0 input");
    const int64_t n = data.dim(0);
    const int64_t stride = data.size() / n;
    Shape out_shape = data.shape();
    out_shape[0] = static_cast<int64_t>(idx.size());
    Tensor<float> out(out_shape);
    for (size_t k = 0; k < idx.size(); ++k) {
        const int64_t i = idx[k];
        if (i < 0 || i >= n) throw ShapeError("gather_batch: index out of range");
        std::copy(data.data() + i * stride, data.data() + (i + 1) * stride,
                  out.data() + static_cast<int64_t>(k) * stride);
    }
    return out;
}

ImageDataset synthetic_dataset(const std::string& kind, int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed,
                               double blob_level) {
    if (n < 1 || c < 1 || h < 1 || w < 1) throw ConfigError("synthetic_dataset: bad shape");
    Rng rng(seed);
    ImageDataset ds;
    ds.name = kind;
    ds.images = Tensor<uint8_t>({n, c, h, w});
    ds.labels.resize(static_cast<size_t>(n));

    if (kind == "bars") {
        for (int64_t i = 0; i < n; ++i) {
            uint8_t* img = ds.images.data() + i * c * h * w;
            const bool row_bar = rng.bernoulli(0.5);
            if (row_bar) {
                const int64_t r = rng.uniform_int(h);
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t x = 0; x < w; ++x) img[(ci * h + r) * w + x] = 255;
                ds.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(r);
            } else {
                const int64_t col = rng.uniform_int(w);
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t y = 0; y < h; ++y) img[(ci * h + y) * w + col] = 255;
                ds.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(h + col);
            }
        }
        return ds;
    }

    if (kind == "blobs") {
        const double sigma = static_cast<double>(std::min(h, w)) / 6.0;
        // Peak chosen so the dataset mean pixel intensity lands near
        // blob_level; centers stay a quarter-image away from the border so
        // little of the bump is clipped.
        const double peak =
            std::min(1.0, blob_level * static_cast<double>(h * w) / (2.0 * M_PI * sigma * sigma));
        for (int64_t i = 0; i < n; ++i) {
            uint8_t* img = ds.images.data() + i * c * h * w;
            const double cy = rng.uniform(h / 4.0, 3.0 * h / 4.0);
            const double cx = rng.uniform(w / 4.0, 3.0 * w / 4.0);
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    const double v = peak * std::exp(-d2 / (2.0 * sigma * sigma));
                    const uint8_t b = static_cast<uint8_t>(std::lround(255.0 * v));
                    for (int64_t ci = 0; ci < c; ++ci) img[(ci * h + y) * w + x] = b;
                }
            const int quad = (cy >= h / 2.0 ? 2 : 0) + (cx >= w / 2.0 ? 1 : 0);
            ds.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(quad);
        }
        return ds;
    }

    throw ConfigError("unknown synthetic dataset kind '" + kind + "' (expected bars|blobs)");
}

ImageDataset load_cifar10(const std::vector<std::string>& bin_paths) {
    if (bin_paths.empty()) throw DataError("cifar10: no batch files given");
    constexpr int64_t kRecord = 1 + 3 * 32 * 32;
    std::vector<uint8_t> pixels;
    std::vector<uint8_t> labels;
    for (const std::string& path : bin_paths) {
        const std::vector<uint8_t> bytes = read_file_bytes(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw DataError("cifar10: " + path + " is not a whole number of 3073-byte records");
        const size_t count = bytes.size() / kRecord;
        for (size_t r = 0; r < count; ++r) {
            const uint8_t* rec = bytes.data() + r * kRecord;
            labels.push_back(rec[0]);
            pixels.insert(pixels.end(), rec + 1, rec + kRecord);
        }
    }
    ImageDataset ds;
    ds.name = "cifar10";
    ds.images = Tensor<uint8_t>({static_cast<int64_t>(labels.size()), 3, 32, 32}, std::move(pixels));
    ds.labels = std::move(labels);
    return ds;
}

ImageDataset load_planar_rgb_dir(const std::string& dir, int64_t h, int64_t w) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no files in " + dir);
    const int64_t frame = 3 * h * w;
    std::vector<uint8_t> pixels;
    pixels.reserve(files.size() * static_cast<size_t>(frame));
    for (const std::string& f : files) {
        std::vector<uint8_t> bytes = read_file_bytes(f);
        if (static_cast<int64_t>(bytes.size()) != frame)
            throw DataError(f + ": expected " + std::to_string(frame) + " planar RGB bytes, got " +
                            std::to_string(bytes.size()));
        pixels.insert(pixels.end(), bytes.begin(), bytes.end());
    }
    ImageDataset ds;
    ds.name = "planar:" + dir;
    ds.images = Tensor<uint8_t>({static_cast<int64_t>(files.size()), 3, h, w}, std::move(pixels));
    return ds;
}

ImageDataset take_subset(const ImageDataset& ds, int64_t n) {
    if (n < 1 || n > ds.count())
        throw ConfigError("subset size " + std::to_string(n) + " out of range for dataset of " +
                          std::to_string(ds.count()));
    ImageDataset out;
    out.name = ds.name;
    const int64_t stride = ds.images.size() / ds.count();
    out.images = Tensor<uint8_t>({n, ds.channels(), ds.height(), ds.width()},
                                 std::vector<uint8_t>(ds.images.data(), ds.images.data() + n * stride));
    if (ds.labeled()) out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
    return out;
}

}  // namespace spikegan
