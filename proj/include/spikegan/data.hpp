#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikegan/tensor.hpp"

namespace spikegan {

// Raw dataset as stored on disk: byte pixels, optional byte labels.
struct ImageDataset {
    Tensor<uint8_t> images;  // [N, C, H, W]
    std::vector<uint8_t> labels;
    std::string name;

    int64_t count() const { return images.dim(0); }
    int64_t channels() const { return images.dim(1); }
    int64_t height() const { return images.dim(2); }
    int64_t width() const { return images.dim(3); }
    bool labeled() const { return !labels.empty(); }
};

std::vector<uint8_t> read_file_bytes(const std::string& path);

// IDX container (big-endian header; unsigned-byte payload).
ImageDataset parse_idx_images(const std::vector<uint8_t>& bytes, const std::string& origin = "idx");
std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes, const std::string& origin = "idx");
ImageDataset load_idx(const std::string& images_path, const std::string& labels_path = "");

// Byte pixels <-> [-1, 1] floats (x / 127.5 - 1).
Tensor<float> normalize(const Tensor<uint8_t>& images);
Tensor<uint8_t> denormalize(const Tensor<float>& images);

// Shuffled index batches for one epoch; the partial tail batch is dropped.
// Pure function of (n, batch_size, seed).
std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int64_t batch_size, uint64_t seed);

// Rows of a [N, ...] tensor gathered into a [idx.size(), ...] batch.
Tensor<float> gather_batch(const Tensor<float>& data, const std::vector<int64_t>& idx);

// Toy generative targets: "bars" (one fully lit row or column; label = bar
// position) and "blobs" (one Gaussian bump; label = quadrant of its center;
// dataset mean intensity ~= blob_level).
ImageDataset synthetic_dataset(const std::string& kind, int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed,
                               double blob_level = 0.15);

// CIFAR10 binary batches: fixed 3073-byte records (label + planar RGB 32x32).
ImageDataset load_cifar10(const std::vector<std::string>& bin_paths);

// Directory of raw planar RGB frames, one file per image, each exactly
// 3*h*w bytes, taken in sorted filename order.
ImageDataset load_planar_rgb_dir(const std::string& dir, int64_t h, int64_t w);

ImageDataset take_subset(const ImageDataset& ds, int64_t n);

}  // namespace spikegan
