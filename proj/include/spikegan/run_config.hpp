#pragma once

#include <map>
#include <string>

#include "spikegan/data.hpp"
#include "spikegan/train.hpp"

namespace spikegan {

// Full operator-facing configuration: training settings plus dataset
// selection, output directory, and metric options. Populated from a
// sectioned key=value file, then point overrides, in that order.
struct RunConfig {
    TrainConfig train;
    bool latent_dim_explicit = false;

    std::string dataset = "bars";  // bars|blobs|mnist|fashion|cifar10|celeba|idx
    std::string data_dir = "data";
    std::string images_path;  // dataset=idx
    std::string labels_path;
    int64_t subset = 0;  // keep only the first N images (0 = all)
    int64_t synth_n = 2048;
    int64_t synth_height = 16;
    int64_t synth_width = 16;
    uint64_t data_seed = 12345;  // synthetic data stream; independent of train.seed

    std::string out_dir = "out";
    int64_t fid_samples = 2048;
    std::string extractor_path;

    void apply(const std::string& key, const std::string& value);
    std::string echo() const;  // resolved config, re-parseable by apply()
};

// key = value lines grouped under [section] headers; '#' comments.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& rc, const std::string& path);

// Loads the configured dataset (files or synthetic) and fills the model
// image shape and per-dataset latent-dimension default from it.
ImageDataset load_dataset(const RunConfig& rc);
void bind_dataset_shape(RunConfig& rc, const ImageDataset& ds);

}  // namespace spikegan
