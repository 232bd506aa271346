#include "spikegan/run_config.hpp"

#include <algorithm>
#include <filesystem>
#include <cstdio>
#include <sstream>

#include "spikegan/errors.hpp"

namespace spikegan {
namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        kv[key] = value;
    }
    return kv;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
    // training loop
    if (key == "train.variant") { train.variant = variant_from_string(value); return; }
    if (key == "train.loss") { train.loss = gan_loss_from_string(value); train.loss_explicit = true; return; }
    if (key == "train.epochs") { train.epochs = to_i64(key, value); return; }
    if (key == "train.steps" || key == "train.t") { train.steps = to_i64(key, value); return; }
    if (key == "train.batch_size") { train.batch_size = to_i64(key, value); return; }
    if (key == "train.n_critic") { train.n_critic = to_i64(key, value); return; }
    if (key == "train.lr_g") { train.lr_g = to_f64(key, value); return; }
    if (key == "train.lr_d") { train.lr_d = to_f64(key, value); return; }
    if (key == "train.rmsprop_alpha") { train.rmsprop_alpha = to_f64(key, value); return; }
    if (key == "train.rmsprop_eps") { train.rmsprop_eps = to_f64(key, value); return; }
    if (key == "train.clip") { train.clip = to_f64(key, value); return; }
    if (key == "train.seed") { train.seed = to_u64(key, value); return; }
    if (key == "train.cosine") { train.cosine = to_bool(key, value); return; }
    if (key == "train.record_walltime") { train.record_walltime = to_bool(key, value); return; }
    if (key == "train.checkpoint_every") { train.checkpoint_every = to_i64(key, value); return; }
    if (key == "train.sample_every") { train.sample_every = to_i64(key, value); return; }
    // model
    if (key == "model.latent_dim") {
        train.gen.latent_dim = to_i64(key, value);
        latent_dim_explicit = true;
        return;
    }
    if (key == "model.gen_hidden0") { train.gen.hidden0 = to_i64(key, value); return; }
    if (key == "model.gen_hidden1") { train.gen.hidden1 = to_i64(key, value); return; }
    if (key == "model.d_k") { train.gen.d_k = to_i64(key, value); return; }
    if (key == "model.disc_c1") { train.disc.c1 = to_i64(key, value); return; }
    if (key == "model.disc_c2") { train.disc.c2 = to_i64(key, value); return; }
    if (key == "model.disc_c3") { train.disc.c3 = to_i64(key, value); return; }
    if (key == "model.readout") {
        if (value == "last") train.disc.readout = ReadoutMode::last;
        else if (value == "mean") train.disc.readout = ReadoutMode::mean;
        else throw ConfigError("config key 'model.readout': expected last|mean, got '" + value + "'");
        return;
    }
    if (key == "model.leaky_slope") { train.disc.leaky_slope = to_f64(key, value); return; }
    if (key == "model.tau") {
        double t = to_f64(key, value);
        train.gen.lif.tau = t;
        train.disc.lif.tau = t;
        return;
    }
    if (key == "model.v_th") {
        double t = to_f64(key, value);
        train.gen.lif.v_th = t;
        train.disc.lif.v_th = t;
        return;
    }
    if (key == "model.v_reset") {
        double t = to_f64(key, value);
        train.gen.lif.v_reset = t;
        train.disc.lif.v_reset = t;
        return;
    }
    if (key == "model.surrogate_width") {
        double t = to_f64(key, value);
        train.gen.lif.surrogate_width = t;
        train.disc.lif.surrogate_width = t;
        return;
    }
    // data
    if (key == "data.dataset") { dataset = value; return; }
    if (key == "data.dir") { data_dir = value; return; }
    if (key == "data.images") { images_path = value; return; }
    if (key == "data.labels") { labels_path = value; return; }
    if (key == "data.subset") { subset = to_i64(key, value); return; }
    if (key == "data.synth_n") { synth_n = to_i64(key, value); return; }
    if (key == "data.height") { synth_height = to_i64(key, value); return; }
    if (key == "data.width") { synth_width = to_i64(key, value); return; }
    if (key == "data.seed") { data_seed = to_u64(key, value); return; }
    // output and metrics
    if (key == "out.dir") { out_dir = value; return; }
    if (key == "metric.fid_samples") { fid_samples = to_i64(key, value); return; }
    if (key == "metric.extractor") { extractor_path = value; return; }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "[train]\n";
    out << "variant = " << to_string(train.variant) << "\n";
    out << "loss = " << to_string(train.loss) << "\n";
    out << "epochs = " << train.epochs << "\n";
    out << "steps = " << train.steps << "\n";
    out << "batch_size = " << train.batch_size << "\n";
    out << "n_critic = " << train.n_critic << "\n";
    out << "lr_g = " << fmt(train.lr_g) << "\n";
    out << "lr_d = " << fmt(train.lr_d) << "\n";
    out << "rmsprop_alpha = " << fmt(train.rmsprop_alpha) << "\n";
    out << "rmsprop_eps = " << fmt(train.rmsprop_eps) << "\n";
    out << "clip = " << fmt(train.clip) << "\n";
    out << "seed = " << train.seed << "\n";
    out << "cosine = " << (train.cosine ? "true" : "false") << "\n";
    out << "record_walltime = " << (train.record_walltime ? "true" : "false") << "\n";
    out << "checkpoint_every = " << train.checkpoint_every << "\n";
    out << "sample_every = " << train.sample_every << "\n";
    out << "\n[model]\n";
    out << "latent_dim = " << train.gen.latent_dim << "\n";
    out << "gen_hidden0 = " << train.gen.hidden0 << "\n";
    out << "gen_hidden1 = " << train.gen.hidden1 << "\n";
    out << "d_k = " << train.gen.d_k << "\n";
    out << "disc_c1 = " << train.disc.c1 << "\n";
    out << "disc_c2 = " << train.disc.c2 << "\n";
    out << "disc_c3 = " << train.disc.c3 << "\n";
    out << "readout = " << (train.disc.readout == ReadoutMode::last ? "last" : "mean") << "\n";
    out << "leaky_slope = " << fmt(train.disc.leaky_slope) << "\n";
    out << "tau = " << fmt(train.gen.lif.tau) << "\n";
    out << "v_th = " << fmt(train.gen.lif.v_th) << "\n";
    out << "v_reset = " << fmt(train.gen.lif.v_reset) << "\n";
    out << "surrogate_width = " << fmt(train.gen.lif.surrogate_width) << "\n";
    out << "\n[data]\n";
    out << "dataset = " << dataset << "\n";
    out << "dir = " << data_dir << "\n";
    if (!images_path.empty()) out << "images = " << images_path << "\n";
    if (!labels_path.empty()) out << "labels = " << labels_path << "\n";
    out << "subset = " << subset << "\n";
    out << "synth_n = " << synth_n << "\n";
    out << "height = " << synth_height << "\n";
    out << "width = " << synth_width << "\n";
    out << "seed = " << data_seed << "\n";
    out << "\n[out]\n";
    out << "dir = " << out_dir << "\n";
    out << "\n[metric]\n";
    out << "fid_samples = " << fid_samples << "\n";
    if (!extractor_path.empty()) out << "extractor = " << extractor_path << "\n";
    return out.str();
}

void apply_config_file(RunConfig& rc, const std::string& path) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    std::string text(bytes.begin(), bytes.end());
    for (const auto& [k, v] : parse_config_text(text, path)) rc.apply(k, v);
}

ImageDataset load_dataset(const RunConfig& rc) {
    const std::string& name = rc.dataset;
    ImageDataset ds;
    if (name == "bars" || name == "blobs") {
        ds = synthetic_dataset(name, rc.synth_n, 1, rc.synth_height, rc.synth_width, rc.data_seed);
    } else if (name == "mnist" || name == "fashion") {
        std::string dir = rc.data_dir;
        ds = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
        ds.name = name;
    } else if (name == "cifar10") {
        std::vector<std::string> bins;
        if (std::filesystem::is_directory(rc.data_dir)) {
            for (const auto& e : std::filesystem::directory_iterator(rc.data_dir))
                if (e.path().extension() == ".bin") bins.push_back(e.path().string());
            std::sort(bins.begin(), bins.end());
        }
        if (bins.empty()) throw DataError("no .bin batch files under " + rc.data_dir);
        ds = load_cifar10(bins);
    } else if (name == "celeba") {
        ds = load_planar_rgb_dir(rc.data_dir, 64, 64);
        ds.name = "celeba";
    } else if (name == "idx") {
        if (rc.images_path.empty())
            throw ConfigError("dataset 'idx' requires data.images (and optionally data.labels)");
        ds = load_idx(rc.images_path, rc.labels_path);
        ds.name = "idx";
    } else {
        throw ConfigError("unknown dataset '" + name + "' (expected bars|blobs|mnist|fashion|cifar10|celeba|idx)");
    }
    if (rc.subset > 0) ds = take_subset(ds, rc.subset);
    return ds;
}

void bind_dataset_shape(RunConfig& rc, const ImageDataset& ds) {
    rc.train.gen.channels = ds.channels();
    rc.train.gen.height = ds.height();
    rc.train.gen.width = ds.width();
    rc.train.disc.channels = ds.channels();
    rc.train.disc.height = ds.height();
    rc.train.disc.width = ds.width();
    if (!rc.latent_dim_explicit) {
        if (rc.dataset == "mnist") rc.train.gen.latent_dim = 10;
        else if (rc.dataset == "fashion" || rc.dataset == "cifar10") rc.train.gen.latent_dim = 15;
        else if (rc.dataset == "celeba") rc.train.gen.latent_dim = 20;
        // synthetic and raw idx keep the configured default
    }
}

}  // namespace spikegan
