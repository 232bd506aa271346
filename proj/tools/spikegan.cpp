#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spikegan/checkpoint.hpp"
#include "spikegan/data.hpp"
#include "spikegan/errors.hpp"
#include "spikegan/image_io.hpp"
#include "spikegan/metrics.hpp"
#include "spikegan/run_config.hpp"
#include "spikegan/train.hpp"

namespace fs = std::filesystem;
using namespace spikegan;

namespace {

using KvList = std::vector<std::pair<std::string, std::string>>;

// Convenience flags are sugar for --set entries: the value is routed through
// RunConfig::apply under a fixed key, so validation lives in one place.
void add_kv_flag(CLI::App* cmd, KvList& kvs, const std::string& flag, const std::string& key,
                 const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [key, &kvs](const std::string& v) { kvs.emplace_back(key, v); }, help);
}

struct ConfigSources {
    std::string config_path;
    std::vector<std::string> sets;  // raw key=value overrides
    KvList flag_kvs;                // from convenience flags
};

void add_config_flags(CLI::App* cmd, ConfigSources& src) {
    cmd->add_option("--config", src.config_path, "key = value configuration file with [section] headers");
    cmd->add_option("--set", src.sets, "override a config key, e.g. --set train.epochs=4")
        ->take_all();
}

void add_data_flags(CLI::App* cmd, ConfigSources& src) {
    add_kv_flag(cmd, src.flag_kvs, "--dataset", "data.dataset", "bars|blobs|mnist|fashion|cifar10|celeba|idx");
    add_kv_flag(cmd, src.flag_kvs, "--data-dir", "data.dir", "directory holding the dataset files");
    add_kv_flag(cmd, src.flag_kvs, "--images", "data.images", "IDX image file (dataset=idx)");
    add_kv_flag(cmd, src.flag_kvs, "--labels", "data.labels", "IDX label file (dataset=idx)");
    add_kv_flag(cmd, src.flag_kvs, "--subset", "data.subset", "keep only the first N images");
    add_kv_flag(cmd, src.flag_kvs, "--synth-n", "data.synth_n", "synthetic dataset size");
    add_kv_flag(cmd, src.flag_kvs, "--data-seed", "data.seed", "synthetic data stream seed");
}

RunConfig build_config(const ConfigSources& src) {
    RunConfig rc;
    if (!src.config_path.empty()) apply_config_file(rc, src.config_path);
    for (const std::string& s : src.sets) {
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + s + "'");
        rc.apply(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : src.flag_kvs) rc.apply(k, v);
    return rc;
}

// Vertical stack of per-sample strips: row i shows sample i's raw frames
// X_1..X_T left to right.
Tensor<uint8_t> frame_strips(const std::vector<Var<float>>& x_seq, int64_t n) {
    if (x_seq.empty()) throw ConfigError("frame_strips: no frames");
    const Tensor<float>& f0 = x_seq[0].val();
    const int64_t c = f0.dim(1), h = f0.dim(2), w = f0.dim(3);
    const int64_t t_total = static_cast<int64_t>(x_seq.size());
    Tensor<uint8_t> canvas({c, n * h, t_total * w});
    for (int64_t t = 0; t < t_total; ++t) {
        const Tensor<uint8_t> bytes = denormalize(x_seq[static_cast<size_t>(t)].val());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x)
                        canvas[(ci * n * h + i * h + y) * t_total * w + t * w + x] =
                            bytes[((i * c + ci) * h + y) * w + x];
    }
    return canvas;
}

int cmd_train(const ConfigSources& src, const std::string& resume_path) {
    RunConfig rc = build_config(src);
    const ImageDataset ds = load_dataset(rc);
    bind_dataset_shape(rc, ds);
    rc.train.resolve();

    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);
    {
        std::ofstream echo(out / "config_resolved.cfg", std::ios::trunc);
        if (!echo) throw DataError("cannot write " + (out / "config_resolved.cfg").string());
        echo << rc.echo();
    }

    TrainSinks sinks;
    sinks.telemetry_csv = (out / "telemetry.csv").string();
    sinks.checkpoint_path = (out / "checkpoint.ckpt").string();
    if (rc.train.sample_every > 0) {
        sinks.sample_dir = (out / "samples").string();
        fs::create_directories(sinks.sample_dir);
    }

    Trainer trainer(rc.train);
    if (!resume_path.empty()) trainer.resume_from(resume_path);
    std::cout << "training " << to_string(rc.train.variant) << " on " << ds.name << " ("
              << ds.count() << " images, " << ds.channels() << "x" << ds.height() << "x" << ds.width()
              << "), " << rc.train.epochs << " epochs\n";
    const TrainResult result = trainer.run(normalize(ds.images), sinks);
    std::cout << "done: " << result.epochs_run << " epochs, telemetry " << sinks.telemetry_csv
              << ", checkpoint " << sinks.checkpoint_path << "\n";
    return 0;
}

int cmd_generate(const std::string& ckpt, int64_t n, int64_t rows, int64_t cols, uint64_t seed,
                 const std::string& out_path) {
    if (n < 1) throw ConfigError("generate: --n must be >= 1");
    if (rows == 0) {
        rows = static_cast<int64_t>(std::sqrt(static_cast<double>(n)));
        if (rows < 1) rows = 1;
    }
    if (cols == 0) cols = (n + rows - 1) / rows;
    LoadedGan gan = load_gan(ckpt);
    const Tensor<float> images = generate_images(*gan.g, n, seed);
    write_ppm(out_path, make_grid(images, rows, cols));
    std::cout << "wrote " << out_path << " (" << rows << "x" << cols << " grid of " << n << " samples)\n";
    return 0;
}

int cmd_fid(const ConfigSources& src, const std::string& ckpt, const std::string& stats_cache,
            uint64_t seed) {
    RunConfig rc = build_config(src);
    if (rc.extractor_path.empty())
        throw ConfigError("fid: --extractor is required");
    if (!fs::exists(rc.extractor_path))
        throw MetricGateError("extractor checkpoint not found: " + rc.extractor_path +
                              " (train one first: spikegan train-extractor --dataset ... --out " +
                              rc.extractor_path + ")");
    Extractor extractor = load_extractor(rc.extractor_path);
    const std::string fp = params_fingerprint(extractor.params());

    LoadedGan gan = load_gan(ckpt);

    FeatureStats real_stats;
    bool cached = false;
    if (!stats_cache.empty() && fs::exists(stats_cache)) {
        real_stats = load_stats(stats_cache);
        cached = true;
    } else {
        const ImageDataset ds = load_dataset(rc);
        if (ds.channels() != extractor.config().channels || ds.height() != extractor.config().height ||
            ds.width() != extractor.config().width)
            throw ConfigError("fid: dataset shape does not match the extractor's input shape");
        Tensor<float> real = normalize(ds.images);
        real_stats = stats_of_images(extractor, real);
        if (!stats_cache.empty()) save_stats(stats_cache, real_stats);
    }

    const Tensor<float> fake = generate_images(*gan.g, rc.fid_samples, seed);
    if (fake.dim(1) != extractor.config().channels || fake.dim(2) != extractor.config().height ||
        fake.dim(3) != extractor.config().width)
        throw ConfigError("fid: generator output shape does not match the extractor's input shape");
    const FeatureStats fake_stats = stats_of_images(extractor, fake);

    const double fid = frechet_distance(real_stats, fake_stats);
    char line[256];
    std::snprintf(line, sizeof(line), "proxy_fid=%.6f n=%lld extractor=%s real_n=%lld%s\n", fid,
                  static_cast<long long>(rc.fid_samples), fp.c_str(),
                  static_cast<long long>(real_stats.n), cached ? " (cached real stats)" : "");
    std::cout << line;
    return 0;
}

int cmd_inspect_scores(const std::string& ckpt, int64_t n, uint64_t seed, const std::string& out_csv,
                       const std::string& out_strip, bool force_equal) {
    if (n < 1) throw ConfigError("inspect-scores: --n must be >= 1");
    LoadedGan gan = load_gan(ckpt);
    if (!gan.cfg.gen.attention_decode)
        throw ConfigError(std::string("no attention decoder present in this checkpoint (variant ") +
                          to_string(gan.cfg.variant) + ")");
    Tape<float> tape;
    Var<float> z = tape.leaf(sample_latents(n, gan.cfg.gen.latent_dim, seed), false);
    auto fwd = gan.g->forward(tape, z, force_equal);

    std::ofstream csv(out_csv, std::ios::trunc);
    if (!csv) throw DataError("cannot write " + out_csv);
    fwd.trace.write_csv(csv);
    write_ppm(out_strip, frame_strips(fwd.x_seq, n));
    std::cout << "wrote " << out_csv << " (" << fwd.trace.steps() << " steps x " << n
              << " samples) and " << out_strip << "\n";
    return 0;
}

int cmd_gradreport(const std::vector<std::string>& paths) {
    std::vector<TelemetryRun> runs;
    runs.reserve(paths.size());
    for (const std::string& p : paths) runs.push_back(parse_telemetry_csv(p));
    std::cout << format_gradreport(gradnorm_report(runs));
    return 0;
}

int cmd_train_extractor(const ConfigSources& src, const std::string& out_path, int64_t classes,
                        int64_t max_epochs, int64_t batch, double lr, int64_t feat_dim,
                        double target_accuracy, uint64_t seed) {
    RunConfig rc = build_config(src);
    const ImageDataset ds = load_dataset(rc);
    if (!ds.labeled())
        throw DataError("dataset '" + ds.name + "' has no labels; the feature extractor is a classifier");

    ExtractorConfig cfg;
    cfg.channels = ds.channels();
    cfg.height = ds.height();
    cfg.width = ds.width();
    cfg.classes = classes;
    cfg.max_epochs = max_epochs;
    cfg.batch_size = batch;
    cfg.lr = lr;
    cfg.feat_dim = feat_dim;
    cfg.target_accuracy = target_accuracy;
    cfg.seed = seed;
    Rng rng(seed);
    Extractor model(cfg, rng);
    const ExtractorTrainResult result = train_proxy_extractor(model, ds);
    save_extractor(out_path, model, result);
    char line[256];
    std::snprintf(line, sizeof(line), "extractor trained: accuracy=%.4f epochs=%lld fingerprint=%s -> %s\n",
                  result.train_accuracy, static_cast<long long>(result.epochs_run),
                  params_fingerprint(model.params()).c_str(), out_path.c_str());
    std::cout << line;
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"spiking GAN trainer and evaluation tools"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a GAN variant and write telemetry + checkpoint");
    auto train_src = std::make_shared<ConfigSources>();
    auto resume_path = std::make_shared<std::string>();
    add_config_flags(train, *train_src);
    add_data_flags(train, *train_src);
    add_kv_flag(train, train_src->flag_kvs, "--variant", "train.variant", "sgan|swgan|sgad|hybrid");
    add_kv_flag(train, train_src->flag_kvs, "--loss", "train.loss", "minimax|em (must match the variant)");
    add_kv_flag(train, train_src->flag_kvs, "--epochs", "train.epochs", "training epochs");
    add_kv_flag(train, train_src->flag_kvs, "--t", "train.steps", "simulation steps per forward pass");
    add_kv_flag(train, train_src->flag_kvs, "--batch-size", "train.batch_size", "minibatch size");
    add_kv_flag(train, train_src->flag_kvs, "--n-critic", "train.n_critic", "discriminator updates per generator update");
    add_kv_flag(train, train_src->flag_kvs, "--seed", "train.seed", "training seed");
    add_kv_flag(train, train_src->flag_kvs, "--lr-g", "train.lr_g", "generator learning rate");
    add_kv_flag(train, train_src->flag_kvs, "--lr-d", "train.lr_d", "discriminator learning rate");
    add_kv_flag(train, train_src->flag_kvs, "--clip", "train.clip", "optional weight clip bound (0 = off)");
    add_kv_flag(train, train_src->flag_kvs, "--checkpoint-every", "train.checkpoint_every", "periodic checkpoint interval (epochs)");
    add_kv_flag(train, train_src->flag_kvs, "--sample-every", "train.sample_every", "sample grid interval (epochs)");
    add_kv_flag(train, train_src->flag_kvs, "--latent-dim", "model.latent_dim", "latent dimension (default depends on dataset)");
    add_kv_flag(train, train_src->flag_kvs, "--d-k", "model.d_k", "attention key width");
    add_kv_flag(train, train_src->flag_kvs, "--out", "out.dir", "output directory");
    train->add_option("--resume", *resume_path, "checkpoint to resume from");
    train->callback([train_src, resume_path]() {
        int code = cmd_train(*train_src, *resume_path);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    // generate
    auto* gen = app.add_subcommand("generate", "sample images from a checkpoint into a PPM grid");
    auto gen_ckpt = std::make_shared<std::string>();
    auto gen_out = std::make_shared<std::string>();
    auto gen_n = std::make_shared<int64_t>(16);
    auto gen_rows = std::make_shared<int64_t>(0);
    auto gen_cols = std::make_shared<int64_t>(0);
    auto gen_seed = std::make_shared<uint64_t>(1);
    gen->add_option("--checkpoint", *gen_ckpt, "training checkpoint")->required();
    gen->add_option("--out", *gen_out, "output PPM path")->required();
    gen->add_option("--n", *gen_n, "number of samples");
    gen->add_option("--rows", *gen_rows, "grid rows (0 = auto)");
    gen->add_option("--cols", *gen_cols, "grid cols (0 = auto)");
    gen->add_option("--seed", *gen_seed, "sampling seed");
    gen->callback([=]() {
        int code = cmd_generate(*gen_ckpt, *gen_n, *gen_rows, *gen_cols, *gen_seed, *gen_out);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    // fid
    auto* fid = app.add_subcommand("fid", "proxy Frechet distance between real data and checkpoint samples");
    auto fid_src = std::make_shared<ConfigSources>();
    auto fid_ckpt = std::make_shared<std::string>();
    auto fid_cache = std::make_shared<std::string>();
    auto fid_seed = std::make_shared<uint64_t>(1234);
    add_config_flags(fid, *fid_src);
    add_data_flags(fid, *fid_src);
    add_kv_flag(fid, fid_src->flag_kvs, "--extractor", "metric.extractor", "frozen feature extractor checkpoint");
    add_kv_flag(fid, fid_src->flag_kvs, "--n", "metric.fid_samples", "generated sample count");
    fid->add_option("--checkpoint", *fid_ckpt, "training checkpoint")->required();
    fid->add_option("--stats-cache", *fid_cache, "cache file for real-data feature stats");
    fid->add_option("--seed", *fid_seed, "sampling seed");
    fid->callback([=]() {
        int code = cmd_fid(*fid_src, *fid_ckpt, *fid_cache, *fid_seed);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    // inspect-scores
    auto* insp = app.add_subcommand("inspect-scores", "dump per-step decoder scores and raw frame strips");
    auto insp_ckpt = std::make_shared<std::string>();
    auto insp_csv = std::make_shared<std::string>();
    auto insp_strip = std::make_shared<std::string>();
    auto insp_n = std::make_shared<int64_t>(4);
    auto insp_seed = std::make_shared<uint64_t>(1);
    auto insp_force = std::make_shared<bool>(false);
    insp->add_option("--checkpoint", *insp_ckpt, "training checkpoint (attention-decoding variant)")->required();
    insp->add_option("--out-csv", *insp_csv, "score trace CSV path")->required();
    insp->add_option("--out-strip", *insp_strip, "per-step frame strip PPM path")->required();
    insp->add_option("--n", *insp_n, "number of samples to trace");
    insp->add_option("--seed", *insp_seed, "sampling seed");
    insp->add_flag("--force-equal-logits", *insp_force, "debug: bypass scoring, every alpha = 0.5");
    insp->callback([=]() {
        int code = cmd_inspect_scores(*insp_ckpt, *insp_n, *insp_seed, *insp_csv, *insp_strip, *insp_force);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    // gradreport
    auto* grad = app.add_subcommand("gradreport", "per-quarter gradient-norm comparison across telemetry CSVs");
    auto grad_paths = std::make_shared<std::vector<std::string>>();
    grad->add_option("csvs", *grad_paths, "telemetry CSV files")->required()->expected(-1);
    grad->callback([=]() {
        int code = cmd_gradreport(*grad_paths);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    // train-extractor
    auto* tex = app.add_subcommand("train-extractor", "train the frozen classifier used by the fid command");
    auto tex_src = std::make_shared<ConfigSources>();
    auto tex_out = std::make_shared<std::string>();
    auto tex_classes = std::make_shared<int64_t>(10);
    auto tex_epochs = std::make_shared<int64_t>(30);
    auto tex_batch = std::make_shared<int64_t>(64);
    auto tex_lr = std::make_shared<double>(1e-3);
    auto tex_feat = std::make_shared<int64_t>(64);
    auto tex_acc = std::make_shared<double>(0.95);
    auto tex_seed = std::make_shared<uint64_t>(1);
    add_config_flags(tex, *tex_src);
    add_data_flags(tex, *tex_src);
    tex->add_option("--out", *tex_out, "output extractor checkpoint")->required();
    tex->add_option("--classes", *tex_classes, "number of classes");
    tex->add_option("--epochs", *tex_epochs, "maximum training epochs");
    tex->add_option("--batch-size", *tex_batch, "minibatch size");
    tex->add_option("--lr", *tex_lr, "learning rate");
    tex->add_option("--feat-dim", *tex_feat, "feature dimension");
    tex->add_option("--target-accuracy", *tex_acc, "train-accuracy gate");
    tex->add_option("--seed", *tex_seed, "init and batching seed");
    tex->callback([=]() {
        int code = cmd_train_extractor(*tex_src, *tex_out, *tex_classes, *tex_epochs, *tex_batch,
                                       *tex_lr, *tex_feat, *tex_acc, *tex_seed);
        if (code != 0) throw CLI::RuntimeError(code);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    try {
        return run_cli(argc, argv);
    } catch (const MetricGateError& e) {
        std::cerr << "error (metric gate): " << e.what() << "\n";
        return 4;
    } catch (const DivergenceError& e) {
        std::cerr << "error (divergence): " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "error (numerical): " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error (data): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {  // ConfigError, ShapeError, anything else
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
