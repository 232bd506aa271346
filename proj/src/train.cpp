#include "spikegan/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spikegan/data.hpp"
#include "spikegan/image_io.hpp"

namespace spikegan {

namespace {
// Distinct substream tags so batch order, latent draws, and sample grids
// never alias even with equal seeds.
constexpr uint64_t kBatchStream = 0x6261746368ull;   // "batch"
constexpr uint64_t kLatentStream = 0x6c6174656eull;  // "laten"
constexpr uint64_t kSampleStream = 0x73616d70ull;    // "samp"

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace

Variant variant_from_string(const std::string& s) {
    if (s == "sgan") return Variant::sgan;
    if (s == "swgan") return Variant::swgan;
    if (s == "sgad") return Variant::sgad;
    if (s == "hybrid") return Variant::hybrid;
    throw ConfigError("unknown variant '" + s + "' (expected sgan|swgan|sgad|hybrid)");
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::sgan: return "sgan";
        case Variant::swgan: return "swgan";
        case Variant::sgad: return "sgad";
        case Variant::hybrid: return "hybrid";
    }
    return "?";
}

void TrainConfig::resolve() {
    const GanLoss bound = (variant == Variant::swgan || variant == Variant::sgad) ? GanLoss::em : GanLoss::minimax;
    if (loss_explicit && loss != bound)
        throw ConfigError(std::string("variant ") + to_string(variant) + " requires the " + to_string(bound) +
                          " loss, got " + to_string(loss));
    loss = bound;
    gen.attention_decode = (variant == Variant::sgad);
    disc.neuron = (variant == Variant::hybrid) ? NeuronKind::analog : NeuronKind::lif;

    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (steps < 1) throw ConfigError("time steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
    if (clip < 0.0) throw ConfigError("clip bound must be >= 0");
    if (rmsprop_alpha <= 0.0 || rmsprop_alpha >= 1.0) throw ConfigError("rmsprop_alpha must be in (0,1)");
    if (rmsprop_eps <= 0.0) throw ConfigError("rmsprop_eps must be > 0");

    gen.steps = steps;
    disc.steps = (variant == Variant::hybrid) ? 1 : steps;
    if (gen.channels != disc.channels || gen.height != disc.height || gen.width != disc.width)
        throw ConfigError("generator and discriminator image shapes disagree");

    const double lr_default = (loss == GanLoss::em) ? 5e-5 : 2e-4;
    if (lr_g <= 0.0) lr_g = lr_default;
    if (lr_d <= 0.0) lr_d = lr_default;

    gen.validate();
    disc.validate();
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["variant"] = to_string(c.variant);
    j["loss"] = to_string(c.loss);
    j["epochs"] = c.epochs;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["n_critic"] = c.n_critic;
    j["lr_g"] = c.lr_g;
    j["lr_d"] = c.lr_d;
    j["rmsprop_alpha"] = c.rmsprop_alpha;
    j["rmsprop_eps"] = c.rmsprop_eps;
    j["clip"] = c.clip;
    j["seed"] = c.seed;
    j["cosine"] = c.cosine;
    j["record_walltime"] = c.record_walltime;
    j["checkpoint_every"] = c.checkpoint_every;
    j["sample_every"] = c.sample_every;
    j["gen"] = {{"latent_dim", c.gen.latent_dim}, {"channels", c.gen.channels}, {"height", c.gen.height},
                {"width", c.gen.width},           {"hidden0", c.gen.hidden0},   {"hidden1", c.gen.hidden1},
                {"d_k", c.gen.d_k},               {"tau", c.gen.lif.tau},       {"v_th", c.gen.lif.v_th},
                {"v_reset", c.gen.lif.v_reset},   {"surrogate_width", c.gen.lif.surrogate_width}};
    j["disc"] = {{"c1", c.disc.c1},
                 {"c2", c.disc.c2},
                 {"c3", c.disc.c3},
                 {"readout", c.disc.readout == ReadoutMode::last ? "last" : "mean"},
                 {"leaky_slope", c.disc.leaky_slope},
                 {"tau", c.disc.lif.tau},
                 {"v_th", c.disc.lif.v_th},
                 {"v_reset", c.disc.lif.v_reset},
                 {"surrogate_width", c.disc.lif.surrogate_width}};
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.epochs = j.at("epochs");
    c.steps = j.at("steps");
    c.batch_size = j.at("batch_size");
    c.n_critic = j.at("n_critic");
    c.lr_g = j.at("lr_g");
    c.lr_d = j.at("lr_d");
    c.rmsprop_alpha = j.at("rmsprop_alpha");
    c.rmsprop_eps = j.at("rmsprop_eps");
    c.clip = j.at("clip");
    c.seed = j.at("seed");
    c.cosine = j.at("cosine");
    c.record_walltime = j.at("record_walltime");
    c.checkpoint_every = j.value("checkpoint_every", int64_t(0));
    c.sample_every = j.value("sample_every", int64_t(0));
    const auto& g = j.at("gen");
    c.gen.latent_dim = g.at("latent_dim");
    c.gen.channels = g.at("channels");
    c.gen.height = g.at("height");
    c.gen.width = g.at("width");
    c.gen.hidden0 = g.at("hidden0");
    c.gen.hidden1 = g.at("hidden1");
    c.gen.d_k = g.at("d_k");
    c.gen.lif.tau = g.at("tau");
    c.gen.lif.v_th = g.at("v_th");
    c.gen.lif.v_reset = g.at("v_reset");
    c.gen.lif.surrogate_width = g.at("surrogate_width");
    const auto& d = j.at("disc");
    c.disc.channels = c.gen.channels;
    c.disc.height = c.gen.height;
    c.disc.width = c.gen.width;
    c.disc.c1 = d.at("c1");
    c.disc.c2 = d.at("c2");
    c.disc.c3 = d.at("c3");
    c.disc.readout = d.at("readout").get<std::string>() == "mean" ? ReadoutMode::mean : ReadoutMode::last;
    c.disc.leaky_slope = d.at("leaky_slope");
    c.disc.lif.tau = d.at("tau");
    c.disc.lif.v_th = d.at("v_th");
    c.disc.lif.v_reset = d.at("v_reset");
    c.disc.lif.surrogate_width = d.at("surrogate_width");
    c.resolve();
    return c;
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), step_rng_(0) {
    tune_allocator();
    cfg_.resolve();
    Rng init_rng(cfg_.seed);
    g_ = std::make_unique<Generator<float>>(cfg_.gen, init_rng);
    d_ = std::make_unique<Discriminator<float>>(cfg_.disc, init_rng);
    opt_g_ = std::make_unique<RMSProp<float>>(g_->params(), RMSPropConfig{cfg_.lr_g, cfg_.rmsprop_alpha, cfg_.rmsprop_eps});
    opt_d_ = std::make_unique<RMSProp<float>>(d_->params(), RMSPropConfig{cfg_.lr_d, cfg_.rmsprop_alpha, cfg_.rmsprop_eps});
    step_rng_ = Rng(mix_seed(cfg_.seed, kLatentStream));
}

void Trainer::save(const std::string& path) {
    Checkpoint ckpt;
    store_params(ckpt, g_->params());
    store_params(ckpt, d_->params());
    auto store_opt = [&ckpt](const char* tag, RMSProp<float>& opt) {
        const auto& params = opt.params();
        auto& sq = opt.square_avg();
        for (size_t i = 0; i < params.size(); ++i)
            ckpt.tensors[std::string(tag) + "." + params[i]->name + ".sq"] = sq[i];
    };
    store_opt("opt_g", *opt_g_);
    store_opt("opt_d", *opt_d_);
    ckpt.meta["kind"] = "gan";
    ckpt.meta["config"] = train_config_to_json(cfg_);
    ckpt.meta["epochs_done"] = epochs_done_;
    ckpt.meta["opt_g_steps"] = opt_g_->step_count();
    ckpt.meta["opt_d_steps"] = opt_d_->step_count();
    const auto st = step_rng_.state();
    ckpt.meta["rng"] = {st[0], st[1], st[2], st[3]};
    save_checkpoint(path, ckpt);
}

void Trainer::resume_from(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "gan") throw CheckpointError(path + ": not a training checkpoint");
    load_params(ckpt, g_->params());
    load_params(ckpt, d_->params());
    auto load_opt = [&ckpt, &path](const char* tag, RMSProp<float>& opt) {
        const auto& params = opt.params();
        auto& sq = opt.square_avg();
        for (size_t i = 0; i < params.size(); ++i) {
            const std::string key = std::string(tag) + "." + params[i]->name + ".sq";
            auto it = ckpt.tensors.find(key);
            if (it == ckpt.tensors.end()) throw CheckpointError(path + ": missing optimizer state '" + key + "'");
            sq[i] = it->second;
        }
    };
    load_opt("opt_g", *opt_g_);
    load_opt("opt_d", *opt_d_);
    epochs_done_ = ckpt.meta.at("epochs_done");
    opt_g_->set_step_count(ckpt.meta.at("opt_g_steps"));
    opt_d_->set_step_count(ckpt.meta.at("opt_d_steps"));
    const auto st = ckpt.meta.at("rng");
    step_rng_.set_state({st.at(0).get<uint64_t>(), st.at(1).get<uint64_t>(), st.at(2).get<uint64_t>(),
                         st.at(3).get<uint64_t>()});
}

Tensor<float> sample_latents(int64_t n, int64_t dim, uint64_t seed) {
    if (n < 1) throw ConfigError("sample_latents: n must be >= 1");
    Rng rng(mix_seed(seed, kSampleStream));
    return Tensor<float>::normal({n, dim}, rng);
}

Tensor<float> generate_images(Generator<float>& g, int64_t n, uint64_t seed) {
    Tape<float> tape;
    Var<float> z = tape.leaf(sample_latents(n, g.config().latent_dim, seed), false);
    return g.forward(tape, z).image.val();
}

Tensor<float> Trainer::sample_images(int64_t n, uint64_t seed) {
    return generate_images(*g_, n, seed);
}

void Trainer::train_epoch(int64_t epoch, const Tensor<float>& images, TrainResult& result, std::ostream* telemetry) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_g = cfg_.cosine ? cosine_anneal_lr(cfg_.lr_g, epoch, cfg_.epochs) : cfg_.lr_g;
    const double lr_d = cfg_.cosine ? cosine_anneal_lr(cfg_.lr_d, epoch, cfg_.epochs) : cfg_.lr_d;
    opt_g_->set_lr(lr_g);
    opt_d_->set_lr(lr_d);

    const int64_t n = images.dim(0);
    const auto batches = epoch_batches(n, cfg_.batch_size, mix_seed(cfg_.seed ^ kBatchStream, static_cast<uint64_t>(epoch)));

    double sum_ld = 0.0, sum_lg = 0.0, sum_gg = 0.0, sum_gd = 0.0;
    int64_t count_d = 0, count_g = 0;

    for (const auto& idx : batches) {
        const Tensor<float> real = gather_batch(images, idx);

        for (int64_t k = 0; k < cfg_.n_critic; ++k) {
            Tensor<float> fake;
            {
                // Fresh fakes, generator untouched: forward on a throwaway tape.
                Tape<float> tg;
                Var<float> z = tg.leaf(Tensor<float>::normal({cfg_.batch_size, cfg_.gen.latent_dim}, step_rng_), false);
                fake = g_->forward(tg, z).image.val();
            }
            Tape<float> td;
            Var<float> d_real = d_->forward(td, td.leaf(real, false));
            Var<float> d_fake = d_->forward(td, td.leaf(std::move(fake), false));
            Var<float> loss_d = gan_d_loss(cfg_.loss, d_real, d_fake);
            opt_d_->zero_grad();
            td.backward(loss_d);
            const double gd = grad_norm_sum(d_->params());
            const double ld = static_cast<double>(loss_d.val()[0]);
            if (!std::isfinite(ld) || !std::isfinite(gd))
                throw DivergenceError("non-finite discriminator loss/gradient at epoch " + std::to_string(epoch));
            opt_d_->step();
            if (cfg_.clip > 0.0) clip_params(d_->params(), static_cast<float>(cfg_.clip));
            sum_ld += ld;
            sum_gd += gd;
            ++count_d;
        }

        Tape<float> tg;
        Var<float> z = tg.leaf(Tensor<float>::normal({cfg_.batch_size, cfg_.gen.latent_dim}, step_rng_), false);
        auto fwd = g_->forward(tg, z);
        Var<float> d_fake = d_->forward(tg, fwd.image);
        Var<float> loss_g = gan_g_loss(cfg_.loss, d_fake);
        opt_g_->zero_grad();
        tg.backward(loss_g);
        const double gg = grad_norm_sum(g_->params());
        const double lg = static_cast<double>(loss_g.val()[0]);
        if (!std::isfinite(lg) || !std::isfinite(gg))
            throw DivergenceError("non-finite generator loss/gradient at epoch " + std::to_string(epoch));
        opt_g_->step();
        sum_lg += lg;
        sum_gg += gg;
        ++count_g;
    }

    const double wall =
        cfg_.record_walltime
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            : 0.0;
    const double loss_d = sum_ld / static_cast<double>(count_d);
    const double loss_g = sum_lg / static_cast<double>(count_g);
    const double gnorm_d = sum_gd / static_cast<double>(count_d);
    const double gnorm_g = sum_gg / static_cast<double>(count_g);

    result.telemetry.epoch.push_back(static_cast<double>(epoch));
    result.telemetry.loss_d.push_back(loss_d);
    result.telemetry.loss_g.push_back(loss_g);
    result.telemetry.grad_norm_g.push_back(gnorm_g);
    result.telemetry.grad_norm_d.push_back(gnorm_d);
    result.telemetry.lr.push_back(lr_g);
    result.telemetry.wall_seconds.push_back(wall);

    if (telemetry) {
        *telemetry << epoch << ',' << fmt_double(loss_d) << ',' << fmt_double(loss_g) << ',' << fmt_double(gnorm_g)
                   << ',' << fmt_double(gnorm_d) << ',' << fmt_double(lr_g) << ',' << fmt_double(wall) << '\n';
        telemetry->flush();
    }
}

TrainResult Trainer::run(const Tensor<float>& images, const TrainSinks& sinks) {
    if (images.rank() != 4) throw ShapeError("train: images must be [N,C,H,W], got " + shape_str(images.shape()));
    if (images.dim(1) != cfg_.gen.channels || images.dim(2) != cfg_.gen.height || images.dim(3) != cfg_.gen.width)
        throw ConfigError("train: dataset images " + shape_str(images.shape()) + " do not match configured shape [" +
                          std::to_string(cfg_.gen.channels) + "," + std::to_string(cfg_.gen.height) + "," +
                          std::to_string(cfg_.gen.width) + "]");

    std::ofstream telemetry_file;
    std::ostream* telemetry = nullptr;
    if (!sinks.telemetry_csv.empty()) {
        const bool fresh = epochs_done_ == 0;
        telemetry_file.open(sinks.telemetry_csv, fresh ? std::ios::trunc : std::ios::app);
        if (!telemetry_file) throw DataError("cannot write telemetry: " + sinks.telemetry_csv);
        if (fresh) telemetry_file << "epoch,loss_d,loss_g,grad_norm_g,grad_norm_d,lr,wall_seconds\n";
        telemetry = &telemetry_file;
    }

    TrainResult result;
    for (int64_t epoch = epochs_done_; epoch < cfg_.epochs; ++epoch) {
        train_epoch(epoch, images, result, telemetry);
        epochs_done_ = epoch + 1;
        if (!sinks.checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
            epochs_done_ % cfg_.checkpoint_every == 0 && epochs_done_ != cfg_.epochs)
            save(sinks.checkpoint_path);
        if (!sinks.sample_dir.empty() && cfg_.sample_every > 0 && epochs_done_ % cfg_.sample_every == 0) {
            const Tensor<float> imgs = sample_images(16, cfg_.seed);
            char name[64];
            std::snprintf(name, sizeof(name), "samples_epoch%04lld.ppm", static_cast<long long>(epochs_done_));
            write_ppm((std::filesystem::path(sinks.sample_dir) / name).string(), make_grid(imgs, 4, 4));
        }
    }
    if (!sinks.checkpoint_path.empty()) save(sinks.checkpoint_path);
    result.epochs_run = static_cast<int64_t>(result.telemetry.rows());
    return result;
}

LoadedGan load_gan(const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (ckpt.meta.value("kind", "") != "gan")
        throw CheckpointError(checkpoint_path + ": not a training checkpoint");
    LoadedGan out;
    out.cfg = train_config_from_json(ckpt.meta.at("config"));
    Rng rng(out.cfg.seed);
    out.g = std::make_unique<Generator<float>>(out.cfg.gen, rng);
    out.d = std::make_unique<Discriminator<float>>(out.cfg.disc, rng);
    load_params(ckpt, out.g->params());
    load_params(ckpt, out.d->params());
    out.meta = ckpt.meta;
    return out;
}

}  // namespace spikegan
