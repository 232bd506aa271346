#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikegan/checkpoint.hpp"
#include "spikegan/losses.hpp"
#include "spikegan/metrics.hpp"
#include "spikegan/models.hpp"
#include "spikegan/optim.hpp"

namespace spikegan {

// Ablation variants. Each fixes the discriminator kind, the objective, and
// whether the generator uses attention decoding:
//   sgan   : spiking discriminator, minimax loss, mean decoding
//   swgan  : spiking discriminator, earth-mover loss, mean decoding
//   sgad   : spiking discriminator, earth-mover loss, attention decoding
//   hybrid : analog discriminator,  minimax loss, mean decoding
enum class Variant { sgan, swgan, sgad, hybrid };

Variant variant_from_string(const std::string& s);
const char* to_string(Variant v);

struct TrainConfig {
    Variant variant = Variant::sgad;
    GanLoss loss = GanLoss::em;
    bool loss_explicit = false;  // user pinned the loss; must match the variant binding
    int64_t epochs = 200;
    int64_t steps = 16;
    int64_t batch_size = 64;
    int64_t n_critic = 1;
    double lr_g = -1.0;  // < 0: default by objective (em 5e-5, minimax 2e-4)
    double lr_d = -1.0;
    double rmsprop_alpha = 0.99;
    double rmsprop_eps = 1e-8;
    double clip = 0.0;  // weight-clip bound; 0 disables (the default)
    uint64_t seed = 1;
    bool cosine = true;
    bool record_walltime = true;  // off: wall_seconds column is written as 0
    int64_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
    int64_t sample_every = 0;      // epochs; 0 = no periodic sample grids

    GeneratorConfig gen;
    DiscriminatorConfig disc;

    // Applies the variant bindings (loss, discriminator kind, decoder), the
    // per-objective learning-rate defaults, and cross-checks shapes.
    void resolve();
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainSinks {
    std::string telemetry_csv;    // per-epoch CSV; empty = keep in memory only
    std::string checkpoint_path;  // final (and periodic) checkpoint
    std::string sample_dir;       // PPM grids when sample_every > 0
};

struct TrainResult {
    int64_t epochs_run = 0;
    TelemetryRun telemetry;  // one row per epoch, same columns as the CSV
};

class Trainer {
  public:
    explicit Trainer(TrainConfig cfg);

    // Restores parameters, optimizer state, RNG stream, and epoch counter.
    void resume_from(const std::string& checkpoint_path);

    // Runs epochs [done, cfg.epochs); appends telemetry as it goes.
    TrainResult run(const Tensor<float>& images, const TrainSinks& sinks = {});

    void save(const std::string& path);

    Generator<float>& generator() { return *g_; }
    Discriminator<float>& discriminator() { return *d_; }
    const TrainConfig& config() const { return cfg_; }
    int64_t epochs_done() const { return epochs_done_; }

    // Images from the current generator, drawn with a throwaway stream.
    Tensor<float> sample_images(int64_t n, uint64_t seed);

  private:
    void train_epoch(int64_t epoch, const Tensor<float>& images, TrainResult& result, std::ostream* telemetry);

    TrainConfig cfg_;
    std::unique_ptr<Generator<float>> g_;
    std::unique_ptr<Discriminator<float>> d_;
    std::unique_ptr<RMSProp<float>> opt_g_;
    std::unique_ptr<RMSProp<float>> opt_d_;
    Rng step_rng_;  // latent draws during training; serialized in checkpoints
    int64_t epochs_done_ = 0;
};

// Generator (and config) reconstructed from a training checkpoint.
struct LoadedGan {
    TrainConfig cfg;
    std::unique_ptr<Generator<float>> g;
    std::unique_ptr<Discriminator<float>> d;
    nlohmann::json meta;
};

LoadedGan load_gan(const std::string& checkpoint_path);

// Images from a generator under a throwaway sampling stream (no gradients).
Tensor<float> generate_images(Generator<float>& g, int64_t n, uint64_t seed);

// The latent draw behind generate_images, for callers that need the full
// forward pass (score traces, frame dumps) with the same samples.
Tensor<float> sample_latents(int64_t n, int64_t dim, uint64_t seed);

}  // namespace spikegan
