#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spikegan/data.hpp"
#include "spikegan/models.hpp"

namespace spikegan {

// ---- distribution distance ----------------------------------------------

struct FeatureStats {
    Tensor<double> mu;     // [d]
    Tensor<double> sigma;  // [d, d], unbiased estimator
    int64_t n = 0;
};

// Principal square root of a symmetric PSD matrix via cyclic Jacobi
// eigendecomposition (bounded sweeps). Eigenvalues in [-1e-6, 0) are treated
// as rounding noise and clamped to zero.
Tensor<double> matrix_sqrt_psd(const Tensor<double>& m);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); both covariances get a
// 1e-6 ridge so the product square root is well conditioned at small n.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Mean and unbiased covariance of feature rows [N, d]; requires N >= 2.
FeatureStats feature_stats(const Tensor<float>& features);

void save_stats(const std::string& path, const FeatureStats& stats);
FeatureStats load_stats(const std::string& path);

// ---- proxy feature extractor ----------------------------------------------

// Small analog CNN classifier whose penultimate activations define the
// feature space all generators are scored in. Full-scale FID uses a large
// pretrained network; scores here are comparable only within one frozen
// extractor, so orderings are the claim, not absolute values.
struct ExtractorConfig {
    int64_t channels = 1;
    int64_t height = 28;
    int64_t width = 28;
    int64_t c1 = 8;
    int64_t c2 = 16;
    int64_t feat_dim = 64;
    int64_t classes = 10;
    int64_t max_epochs = 30;
    int64_t batch_size = 64;
    double lr = 1e-3;
    double target_accuracy = 0.95;
    uint64_t seed = 1;

    void validate() const;
};

class Extractor {
  public:
    Extractor(const ExtractorConfig& cfg, Rng& rng);

    Var<float> forward(Tape<float>& tape, Var<float> images);             // logits [N, classes]
    Var<float> forward_features(Tape<float>& tape, Var<float> images);    // [N, feat_dim]
    Tensor<float> features(const Tensor<float>& images, int64_t batch = 256);  // no-grad, batched

    std::vector<Parameter<float>*> params();
    const ExtractorConfig& config() const { return cfg_; }

  private:
    ExtractorConfig cfg_;
    Conv2d<float> conv1_, conv2_;
    Linear<float> fc1_, fc2_;
};

struct ExtractorTrainResult {
    double train_accuracy = 0.0;
    int64_t epochs_run = 0;
};

// Trains to the accuracy gate; throws MetricGateError if max_epochs pass
// without reaching it.
ExtractorTrainResult train_proxy_extractor(Extractor& model, const ImageDataset& dataset);

void save_extractor(const std::string& path, Extractor& model, const ExtractorTrainResult& result);
Extractor load_extractor(const std::string& path);

// FNV-1a over parameter names and payload bytes, as a short hex id.
std::string params_fingerprint(const std::vector<Parameter<float>*>& params);

FeatureStats stats_of_images(Extractor& model, const Tensor<float>& images);

// ---- telemetry analysis ----------------------------------------------------

struct TelemetryRun {
    std::string path;
    std::vector<double> epoch, loss_d, loss_g, grad_norm_g, grad_norm_d, lr, wall_seconds;
    size_t rows() const { return epoch.size(); }
};

TelemetryRun parse_telemetry_csv(const std::string& path);

// Mean generator gradient norm per quarter of training, for each run, plus
// per-quarter ratios against the first run.
struct GradReport {
    std::vector<std::string> names;
    std::vector<std::array<double, 4>> quarter_means_g;
    std::vector<std::array<double, 4>> quarter_means_d;
    std::vector<std::array<double, 4>> ratio_vs_first;  // empty elements when single run
};

GradReport gradnorm_report(const std::vector<TelemetryRun>& runs);
std::string format_gradreport(const GradReport& report);

}  // namespace spikegan
