#include "spikegan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spikegan/checkpoint.hpp"
#include "spikegan/kernels.hpp"
#include "spikegan/losses.hpp"
#include "spikegan/optim.hpp"

namespace spikegan {

namespace {

double frobenius(const Tensor<double>& m) {
    double acc = 0.0;
    for (int64_t i = 0; i < m.size(); ++i) acc += m[i] * m[i];
    return std::sqrt(acc);
}

// Cyclic Jacobi for symmetric matrices: rotates away each off-diagonal pair
// in a fixed (p, q) order until the off-diagonal mass is negligible.
// a becomes diagonal (eigenvalues), v accumulates the eigenvectors.
void jacobi_eigen(Tensor<double>& a, Tensor<double>& v, int64_t d) {
    v = Tensor<double>({d, d});
    for (int64_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    const double scale = std::max(frobenius(a), 1e-300);

    const int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (int64_t p = 0; p < d; ++p)
            for (int64_t q = p + 1; q < d; ++q) off += 2.0 * a[p * d + q] * a[p * d + q];
        if (std::sqrt(off) <= 1e-12 * scale) return;

        for (int64_t p = 0; p < d; ++p)
            for (int64_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (int64_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (int64_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
    }
    double off = 0.0;
    for (int64_t p = 0; p < d; ++p)
        for (int64_t q = p + 1; q < d; ++q) off += 2.0 * a[p * d + q] * a[p * d + q];
    throw NumericalError("jacobi eigensolver did not converge in 100 sweeps (off-diagonal " +
                         std::to_string(std::sqrt(off)) + ", scale " + std::to_string(scale) + ")");
}

Tensor<double> with_ridge(const Tensor<double>& m, double eps) {
    Tensor<double> out = m;
    const int64_t d = m.dim(0);
    for (int64_t i = 0; i < d; ++i) out[i * d + i] += eps;
    return out;
}

Tensor<double> matmul_dd(const Tensor<double>& a, const Tensor<double>& b) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<double> c({m, n});
    kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
    return c;
}

}  // namespace

Tensor<double> matrix_sqrt_psd(const Tensor<double>& m) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1))
        throw ShapeError("matrix_sqrt_psd expects a square matrix, got " + shape_str(m.shape()));
    const int64_t d = m.dim(0);
    const double scale = std::max(1.0, frobenius(m));
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i + 1; j < d; ++j)
            if (std::abs(m[i * d + j] - m[j * d + i]) > 1e-6 * scale)
                throw ShapeError("matrix_sqrt_psd: input is not symmetric within tolerance");

    // Work on the exactly symmetrized copy so rotations stay stable.
    Tensor<double> a({d, d});
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) a[i * d + j] = 0.5 * (m[i * d + j] + m[j * d + i]);

    Tensor<double> v;
    jacobi_eigen(a, v, d);

    std::vector<double> roots(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) {
        double lam = a[i * d + i];
        if (lam < -1e-6)
            throw NumericalError("matrix_sqrt_psd: eigenvalue " + std::to_string(lam) + " is negative beyond tolerance");
        if (lam < 0.0) lam = 0.0;
        roots[static_cast<size_t>(i)] = std::sqrt(lam);
    }

    // R = V diag(sqrt(lambda)) V^T
    Tensor<double> out({d, d});
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < d; ++k) acc += v[i * d + k] * roots[static_cast<size_t>(k)] * v[j * d + k];
            out[i * d + j] = acc;
        }
    return out;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.mu.shape() != b.mu.shape() || a.sigma.shape() != b.sigma.shape())
        throw ShapeError("frechet_distance: feature dimension mismatch " + shape_str(a.mu.shape()) + " vs " +
                         shape_str(b.mu.shape()));
    const int64_t d = a.mu.dim(0);
    const Tensor<double> sa = with_ridge(a.sigma, 1e-6);
    const Tensor<double> sb = with_ridge(b.sigma, 1e-6);

    double mean_term = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        const double diff = a.mu[i] - b.mu[i];
        mean_term += diff * diff;
    }

    // Tr((Sa Sb)^{1/2}) computed on the congruent symmetric form
    // (Sa^{1/2} Sb Sa^{1/2})^{1/2}, which has the same eigenvalues.
    const Tensor<double> root_a = matrix_sqrt_psd(sa);
    Tensor<double> inner = matmul_dd(matmul_dd(root_a, sb), root_a);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i + 1; j < d; ++j) {
            const double sym = 0.5 * (inner[i * d + j] + inner[j * d + i]);
            inner[i * d + j] = sym;
            inner[j * d + i] = sym;
        }
    const Tensor<double> cross = matrix_sqrt_psd(inner);

    double trace_term = 0.0;
    for (int64_t i = 0; i < d; ++i) trace_term += sa[i * d + i] + sb[i * d + i] - 2.0 * cross[i * d + i];
    return mean_term + trace_term;
}

FeatureStats feature_stats(const Tensor<float>& features) {
    if (features.rank() != 2) throw ShapeError("feature_stats expects [N,d], got " + shape_str(features.shape()));
    const int64_t n = features.dim(0), d = features.dim(1);
    if (n < 2) throw ConfigError("feature_stats requires at least 2 samples, got " + std::to_string(n));
    FeatureStats out;
    out.n = n;
    out.mu = Tensor<double>({d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out.mu[j] += static_cast<double>(features[i * d + j]);
    for (int64_t j = 0; j < d; ++j) out.mu[j] /= static_cast<double>(n);

    out.sigma = Tensor<double>({d, d});
    std::vector<double> centered(static_cast<size_t>(d));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) centered[static_cast<size_t>(j)] = features[i * d + j] - out.mu[j];
        for (int64_t p = 0; p < d; ++p)
            for (int64_t q = 0; q < d; ++q)
                out.sigma[p * d + q] += centered[static_cast<size_t>(p)] * centered[static_cast<size_t>(q)];
    }
    for (int64_t i = 0; i < d * d; ++i) out.sigma[i] /= static_cast<double>(n - 1);
    return out;
}

void save_stats(const std::string& path, const FeatureStats& stats) {
    Checkpoint ckpt;
    ckpt.tensors["mu"] = stats.mu.cast<float>();
    ckpt.tensors["sigma"] = stats.sigma.cast<float>();
    ckpt.meta["kind"] = "feature_stats";
    ckpt.meta["n"] = stats.n;
    save_checkpoint(path, ckpt);
}

FeatureStats load_stats(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (!ckpt.tensors.count("mu") || !ckpt.tensors.count("sigma"))
        throw CheckpointError(path + ": not a feature-stats file");
    FeatureStats out;
    out.mu = ckpt.tensors.at("mu").cast<double>();
    out.sigma = ckpt.tensors.at("sigma").cast<double>();
    out.n = ckpt.meta.value("n", 0);
    return out;
}

// ---- extractor ---------------------------------------------------------------

void ExtractorConfig::validate() const {
    if (channels < 1 || height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
        throw ConfigError("extractor: image sides must be multiples of 4");
    if (c1 < 1 || c2 < 1 || feat_dim < 1 || classes < 2) throw ConfigError("extractor: bad architecture sizes");
    if (max_epochs < 1 || batch_size < 1) throw ConfigError("extractor: bad training settings");
    if (target_accuracy <= 0.0 || target_accuracy > 1.0) throw ConfigError("extractor: bad target accuracy");
}

Extractor::Extractor(const ExtractorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    conv1_ = Conv2d<float>("fx.conv1", cfg_.channels, cfg_.c1, 3, 1, 1, rng);
    conv2_ = Conv2d<float>("fx.conv2", cfg_.c1, cfg_.c2, 3, 1, 1, rng);
    fc1_ = Linear<float>("fx.fc1", cfg_.c2 * (cfg_.height / 4) * (cfg_.width / 4), cfg_.feat_dim, rng);
    fc2_ = Linear<float>("fx.fc2", cfg_.feat_dim, cfg_.classes, rng);
}

Var<float> Extractor::forward_features(Tape<float>& tape, Var<float> images) {
    const Shape& s = images.val().shape();
    if (s.size() != 4 || s[1] != cfg_.channels || s[2] != cfg_.height || s[3] != cfg_.width)
        throw ShapeError("extractor: bad input shape " + shape_str(s));
    const int64_t n = s[0];
    auto c1 = conv1_.use(tape);
    auto c2 = conv2_.use(tape);
    auto f1 = fc1_.use(tape);
    Var<float> h = avgpool2d(leaky_relu(conv1_.apply(c1, images), 0.1f), 2, 2);
    h = avgpool2d(leaky_relu(conv2_.apply(c2, h), 0.1f), 2, 2);
    h = reshape(h, {n, cfg_.c2 * (cfg_.height / 4) * (cfg_.width / 4)});
    return leaky_relu(Linear<float>::apply(f1, h), 0.1f);
}

Var<float> Extractor::forward(Tape<float>& tape, Var<float> images) {
    Var<float> feats = forward_features(tape, images);
    auto f2 = fc2_.use(tape);
    return Linear<float>::apply(f2, feats);
}

Tensor<float> Extractor::features(const Tensor<float>& images, int64_t batch) {
    const int64_t n = images.dim(0);
    Tensor<float> out({n, cfg_.feat_dim});
    for (int64_t at = 0; at < n; at += batch) {
        const int64_t take = std::min(batch, n - at);
        Tensor<float> chunk({take, cfg_.channels, cfg_.height, cfg_.width});
        std::copy(images.data() + at * cfg_.channels * cfg_.height * cfg_.width,
                  images.data() + (at + take) * cfg_.channels * cfg_.height * cfg_.width, chunk.data());
        Tape<float> tape;
        Var<float> feats = forward_features(tape, tape.leaf(std::move(chunk), false));
        std::copy(feats.val().data(), feats.val().data() + take * cfg_.feat_dim, out.data() + at * cfg_.feat_dim);
    }
    return out;
}

std::vector<Parameter<float>*> Extractor::params() {
    std::vector<Parameter<float>*> out;
    for (auto* p : conv1_.params()) out.push_back(p);
    for (auto* p : conv2_.params()) out.push_back(p);
    for (auto* p : fc1_.params()) out.push_back(p);
    for (auto* p : fc2_.params()) out.push_back(p);
    return parameter_registry(out);
}

namespace {

double extractor_accuracy(Extractor& model, const Tensor<float>& images, const std::vector<uint8_t>& labels) {
    const int64_t n = images.dim(0);
    const auto& cfg = model.config();
    int64_t correct = 0;
    const int64_t batch = 256;
    for (int64_t at = 0; at < n; at += batch) {
        const int64_t take = std::min(batch, n - at);
        Tensor<float> chunk({take, cfg.channels, cfg.height, cfg.width});
        std::copy(images.data() + at * cfg.channels * cfg.height * cfg.width,
                  images.data() + (at + take) * cfg.channels * cfg.height * cfg.width, chunk.data());
        Tape<float> tape;
        Var<float> logits = model.forward(tape, tape.leaf(std::move(chunk), false));
        for (int64_t i = 0; i < take; ++i) {
            const float* row = logits.val().data() + i * cfg.classes;
            int64_t arg = 0;
            for (int64_t k = 1; k < cfg.classes; ++k)
                if (row[k] > row[arg]) arg = k;
            if (arg == labels[static_cast<size_t>(at + i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

ExtractorTrainResult train_proxy_extractor(Extractor& model, const ImageDataset& dataset) {
    tune_allocator();
    const ExtractorConfig& cfg = model.config();
    if (!dataset.labeled()) throw ConfigError("extractor training needs a labeled dataset");
    for (uint8_t l : dataset.labels)
        if (l >= cfg.classes)
            throw ConfigError("extractor: label " + std::to_string(l) + " outside " + std::to_string(cfg.classes) +
                              " classes");
    const Tensor<float> images = normalize(dataset.images);
    RMSProp<float> opt(model.params(), {cfg.lr, 0.99, 1e-8});

    ExtractorTrainResult result;
    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto batches = epoch_batches(dataset.count(), std::min(cfg.batch_size, dataset.count()),
                                           mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        for (const auto& idx : batches) {
            Tensor<float> batch = gather_batch(images, idx);
            std::vector<int64_t> labels(idx.size());
            for (size_t k = 0; k < idx.size(); ++k) labels[k] = dataset.labels[static_cast<size_t>(idx[k])];
            Tape<float> tape;
            Var<float> logits = model.forward(tape, tape.leaf(std::move(batch), false));
            Var<float> loss = cross_entropy_with_logits(logits, std::move(labels));
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
        result.epochs_run = epoch + 1;
        result.train_accuracy = extractor_accuracy(model, images, dataset.labels);
        if (result.train_accuracy >= cfg.target_accuracy) return result;
    }
    throw MetricGateError("proxy extractor reached only " + std::to_string(result.train_accuracy) +
                          " train accuracy after " + std::to_string(cfg.max_epochs) + " epochs (gate " +
                          std::to_string(cfg.target_accuracy) + "); metric results would be unreliable");
}

std::string params_fingerprint(const std::vector<Parameter<float>*>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const uint8_t* p, size_t len) {
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const Parameter<float>* p : params) {
        mix(reinterpret_cast<const uint8_t*>(p->name.data()), p->name.size());
        mix(reinterpret_cast<const uint8_t*>(p->value.data()), static_cast<size_t>(p->value.size()) * sizeof(float));
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void save_extractor(const std::string& path, Extractor& model, const ExtractorTrainResult& result) {
    Checkpoint ckpt;
    store_params(ckpt, model.params());
    const ExtractorConfig& c = model.config();
    ckpt.meta["kind"] = "extractor";
    ckpt.meta["config"] = {{"channels", c.channels}, {"height", c.height},     {"width", c.width},
                           {"c1", c.c1},             {"c2", c.c2},             {"feat_dim", c.feat_dim},
                           {"classes", c.classes},   {"seed", c.seed}};
    ckpt.meta["train_accuracy"] = result.train_accuracy;
    ckpt.meta["epochs_run"] = result.epochs_run;
    ckpt.meta["fingerprint"] = params_fingerprint(model.params());
    save_checkpoint(path, ckpt);
}

Extractor load_extractor(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "extractor")
        throw CheckpointError(path + ": not an extractor checkpoint");
    const auto& mc = ckpt.meta.at("config");
    ExtractorConfig cfg;
    cfg.channels = mc.at("channels");
    cfg.height = mc.at("height");
    cfg.width = mc.at("width");
    cfg.c1 = mc.at("c1");
    cfg.c2 = mc.at("c2");
    cfg.feat_dim = mc.at("feat_dim");
    cfg.classes = mc.at("classes");
    cfg.seed = mc.at("seed");
    Rng rng(cfg.seed);
    Extractor model(cfg, rng);
    load_params(ckpt, model.params());
    return model;
}

FeatureStats stats_of_images(Extractor& model, const Tensor<float>& images) {
    return feature_stats(model.features(images));
}

// ---- telemetry ---------------------------------------------------------------

TelemetryRun parse_telemetry_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open telemetry: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty telemetry file");
    if (line != "epoch,loss_d,loss_g,grad_norm_g,grad_norm_d,lr,wall_seconds")
        throw DataError(path + ": unexpected telemetry header '" + line + "'");
    TelemetryRun run;
    run.path = path;
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(is, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad telemetry cell '" + cell + "'");
            }
        }
        if (row.size() != 7)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 7 columns, got " +
                            std::to_string(row.size()));
        run.epoch.push_back(row[0]);
        run.loss_d.push_back(row[1]);
        run.loss_g.push_back(row[2]);
        run.grad_norm_g.push_back(row[3]);
        run.grad_norm_d.push_back(row[4]);
        run.lr.push_back(row[5]);
        run.wall_seconds.push_back(row[6]);
    }
    if (run.rows() == 0) throw DataError(path + ": telemetry has no data rows");
    return run;
}

namespace {
std::array<double, 4> quarter_means(const std::vector<double>& v) {
    std::array<double, 4> out{};
    const size_t n = v.size();
    for (int q = 0; q < 4; ++q) {
        const size_t lo = n * static_cast<size_t>(q) / 4;
        const size_t hi = std::max(n * static_cast<size_t>(q + 1) / 4, lo + (q == 3 ? 1 : 0));
        double acc = 0.0;
        size_t cnt = 0;
        for (size_t i = lo; i < hi && i < n; ++i, ++cnt) acc += v[i];
        out[static_cast<size_t>(q)] = cnt ? acc / static_cast<double>(cnt) : 0.0;
    }
    return out;
}
}  // namespace

GradReport gradnorm_report(const std::vector<TelemetryRun>& runs) {
    if (runs.empty()) throw ConfigError("gradnorm_report: no telemetry runs");
    for (const TelemetryRun& r : runs)
        if (r.rows() != runs[0].rows())
            throw ConfigError("gradnorm_report: " + r.path + " has " + std::to_string(r.rows()) +
                              " epochs, expected " + std::to_string(runs[0].rows()) + " (misaligned runs)");
    GradReport rep;
    for (const TelemetryRun& r : runs) {
        rep.names.push_back(r.path);
        rep.quarter_means_g.push_back(quarter_means(r.grad_norm_g));
        rep.quarter_means_d.push_back(quarter_means(r.grad_norm_d));
    }
    if (runs.size() > 1) {
        for (size_t k = 0; k < runs.size(); ++k) {
            std::array<double, 4> ratio{};
            for (int q = 0; q < 4; ++q) {
                const double base = rep.quarter_means_g[0][static_cast<size_t>(q)];
                ratio[static_cast<size_t>(q)] =
                    base != 0.0 ? rep.quarter_means_g[k][static_cast<size_t>(q)] / base : 0.0;
            }
            rep.ratio_vs_first.push_back(ratio);
        }
    }
    return rep;
}

std::string format_gradreport(const GradReport& rep) {
    std::ostringstream os;
    os << "generator gradient-norm means by training quarter\n";
    for (size_t k = 0; k < rep.names.size(); ++k) {
        os << "  " << rep.names[k] << ":";
        for (int q = 0; q < 4; ++q) os << "  q" << (q + 1) << "=" << rep.quarter_means_g[k][static_cast<size_t>(q)];
        if (!rep.ratio_vs_first.empty())
            os << "  (final-quarter ratio vs first file: " << rep.ratio_vs_first[k][3] << ")";
        os << "\n";
    }
    for (size_t k = 1; k < rep.names.size(); ++k) {
        const double a = rep.quarter_means_g[k][3], b = rep.quarter_means_g[0][3];
        os << "verdict: final-quarter mean grad_norm_g of " << rep.names[k] << " ("
           << a << ") " << (a > b ? ">" : (a < b ? "<" : "=")) << " " << rep.names[0] << " (" << b << ")\n";
    }
    return os.str();
}

}  // namespace spikegan
