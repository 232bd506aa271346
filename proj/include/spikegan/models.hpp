#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spikegan/decoding.hpp"
#include "spikegan/ops.hpp"
#include "spikegan/rng.hpp"
#include "spikegan/snn.hpp"

namespace spikegan {

// ---- layers -----------------------------------------------------------------

template <typename T>
struct Linear {
    Parameter<T> w;  // [in, out]
    Parameter<T> b;  // [out]

    Linear() = default;
    Linear(const std::string& name, int64_t in, int64_t out, Rng& rng) {
        const T bound = T(1.0 / std::sqrt(static_cast<double>(in)));
        w = Parameter<T>(name + ".w", Tensor<T>::uniform({in, out}, rng, -bound, bound));
        b = Parameter<T>(name + ".b", Tensor<T>({out}));
    }

    struct Bound {
        Var<T> w, b;
    };
    Bound use(Tape<T>& t) { return {t.use(w), t.use(b)}; }
    static Var<T> apply(const Bound& p, Var<T> x) { return add_rowvec(matmul(x, p.w), p.b); }

    std::vector<Parameter<T>*> params() { return {&w, &b}; }
};

template <typename T>
struct Conv2d {
    Parameter<T> w;  // [out_ch, in_ch, k, k]
    Parameter<T> b;  // [out_ch]
    int64_t stride = 1;
    int64_t pad = 0;

    Conv2d() = default;
    Conv2d(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride_, int64_t pad_,
           Rng& rng)
        : stride(stride_), pad(pad_) {
        const T bound = T(1.0 / std::sqrt(static_cast<double>(in_ch * k * k)));
        w = Parameter<T>(name + ".w", Tensor<T>::uniform({out_ch, in_ch, k, k}, rng, -bound, bound));
        b = Parameter<T>(name + ".b", Tensor<T>({out_ch}));
    }

    struct Bound {
        Var<T> w, b;
    };
    Bound use(Tape<T>& t) { return {t.use(w), t.use(b)}; }
    Var<T> apply(const Bound& p, Var<T> x) const { return add_channel_bias(conv2d(x, p.w, stride, pad), p.b); }

    std::vector<Parameter<T>*> params() { return {&w, &b}; }
};

template <typename T>
struct ConvTranspose2d {
    Parameter<T> w;  // [in_ch, out_ch, k, k]
    Parameter<T> b;  // [out_ch]
    int64_t stride = 1;
    int64_t pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride_,
                    int64_t pad_, Rng& rng)
        : stride(stride_), pad(pad_) {
        const T bound = T(1.0 / std::sqrt(static_cast<double>(in_ch * k * k)));
        w = Parameter<T>(name + ".w", Tensor<T>::uniform({in_ch, out_ch, k, k}, rng, -bound, bound));
        b = Parameter<T>(name + ".b", Tensor<T>({out_ch}));
    }

    struct Bound {
        Var<T> w, b;
    };
    Bound use(Tape<T>& t) { return {t.use(w), t.use(b)}; }
    Var<T> apply(const Bound& p, Var<T> x) const {
        return add_channel_bias(conv_transpose2d(x, p.w, stride, pad), p.b);
    }

    std::vector<Parameter<T>*> params() { return {&w, &b}; }
};

// Validates uniqueness of parameter names; the ordering is the construction
// order and doubles as the checkpoint key order.
template <typename T>
std::vector<Parameter<T>*> parameter_registry(std::vector<Parameter<T>*> params) {
    std::set<std::string> seen;
    for (Parameter<T>* p : params) {
        if (p == nullptr) throw ConfigError("parameter registry: null entry");
        if (!seen.insert(p->name).second)
            throw ConfigError("parameter registry: duplicate name '" + p->name + "'");
    }
    return params;
}

// ---- generator ---------------------------------------------------------------

// Dense stem into a spiking feature map, two 2x-upsampling transposed-conv
// blocks. The last block emits a real-valued frame X_t each step; frames are
// folded into one image either by averaging or by the attention decoder, then
// squashed to [-1, 1].
struct GeneratorConfig {
    int64_t latent_dim = 10;
    int64_t channels = 1;
    int64_t height = 28;
    int64_t width = 28;
    int64_t hidden0 = 128;  // channels entering the first upsample block
    int64_t hidden1 = 64;   // channels entering the second upsample block
    int64_t steps = 16;
    bool attention_decode = false;
    int64_t d_k = 64;
    LIFConfig lif;

    void validate() const {
        lif.validate();
        if (latent_dim < 1) throw ConfigError("generator: latent_dim must be >= 1");
        if (channels < 1) throw ConfigError("generator: channels must be >= 1");
        if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
            throw ConfigError("generator: image height/width must be multiples of 4, got " +
                              std::to_string(height) + "x" + std::to_string(width));
        if (hidden0 < 1 || hidden1 < 1) throw ConfigError("generator: hidden channel counts must be >= 1");
        if (steps < 1) throw ConfigError("generator: steps must be >= 1");
        if (attention_decode && d_k < 1) throw ConfigError("generator: d_k must be >= 1");
    }
};

template <typename T>
class Generator {
  public:
    Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int64_t h4 = cfg_.height / 4, w4 = cfg_.width / 4;
        stem_ = Linear<T>("g.stem", cfg_.latent_dim, cfg_.hidden0 * h4 * w4, rng);
        up1_ = ConvTranspose2d<T>("g.up1", cfg_.hidden0, cfg_.hidden1, 4, 2, 1, rng);
        up2_ = ConvTranspose2d<T>("g.up2", cfg_.hidden1, cfg_.channels, 4, 2, 1, rng);
        if (cfg_.attention_decode)
            decoder_ = AttentionDecoderParams<T>("g.dec", cfg_.channels * cfg_.height * cfg_.width, cfg_.d_k, rng);
    }

    const GeneratorConfig& config() const { return cfg_; }
    AttentionDecoderParams<T>& decoder() {
        if (!cfg_.attention_decode) throw ConfigError("generator has no attention decoder");
        return decoder_;
    }

    struct Forward {
        Var<T> image;                // [N, C, H, W], in [-1, 1]
        std::vector<Var<T>> x_seq;   // per-step raw frames, same shape
        ScoreTrace trace;            // empty unless attention decoding
    };

    Forward forward(Tape<T>& tape, Var<T> z, bool force_equal_logits = false) {
        const Shape& sz = z.val().shape();
        if (sz.size() != 2 || sz[1] != cfg_.latent_dim)
            throw ShapeError("generator: latent batch must be [N," + std::to_string(cfg_.latent_dim) + "], got " +
                             shape_str(sz));
        const int64_t n = sz[0];
        const int64_t h4 = cfg_.height / 4, w4 = cfg_.width / 4;
        const int64_t h2 = cfg_.height / 2, w2 = cfg_.width / 2;

        auto stem = stem_.use(tape);
        auto up1 = up1_.use(tape);
        auto up2 = up2_.use(tape);

        // The latent is static across steps, so the dense stem's
        // pre-activation is computed once and re-presented each step; all
        // temporal structure comes from the neuron state.
        Var<T> drive = Linear<T>::apply(stem, z);
        LIFState<T> s1 = lif_initial_state(tape, {n, cfg_.hidden0 * h4 * w4}, cfg_.lif);
        LIFState<T> s2 = lif_initial_state(tape, {n, cfg_.hidden1, h2, w2}, cfg_.lif);

        std::vector<Var<T>> x_seq;
        x_seq.reserve(static_cast<size_t>(cfg_.steps));
        for (int64_t t = 0; t < cfg_.steps; ++t) {
            auto [s1n, o1] = lif_step(s1, drive, cfg_.lif);
            s1 = s1n;
            Var<T> fmap = reshape(o1, {n, cfg_.hidden0, h4, w4});
            Var<T> u = up1_.apply(up1, fmap);
            auto [s2n, o2] = lif_step(s2, u, cfg_.lif);
            s2 = s2n;
            x_seq.push_back(up2_.apply(up2, o2));
        }

        Forward out;
        out.x_seq = x_seq;
        Var<T> raw;
        if (cfg_.attention_decode) {
            std::vector<Var<T>> flat;
            flat.reserve(x_seq.size());
            for (Var<T> x : x_seq) flat.push_back(reshape(x, {n, cfg_.channels * cfg_.height * cfg_.width}));
            DecodeResult<T> dec = decode_sequence(tape, flat, decoder_, force_equal_logits);
            raw = reshape(dec.image, {n, cfg_.channels, cfg_.height, cfg_.width});
            out.trace = std::move(dec.trace);
        } else {
            raw = mean_decode(x_seq);
        }
        out.image = tanh(raw);
        return out;
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto* p : stem_.params()) out.push_back(p);
        for (auto* p : up1_.params()) out.push_back(p);
        for (auto* p : up2_.params()) out.push_back(p);
        if (cfg_.attention_decode)
            for (auto* p : decoder_.params()) out.push_back(p);
        return parameter_registry(out);
    }

  private:
    GeneratorConfig cfg_;
    Linear<T> stem_;
    ConvTranspose2d<T> up1_, up2_;
    AttentionDecoderParams<T> decoder_;
};

// ---- discriminator -----------------------------------------------------------

enum class NeuronKind { lif, analog };

// Three downsample blocks (3x3 conv, neuron, 2x2 average pool) into a dense
// scoring head. The spiking variant presents the input every step and reads
// the score from a non-firing integrator; the analog variant is the same
// topology with leaky-ReLU units and a single pass.
struct DiscriminatorConfig {
    int64_t channels = 1;
    int64_t height = 28;
    int64_t width = 28;
    int64_t c1 = 64;
    int64_t c2 = 128;
    int64_t c3 = 256;
    NeuronKind neuron = NeuronKind::lif;
    int64_t steps = 16;
    ReadoutMode readout = ReadoutMode::last;
    double leaky_slope = 0.2;
    LIFConfig lif;

    // Inputs whose sides are not divisible by 8 are padded (bottom/right)
    // with the background value -1 so three 2x pools divide evenly.
    int64_t padded_height() const { return (height + 7) / 8 * 8; }
    int64_t padded_width() const { return (width + 7) / 8 * 8; }

    void validate() const {
        lif.validate();
        if (channels < 1 || height < 1 || width < 1) throw ConfigError("discriminator: bad image shape");
        if (c1 < 1 || c2 < 1 || c3 < 1) throw ConfigError("discriminator: channel counts must be >= 1");
        if (steps < 1) throw ConfigError("discriminator: steps must be >= 1");
        if (leaky_slope <= 0.0 || leaky_slope >= 1.0)
            throw ConfigError("discriminator: leaky_slope must be in (0,1)");
    }
};

template <typename T>
class Discriminator {
  public:
    Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        conv1_ = Conv2d<T>("d.conv1", cfg_.channels, cfg_.c1, 3, 1, 1, rng);
        conv2_ = Conv2d<T>("d.conv2", cfg_.c1, cfg_.c2, 3, 1, 1, rng);
        conv3_ = Conv2d<T>("d.conv3", cfg_.c2, cfg_.c3, 3, 1, 1, rng);
        head_ = Linear<T>("d.head", cfg_.c3 * (cfg_.padded_height() / 8) * (cfg_.padded_width() / 8), 1, rng);
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    // Returns one score per sample, shape [N].
    Var<T> forward(Tape<T>& tape, Var<T> image) {
        const Shape& s = image.val().shape();
        if (s.size() != 4 || s[1] != cfg_.channels || s[2] != cfg_.height || s[3] != cfg_.width)
            throw ShapeError("discriminator: expected [N," + std::to_string(cfg_.channels) + "," +
                             std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "], got " +
                             shape_str(s));
        const int64_t n = s[0];
        const int64_t ph = cfg_.padded_height(), pw = cfg_.padded_width();
        const int64_t flat = cfg_.c3 * (ph / 8) * (pw / 8);

        auto c1 = conv1_.use(tape);
        auto c2 = conv2_.use(tape);
        auto c3 = conv3_.use(tape);
        auto hd = head_.use(tape);

        Var<T> x = pad2d_br(image, ph, pw, T(-1));

        if (cfg_.neuron == NeuronKind::analog) {
            const T slope = T(cfg_.leaky_slope);
            Var<T> h = avgpool2d(leaky_relu(conv1_.apply(c1, x), slope), 2, 2);
            h = avgpool2d(leaky_relu(conv2_.apply(c2, h), slope), 2, 2);
            h = avgpool2d(leaky_relu(conv3_.apply(c3, h), slope), 2, 2);
            Var<T> logit = Linear<T>::apply(hd, reshape(h, {n, flat}));
            return reshape(logit, {n});
        }

        // Constant-current input: the first convolution sees the same frame
        // every step, so it is evaluated once and shared.
        Var<T> drive1 = conv1_.apply(c1, x);
        LIFState<T> s1 = lif_initial_state(tape, drive1.val().shape(), cfg_.lif);
        LIFState<T> s2 = lif_initial_state(tape, {n, cfg_.c2, ph / 2, pw / 2}, cfg_.lif);
        LIFState<T> s3 = lif_initial_state(tape, {n, cfg_.c3, ph / 4, pw / 4}, cfg_.lif);

        std::vector<Var<T>> scores;
        scores.reserve(static_cast<size_t>(cfg_.steps));
        for (int64_t t = 0; t < cfg_.steps; ++t) {
            auto [s1n, o1] = lif_step(s1, drive1, cfg_.lif);
            s1 = s1n;
            Var<T> h = avgpool2d(o1, 2, 2);
            auto [s2n, o2] = lif_step(s2, conv2_.apply(c2, h), cfg_.lif);
            s2 = s2n;
            h = avgpool2d(o2, 2, 2);
            auto [s3n, o3] = lif_step(s3, conv3_.apply(c3, h), cfg_.lif);
            s3 = s3n;
            h = avgpool2d(o3, 2, 2);
            scores.push_back(Linear<T>::apply(hd, reshape(h, {n, flat})));
        }
        Var<T> logit = readout_run(tape, scores, cfg_.lif, cfg_.readout);
        return reshape(logit, {n});
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto* p : conv1_.params()) out.push_back(p);
        for (auto* p : conv2_.params()) out.push_back(p);
        for (auto* p : conv3_.params()) out.push_back(p);
        for (auto* p : head_.params()) out.push_back(p);
        return parameter_registry(out);
    }

  private:
    DiscriminatorConfig cfg_;
    Conv2d<T> conv1_, conv2_, conv3_;
    Linear<T> head_;
};

}  // namespace spikegan
