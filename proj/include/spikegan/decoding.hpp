#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spikegan/ops.hpp"
#include "spikegan/rng.hpp"

namespace spikegan {

// Per-step, per-sample mixing coefficients recorded during decoding. Stored
// step-major; alpha_x(t) weights the step input, alpha_v(t) the carried
// state, and the pair sums to 1 by construction.
struct ScoreTrace {
    int64_t num_samples = 0;
    std::vector<double> alpha_x;
    std::vector<double> alpha_v;

    int64_t steps() const { return num_samples == 0 ? 0 : static_cast<int64_t>(alpha_x.size()) / num_samples; }

    template <typename T>
    void append_step(const Tensor<T>& ax, const Tensor<T>& av) {
        if (num_samples == 0) num_samples = ax.size();
        if (ax.size() != num_samples || av.size() != num_samples)
            throw ShapeError("score trace: inconsistent sample count");
        for (int64_t i = 0; i < num_samples; ++i) {
            alpha_x.push_back(static_cast<double>(ax[i]));
            alpha_v.push_back(static_cast<double>(av[i]));
        }
    }

    void write_csv(std::ostream& os) const {
        os << "sample_id,t,alpha_x,alpha_v\n";
        const int64_t t_total = steps();
        for (int64_t i = 0; i < num_samples; ++i)
            for (int64_t t = 0; t < t_total; ++t) {
                const size_t k = static_cast<size_t>(t * num_samples + i);
                os << i << ',' << t << ',' << std::setprecision(10) << alpha_x[k] << ',' << alpha_v[k] << '\n';
            }
    }

    std::string to_csv() const {
        std::ostringstream os;
        write_csv(os);
        return os.str();
    }
};

// Query/key projections that score the step input X_t against the carried
// potential V_{t-1}. One scalar coefficient pair per sample, shared across
// pixels: the query/keys see whole flattened images.
template <typename T>
struct AttentionDecoderParams {
    int64_t input_dim = 0;
    int64_t d_k = 64;
    Parameter<T> w_vq, w_vk, w_xk;  // each [input_dim, d_k], bias-free

    AttentionDecoderParams() = default;

    AttentionDecoderParams(const std::string& prefix, int64_t input_dim_, int64_t d_k_, Rng& rng)
        : input_dim(input_dim_), d_k(d_k_) {
        if (input_dim < 1) throw ConfigError("attention decoder: input_dim must be >= 1");
        if (d_k < 1) throw ConfigError("attention decoder: d_k must be >= 1");
        const T bound = T(1.0 / std::sqrt(static_cast<double>(input_dim)));
        w_vq = Parameter<T>(prefix + ".w_vq", Tensor<T>::uniform({input_dim, d_k}, rng, -bound, bound));
        w_vk = Parameter<T>(prefix + ".w_vk", Tensor<T>::uniform({input_dim, d_k}, rng, -bound, bound));
        w_xk = Parameter<T>(prefix + ".w_xk", Tensor<T>::uniform({input_dim, d_k}, rng, -bound, bound));
    }

    struct Bound {
        Var<T> w_vq, w_vk, w_xk;
    };
    Bound use(Tape<T>& t) { return {t.use(w_vq), t.use(w_vk), t.use(w_xk)}; }

    std::vector<Parameter<T>*> params() { return {&w_vq, &w_vk, &w_xk}; }
};

template <typename T>
struct ScorePair {
    Var<T> alpha_x;
    Var<T> alpha_v;
};

// Scaled dot-product scores over the two candidates {X_t, V_{t-1}}:
//   q = v_prev * w_vq, keys = {x_t * w_xk, v_prev * w_vk}
//   logits = q . key / sqrt(d_k), [alpha_x, alpha_v] = softmax(logits)
// The two-way softmax is computed as alpha_x = sigmoid(lx - lv) with
// alpha_v = 1 - alpha_x, which is the same function but makes the pair sum
// to 1 exactly in floating point.
template <typename T>
ScorePair<T> attention_score(const typename AttentionDecoderParams<T>::Bound& p, Var<T> v_prev, Var<T> x_t,
                             int64_t d_k, bool force_equal_logits = false) {
    detail::require_same_shape("attention_score", v_prev, x_t);
    const Shape& s = v_prev.val().shape();
    if (s.size() != 2 || s[1] != p.w_vq.val().shape()[0])
        throw ShapeError("attention_score: input " + shape_str(s) + " does not match projection " +
                         shape_str(p.w_vq.val().shape()));
    Tape<T>& t = *v_prev.tape;
    const int64_t n = s[0];
    if (force_equal_logits) {
        Var<T> half = t.leaf(Tensor<T>::full({n}, T(0.5)), false);
        return {half, half};
    }
    const T scale = T(1.0 / std::sqrt(static_cast<double>(d_k)));
    Var<T> q = matmul(v_prev, p.w_vq);
    Var<T> key_x = matmul(x_t, p.w_xk);
    Var<T> key_v = matmul(v_prev, p.w_vk);
    Var<T> logit_x = scalar_mul(rowwise_dot(q, key_x), scale);
    Var<T> logit_v = scalar_mul(rowwise_dot(q, key_v), scale);
    Var<T> alpha_x = sigmoid(sub(logit_x, logit_v));
    Var<T> alpha_v = rsub_scalar(alpha_x, T(1));
    return {alpha_x, alpha_v};
}

template <typename T>
struct DecodeStep {
    Var<T> v;
    Var<T> alpha_x;
    Var<T> alpha_v;
};

// One fold of the decoded potential: v_t = alpha_v * v_prev + alpha_x * x_t.
// This is the leaky membrane update with a data-dependent time constant.
template <typename T>
DecodeStep<T> decode_step(const typename AttentionDecoderParams<T>::Bound& p, Var<T> v_prev, Var<T> x_t,
                          int64_t d_k, bool force_equal_logits = false) {
    ScorePair<T> a = attention_score<T>(p, v_prev, x_t, d_k, force_equal_logits);
    Var<T> v = lincomb_rows(a.alpha_x, x_t, a.alpha_v, v_prev);
    return {v, a.alpha_x, a.alpha_v};
}

template <typename T>
struct DecodeResult {
    Var<T> image;  // V_T, raw (activation applied by the caller)
    ScoreTrace trace;
};

template <typename T>
DecodeResult<T> decode_sequence(Tape<T>& tape, const std::vector<Var<T>>& x_seq, AttentionDecoderParams<T>& params,
                                bool force_equal_logits = false) {
    if (x_seq.empty()) throw ConfigError("decode_sequence: empty input sequence");
    auto bound = params.use(tape);
    Var<T> v = tape.leaf(Tensor<T>(x_seq[0].val().shape()), false);  // v0 = 0
    ScoreTrace trace;
    for (const Var<T>& x_t : x_seq) {
        DecodeStep<T> step = decode_step<T>(bound, v, x_t, params.d_k, force_equal_logits);
        trace.append_step(step.alpha_x.val(), step.alpha_v.val());
        v = step.v;
    }
    return {v, std::move(trace)};
}

// Baseline decoder: arithmetic mean of the step outputs.
template <typename T>
Var<T> mean_decode(const std::vector<Var<T>>& x_seq) {
    if (x_seq.empty()) throw ConfigError("mean_decode: empty input sequence");
    Var<T> acc = x_seq[0];
    for (size_t i = 1; i < x_seq.size(); ++i) acc = add(acc, x_seq[i]);
    return scalar_mul(acc, T(1) / static_cast<T>(x_seq.size()));
}

}  // namespace spikegan
