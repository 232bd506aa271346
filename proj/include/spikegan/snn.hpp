#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spikegan/ops.hpp"
#include "spikegan/rng.hpp"

namespace spikegan {

// Leaky integrate-and-fire dynamics:
//   v' = (1 - 1/tau) * v + (1/tau) * x
//   o  = H(v' - v_th)        (H(0) = 1: a neuron at exact threshold fires)
//   v  = v' * (1 - o) + v_reset * o   (hard reset, o treated as constant)
struct LIFConfig {
    double tau = 2.0;
    double v_th = 1.0;
    double v_reset = 0.0;
    double surrogate_width = 0.5;

    void validate() const {
        if (!(tau > 1.0)) throw ConfigError("lif: tau must be > 1, got " + std::to_string(tau));
        if (!(surrogate_width > 0.0))
            throw ConfigError("lif: surrogate_width must be > 0, got " + std::to_string(surrogate_width));
    }
};

template <typename T>
struct LIFState {
    Var<T> v;
    int64_t t = 0;
};

// Exact step function forward (1 for u >= 0); rectangular substitute
// derivative 1/(2a) on |u| <= a in the backward pass.
template <typename T>
Var<T> surrogate_heaviside(Var<T> u, T width) {
    Tape<T>& t = *u.tape;
    Tensor<T> out(u.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = u.val()[i] >= T(0) ? T(1) : T(0);
    return t.push(std::move(out), {u.id}, [u = u.id, width](Tape<T>& t, const auto& self) {
        if (auto* gu = t.grad_dst(u)) {
            const Tensor<T>& uv = t.val(u);
            const T slope = T(1) / (T(2) * width);
            for (int64_t i = 0; i < self.grad.size(); ++i)
                if (uv[i] >= -width && uv[i] <= width) (*gu)[i] += self.grad[i] * slope;
        }
    });
}

namespace detail {

// v' * (1 - o) + v_reset * o with the spike value o treated as a constant:
// gradient reaches v' through the retention factor only, and never reaches o.
template <typename T>
Var<T> hard_reset(Var<T> v, Var<T> o, T v_reset) {
    require_same_shape("hard_reset", v, o);
    Tape<T>& t = *v.tape;
    Tensor<T> out(v.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        const T oi = o.val()[i];
        out[i] = v.val()[i] * (T(1) - oi) + v_reset * oi;
    }
    return t.push(std::move(out), {v.id, o.id}, [v = v.id, o = o.id](Tape<T>& t, const auto& self) {
        if (auto* gv = t.grad_dst(v)) {
            const Tensor<T>& ov = t.val(o);
            for (int64_t i = 0; i < self.grad.size(); ++i) (*gv)[i] += self.grad[i] * (T(1) - ov[i]);
        }
    });
}

}  // namespace detail

template <typename T>
std::pair<LIFState<T>, Var<T>> lif_step(const LIFState<T>& state, Var<T> x, const LIFConfig& cfg) {
    detail::require_same_shape("lif_step", state.v, x);
    const T inv_tau = T(1.0 / cfg.tau);
    Var<T> v_pre = axpby(T(1) - inv_tau, state.v, inv_tau, x);
    Var<T> spikes = surrogate_heaviside(add_scalar(v_pre, T(-cfg.v_th)), T(cfg.surrogate_width));
    Var<T> v_post = detail::hard_reset(v_pre, spikes, T(cfg.v_reset));
    return {LIFState<T>{v_post, state.t + 1}, spikes};
}

template <typename T>
LIFState<T> lif_initial_state(Tape<T>& tape, const Shape& shape, const LIFConfig& cfg) {
    return {tape.leaf(Tensor<T>::full(shape, T(cfg.v_reset)), false), 0};
}

template <typename T>
std::vector<Var<T>> lif_run(Tape<T>& tape, const std::vector<Var<T>>& x_seq, const LIFConfig& cfg) {
    if (x_seq.empty()) throw ConfigError("lif_run: empty input sequence");
    cfg.validate();
    LIFState<T> state = lif_initial_state(tape, x_seq[0].val().shape(), cfg);
    std::vector<Var<T>> spikes;
    spikes.reserve(x_seq.size());
    for (const Var<T>& x : x_seq) {
        auto [next, o] = lif_step(state, x, cfg);
        state = next;
        spikes.push_back(o);
    }
    return spikes;
}

enum class ReadoutMode { last, mean };

// Non-firing integrator used as an output head: folds the membrane update
// with spiking disabled and reads the potential out directly.
template <typename T>
Var<T> readout_run(Tape<T>& tape, const std::vector<Var<T>>& x_seq, const LIFConfig& cfg,
                   ReadoutMode mode = ReadoutMode::last) {
    if (x_seq.empty()) throw ConfigError("readout_run: empty input sequence");
    cfg.validate();
    const T inv_tau = T(1.0 / cfg.tau);
    Var<T> v = tape.leaf(Tensor<T>::full(x_seq[0].val().shape(), T(cfg.v_reset)), false);
    Var<T> acc;
    for (size_t t = 0; t < x_seq.size(); ++t) {
        v = axpby(T(1) - inv_tau, v, inv_tau, x_seq[t]);
        if (mode == ReadoutMode::mean) acc = (t == 0) ? v : add(acc, v);
    }
    if (mode == ReadoutMode::mean) return scalar_mul(acc, T(1) / static_cast<T>(x_seq.size()));
    return v;
}

// Constant-current encoding: the same analog frame drives every step. The
// returned handles all alias one graph node, so downstream ops that only see
// the frame (e.g. the first convolution) can be computed once and shared.
template <typename T>
std::vector<Var<T>> encode_direct(Var<T> image, int64_t steps) {
    if (steps < 1) throw ConfigError("encode_direct: steps must be >= 1");
    return std::vector<Var<T>>(static_cast<size_t>(steps), image);
}

// Rate encoding: per-step Bernoulli spikes with probability given by the
// pixel value in [0, 1]. Values outside [0, 1] are clamped.
template <typename T>
std::vector<Var<T>> encode_poisson(Tape<T>& tape, const Tensor<T>& probs, int64_t steps, Rng& rng) {
    if (steps < 1) throw ConfigError("encode_poisson: steps must be >= 1");
    std::vector<Var<T>> out;
    out.reserve(static_cast<size_t>(steps));
    for (int64_t t = 0; t < steps; ++t) {
        Tensor<T> frame(probs.shape());
        for (int64_t i = 0; i < probs.size(); ++i) {
            const double p = std::min(std::max(static_cast<double>(probs[i]), 0.0), 1.0);
            frame[i] = rng.bernoulli(p) ? T(1) : T(0);
        }
        out.push_back(tape.leaf(std::move(frame), false));
    }
    return out;
}

}  // namespace spikegan
