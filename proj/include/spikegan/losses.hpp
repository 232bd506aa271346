#pragma once

#include <string>
#include <utility>

#include "spikegan/ops.hpp"

namespace spikegan {

enum class GanLoss { minimax, em };

inline GanLoss gan_loss_from_string(const std::string& s) {
    if (s == "minimax") return GanLoss::minimax;
    if (s == "em") return GanLoss::em;
    throw ConfigError("unknown loss '" + s + "' (expected minimax|em)");
}

inline const char* to_string(GanLoss l) { return l == GanLoss::minimax ? "minimax" : "em"; }

namespace detail {
template <typename T>
void require_finite_logits(const char* who, const Var<T>& v) {
    if (!v.val().all_finite()) throw DivergenceError(std::string(who) + ": non-finite discriminator output");
}
}  // namespace detail

// Saturating two-player objective, scorer side:
//   -mean(log s(d_real)) - mean(log(1 - s(d_fake))),  s = logistic.
// Written with softplus so large logits cannot overflow:
//   -log s(x) = softplus(-x), -log(1 - s(x)) = softplus(x).
template <typename T>
Var<T> minimax_d_loss(Var<T> d_real, Var<T> d_fake) {
    detail::require_finite_logits("minimax_d_loss", d_real);
    detail::require_finite_logits("minimax_d_loss", d_fake);
    return add(mean(softplus(scalar_mul(d_real, T(-1)))), mean(softplus(d_fake)));
}

// Non-saturating generator side: -mean(log s(d_fake)).
template <typename T>
Var<T> minimax_g_loss(Var<T> d_fake) {
    detail::require_finite_logits("minimax_g_loss", d_fake);
    return mean(softplus(scalar_mul(d_fake, T(-1))));
}

// Earth-mover objective, critic side: -(mean(d_real) - mean(d_fake)).
// No squashing, no weight clipping here; scores are unbounded.
template <typename T>
Var<T> em_d_loss(Var<T> d_real, Var<T> d_fake) {
    detail::require_finite_logits("em_d_loss", d_real);
    detail::require_finite_logits("em_d_loss", d_fake);
    return sub(mean(d_fake), mean(d_real));
}

template <typename T>
Var<T> em_g_loss(Var<T> d_fake) {
    detail::require_finite_logits("em_g_loss", d_fake);
    return scalar_mul(mean(d_fake), T(-1));
}

template <typename T>
std::pair<Var<T>, Var<T>> minimax_losses(Var<T> d_real, Var<T> d_fake) {
    return {minimax_d_loss(d_real, d_fake), minimax_g_loss(d_fake)};
}

template <typename T>
std::pair<Var<T>, Var<T>> em_losses(Var<T> d_real, Var<T> d_fake) {
    return {em_d_loss(d_real, d_fake), em_g_loss(d_fake)};
}

template <typename T>
Var<T> gan_d_loss(GanLoss kind, Var<T> d_real, Var<T> d_fake) {
    return kind == GanLoss::minimax ? minimax_d_loss(d_real, d_fake) : em_d_loss(d_real, d_fake);
}

template <typename T>
Var<T> gan_g_loss(GanLoss kind, Var<T> d_fake) {
    return kind == GanLoss::minimax ? minimax_g_loss(d_fake) : em_g_loss(d_fake);
}

}  // namespace spikegan
