#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spikegan/kernels.hpp"
#include "spikegan/tape.hpp"

namespace spikegan {

namespace detail {

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
    if (!a.valid()) throw ShapeError("operation on invalid variable");
    return *a.tape;
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
    if (a.tape != b.tape) throw ShapeError("operands recorded on different tapes");
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a.val().shape() != b.val().shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.val().shape()) + " vs " +
                         shape_str(b.val().shape()));
}

}  // namespace detail

template <typename T>
Var<T> constant(Tape<T>& t, Tensor<T> v) {
    return t.leaf(std::move(v), false);
}

// ---- elementwise arithmetic ------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b);
    detail::require_same_shape("add", a, b);
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] + b.val()[i];
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
        if (auto* gb = t.grad_dst(b))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*gb)[i] += self.grad[i];
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b);
    detail::require_same_shape("sub", a, b);
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] - b.val()[i];
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
        if (auto* gb = t.grad_dst(b))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*gb)[i] -= self.grad[i];
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b);
    detail::require_same_shape("mul", a, b);
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] * b.val()[i];
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& bv = t.val(b);
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
        }
        if (auto* gb = t.grad_dst(b)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < self.grad.size(); ++i) (*gb)[i] += self.grad[i] * av[i];
        }
    });
}

template <typename T>
Var<T> scalar_mul(Var<T> a, T c) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] * c;
    return t.push(std::move(out), {a.id}, [a = a.id, c](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * c;
    });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] + c;
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    });
}

// c - a
template <typename T>
Var<T> rsub_scalar(Var<T> a, T c) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = c - a.val()[i];
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] -= self.grad[i];
    });
}

// alpha*a + beta*b in one node; the LIF membrane update is this shape.
template <typename T>
Var<T> axpby(T alpha, Var<T> a, T beta, Var<T> b) {
    detail::require_same_tape(a, b);
    detail::require_same_shape("axpby", a, b);
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = alpha * a.val()[i] + beta * b.val()[i];
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id, alpha, beta](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += alpha * self.grad[i];
        if (auto* gb = t.grad_dst(b))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*gb)[i] += beta * self.grad[i];
    });
}

// ---- elementwise nonlinearities --------------------------------------------

template <typename T>
Var<T> tanh(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.val()[i]);
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& yv = self.value;
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * (T(1) - yv[i] * yv[i]);
        }
    });
}

namespace detail {
template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}
}  // namespace detail

template <typename T>
Var<T> sigmoid(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(a.val()[i]);
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& yv = self.value;
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * yv[i] * (T(1) - yv[i]);
        }
    });
}

// log(1 + e^x), evaluated without overflow; the minimax GAN losses are sums
// of softplus terms.
template <typename T>
Var<T> softplus(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        const T x = a.val()[i];
        out[i] = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
    }
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * detail::stable_sigmoid(av[i]);
        }
    });
}

// Subgradient 1 inside [lo, hi] (boundary counts as inside), 0 outside.
template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
    if (lo > hi) throw ShapeError("clamp: lo > hi");
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a.val()[i], lo), hi);
    return t.push(std::move(out), {a.id}, [a = a.id, lo, hi](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < self.grad.size(); ++i)
                if (av[i] >= lo && av[i] <= hi) (*ga)[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        const T x = a.val()[i];
        out[i] = x >= T(0) ? x : slope * x;
    }
    return t.push(std::move(out), {a.id}, [a = a.id, slope](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < self.grad.size(); ++i)
                (*ga)[i] += self.grad[i] * (av[i] >= T(0) ? T(1) : slope);
        }
    });
}

// Straight-through operation: forward applies fwd elementwise, backward
// multiplies the incoming gradient by bwd evaluated at the forward input.
template <typename T>
Var<T> custom_grad(Var<T> a, std::function<T(T)> fwd, std::function<T(T)> bwd) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out(a.val().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = fwd(a.val()[i]);
    return t.push(std::move(out), {a.id}, [a = a.id, bwd = std::move(bwd)](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * bwd(av[i]);
        }
    });
}

// Value copy with the gradient path cut.
template <typename T>
Var<T> stop_grad(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    return t.leaf(a.val(), false);
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    T acc(0);
    for (int64_t i = 0; i < a.val().size(); ++i) acc += a.val()[i];
    return t.push(Tensor<T>::scalar(acc), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const T g = self.grad[0];
            for (int64_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
        }
    });
}

template <typename T>
Var<T> mean(Var<T> a) {
    Tape<T>& t = detail::tape_of(a);
    const int64_t n = a.val().size();
    T acc(0);
    for (int64_t i = 0; i < n; ++i) acc += a.val()[i];
    acc /= static_cast<T>(n);
    return t.push(Tensor<T>::scalar(acc), {a.id}, [a = a.id, n](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const T g = self.grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
        }
    });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, Shape new_shape) {
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out = a.val().reshaped(new_shape);
    return t.push(std::move(out), {a.id}, [a = a.id](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a))
            for (int64_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, size_t axis) {
    if (parts.empty()) throw ShapeError("concat: empty input list");
    Tape<T>& t = detail::tape_of(parts[0]);
    const Shape& s0 = parts[0].val().shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        detail::require_same_tape(parts[0], p);
        const Shape& s = p.val().shape();
        if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d])
                throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
        out_shape[axis] += s[axis];
    }
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    Tensor<T> out(out_shape);
    std::vector<int32_t> ids;
    std::vector<int64_t> extents;
    const int64_t total_axis = out_shape[axis];
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t e = p.val().shape()[axis];
        for (int64_t o = 0; o < outer; ++o) {
            const T* src = p.val().data() + o * e * inner;
            T* dst = out.data() + (o * total_axis + offset) * inner;
            std::copy(src, src + e * inner, dst);
        }
        ids.push_back(p.id);
        extents.push_back(e);
        offset += e;
    }
    return t.push(std::move(out), std::vector<int32_t>(ids.begin(), ids.end()),
                  [ids, extents, outer, inner, total_axis](Tape<T>& t, const auto& self) {
                      int64_t off = 0;
                      for (size_t k = 0; k < ids.size(); ++k) {
                          if (auto* g = t.grad_dst(ids[k])) {
                              for (int64_t o = 0; o < outer; ++o) {
                                  const T* src = self.grad.data() + (o * total_axis + off) * inner;
                                  T* dst = g->data() + o * extents[k] * inner;
                                  for (int64_t i = 0; i < extents[k] * inner; ++i) dst[i] += src[i];
                              }
                          }
                          off += extents[k];
                      }
                  });
}

// ---- softmax ---------------------------------------------------------------

template <typename T>
Var<T> softmax(Var<T> a, size_t axis) {
    Tape<T>& t = detail::tape_of(a);
    const Shape& s = a.val().shape();
    if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + shape_str(s));
    int64_t outer = 1, inner = 1;
    const int64_t extent = s[axis];
    for (size_t d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];

    Tensor<T> out(s);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * extent * inner + i;
            T mx = a.val()[base];
            for (int64_t e = 1; e < extent; ++e) mx = std::max(mx, a.val()[base + e * inner]);
            T denom(0);
            for (int64_t e = 0; e < extent; ++e) {
                const T ev = std::exp(a.val()[base + e * inner] - mx);
                out[base + e * inner] = ev;
                denom += ev;
            }
            for (int64_t e = 0; e < extent; ++e) out[base + e * inner] /= denom;
        }
    return t.push(std::move(out), {a.id}, [a = a.id, outer, inner, extent](Tape<T>& t, const auto& self) {
        auto* ga = t.grad_dst(a);
        if (!ga) return;
        const Tensor<T>& yv = self.value;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const int64_t base = o * extent * inner + i;
                T dot(0);
                for (int64_t e = 0; e < extent; ++e) dot += self.grad[base + e * inner] * yv[base + e * inner];
                for (int64_t e = 0; e < extent; ++e) {
                    const int64_t k = base + e * inner;
                    (*ga)[k] += yv[k] * (self.grad[k] - dot);
                }
            }
    });
}

// ---- linear algebra --------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b);
    const Shape& sa = a.val().shape();
    const Shape& sb = b.val().shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
    const int64_t m = sa[0], k = sa[1], n = sb[1];
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out({m, n});
    kernels::gemm_nn(a.val().data(), b.val().data(), out.data(), m, k, n, false);
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id, m, k, n](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            // ga += g * b^T
            std::vector<T> bt(static_cast<size_t>(k * n));
            kernels::transpose(t.val(b).data(), bt.data(), k, n);
            kernels::gemm_nn(self.grad.data(), bt.data(), ga->data(), m, n, k, true);
        }
        if (auto* gb = t.grad_dst(b)) {
            // gb += a^T * g
            std::vector<T> at(static_cast<size_t>(m * k));
            kernels::transpose(t.val(a).data(), at.data(), m, k);
            kernels::gemm_nn(at.data(), self.grad.data(), gb->data(), k, m, n, true);
        }
    });
}

// x[N,D] + b[D] on every row.
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
    detail::require_same_tape(x, b);
    const Shape& sx = x.val().shape();
    const Shape& sb = b.val().shape();
    if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1])
        throw ShapeError("add_rowvec: " + shape_str(sx) + " + " + shape_str(sb));
    const int64_t n = sx[0], d = sx[1];
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out(sx);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = x.val()[i * d + j] + b.val()[j];
    return t.push(std::move(out), {x.id, b.id}, [x = x.id, b = b.id, n, d](Tape<T>& t, const auto& self) {
        if (auto* gx = t.grad_dst(x))
            for (int64_t i = 0; i < n * d; ++i) (*gx)[i] += self.grad[i];
        if (auto* gb = t.grad_dst(b))
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) (*gb)[j] += self.grad[i * d + j];
    });
}

// x[N,C,H,W] + b[C] on every plane.
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> b) {
    detail::require_same_tape(x, b);
    const Shape& sx = x.val().shape();
    const Shape& sb = b.val().shape();
    if (sx.size() != 4 || sb.size() != 1 || sb[0] != sx[1])
        throw ShapeError("add_channel_bias: " + shape_str(sx) + " + " + shape_str(sb));
    const int64_t n = sx[0], c = sx[1], hw = sx[2] * sx[3];
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out(sx);
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci) {
            const T bv = b.val()[ci];
            const T* src = x.val().data() + (ni * c + ci) * hw;
            T* dst = out.data() + (ni * c + ci) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
        }
    return t.push(std::move(out), {x.id, b.id}, [x = x.id, b = b.id, n, c, hw](Tape<T>& t, const auto& self) {
        if (auto* gx = t.grad_dst(x))
            for (int64_t i = 0; i < n * c * hw; ++i) (*gx)[i] += self.grad[i];
        if (auto* gb = t.grad_dst(b))
            for (int64_t ni = 0; ni < n; ++ni)
                for (int64_t ci = 0; ci < c; ++ci) {
                    const T* src = self.grad.data() + (ni * c + ci) * hw;
                    T acc(0);
                    for (int64_t i = 0; i < hw; ++i) acc += src[i];
                    (*gb)[ci] += acc;
                }
    });
}

// Per-row dot product: a[N,K] . b[N,K] -> [N]. Attention logits are this.
template <typename T>
Var<T> rowwise_dot(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b);
    detail::require_same_shape("rowwise_dot", a, b);
    const Shape& s = a.val().shape();
    if (s.size() != 2) throw ShapeError("rowwise_dot expects rank-2, got " + shape_str(s));
    const int64_t n = s[0], k = s[1];
    Tape<T>& t = detail::tape_of(a);
    Tensor<T> out({n});
    for (int64_t i = 0; i < n; ++i) {
        T acc(0);
        for (int64_t j = 0; j < k; ++j) acc += a.val()[i * k + j] * b.val()[i * k + j];
        out[i] = acc;
    }
    return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id, n, k](Tape<T>& t, const auto& self) {
        if (auto* ga = t.grad_dst(a)) {
            const Tensor<T>& bv = t.val(b);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < k; ++j) (*ga)[i * k + j] += self.grad[i] * bv[i * k + j];
        }
        if (auto* gb = t.grad_dst(b)) {
            const Tensor<T>& av = t.val(a);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < k; ++j) (*gb)[i * k + j] += self.grad[i] * av[i * k + j];
        }
    });
}

// Per-sample convex combination y[n,...] = ax[n]*x[n,...] + av[n]*v[n,...];
// the attention decoder's membrane update with one coefficient pair per
// sample.
template <typename T>
Var<T> lincomb_rows(Var<T> ax, Var<T> x, Var<T> av, Var<T> v) {
    detail::require_same_tape(ax, x);
    detail::require_same_tape(x, av);
    detail::require_same_tape(av, v);
    detail::require_same_shape("lincomb_rows", x, v);
    const Shape& s = x.val().shape();
    if (s.empty()) throw ShapeError("lincomb_rows expects rank >= 1");
    const int64_t n = s[0];
    const int64_t stride = x.val().size() / n;
    if (ax.val().shape() != Shape{n} || av.val().shape() != Shape{n})
        throw ShapeError("lincomb_rows: coefficient shape must be [" + std::to_string(n) + "]");
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out(s);
    for (int64_t i = 0; i < n; ++i) {
        const T cx = ax.val()[i], cv = av.val()[i];
        const T* xs = x.val().data() + i * stride;
        const T* vs = v.val().data() + i * stride;
        T* dst = out.data() + i * stride;
        for (int64_t j = 0; j < stride; ++j) dst[j] = cx * xs[j] + cv * vs[j];
    }
    return t.push(std::move(out), {ax.id, x.id, av.id, v.id},
                  [ax = ax.id, x = x.id, av = av.id, v = v.id, n, stride](Tape<T>& t, const auto& self) {
                      const Tensor<T>& axv = t.val(ax);
                      const Tensor<T>& avv = t.val(av);
                      if (auto* gx = t.grad_dst(x))
                          for (int64_t i = 0; i < n; ++i)
                              for (int64_t j = 0; j < stride; ++j)
                                  (*gx)[i * stride + j] += self.grad[i * stride + j] * axv[i];
                      if (auto* gv = t.grad_dst(v))
                          for (int64_t i = 0; i < n; ++i)
                              for (int64_t j = 0; j < stride; ++j)
                                  (*gv)[i * stride + j] += self.grad[i * stride + j] * avv[i];
                      if (auto* gax = t.grad_dst(ax)) {
                          const Tensor<T>& xv = t.val(x);
                          for (int64_t i = 0; i < n; ++i) {
                              T acc(0);
                              for (int64_t j = 0; j < stride; ++j)
                                  acc += self.grad[i * stride + j] * xv[i * stride + j];
                              (*gax)[i] += acc;
                          }
                      }
                      if (auto* gav = t.grad_dst(av)) {
                          const Tensor<T>& vv = t.val(v);
                          for (int64_t i = 0; i < n; ++i) {
                              T acc(0);
                              for (int64_t j = 0; j < stride; ++j)
                                  acc += self.grad[i * stride + j] * vv[i * stride + j];
                              (*gav)[i] += acc;
                          }
                      }
                  });
}

// ---- convolution family ----------------------------------------------------

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, int64_t stride, int64_t pad) {
    detail::require_same_tape(x, w);
    const Shape& sx = x.val().shape();
    const Shape& sw = w.val().shape();
    if (sx.size() != 4 || sw.size() != 4)
        throw ShapeError("conv2d expects [N,C,H,W] and [F,C,kh,kw], got " + shape_str(sx) + " and " + shape_str(sw));
    if (sx[1] != sw[1])
        throw ShapeError("conv2d channel mismatch: input " + shape_str(sx) + " vs kernel " + shape_str(sw));
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/pad");
    const int64_t n = sx[0], c = sx[1], h = sx[2], wd = sx[3];
    const int64_t f = sw[0], kh = sw[2], kw = sw[3];
    const int64_t oh = kernels::conv_out_extent(h, kh, stride, pad);
    const int64_t ow = kernels::conv_out_extent(wd, kw, stride, pad);
    if (oh <= 0 || ow <= 0 || kh > h + 2 * pad || kw > wd + 2 * pad)
        throw ShapeError("conv2d: non-positive output extent for input " + shape_str(sx) + " kernel " +
                         shape_str(sw) + " stride " + std::to_string(stride) + " pad " + std::to_string(pad));
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out({n, f, oh, ow});
    kernels::conv2d_fwd(x.val().data(), w.val().data(), out.data(), n, c, h, wd, f, kh, kw, stride, pad);
    return t.push(std::move(out), {x.id, w.id},
                  [x = x.id, w = w.id, n, c, h, wd, f, kh, kw, stride, pad](Tape<T>& t, const auto& self) {
                      if (auto* gx = t.grad_dst(x))
                          kernels::conv2d_bwd_input(self.grad.data(), t.val(w).data(), gx->data(), n, c, h, wd, f,
                                                    kh, kw, stride, pad);
                      if (auto* gw = t.grad_dst(w))
                          kernels::conv2d_bwd_weight(self.grad.data(), t.val(x).data(), gw->data(), n, c, h, wd, f,
                                                     kh, kw, stride, pad);
                  });
}

template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> w, int64_t stride, int64_t pad) {
    detail::require_same_tape(x, w);
    const Shape& sx = x.val().shape();
    const Shape& sw = w.val().shape();
    if (sx.size() != 4 || sw.size() != 4)
        throw ShapeError("conv_transpose2d expects [N,Ci,H,W] and [Ci,Co,kh,kw], got " + shape_str(sx) + " and " +
                         shape_str(sw));
    if (sx[1] != sw[0])
        throw ShapeError("conv_transpose2d channel mismatch: input " + shape_str(sx) + " vs kernel " + shape_str(sw));
    if (stride < 1 || pad < 0) throw ShapeError("conv_transpose2d: invalid stride/pad");
    const int64_t n = sx[0], ci = sx[1], h = sx[2], wd = sx[3];
    const int64_t co = sw[1], kh = sw[2], kw = sw[3];
    const int64_t oh = kernels::conv_transpose_out_extent(h, kh, stride, pad);
    const int64_t ow = kernels::conv_transpose_out_extent(wd, kw, stride, pad);
    if (oh <= 0 || ow <= 0)
        throw ShapeError("conv_transpose2d: non-positive output extent for input " + shape_str(sx) + " kernel " +
                         shape_str(sw));
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out({n, co, oh, ow});
    kernels::conv_transpose2d_fwd(x.val().data(), w.val().data(), out.data(), n, ci, h, wd, co, kh, kw, stride, pad);
    return t.push(std::move(out), {x.id, w.id},
                  [x = x.id, w = w.id, n, ci, h, wd, co, kh, kw, stride, pad](Tape<T>& t, const auto& self) {
                      if (auto* gx = t.grad_dst(x))
                          kernels::conv_transpose2d_bwd_input(self.grad.data(), t.val(w).data(), gx->data(), n, ci,
                                                              h, wd, co, kh, kw, stride, pad);
                      if (auto* gw = t.grad_dst(w))
                          kernels::conv_transpose2d_bwd_weight(self.grad.data(), t.val(x).data(), gw->data(), n, ci,
                                                               h, wd, co, kh, kw, stride, pad);
                  });
}

// Pad H,W up to (oh, ow) with a constant fill on the bottom/right edges.
template <typename T>
Var<T> pad2d_br(Var<T> x, int64_t oh, int64_t ow, T fill) {
    const Shape& sx = x.val().shape();
    if (sx.size() != 4) throw ShapeError("pad2d_br expects [N,C,H,W], got " + shape_str(sx));
    const int64_t n = sx[0], c = sx[1], h = sx[2], w = sx[3];
    if (oh < h || ow < w) throw ShapeError("pad2d_br: target smaller than input " + shape_str(sx));
    if (oh == h && ow == w) return x;
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out = Tensor<T>::full({n, c, oh, ow}, fill);
    for (int64_t p = 0; p < n * c; ++p)
        for (int64_t i = 0; i < h; ++i) {
            const T* src = x.val().data() + (p * h + i) * w;
            T* dst = out.data() + (p * oh + i) * ow;
            std::copy(src, src + w, dst);
        }
    return t.push(std::move(out), {x.id}, [x = x.id, n, c, h, w, oh, ow](Tape<T>& t, const auto& self) {
        if (auto* gx = t.grad_dst(x))
            for (int64_t p = 0; p < n * c; ++p)
                for (int64_t i = 0; i < h; ++i) {
                    const T* src = self.grad.data() + (p * oh + i) * ow;
                    T* dst = gx->data() + (p * h + i) * w;
                    for (int64_t j = 0; j < w; ++j) dst[j] += src[j];
                }
    });
}

template <typename T>
Var<T> avgpool2d(Var<T> x, int64_t window, int64_t stride) {
    const Shape& sx = x.val().shape();
    if (sx.size() != 4) throw ShapeError("avgpool2d expects [N,C,H,W], got " + shape_str(sx));
    if (window < 1 || stride < 1) throw ShapeError("avgpool2d: invalid window/stride");
    const int64_t h = sx[2], w = sx[3];
    if (h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0)
        throw ShapeError("avgpool2d: window " + std::to_string(window) + " stride " + std::to_string(stride) +
                         " does not tile input " + shape_str(sx));
    const int64_t oh = (h - window) / stride + 1;
    const int64_t ow = (w - window) / stride + 1;
    Tape<T>& t = detail::tape_of(x);
    Tensor<T> out({sx[0], sx[1], oh, ow});
    kernels::avgpool2d_fwd(x.val().data(), out.data(), sx[0], sx[1], h, w, window, stride);
    return t.push(std::move(out), {x.id},
                  [x = x.id, n = sx[0], c = sx[1], h, w, window, stride](Tape<T>& t, const auto& self) {
                      if (auto* gx = t.grad_dst(x))
                          kernels::avgpool2d_bwd(self.grad.data(), gx->data(), n, c, h, w, window, stride);
                  });
}

// ---- classification loss (proxy feature extractor training) ----------------

template <typename T>
Var<T> cross_entropy_with_logits(Var<T> logits, std::vector<int64_t> labels) {
    const Shape& s = logits.val().shape();
    if (s.size() != 2) throw ShapeError("cross_entropy_with_logits expects [N,K], got " + shape_str(s));
    const int64_t n = s[0], k = s[1];
    if (static_cast<int64_t>(labels.size()) != n) throw ShapeError("cross_entropy_with_logits: label count mismatch");
    for (int64_t lb : labels)
        if (lb < 0 || lb >= k) throw ShapeError("cross_entropy_with_logits: label out of range");
    Tape<T>& t = detail::tape_of(logits);
    T total(0);
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits.val().data() + i * k;
        T mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom(0);
        for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        total += std::log(denom) + mx - row[labels[static_cast<size_t>(i)]];
    }
    total /= static_cast<T>(n);
    return t.push(Tensor<T>::scalar(total), {logits.id},
                  [l = logits.id, labels = std::move(labels), n, k](Tape<T>& t, const auto& self) {
                      auto* gl = t.grad_dst(l);
                      if (!gl) return;
                      const Tensor<T>& lv = t.val(l);
                      const T scale = self.grad[0] / static_cast<T>(n);
                      for (int64_t i = 0; i < n; ++i) {
                          const T* row = lv.data() + i * k;
                          T mx = row[0];
                          for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                          T denom(0);
                          for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
                          for (int64_t j = 0; j < k; ++j) {
                              T p = std::exp(row[j] - mx) / denom;
                              if (j == labels[static_cast<size_t>(i)]) p -= T(1);
                              (*gl)[i * k + j] += scale * p;
                          }
                      }
                  });
}

}  // namespace spikegan
