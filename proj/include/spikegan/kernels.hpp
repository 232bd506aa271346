#pragma once

#include <cstdint>
#include <vector>

#include "spikegan/tensor.hpp"

// Raw compute loops shared by the forward and backward ops. Every output
// element is accumulated by a single fixed-order reduction, which is what
// makes whole training runs bit-reproducible; keep it that way when touching
// loop nests (no reassociating reductions, no atomics).
namespace spikegan::kernels {

// c[m x n] = (or +=) a[m x k] * b[k x n]. i-k-j order: the inner j loop is a
// contiguous axpy, so it vectorizes without changing per-element order.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate)
            for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T aip = arow[p];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <typename T>
void transpose(const T* src, T* dst, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline int64_t conv_transpose_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in - 1) * stride - 2 * pad + k;
}

namespace detail {

// Copies one [C,H,W] sample into a zero-padded [C,H+2p,W+2p] buffer.
template <typename T>
void pad_plane(const T* src, T* dst, int64_t c, int64_t h, int64_t w, int64_t p) {
    const int64_t hp = h + 2 * p, wp = w + 2 * p;
    std::fill(dst, dst + c * hp * wp, T(0));
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y) {
            const T* s = src + (ci * h + y) * w;
            T* d = dst + (ci * hp + y + p) * wp + p;
            for (int64_t x = 0; x < w; ++x) d[x] = s[x];
        }
}

template <typename T>
void unpad_acc(const T* src, T* dst, int64_t c, int64_t h, int64_t w, int64_t p, bool accumulate) {
    const int64_t hp = h + 2 * p, wp = w + 2 * p;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y) {
            const T* s = src + (ci * hp + y + p) * wp + p;
            T* d = dst + (ci * h + y) * w;
            if (accumulate)
                for (int64_t x = 0; x < w; ++x) d[x] += s[x];
            else
                for (int64_t x = 0; x < w; ++x) d[x] = s[x];
        }
}

template <typename T>
void row_gather_acc(T* dst, const T* src, int64_t len, int64_t stride, T wv) {
    if (stride == 1)
        for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i];
    else
        for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i * stride];
}

template <typename T>
void row_scatter_acc(T* dst, int64_t stride, const T* src, int64_t len, T wv) {
    if (stride == 1)
        for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i];
    else
        for (int64_t i = 0; i < len; ++i) dst[i * stride] += wv * src[i];
}

template <typename T>
T row_dot(const T* a, const T* b, int64_t len, int64_t b_stride) {
    T acc(0);
    if (b_stride == 1)
        for (int64_t i = 0; i < len; ++i) acc += a[i] * b[i];
    else
        for (int64_t i = 0; i < len; ++i) acc += a[i] * b[i * b_stride];
    return acc;
}

}  // namespace detail

// Cross-correlation forward: in [N,C,H,W], w [F,C,kh,kw] -> out [N,F,OH,OW].
template <typename T>
void conv2d_fwd(const T* in, const T* w, T* out, int64_t n, int64_t c, int64_t h, int64_t wd,
                int64_t f, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_out_extent(wd, kw, stride, pad);
    const int64_t hp = h + 2 * pad, wp = wd + 2 * pad;
    std::vector<T> padded(static_cast<size_t>(c * hp * wp));
    for (int64_t ni = 0; ni < n; ++ni) {
        detail::pad_plane(in + ni * c * h * wd, padded.data(), c, h, wd, pad);
        for (int64_t fi = 0; fi < f; ++fi) {
            T* oplane = out + (ni * f + fi) * oh * ow;
            std::fill(oplane, oplane + oh * ow, T(0));
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const T wv = w[((fi * c + ci) * kh + ky) * kw + kx];
                        if (wv == T(0)) continue;
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            const T* irow = padded.data() + (ci * hp + oy * stride + ky) * wp + kx;
                            detail::row_gather_acc(oplane + oy * ow, irow, ow, stride, wv);
                        }
                    }
        }
    }
}

// Gradient w.r.t. conv2d input; also the forward map of conv_transpose2d
// (with the [Ci,Co] axes of the kernel read as [F,C]).
template <typename T>
void conv2d_bwd_input(const T* g, const T* w, T* din, int64_t n, int64_t c, int64_t h, int64_t wd,
                      int64_t f, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_out_extent(wd, kw, stride, pad);
    const int64_t hp = h + 2 * pad, wp = wd + 2 * pad;
    std::vector<T> dpad(static_cast<size_t>(c * hp * wp));
    for (int64_t ni = 0; ni < n; ++ni) {
        std::fill(dpad.begin(), dpad.end(), T(0));
        for (int64_t fi = 0; fi < f; ++fi) {
            const T* gplane = g + (ni * f + fi) * oh * ow;
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const T wv = w[((fi * c + ci) * kh + ky) * kw + kx];
                        if (wv == T(0)) continue;
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            T* drow = dpad.data() + (ci * hp + oy * stride + ky) * wp + kx;
                            detail::row_scatter_acc(drow, stride, gplane + oy * ow, ow, wv);
                        }
                    }
        }
        detail::unpad_acc(dpad.data(), din + ni * c * h * wd, c, h, wd, pad, /*accumulate=*/true);
    }
}

// Gradient w.r.t. conv2d weights, accumulated into dw (caller zeroes or
// chains). Samples are reduced in index order.
template <typename T>
void conv2d_bwd_weight(const T* g, const T* in, T* dw, int64_t n, int64_t c, int64_t h, int64_t wd,
                       int64_t f, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_out_extent(wd, kw, stride, pad);
    const int64_t hp = h + 2 * pad, wp = wd + 2 * pad;
    std::vector<T> padded(static_cast<size_t>(c * hp * wp));
    for (int64_t ni = 0; ni < n; ++ni) {
        detail::pad_plane(in + ni * c * h * wd, padded.data(), c, h, wd, pad);
        for (int64_t fi = 0; fi < f; ++fi) {
            const T* gplane = g + (ni * f + fi) * oh * ow;
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        T acc(0);
                        for (int64_t oy = 0; oy < oh; ++oy) {
                            const T* irow = padded.data() + (ci * hp + oy * stride + ky) * wp + kx;
                            acc += detail::row_dot(gplane + oy * ow, irow, ow, stride);
                        }
                        dw[((fi * c + ci) * kh + ky) * kw + kx] += acc;
                    }
        }
    }
}

// conv_transpose2d forward: x [N,Ci,H,W], w [Ci,Co,kh,kw] -> out [N,Co,OH,OW].
// Scatter into a padded buffer, then crop; adjoint of conv2d_fwd by
// construction.
template <typename T>
void conv_transpose2d_fwd(const T* x, const T* w, T* out, int64_t n, int64_t ci, int64_t h, int64_t wd,
                          int64_t co, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_transpose_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_transpose_out_extent(wd, kw, stride, pad);
    const int64_t ohp = oh + 2 * pad, owp = ow + 2 * pad;
    std::vector<T> opad(static_cast<size_t>(co * ohp * owp));
    for (int64_t ni = 0; ni < n; ++ni) {
        std::fill(opad.begin(), opad.end(), T(0));
        for (int64_t cii = 0; cii < ci; ++cii) {
            const T* xplane = x + (ni * ci + cii) * h * wd;
            for (int64_t coi = 0; coi < co; ++coi)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const T wv = w[((cii * co + coi) * kh + ky) * kw + kx];
                        if (wv == T(0)) continue;
                        for (int64_t iy = 0; iy < h; ++iy) {
                            T* orow = opad.data() + (coi * ohp + iy * stride + ky) * owp + kx;
                            detail::row_scatter_acc(orow, stride, xplane + iy * wd, wd, wv);
                        }
                    }
        }
        detail::unpad_acc(opad.data(), out + ni * co * oh * ow, co, oh, ow, pad, /*accumulate=*/false);
    }
}

// Gradient w.r.t. conv_transpose2d input: gather from the padded cotangent.
template <typename T>
void conv_transpose2d_bwd_input(const T* g, const T* w, T* dx, int64_t n, int64_t ci, int64_t h, int64_t wd,
                                int64_t co, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_transpose_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_transpose_out_extent(wd, kw, stride, pad);
    const int64_t ohp = oh + 2 * pad, owp = ow + 2 * pad;
    std::vector<T> gpad(static_cast<size_t>(co * ohp * owp));
    for (int64_t ni = 0; ni < n; ++ni) {
        detail::pad_plane(g + ni * co * oh * ow, gpad.data(), co, oh, ow, pad);
        for (int64_t cii = 0; cii < ci; ++cii) {
            T* dplane = dx + (ni * ci + cii) * h * wd;
            for (int64_t coi = 0; coi < co; ++coi)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const T wv = w[((cii * co + coi) * kh + ky) * kw + kx];
                        if (wv == T(0)) continue;
                        for (int64_t iy = 0; iy < h; ++iy) {
                            const T* grow = gpad.data() + (coi * ohp + iy * stride + ky) * owp + kx;
                            detail::row_gather_acc(dplane + iy * wd, grow, wd, stride, wv);
                        }
                    }
        }
    }
}

template <typename T>
void conv_transpose2d_bwd_weight(const T* g, const T* x, T* dw, int64_t n, int64_t ci, int64_t h, int64_t wd,
                                 int64_t co, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
    const int64_t oh = conv_transpose_out_extent(h, kh, stride, pad);
    const int64_t ow = conv_transpose_out_extent(wd, kw, stride, pad);
    const int64_t ohp = oh + 2 * pad, owp = ow + 2 * pad;
    std::vector<T> gpad(static_cast<size_t>(co * ohp * owp));
    for (int64_t ni = 0; ni < n; ++ni) {
        detail::pad_plane(g + ni * co * oh * ow, gpad.data(), co, oh, ow, pad);
        for (int64_t cii = 0; cii < ci; ++cii) {
            const T* xplane = x + (ni * ci + cii) * h * wd;
            for (int64_t coi = 0; coi < co; ++coi)
                for (int64_t ky = 0; ky < kh; ++ky)
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        T acc(0);
                        for (int64_t iy = 0; iy < h; ++iy) {
                            const T* grow = gpad.data() + (coi * ohp + iy * stride + ky) * owp + kx;
                            acc += detail::row_dot(xplane + iy * wd, grow, wd, stride);
                        }
                        dw[((cii * co + coi) * kh + ky) * kw + kx] += acc;
                    }
        }
    }
}

template <typename T>
void avgpool2d_fwd(const T* in, T* out, int64_t n, int64_t c, int64_t h, int64_t w,
                   int64_t win, int64_t stride) {
    const int64_t oh = (h - win) / stride + 1;
    const int64_t ow = (w - win) / stride + 1;
    const T inv = T(1) / static_cast<T>(win * win);
    for (int64_t p = 0; p < n * c; ++p) {
        const T* iplane = in + p * h * w;
        T* oplane = out + p * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T acc(0);
                for (int64_t ky = 0; ky < win; ++ky) {
                    const T* row = iplane + (oy * stride + ky) * w + ox * stride;
                    for (int64_t kx = 0; kx < win; ++kx) acc += row[kx];
                }
                oplane[oy * ow + ox] = acc * inv;
            }
    }
}

template <typename T>
void avgpool2d_bwd(const T* g, T* din, int64_t n, int64_t c, int64_t h, int64_t w,
                   int64_t win, int64_t stride) {
    const int64_t oh = (h - win) / stride + 1;
    const int64_t ow = (w - win) / stride + 1;
    const T inv = T(1) / static_cast<T>(win * win);
    for (int64_t p = 0; p < n * c; ++p) {
        const T* gplane = g + p * oh * ow;
        T* dplane = din + p * h * w;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const T gv = gplane[oy * ow + ox] * inv;
                for (int64_t ky = 0; ky < win; ++ky) {
                    T* row = dplane + (oy * stride + ky) * w + ox * stride;
                    for (int64_t kx = 0; kx < win; ++kx) row[kx] += gv;
                }
            }
    }
}

}  // namespace spikegan::kernels
