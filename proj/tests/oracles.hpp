#pragma once

// Brute-force reference implementations, written with direct index math and
// no shared code with the production kernels. Slow on purpose.

#include "spikegan/tensor.hpp"

namespace oracles {

using spikegan::Tensor;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            T acc(0);
            for (int64_t p = 0; p < k; ++p) acc += a.at({i, p}) * b.at({p, j});
            c.at({i, j}) = acc;
        }
    return c;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor<T> out({n, f, oh, ow});
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t fi = 0; fi < f; ++fi)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    T acc(0);
                    for (int64_t ci = 0; ci < c; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride + ky - pad;
                                const int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.at({ni, ci, iy, ix}) * w.at({fi, ci, ky, kx});
                            }
                    out.at({ni, fi, oy, ox}) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int64_t oh = (h - 1) * stride - 2 * pad + kh;
    const int64_t ow = (wd - 1) * stride - 2 * pad + kw;
    Tensor<T> out({n, co, oh, ow});
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t cii = 0; cii < ci; ++cii)
            for (int64_t iy = 0; iy < h; ++iy)
                for (int64_t ix = 0; ix < wd; ++ix) {
                    const T xv = x.at({ni, cii, iy, ix});
                    for (int64_t coi = 0; coi < co; ++coi)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t oy = iy * stride + ky - pad;
                                const int64_t ox = ix * stride + kx - pad;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                                out.at({ni, coi, oy, ox}) += xv * w.at({cii, coi, ky, kx});
                            }
                }
    return out;
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, int64_t win, int64_t stride) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t oh = (h - win) / stride + 1, ow = (wd - win) / stride + 1;
    Tensor<T> out({n, c, oh, ow});
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    T acc(0);
                    for (int64_t ky = 0; ky < win; ++ky)
                        for (int64_t kx = 0; kx < win; ++kx)
                            acc += x.at({ni, ci, oy * stride + ky, ox * stride + kx});
                    out.at({ni, ci, oy, ox}) = acc / T(win * win);
                }
    return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return 1e30;
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace oracles
