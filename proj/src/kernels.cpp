#include "polarbev/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace polarbev::kernels {

namespace {

// Resolve a row index under the given pad mode. Returns -1 for "zero".
inline std::int64_t resolve(std::int64_t i, std::int64_t extent, Pad mode) {
    if (i >= 0 && i < extent) return i;
    if (mode == Pad::circular) {
        i %= extent;
        return i < 0 ? i + extent : i;
    }
    return -1;
}

} // namespace

template <typename T>
void matmul(const T* a, const T* b, T* out, std::int64_t m, std::int64_t n, std::int64_t k,
            bool trans_a, bool trans_b, bool accumulate, bool parallel) {
    const std::int64_t a_rs = trans_a ? 1 : k; // stride between rows of op_a
    const std::int64_t a_cs = trans_a ? m : 1;
    const std::int64_t b_rs = trans_b ? 1 : n;
    const std::int64_t b_cs = trans_b ? k : 1;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t i = 0; i < m; ++i) {
        T* orow = out + i * n;
        if (!accumulate) {
            for (std::int64_t j = 0; j < n; ++j) orow[j] = T(0);
        }
        for (std::int64_t p = 0; p < k; ++p) {
            const T aip = a[i * a_rs + p * a_cs];
            const T* brow = b + p * b_rs;
            if (b_cs == 1) {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            } else {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j * b_cs];
            }
        }
    }
}

template <typename T>
void matmul_ref(const T* a, const T* b, T* out, std::int64_t m, std::int64_t n, std::int64_t k,
                bool trans_a, bool trans_b, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? out[i * n + j] : T(0);
            for (std::int64_t p = 0; p < k; ++p) {
                const T av = trans_a ? a[p * m + i] : a[i * k + p];
                const T bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

template <typename T>
void conv2d_forward(const T* in, const T* kern, T* out, std::int64_t c_in, std::int64_t c_out,
                    std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                    Pad pad_h, Pad pad_w, bool parallel) {
    const std::int64_t ph = (kh - 1) / 2;
    const std::int64_t pw = (kw - 1) / 2;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t co = 0; co < c_out; ++co) {
        for (std::int64_t y = 0; y < h; ++y) {
            T* orow = out + (co * h + y) * w;
            for (std::int64_t x = 0; x < w; ++x) orow[x] = T(0);
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = resolve(y + ky - ph, h, pad_h);
                    if (iy < 0) continue;
                    const T* irow = in + (ci * h + iy) * w;
                    const T* krow = kern + ((co * c_in + ci) * kh + ky) * kw;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const T kval = krow[kx];
                        const std::int64_t off = kx - pw;
                        if (pad_w == Pad::circular) {
                            // split the row into the wrapped head/tail and the body
                            if (off < 0) {
                                for (std::int64_t x = 0; x < -off; ++x) orow[x] += kval * irow[x + off + w];
                                for (std::int64_t x = -off; x < w; ++x) orow[x] += kval * irow[x + off];
                            } else {
                                for (std::int64_t x = 0; x < w - off; ++x) orow[x] += kval * irow[x + off];
                                for (std::int64_t x = w - off; x < w; ++x) orow[x] += kval * irow[x + off - w];
                            }
                        } else {
                            const std::int64_t x_lo = std::max<std::int64_t>(0, -off);
                            const std::int64_t x_hi = std::min<std::int64_t>(w, w - off);
                            for (std::int64_t x = x_lo; x < x_hi; ++x) orow[x] += kval * irow[x + off];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_forward_ref(const T* in, const T* kern, T* out, std::int64_t c_in, std::int64_t c_out,
                        std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                        Pad pad_h, Pad pad_w) {
    const std::int64_t ph = (kh - 1) / 2;
    const std::int64_t pw = (kw - 1) / 2;
    for (std::int64_t co = 0; co < c_out; ++co) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                T acc = T(0);
                for (std::int64_t ci = 0; ci < c_in; ++ci) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = resolve(y + ky - ph, h, pad_h);
                        if (iy < 0) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = resolve(x + kx - pw, w, pad_w);
                            if (ix < 0) continue;
                            acc += kern[((co * c_in + ci) * kh + ky) * kw + kx] * in[(ci * h + iy) * w + ix];
                        }
                    }
                }
                out[(co * h + y) * w + x] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_input_grad(const T* g, const T* kern, T* din, std::int64_t c_in, std::int64_t c_out,
                       std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                       Pad pad_h, Pad pad_w, bool parallel) {
    const std::int64_t ph = (kh - 1) / 2;
    const std::int64_t pw = (kw - 1) / 2;
    // Gather form: input element (ci, iy, ix) receives from outputs
    // (co, iy - ky + ph, ix - kx + pw), with the pad mode controlling wrap.
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
        for (std::int64_t iy = 0; iy < h; ++iy) {
            T* drow = din + (ci * h + iy) * w;
            for (std::int64_t ix = 0; ix < w; ++ix) {
                T acc = T(0);
                for (std::int64_t co = 0; co < c_out; ++co) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t oy = resolve(iy - ky + ph, h, pad_h);
                        if (oy < 0) continue;
                        const T* grow = g + (co * h + oy) * w;
                        const T* krow = kern + ((co * c_in + ci) * kh + ky) * kw;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ox = resolve(ix - kx + pw, w, pad_w);
                            if (ox < 0) continue;
                            acc += krow[kx] * grow[ox];
                        }
                    }
                }
                drow[ix] += acc;
            }
        }
    }
}

template <typename T>
void conv2d_kernel_grad(const T* g, const T* in, T* dkern, std::int64_t c_in, std::int64_t c_out,
                        std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                        Pad pad_h, Pad pad_w, bool parallel) {
    const std::int64_t ph = (kh - 1) / 2;
    const std::int64_t pw = (kw - 1) / 2;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t co = 0; co < c_out; ++co) {
        for (std::int64_t ci = 0; ci < c_in; ++ci) {
            for (std::int64_t ky = 0; ky < kh; ++ky) {
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                    T acc = T(0);
                    for (std::int64_t y = 0; y < h; ++y) {
                        const std::int64_t iy = resolve(y + ky - ph, h, pad_h);
                        if (iy < 0) continue;
                        const T* grow = g + (co * h + y) * w;
                        const T* irow = in + (ci * h + iy) * w;
                        for (std::int64_t x = 0; x < w; ++x) {
                            const std::int64_t ix = resolve(x + kx - pw, w, pad_w);
                            if (ix < 0) continue;
                            acc += grow[x] * irow[ix];
                        }
                    }
                    dkern[((co * c_in + ci) * kh + ky) * kw + kx] += acc;
                }
            }
        }
    }
}

BilinearCell bilinear_cell(double u, double v, std::int64_t w, std::int64_t h) {
    BilinearCell c{};
    c.clamped_x = !(u > 0.0 && u < static_cast<double>(w - 1));
    c.clamped_y = !(v > 0.0 && v < static_cast<double>(h - 1));
    u = std::clamp(u, 0.0, static_cast<double>(w - 1));
    v = std::clamp(v, 0.0, static_cast<double>(h - 1));
    c.x0 = std::min(static_cast<std::int64_t>(u), w - 2 >= 0 ? w - 2 : 0);
    c.y0 = std::min(static_cast<std::int64_t>(v), h - 2 >= 0 ? h - 2 : 0);
    c.ax = u - static_cast<double>(c.x0);
    c.ay = v - static_cast<double>(c.y0);
    return c;
}

template <typename T>
void bilinear_gather(const T* feat, const T* pts, T* out, std::int64_t c, std::int64_t h,
                     std::int64_t w, std::int64_t n, bool parallel) {
    const std::int64_t plane = h * w;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto cell = bilinear_cell(static_cast<double>(pts[i * 2 + 0]),
                                        static_cast<double>(pts[i * 2 + 1]), w, h);
        const T ax = static_cast<T>(cell.ax);
        const T ay = static_cast<T>(cell.ay);
        const T w00 = (T(1) - ax) * (T(1) - ay);
        const T w10 = ax * (T(1) - ay);
        const T w01 = (T(1) - ax) * ay;
        const T w11 = ax * ay;
        const std::int64_t base = cell.y0 * w + cell.x0;
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* f = feat + ch * plane + base;
            out[i * c + ch] = w00 * f[0] + w10 * f[1] + w01 * f[w] + w11 * f[w + 1];
        }
    }
}

template <typename T>
void bilinear_gather_ref(const T* feat, const T* pts, T* out, std::int64_t c, std::int64_t h,
                         std::int64_t w, std::int64_t n) {
    bilinear_gather(feat, pts, out, c, h, w, n, false);
}

template <typename T>
void bilinear_scatter(const T* g, const T* pts, T* dfeat, std::int64_t c, std::int64_t h,
                      std::int64_t w, std::int64_t n, bool parallel) {
    const std::int64_t plane = h * w;
    // Channels own disjoint gradient planes, so the scatter is race-free and
    // the per-pixel accumulation order (point order) matches the serial run.
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T* df = dfeat + ch * plane;
        for (std::int64_t i = 0; i < n; ++i) {
            const auto cell = bilinear_cell(static_cast<double>(pts[i * 2 + 0]),
                                            static_cast<double>(pts[i * 2 + 1]), w, h);
            const T ax = static_cast<T>(cell.ax);
            const T ay = static_cast<T>(cell.ay);
            const T gv = g[i * c + ch];
            const std::int64_t base = cell.y0 * w + cell.x0;
            df[base] += (T(1) - ax) * (T(1) - ay) * gv;
            df[base + 1] += ax * (T(1) - ay) * gv;
            df[base + w] += (T(1) - ax) * ay * gv;
            df[base + w + 1] += ax * ay * gv;
        }
    }
}

#define POLARBEV_INSTANTIATE(T)                                                                        \
    template void matmul<T>(const T*, const T*, T*, std::int64_t, std::int64_t, std::int64_t, bool,    \
                            bool, bool, bool);                                                         \
    template void matmul_ref<T>(const T*, const T*, T*, std::int64_t, std::int64_t, std::int64_t,      \
                                bool, bool, bool);                                                     \
    template void conv2d_forward<T>(const T*, const T*, T*, std::int64_t, std::int64_t, std::int64_t,  \
                                    std::int64_t, std::int64_t, std::int64_t, Pad, Pad, bool);         \
    template void conv2d_forward_ref<T>(const T*, const T*, T*, std::int64_t, std::int64_t,            \
                                        std::int64_t, std::int64_t, std::int64_t, std::int64_t, Pad,   \
                                        Pad);                                                          \
    template void conv2d_input_grad<T>(const T*, const T*, T*, std::int64_t, std::int64_t,             \
                                       std::int64_t, std::int64_t, std::int64_t, std::int64_t, Pad,    \
                                       Pad, bool);                                                     \
    template void conv2d_kernel_grad<T>(const T*, const T*, T*, std::int64_t, std::int64_t,            \
                                        std::int64_t, std::int64_t, std::int64_t, std::int64_t, Pad,   \
                                        Pad, bool);                                                    \
    template void bilinear_gather<T>(const T*, const T*, T*, std::int64_t, std::int64_t, std::int64_t, \
                                     std::int64_t, bool);                                              \
    template void bilinear_gather_ref<T>(const T*, const T*, T*, std::int64_t, std::int64_t,           \
                                         std::int64_t, std::int64_t);                                  \
    template void bilinear_scatter<T>(const T*, const T*, T*, std::int64_t, std::int64_t,              \
                                      std::int64_t, std::int64_t, bool);

POLARBEV_INSTANTIATE(float)
POLARBEV_INSTANTIATE(double)
#undef POLARBEV_INSTANTIATE

} // namespace polarbev::kernels
