#include "polarbev/ops.hpp"

#include <cmath>
#include <cstring>

namespace polarbev::tc {

namespace {

template <typename T>
bool want_grad(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape.recording()) return false;
    for (const auto* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

} // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (want_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record([a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (want_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record([a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                const T* pb2 = b.data();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb2[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                const T* pa2 = a.data();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa2[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& x, T scale, T shift) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = scale * px[i] + shift;
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out, scale]() mutable {
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const T v = px[i];
        po[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out]() mutable {
            auto g = out.grad();
            auto gx = x.grad();
            const T* y = out.data();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        // subgradient 0 at exactly 0
        tape.record([x, out]() mutable {
            auto g = out.grad();
            auto gx = x.grad();
            const T* px2 = x.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (px2[i] > T(0)) gx[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_reduce(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out(Shape{1});
    const T* px = x.data();
    T acc = T(0);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) acc += px[i];
    out.at(0) = acc;
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out]() mutable {
            const T g = out.grad()[0];
            auto gx = x.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out(Shape{m, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, n, k, false, false, false, true);
    if (want_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record([a, b, out, m, n, k]() mutable {
            const T* g = out.grad_data();
            if (a.requires_grad()) {
                // dA += g . B^T
                kernels::matmul(g, b.data(), a.grad_data(), m, k, n, false, true, true, true);
            }
            if (b.requires_grad()) {
                // dB += A^T . g
                kernels::matmul(a.data(), g, b.grad_data(), k, n, m, true, false, true, true);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_row_broadcast(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& row) {
    if (x.rank() != 2 || row.rank() != 1 || x.dim(1) != row.dim(0)) {
        throw DimensionError("add_row_broadcast: shapes " + shape_str(x.shape()) + " and " +
                             shape_str(row.shape()) + " incompatible");
    }
    const std::int64_t n = x.dim(0), m = x.dim(1);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pr = row.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < m; ++j) po[i * m + j] = px[i * m + j] + pr[j];
    }
    if (want_grad(tape, {&x, &row})) {
        out.set_requires_grad(true);
        tape.record([x, row, out, n, m]() mutable {
            const T* g = out.grad_data();
            if (x.requires_grad()) {
                T* gx = x.grad_data();
                for (std::int64_t i = 0; i < n * m; ++i) gx[i] += g[i];
            }
            if (row.requires_grad()) {
                T* gr = row.grad_data();
                for (std::int64_t i = 0; i < n; ++i) {
                    for (std::int64_t j = 0; j < m; ++j) gr[j] += g[i * m + j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> broadcast_add_rows(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& table) {
    if (x.rank() != 3 || table.rank() != 2 || x.dim(0) != table.dim(0) || x.dim(2) != table.dim(1)) {
        throw DimensionError("broadcast_add_rows: shapes " + shape_str(x.shape()) + " and " +
                             shape_str(table.shape()) + " incompatible");
    }
    const std::int64_t rows = x.dim(0), cols = x.dim(1), c = x.dim(2);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pt = table.data();
    T* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* trow = pt + r * c;
        for (std::int64_t k = 0; k < cols; ++k) {
            const std::int64_t base = (r * cols + k) * c;
            for (std::int64_t ch = 0; ch < c; ++ch) po[base + ch] = px[base + ch] + trow[ch];
        }
    }
    if (want_grad(tape, {&x, &table})) {
        out.set_requires_grad(true);
        tape.record([x, table, out, rows, cols, c]() mutable {
            const T* g = out.grad_data();
            if (x.requires_grad()) {
                T* gx = x.grad_data();
                for (std::int64_t i = 0; i < rows * cols * c; ++i) gx[i] += g[i];
            }
            if (table.requires_grad()) {
                T* gt = table.grad_data();
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t k = 0; k < cols; ++k) {
                        const std::int64_t base = (r * cols + k) * c;
                        for (std::int64_t ch = 0; ch < c; ++ch) gt[r * c + ch] += g[base + ch];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> broadcast_add_cols(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& table) {
    if (x.rank() != 3 || table.rank() != 2 || x.dim(1) != table.dim(0) || x.dim(2) != table.dim(1)) {
        throw DimensionError("broadcast_add_cols: shapes " + shape_str(x.shape()) + " and " +
                             shape_str(table.shape()) + " incompatible");
    }
    const std::int64_t rows = x.dim(0), cols = x.dim(1), c = x.dim(2);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pt = table.data();
    T* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t k = 0; k < cols; ++k) {
            const std::int64_t base = (r * cols + k) * c;
            const T* trow = pt + k * c;
            for (std::int64_t ch = 0; ch < c; ++ch) po[base + ch] = px[base + ch] + trow[ch];
        }
    }
    if (want_grad(tape, {&x, &table})) {
        out.set_requires_grad(true);
        tape.record([x, table, out, rows, cols, c]() mutable {
            const T* g = out.grad_data();
            if (x.requires_grad()) {
                T* gx = x.grad_data();
                for (std::int64_t i = 0; i < rows * cols * c; ++i) gx[i] += g[i];
            }
            if (table.requires_grad()) {
                T* gt = table.grad_data();
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t k = 0; k < cols; ++k) {
                        const std::int64_t base = (r * cols + k) * c;
                        for (std::int64_t ch = 0; ch < c; ++ch) gt[k * c + ch] += g[base + ch];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& b) {
    if (x.rank() != 3 || b.rank() != 1 || x.dim(0) != b.dim(0)) {
        throw DimensionError("add_channel_bias: shapes " + shape_str(x.shape()) + " and " +
                             shape_str(b.shape()) + " incompatible");
    }
    const std::int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const T bv = pb[ch];
        for (std::int64_t i = 0; i < plane; ++i) po[ch * plane + i] = px[ch * plane + i] + bv;
    }
    if (want_grad(tape, {&x, &b})) {
        out.set_requires_grad(true);
        tape.record([x, b, out, c, plane]() mutable {
            const T* g = out.grad_data();
            if (x.requires_grad()) {
                T* gx = x.grad_data();
                for (std::int64_t i = 0; i < c * plane; ++i) gx[i] += g[i];
            }
            if (b.requires_grad()) {
                T* gb = b.grad_data();
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    T acc = T(0);
                    for (std::int64_t i = 0; i < plane; ++i) acc += g[ch * plane + i];
                    gb[ch] += acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, Pad pad_h, Pad pad_w) {
    if (input.rank() != 3 || kernel.rank() != 4) {
        throw DimensionError("conv2d: expected input [c x h x w] and kernel [co x ci x kh x kw], got " +
                             shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    }
    if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0) {
        throw ConfigError("conv2d: kernel extents must be odd, got " + shape_str(kernel.shape()));
    }
    if (input.dim(0) != kernel.dim(1)) {
        throw DimensionError("conv2d: input channels " + shape_str(input.shape()) +
                             " do not match kernel " + shape_str(kernel.shape()));
    }
    const std::int64_t ci = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::int64_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    Tensor<T> out(Shape{co, h, w});
    kernels::conv2d_forward(input.data(), kernel.data(), out.data(), ci, co, h, w, kh, kw, pad_h,
                            pad_w, true);
    if (want_grad(tape, {&input, &kernel})) {
        out.set_requires_grad(true);
        tape.record([input, kernel, out, ci, co, h, w, kh, kw, pad_h, pad_w]() mutable {
            const T* g = out.grad_data();
            if (input.requires_grad()) {
                kernels::conv2d_input_grad(g, kernel.data(), input.grad_data(), ci, co, h, w, kh, kw,
                                           pad_h, pad_w, true);
            }
            if (kernel.requires_grad()) {
                kernels::conv2d_kernel_grad(g, input.data(), kernel.grad_data(), ci, co, h, w, kh, kw,
                                            pad_h, pad_w, true);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> bilinear_sample(Tape<T>& tape, const Tensor<T>& feature, const Tensor<T>& points) {
    if (feature.rank() != 3 || points.rank() != 2 || points.dim(1) != 2) {
        throw DimensionError("bilinear_sample: expected feature [c x h x w] and points [n x 2], got " +
                             shape_str(feature.shape()) + " and " + shape_str(points.shape()));
    }
    const std::int64_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
    const std::int64_t n = points.dim(0);
    Tensor<T> out(Shape{n, c});
    kernels::bilinear_gather(feature.data(), points.data(), out.data(), c, h, w, n, true);
    if (want_grad(tape, {&feature})) {
        out.set_requires_grad(true);
        tape.record([feature, points, out, c, h, w, n]() mutable {
            kernels::bilinear_scatter(out.grad_data(), points.data(), feature.grad_data(), c, h, w, n,
                                      true);
        });
    }
    return out;
}

template <typename T>
Tensor<T> normalize_channels(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                             const Tensor<T>& bias, NormScheme scheme, NormState<T>* state,
                             bool training, T eps, T momentum) {
    if (x.rank() != 3 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.dim(0) ||
        bias.dim(0) != x.dim(0)) {
        throw DimensionError("normalize_channels: shapes " + shape_str(x.shape()) + ", " +
                             shape_str(gain.shape()) + ", " + shape_str(bias.shape()) + " incompatible");
    }
    const std::int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    if (scheme == NormScheme::batch && state == nullptr) {
        throw ConfigError("normalize_channels: batch scheme requires running state");
    }

    std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
    const T* px = x.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T m = T(0);
        for (std::int64_t i = 0; i < plane; ++i) m += px[ch * plane + i];
        m /= static_cast<T>(plane);
        T v = T(0);
        for (std::int64_t i = 0; i < plane; ++i) {
            const T d = px[ch * plane + i] - m;
            v += d * d;
        }
        v /= static_cast<T>(plane);
        mean[ch] = m;
        var[ch] = v;
    }

    bool use_running = false;
    if (scheme == NormScheme::batch) {
        if (training) {
            if (!state->initialized) {
                state->running_mean.assign(mean.begin(), mean.end());
                state->running_var.assign(var.begin(), var.end());
                state->initialized = true;
            } else {
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    state->running_mean[ch] = (T(1) - momentum) * state->running_mean[ch] + momentum * mean[ch];
                    state->running_var[ch] = (T(1) - momentum) * state->running_var[ch] + momentum * var[ch];
                }
            }
        } else if (state->initialized) {
            mean.assign(state->running_mean.begin(), state->running_mean.end());
            var.assign(state->running_var.begin(), state->running_var.end());
            use_running = true;
        }
    }

    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape()); // kept for backward
    T* po = out.data();
    T* ph = xhat.data();
    const T* pg = gain.data();
    const T* pb = bias.data();
    std::vector<T> inv_sd(static_cast<std::size_t>(c));
    for (std::int64_t ch = 0; ch < c; ++ch) {
        inv_sd[ch] = T(1) / std::sqrt(var[ch] + eps);
        const T m = mean[ch];
        const T is = inv_sd[ch];
        const T gn = pg[ch];
        const T bs = pb[ch];
        for (std::int64_t i = 0; i < plane; ++i) {
            const T hv = (px[ch * plane + i] - m) * is;
            ph[ch * plane + i] = hv;
            po[ch * plane + i] = gn * hv + bs;
        }
    }

    if (want_grad(tape, {&x, &gain, &bias})) {
        out.set_requires_grad(true);
        tape.record([x, gain, bias, out, xhat, inv_sd, c, plane, use_running]() mutable {
            const T* g = out.grad_data();
            const T* hv = xhat.data();
            const T* pg2 = gain.data();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const T* gc = g + ch * plane;
                const T* hc = hv + ch * plane;
                T sum_g = T(0), sum_gh = T(0);
                for (std::int64_t i = 0; i < plane; ++i) {
                    sum_g += gc[i];
                    sum_gh += gc[i] * hc[i];
                }
                if (gain.requires_grad()) gain.grad_data()[ch] += sum_gh;
                if (bias.requires_grad()) bias.grad_data()[ch] += sum_g;
                if (x.requires_grad()) {
                    T* gx = x.grad_data() + ch * plane;
                    const T scale = pg2[ch] * inv_sd[ch];
                    if (use_running) {
                        for (std::int64_t i = 0; i < plane; ++i) gx[i] += scale * gc[i];
                    } else {
                        const T mg = sum_g / static_cast<T>(plane);
                        const T mgh = sum_gh / static_cast<T>(plane);
                        for (std::int64_t i = 0; i < plane; ++i) {
                            gx[i] += scale * (gc[i] - mg - hc[i] * mgh);
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2(Tape<T>& tape, const Tensor<T>& x) {
    if (x.rank() != 3) {
        throw DimensionError("avg_pool2: expected [c x h x w], got " + shape_str(x.shape()));
    }
    if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
        throw ConfigError("avg_pool2: extents must be even, got " + shape_str(x.shape()));
    }
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t oh = h / 2, ow = w / 2;
    Tensor<T> out(Shape{c, oh, ow});
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < oh; ++y) {
            const T* r0 = px + (ch * h + 2 * y) * w;
            const T* r1 = r0 + w;
            T* orow = po + (ch * oh + y) * ow;
            for (std::int64_t xo = 0; xo < ow; ++xo) {
                orow[xo] = (r0[2 * xo] + r0[2 * xo + 1] + r1[2 * xo] + r1[2 * xo + 1]) * T(0.25);
            }
        }
    }
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out, c, h, w, oh, ow]() mutable {
            const T* g = out.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                        gx[(ch * h + y) * w + xx] += g[(ch * oh + y / 2) * ow + xx / 2] * T(0.25);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample2_nearest(Tape<T>& tape, const Tensor<T>& x) {
    if (x.rank() != 3) {
        throw DimensionError("upsample2_nearest: expected [c x h x w], got " + shape_str(x.shape()));
    }
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out(Shape{c, 2 * h, 2 * w});
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < 2 * h; ++y) {
            const T* irow = px + (ch * h + y / 2) * w;
            T* orow = po + (ch * 2 * h + y) * 2 * w;
            for (std::int64_t xx = 0; xx < 2 * w; ++xx) orow[xx] = irow[xx / 2];
        }
    }
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out, c, h, w]() mutable {
            const T* g = out.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                        const std::int64_t o0 = (ch * 2 * h + 2 * y) * 2 * w + 2 * xx;
                        const std::int64_t o1 = o0 + 2 * w;
                        gx[(ch * h + y) * w + xx] += g[o0] + g[o0 + 1] + g[o1] + g[o1 + 1];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw DimensionError("concat_channels: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " incompatible");
    }
    const std::int64_t ca = a.dim(0), cb = b.dim(0), plane = a.dim(1) * a.dim(2);
    Tensor<T> out(Shape{ca + cb, a.dim(1), a.dim(2)});
    std::memcpy(out.data(), a.data(), sizeof(T) * static_cast<std::size_t>(ca * plane));
    std::memcpy(out.data() + ca * plane, b.data(), sizeof(T) * static_cast<std::size_t>(cb * plane));
    if (want_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record([a, b, out, ca, cb, plane]() mutable {
            const T* g = out.grad_data();
            if (a.requires_grad()) {
                T* ga = a.grad_data();
                for (std::int64_t i = 0; i < ca * plane; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                T* gb = b.grad_data();
                for (std::int64_t i = 0; i < cb * plane; ++i) gb[i] += g[ca * plane + i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> to_chw(Tape<T>& tape, const Tensor<T>& x) {
    if (x.rank() != 3) {
        throw DimensionError("to_chw: expected [h x w x c], got " + shape_str(x.shape()));
    }
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor<T> out(Shape{c, h, w});
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
            const T* cell = px + (y * w + xx) * c;
            for (std::int64_t ch = 0; ch < c; ++ch) po[(ch * h + y) * w + xx] = cell[ch];
        }
    }
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out, h, w, c]() mutable {
            const T* g = out.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t xx = 0; xx < w; ++xx) {
                    T* cell = gx + (y * w + xx) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) cell[ch] += g[(ch * h + y) * w + xx];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> to_hwc(Tape<T>& tape, const Tensor<T>& x) {
    if (x.rank() != 3) {
        throw DimensionError("to_hwc: expected [c x h x w], got " + shape_str(x.shape()));
    }
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out(Shape{h, w, c});
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
            T* cell = po + (y * w + xx) * c;
            for (std::int64_t ch = 0; ch < c; ++ch) cell[ch] = px[(ch * h + y) * w + xx];
        }
    }
    if (want_grad(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record([x, out, h, w, c]() mutable {
            const T* g = out.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t xx = 0; xx < w; ++xx) {
                    const T* cell = g + (y * w + xx) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) gx[(ch * h + y) * w + xx] += cell[ch];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> cross_entropy_2class(Tape<T>& tape, const Tensor<T>& logits,
                               const std::vector<std::uint8_t>& labels) {
    if (logits.rank() != 3 || logits.dim(0) != 2) {
        throw DimensionError("cross_entropy_2class: expected [2 x h x w], got " + shape_str(logits.shape()));
    }
    const std::int64_t plane = logits.dim(1) * logits.dim(2);
    if (static_cast<std::int64_t>(labels.size()) != plane) {
        throw DimensionError("cross_entropy_2class: label count " + std::to_string(labels.size()) +
                             " does not match plane " + shape_str(logits.shape()));
    }
    const T* pl = logits.data();
    Tensor<T> prob(Shape{plane}); // p(class 1), kept for backward
    T* pp = prob.data();
    T acc = T(0);
    for (std::int64_t i = 0; i < plane; ++i) {
        const T l0 = pl[i];
        const T l1 = pl[plane + i];
        const T m = l0 > l1 ? l0 : l1;
        const T lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
        pp[i] = std::exp(l1 - lse);
        acc += lse - (labels[static_cast<std::size_t>(i)] ? l1 : l0);
    }
    Tensor<T> out(Shape{1});
    out.at(0) = acc / static_cast<T>(plane);
    if (want_grad(tape, {&logits})) {
        out.set_requires_grad(true);
        // keep the label buffer alive inside the closure
        auto labels_copy = std::make_shared<std::vector<std::uint8_t>>(labels);
        tape.record([logits, out, prob, labels_copy, plane]() mutable {
            const T g = out.grad()[0] / static_cast<T>(plane);
            T* gl = logits.grad_data();
            const T* pp2 = prob.data();
            for (std::int64_t i = 0; i < plane; ++i) {
                const T p1 = pp2[i];
                const bool fg = (*labels_copy)[static_cast<std::size_t>(i)] != 0;
                gl[i] += g * ((T(1) - p1) - (fg ? T(0) : T(1)));
                gl[plane + i] += g * (p1 - (fg ? T(1) : T(0)));
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mse(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "mse");
    const std::int64_t n = pred.numel();
    const T* pp = pred.data();
    const T* pt = target.data();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const T d = pp[i] - pt[i];
        acc += d * d;
    }
    Tensor<T> out(Shape{1});
    out.at(0) = acc / static_cast<T>(n);
    if (want_grad(tape, {&pred})) {
        out.set_requires_grad(true);
        tape.record([pred, target, out, n]() mutable {
            const T g = out.grad()[0] * T(2) / static_cast<T>(n);
            T* gp = pred.grad_data();
            const T* pp2 = pred.data();
            const T* pt2 = target.data();
            for (std::int64_t i = 0; i < n; ++i) gp[i] += g * (pp2[i] - pt2[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> masked_l1(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                    const std::vector<std::uint8_t>& mask) {
    check_same_shape(pred, target, "masked_l1");
    if (pred.rank() != 3) {
        throw DimensionError("masked_l1: expected [c x h x w], got " + shape_str(pred.shape()));
    }
    const std::int64_t c = pred.dim(0), plane = pred.dim(1) * pred.dim(2);
    if (static_cast<std::int64_t>(mask.size()) != plane) {
        throw DimensionError("masked_l1: mask size " + std::to_string(mask.size()) +
                             " does not match plane of " + shape_str(pred.shape()));
    }
    std::int64_t count = 0;
    for (auto m : mask) count += m ? 1 : 0;
    const T denom = static_cast<T>(count > 0 ? count : 1);
    const T* pp = pred.data();
    const T* pt = target.data();
    T acc = T(0);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t i = 0; i < plane; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            acc += std::abs(pp[ch * plane + i] - pt[ch * plane + i]);
        }
    }
    Tensor<T> out(Shape{1});
    out.at(0) = acc / denom;
    if (want_grad(tape, {&pred})) {
        out.set_requires_grad(true);
        auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
        tape.record([pred, target, out, mask_copy, c, plane, denom]() mutable {
            const T g = out.grad()[0] / denom;
            T* gp = pred.grad_data();
            const T* pp2 = pred.data();
            const T* pt2 = target.data();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                for (std::int64_t i = 0; i < plane; ++i) {
                    if (!(*mask_copy)[static_cast<std::size_t>(i)]) continue;
                    const T d = pp2[ch * plane + i] - pt2[ch * plane + i];
                    if (d > T(0)) gp[ch * plane + i] += g;
                    else if (d < T(0)) gp[ch * plane + i] -= g;
                }
            }
        });
    }
    return out;
}

#define POLARBEV_INSTANTIATE_OPS(T)                                                                     \
    template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> mul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> affine<T>(Tape<T>&, const Tensor<T>&, T, T);                                     \
    template Tensor<T> sigmoid<T>(Tape<T>&, const Tensor<T>&);                                          \
    template Tensor<T> relu<T>(Tape<T>&, const Tensor<T>&);                                             \
    template Tensor<T> sum_reduce<T>(Tape<T>&, const Tensor<T>&);                                       \
    template Tensor<T> matmul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> add_row_broadcast<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);              \
    template Tensor<T> broadcast_add_rows<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> broadcast_add_cols<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> add_channel_bias<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, Pad, Pad);               \
    template Tensor<T> bilinear_sample<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> normalize_channels<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                             const Tensor<T>&, NormScheme, NormState<T>*, bool, T, T);  \
    template Tensor<T> avg_pool2<T>(Tape<T>&, const Tensor<T>&);                                        \
    template Tensor<T> upsample2_nearest<T>(Tape<T>&, const Tensor<T>&);                                \
    template Tensor<T> concat_channels<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> to_chw<T>(Tape<T>&, const Tensor<T>&);                                           \
    template Tensor<T> to_hwc<T>(Tape<T>&, const Tensor<T>&);                                           \
    template Tensor<T> cross_entropy_2class<T>(Tape<T>&, const Tensor<T>&,                              \
                                               const std::vector<std::uint8_t>&);                       \
    template Tensor<T> mse<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> masked_l1<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                       \
                                    const std::vector<std::uint8_t>&);

POLARBEV_INSTANTIATE_OPS(float)
POLARBEV_INSTANTIATE_OPS(double)
#undef POLARBEV_INSTANTIATE_OPS

} // namespace polarbev::tc
