#pragma once

#include <cstdint>

namespace polarbev::kernels {

enum class Pad { zero, circular };

// Low-level dense kernels behind the tensor ops. Each kernel exists in two
// forms: the `_ref` naive serial implementation used as a test oracle, and
// the tuned version whose loops go parallel when `parallel` is true. The
// tuned kernels assign every output element to exactly one thread and keep
// the per-element accumulation order fixed, so serial and parallel runs of
// the same kernel are bitwise identical.

// out[m x n] (+)= op_a(a) * op_b(b), where op transposes the stored matrix.
// a is stored [m x k] (or [k x m] if trans_a), b is [k x n] (or [n x k]).
template <typename T>
void matmul(const T* a, const T* b, T* out, std::int64_t m, std::int64_t n, std::int64_t k,
            bool trans_a, bool trans_b, bool accumulate, bool parallel);

template <typename T>
void matmul_ref(const T* a, const T* b, T* out, std::int64_t m, std::int64_t n, std::int64_t k,
                bool trans_a, bool trans_b, bool accumulate);

// Cross-correlation, stride 1, odd kernel, output spatial shape == input.
// Padding is (kh-1)/2, (kw-1)/2 with the mode applied per axis.
template <typename T>
void conv2d_forward(const T* in, const T* kern, T* out, std::int64_t c_in, std::int64_t c_out,
                    std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                    Pad pad_h, Pad pad_w, bool parallel);

template <typename T>
void conv2d_forward_ref(const T* in, const T* kern, T* out, std::int64_t c_in, std::int64_t c_out,
                        std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                        Pad pad_h, Pad pad_w);

// din += correlate(g, kern) gathered per input element.
template <typename T>
void conv2d_input_grad(const T* g, const T* kern, T* din, std::int64_t c_in, std::int64_t c_out,
                       std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                       Pad pad_h, Pad pad_w, bool parallel);

// dkern += sum over spatial positions of g x in, gathered per kernel element.
template <typename T>
void conv2d_kernel_grad(const T* g, const T* in, T* dkern, std::int64_t c_in, std::int64_t c_out,
                        std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                        Pad pad_h, Pad pad_w, bool parallel);

// out[n x c] = bilinear sample of feat[c x h x w] at pts[n x 2] (u, v) pixel
// coordinates; coordinates clamp to the valid interpolation square.
template <typename T>
void bilinear_gather(const T* feat, const T* pts, T* out, std::int64_t c, std::int64_t h,
                     std::int64_t w, std::int64_t n, bool parallel);

template <typename T>
void bilinear_gather_ref(const T* feat, const T* pts, T* out, std::int64_t c, std::int64_t h,
                         std::int64_t w, std::int64_t n);

// dfeat += scatter of g[n x c] through the same bilinear weights. Parallel
// over channels; the per-pixel accumulation order equals the serial order.
template <typename T>
void bilinear_scatter(const T* g, const T* pts, T* dfeat, std::int64_t c, std::int64_t h,
                      std::int64_t w, std::int64_t n, bool parallel);

// Interpolation weights for one clamped sample position.
struct BilinearCell {
    std::int64_t x0, y0; // top-left corner, clamped so x0+1 < w, y0+1 < h
    double ax, ay;       // fractional offsets in [0, 1]
    bool clamped_x, clamped_y;
};
BilinearCell bilinear_cell(double u, double v, std::int64_t w, std::int64_t h);

} // namespace polarbev::kernels
