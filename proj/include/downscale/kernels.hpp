#pragma once

#include <cstddef>

namespace downscale::kernels {

// Dense NN compute kernels on CHW planes, double precision. The OpenMP
// variants parallelize over disjoint output slices and keep a fixed
// accumulation order per output element, so results are bit-identical to the
// serial references for any thread count. kernels::ref holds the plain serial
// implementations used by the comparison tests and the benchmark.

// 2D convolution, odd kernel k, zero padding (k-1)/2, stride 1 or 2.
// in:   [ci][h][w]          wgt: [co][ci][k][k]      bias: [co] (may be null)
// out:  [co][oh][ow] with oh = (h + 2p - k)/stride + 1
int conv_out_dim(int n, int k, int stride);

void conv2d_forward(const double* in, int ci, int h, int w,
                    const double* wgt, const double* bias, int co, int k, int stride,
                    double* out);

// gin += is NOT used: gin is overwritten.
void conv2d_backward_data(const double* gout, int co, int oh, int ow,
                          const double* wgt, int ci, int k, int stride,
                          int h, int w, double* gin);

// gwgt/gbias are accumulated into (+=), so a caller can sum over a batch.
void conv2d_backward_weights(const double* gout, int co, int oh, int ow,
                             const double* in, int ci, int h, int w,
                             int k, int stride, double* gwgt, double* gbias);

// GroupNorm without affine part. Saves per-group mean and reciprocal std for
// the backward pass. c must be divisible by groups.
void group_norm_forward(const double* in, int c, int h, int w, int groups, double eps,
                        double* out, double* mean, double* rstd);

void group_norm_backward(const double* gout, const double* in, int c, int h, int w,
                         int groups, const double* mean, const double* rstd, double* gin);

// Per-channel y = gain[c] * x + bias[c].
void scale_shift_forward(const double* in, int c, int h, int w,
                         const double* gain, const double* bias, double* out);

// ggain/gbias accumulated (+=); gin overwritten.
void scale_shift_backward(const double* gout, const double* in, int c, int h, int w,
                          const double* gain, double* gin, double* ggain, double* gbias);

// SiLU x * sigmoid(x), elementwise over n values.
void silu_forward(const double* in, size_t n, double* out);
void silu_backward(const double* gout, const double* in, size_t n, double* gin);

// Bilinear x2 upsampling with half-pixel centers and edge clamping.
// in: [c][h][w] -> out: [c][2h][2w]. Backward is the exact adjoint.
void upsample2x_forward(const double* in, int c, int h, int w, double* out);
void upsample2x_backward(const double* gout, int c, int h, int w, double* gin);

namespace ref {

void conv2d_forward(const double* in, int ci, int h, int w,
                    const double* wgt, const double* bias, int co, int k, int stride,
                    double* out);
void conv2d_backward_data(const double* gout, int co, int oh, int ow,
                          const double* wgt, int ci, int k, int stride,
                          int h, int w, double* gin);
void conv2d_backward_weights(const double* gout, int co, int oh, int ow,
                             const double* in, int ci, int h, int w,
                             int k, int stride, double* gwgt, double* gbias);
void group_norm_forward(const double* in, int c, int h, int w, int groups, double eps,
                        double* out, double* mean, double* rstd);
void upsample2x_forward(const double* in, int c, int h, int w, double* out);

}  // namespace ref

}  // namespace downscale::kernels
