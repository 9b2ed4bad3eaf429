#include "downscale/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace downscale::kernels {

int conv_out_dim(int n, int k, int stride) {
    int p = (k - 1) / 2;
    return (n + 2 * p - k) / stride + 1;
}

namespace {

inline double conv_accum_at(const double* in, int ci, int h, int w,
                            const double* wgt, int k, int p, int stride,
                            int oc, int oy, int ox) {
    double acc = 0.0;
    const double* wc = wgt + static_cast<size_t>(oc) * ci * k * k;
    for (int ic = 0; ic < ci; ++ic) {
        const double* plane = in + static_cast<size_t>(ic) * h * w;
        const double* wk = wc + static_cast<size_t>(ic) * k * k;
        for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride + ky - p;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
                int ix = ox * stride + kx - p;
                if (ix < 0 || ix >= w) continue;
                acc += plane[static_cast<size_t>(iy) * w + ix] * wk[ky * k + kx];
            }
        }
    }
    return acc;
}

}  // namespace

void conv2d_forward(const double* in, int ci, int h, int w,
                    const double* wgt, const double* bias, int co, int k, int stride,
                    double* out) {
    const int p = (k - 1) / 2;
    const int oh = conv_out_dim(h, k, stride), ow = conv_out_dim(w, k, stride);
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            double* orow = out + (static_cast<size_t>(oc) * oh + oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias ? bias[oc] : 0.0;
                acc += conv_accum_at(in, ci, h, w, wgt, k, p, stride, oc, oy, ox);
                orow[ox] = acc;
            }
        }
    }
}

void conv2d_backward_data(const double* gout, int co, int oh, int ow,
                          const double* wgt, int ci, int k, int stride,
                          int h, int w, double* gin) {
    const int p = (k - 1) / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ic = 0; ic < ci; ++ic) {
        for (int iy = 0; iy < h; ++iy) {
            double* grow = gin + (static_cast<size_t>(ic) * h + iy) * w;
            for (int ix = 0; ix < w; ++ix) {
                double acc = 0.0;
                for (int oc = 0; oc < co; ++oc) {
                    const double* gplane = gout + static_cast<size_t>(oc) * oh * ow;
                    const double* wk = wgt + (static_cast<size_t>(oc) * ci + ic) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        int num_y = iy - ky + p;
                        if (num_y % stride != 0) continue;
                        int oy = num_y / stride;
                        if (oy < 0 || oy >= oh) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int num_x = ix - kx + p;
                            if (num_x % stride != 0) continue;
                            int ox = num_x / stride;
                            if (ox < 0 || ox >= ow) continue;
                            acc += gplane[static_cast<size_t>(oy) * ow + ox] * wk[ky * k + kx];
                        }
                    }
                }
                grow[ix] = acc;
            }
        }
    }
}

void conv2d_backward_weights(const double* gout, int co, int oh, int ow,
                             const double* in, int ci, int h, int w,
                             int k, int stride, double* gwgt, double* gbias) {
    const int p = (k - 1) / 2;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        const double* gplane = gout + static_cast<size_t>(oc) * oh * ow;
        if (gbias) {
            double b = 0.0;
            for (int i = 0; i < oh * ow; ++i) b += gplane[i];
            gbias[oc] += b;
        }
        for (int ic = 0; ic < ci; ++ic) {
            const double* plane = in + static_cast<size_t>(ic) * h * w;
            double* gw = gwgt + (static_cast<size_t>(oc) * ci + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        int iy = oy * stride + ky - p;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            int ix = ox * stride + kx - p;
                            if (ix < 0 || ix >= w) continue;
                            acc += gplane[static_cast<size_t>(oy) * ow + ox] *
                                   plane[static_cast<size_t>(iy) * w + ix];
                        }
                    }
                    gw[ky * k + kx] += acc;
                }
            }
        }
    }
}

void group_norm_forward(const double* in, int c, int h, int w, int groups, double eps,
                        double* out, double* mean, double* rstd) {
    const int cpg = c / groups;
    const size_t plane = static_cast<size_t>(h) * w;
    const size_t gsize = cpg * plane;
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; ++g) {
        const double* gin = in + static_cast<size_t>(g) * gsize;
        double m = 0.0;
        for (size_t i = 0; i < gsize; ++i) m += gin[i];
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (size_t i = 0; i < gsize; ++i) {
            double d = gin[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        double rs = 1.0 / std::sqrt(var + eps);
        mean[g] = m;
        rstd[g] = rs;
        double* gout = out + static_cast<size_t>(g) * gsize;
        for (size_t i = 0; i < gsize; ++i) gout[i] = (gin[i] - m) * rs;
    }
}

void group_norm_backward(const double* gout, const double* in, int c, int h, int w,
                         int groups, const double* mean, const double* rstd, double* gin) {
    const int cpg = c / groups;
    const size_t gsize = static_cast<size_t>(cpg) * h * w;
    const double n = static_cast<double>(gsize);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; ++g) {
        const double* go = gout + static_cast<size_t>(g) * gsize;
        const double* xi = in + static_cast<size_t>(g) * gsize;
        double* gi = gin + static_cast<size_t>(g) * gsize;
        const double m = mean[g], rs = rstd[g];
        double sum_g = 0.0, sum_gx = 0.0;
        for (size_t i = 0; i < gsize; ++i) {
            double xhat = (xi[i] - m) * rs;
            sum_g += go[i];
            sum_gx += go[i] * xhat;
        }
        for (size_t i = 0; i < gsize; ++i) {
            double xhat = (xi[i] - m) * rs;
            gi[i] = rs * (go[i] - sum_g / n - xhat * sum_gx / n);
        }
    }
}

void scale_shift_forward(const double* in, int c, int h, int w,
                         const double* gain, const double* bias, double* out) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double g = gain[ch], b = bias ? bias[ch] : 0.0;
        const double* src = in + ch * plane;
        double* dst = out + ch * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] = g * src[i] + b;
    }
}

void scale_shift_backward(const double* gout, const double* in, int c, int h, int w,
                          const double* gain, double* gin, double* ggain, double* gbias) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* go = gout + ch * plane;
        const double* xi = in + ch * plane;
        double* gi = gin + ch * plane;
        double sg = 0.0, sb = 0.0;
        const double g = gain[ch];
        for (size_t i = 0; i < plane; ++i) {
            sg += go[i] * xi[i];
            sb += go[i];
            gi[i] = go[i] * g;
        }
        if (ggain) ggain[ch] += sg;
        if (gbias) gbias[ch] += sb;
    }
}

void silu_forward(const double* in, size_t n, double* out) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double s = 1.0 / (1.0 + std::exp(-in[i]));
        out[i] = in[i] * s;
    }
}

void silu_backward(const double* gout, const double* in, size_t n, double* gin) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double s = 1.0 / (1.0 + std::exp(-in[i]));
        gin[i] = gout[i] * s * (1.0 + in[i] * (1.0 - s));
    }
}

namespace {

// Half-pixel source coordinate for x2 upsampling, with clamped-edge weights.
inline void up2_weights(int oi, int n, int& i0, double& t) {
    double u = 0.5 * oi - 0.25;
    if (u < 0.0) u = 0.0;
    if (u > n - 1.0) u = n - 1.0;
    i0 = static_cast<int>(u);
    if (i0 > n - 2) i0 = n - 2;
    t = u - i0;
}

}  // namespace

void upsample2x_forward(const double* in, int c, int h, int w, double* out) {
    const int oh = 2 * h, ow = 2 * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            const double* plane = in + static_cast<size_t>(ch) * h * w;
            double* orow = out + (static_cast<size_t>(ch) * oh + oy) * ow;
            int y0;
            double ty;
            up2_weights(oy, h, y0, ty);
            for (int ox = 0; ox < ow; ++ox) {
                int x0;
                double tx;
                up2_weights(ox, w, x0, tx);
                const double v00 = plane[static_cast<size_t>(y0) * w + x0];
                const double v01 = plane[static_cast<size_t>(y0) * w + x0 + 1];
                const double v10 = plane[static_cast<size_t>(y0 + 1) * w + x0];
                const double v11 = plane[static_cast<size_t>(y0 + 1) * w + x0 + 1];
                orow[ox] = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
            }
        }
    }
}

void upsample2x_backward(const double* gout, int c, int h, int w, double* gin) {
    const int oh = 2 * h, ow = 2 * w;
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double* gi = gin + ch * plane;
        std::fill(gi, gi + plane, 0.0);
        const double* go = gout + static_cast<size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            int y0;
            double ty;
            up2_weights(oy, h, y0, ty);
            for (int ox = 0; ox < ow; ++ox) {
                int x0;
                double tx;
                up2_weights(ox, w, x0, tx);
                const double g = go[static_cast<size_t>(oy) * ow + ox];
                gi[static_cast<size_t>(y0) * w + x0] += (1 - ty) * (1 - tx) * g;
                gi[static_cast<size_t>(y0) * w + x0 + 1] += (1 - ty) * tx * g;
                gi[static_cast<size_t>(y0 + 1) * w + x0] += ty * (1 - tx) * g;
                gi[static_cast<size_t>(y0 + 1) * w + x0 + 1] += ty * tx * g;
            }
        }
    }
}

namespace ref {

void conv2d_forward(const double* in, int ci, int h, int w,
                    const double* wgt, const double* bias, int co, int k, int stride,
                    double* out) {
    const int p = (k - 1) / 2;
    const int oh = conv_out_dim(h, k, stride), ow = conv_out_dim(w, k, stride);
    for (int oc = 0; oc < co; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias ? bias[oc] : 0.0;
                acc += conv_accum_at(in, ci, h, w, wgt, k, p, stride, oc, oy, ox);
                out[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = acc;
            }
}

void conv2d_backward_data(const double* gout, int co, int oh, int ow,
                          const double* wgt, int ci, int k, int stride,
                          int h, int w, double* gin) {
    const int p = (k - 1) / 2;
    for (int ic = 0; ic < ci; ++ic)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                double acc = 0.0;
                for (int oc = 0; oc < co; ++oc)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int ny = iy - ky + p, nx = ix - kx + p;
                            if (ny % stride != 0 || nx % stride != 0) continue;
                            int oy = ny / stride, ox = nx / stride;
                            if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                            acc += gout[(static_cast<size_t>(oc) * oh + oy) * ow + ox] *
                                   wgt[((static_cast<size_t>(oc) * ci + ic) * k + ky) * k + kx];
                        }
                gin[(static_cast<size_t>(ic) * h + iy) * w + ix] = acc;
            }
}

void conv2d_backward_weights(const double* gout, int co, int oh, int ow,
                             const double* in, int ci, int h, int w,
                             int k, int stride, double* gwgt, double* gbias) {
    const int p = (k - 1) / 2;
    for (int oc = 0; oc < co; ++oc) {
        if (gbias) {
            double b = 0.0;
            for (int i = 0; i < oh * ow; ++i) b += gout[static_cast<size_t>(oc) * oh * ow + i];
            gbias[oc] += b;
        }
        for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            int iy = oy * stride + ky - p, ix = ox * stride + kx - p;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += gout[(static_cast<size_t>(oc) * oh + oy) * ow + ox] *
                                   in[(static_cast<size_t>(ic) * h + iy) * w + ix];
                        }
                    gwgt[((static_cast<size_t>(oc) * ci + ic) * k + ky) * k + kx] += acc;
                }
    }
}

void group_norm_forward(const double* in, int c, int h, int w, int groups, double eps,
                        double* out, double* mean, double* rstd) {
    const int cpg = c / groups;
    const size_t gsize = static_cast<size_t>(cpg) * h * w;
    for (int g = 0; g < groups; ++g) {
        const double* gi = in + static_cast<size_t>(g) * gsize;
        double m = 0.0;
        for (size_t i = 0; i < gsize; ++i) m += gi[i];
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (size_t i = 0; i < gsize; ++i) var += (gi[i] - m) * (gi[i] - m);
        var /= static_cast<double>(gsize);
        double rs = 1.0 / std::sqrt(var + eps);
        mean[g] = m;
        rstd[g] = rs;
        for (size_t i = 0; i < gsize; ++i) out[static_cast<size_t>(g) * gsize + i] = (gi[i] - m) * rs;
    }
}

void upsample2x_forward(const double* in, int c, int h, int w, double* out) {
    const int oh = 2 * h, ow = 2 * w;
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int y0, x0;
                double ty, tx;
                up2_weights(oy, h, y0, ty);
                up2_weights(ox, w, x0, tx);
                const double* plane = in + static_cast<size_t>(ch) * h * w;
                double v = (1 - ty) * ((1 - tx) * plane[static_cast<size_t>(y0) * w + x0] +
                                       tx * plane[static_cast<size_t>(y0) * w + x0 + 1]) +
                           ty * ((1 - tx) * plane[static_cast<size_t>(y0 + 1) * w + x0] +
                                 tx * plane[static_cast<size_t>(y0 + 1) * w + x0 + 1]);
                out[(static_cast<size_t>(ch) * oh + oy) * ow + ox] = v;
            }
}

}  // namespace ref

}  // namespace downscale::kernels
