#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "downscale/rng.hpp"

namespace downscale {

// Dense CHW tensor, double precision. The network runs in 64-bit end to end;
// checkpoints round to f32 on disk.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

    size_t size() const { return v.size(); }
    double& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }

    double* plane(int ch) { return v.data() + static_cast<size_t>(ch) * h * w; }
    const double* plane(int ch) const { return v.data() + static_cast<size_t>(ch) * h * w; }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    static Tensor randn(int c, int h, int w, Rng& rng, double std = 1.0) {
        Tensor t(c, h, w);
        for (auto& x : t.v) x = std * rng.normal();
        return t;
    }
};

inline Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty input");
    int h = parts[0]->h, w = parts[0]->w, c = 0;
    for (const Tensor* p : parts) {
        if (p->h != h || p->w != w) throw std::invalid_argument("concat_channels: spatial shape mismatch");
        c += p->c;
    }
    Tensor out(c, h, w);
    size_t off = 0;
    for (const Tensor* p : parts) {
        std::copy(p->v.begin(), p->v.end(), out.v.begin() + off);
        off += p->size();
    }
    return out;
}

}  // namespace downscale
