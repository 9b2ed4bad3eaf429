#include "downscale/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace downscale {

Grid::Grid(double lat0_, double lon0_, double dlat_, double dlon_, int h_, int w_)
    : lat0(lat0_), lon0(lon0_), dlat(dlat_), dlon(dlon_), h(h_), w(w_) {
    if (h < 2 || w < 2) throw std::invalid_argument("Grid: need at least 2x2 nodes");
    if (dlat == 0.0 || dlon == 0.0) throw std::invalid_argument("Grid: zero spacing");
}

double Grid::lat_min() const {
    double a = lat0 - 0.5 * dlat, b = lat0 + (h - 0.5) * dlat;
    return std::min(a, b);
}
double Grid::lat_max() const {
    double a = lat0 - 0.5 * dlat, b = lat0 + (h - 0.5) * dlat;
    return std::max(a, b);
}
double Grid::lon_min() const {
    double a = lon0 - 0.5 * dlon, b = lon0 + (w - 0.5) * dlon;
    return std::min(a, b);
}
double Grid::lon_max() const {
    double a = lon0 - 0.5 * dlon, b = lon0 + (w - 0.5) * dlon;
    return std::max(a, b);
}

bool Grid::contains(double lat, double lon) const {
    return lat >= lat_min() && lat <= lat_max() && lon >= lon_min() && lon <= lon_max();
}

Field::Field(Grid g, std::vector<Channel> ch)
    : grid(g), channels(std::move(ch)),
      data(static_cast<size_t>(g.h) * g.w * channels.size(), 0.0) {}

int Field::channel_index(const std::string& name) const {
    for (size_t i = 0; i < channels.size(); ++i)
        if (channels[i].name == name) return static_cast<int>(i);
    return -1;
}

void Field::validate() const {
    if (data.size() != static_cast<size_t>(grid.h) * grid.w * channels.size())
        throw std::invalid_argument("Field: data size does not match H*W*C");
    std::set<std::string> names;
    for (const auto& ch : channels)
        if (!names.insert(ch.name).second)
            throw std::invalid_argument("Field: duplicate channel name " + ch.name);
    for (double v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("Field: non-finite value");
}

int StandardizationStats::find(const std::string& name) const {
    for (size_t i = 0; i < channel_names.size(); ++i)
        if (channel_names[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

// Clamped index-space weights along one axis: fractional node coordinate u
// (may lie in the half-cell margin), returns the lower node and blend factor.
inline void axis_weights(double u, int n, int& i0, double& t) {
    if (u < 0.0) u = 0.0;
    if (u > n - 1.0) u = n - 1.0;
    i0 = static_cast<int>(u);
    if (i0 > n - 2) i0 = n - 2;
    t = u - i0;
}

}  // namespace

double bilinear_sample(const Field& field, double lat, double lon, int channel) {
    const Grid& g = field.grid;
    if (channel < 0 || channel >= field.n_channels())
        throw std::invalid_argument("bilinear_sample: bad channel index");
    if (!g.contains(lat, lon))
        throw std::domain_error("bilinear_sample: point outside grid coverage");
    const double u = (lat - g.lat0) / g.dlat;
    const double v = (lon - g.lon0) / g.dlon;
    int r0, c0;
    double tr, tc;
    axis_weights(u, g.h, r0, tr);
    axis_weights(v, g.w, c0, tc);
    const double f00 = field.at(r0, c0, channel);
    const double f01 = field.at(r0, c0 + 1, channel);
    const double f10 = field.at(r0 + 1, c0, channel);
    const double f11 = field.at(r0 + 1, c0 + 1, channel);
    return (1 - tr) * ((1 - tc) * f00 + tc * f01) + tr * ((1 - tc) * f10 + tc * f11);
}

Field upsample_bilinear(const Field& field, const Grid& target) {
    const Grid& s = field.grid;
    if (target.lat_min() < s.lat_min() || target.lat_max() > s.lat_max() ||
        target.lon_min() < s.lon_min() || target.lon_max() > s.lon_max())
        throw std::domain_error("upsample_bilinear: target exceeds source coverage");
    Field out(target, field.channels);
    const int c = field.n_channels();
    for (int r = 0; r < target.h; ++r) {
        const double lat = target.lat(r);
        const double u = (lat - s.lat0) / s.dlat;
        int r0;
        double tr;
        axis_weights(u, s.h, r0, tr);
        for (int col = 0; col < target.w; ++col) {
            const double lon = target.lon(col);
            const double v = (lon - s.lon0) / s.dlon;
            int c0;
            double tc;
            axis_weights(v, s.w, c0, tc);
            for (int ch = 0; ch < c; ++ch) {
                const double f00 = field.at(r0, c0, ch);
                const double f01 = field.at(r0, c0 + 1, ch);
                const double f10 = field.at(r0 + 1, c0, ch);
                const double f11 = field.at(r0 + 1, c0 + 1, ch);
                out.at(r, col, ch) =
                    (1 - tr) * ((1 - tc) * f00 + tc * f01) + tr * ((1 - tc) * f10 + tc * f11);
            }
        }
    }
    return out;
}

namespace {

Field apply_affine(const Field& field, const StandardizationStats& stats, bool forward) {
    Field out = field;
    const int c = field.n_channels();
    std::vector<double> mean(c), std_(c);
    for (int ch = 0; ch < c; ++ch) {
        int k = stats.find(field.channels[ch].name);
        if (k < 0)
            throw std::runtime_error("standardize: no stats for channel " + field.channels[ch].name);
        mean[ch] = stats.mean[k];
        std_[ch] = stats.std[k];
    }
    const size_t n = field.data.size();
    for (size_t i = 0; i < n; ++i) {
        int ch = static_cast<int>(i % c);
        out.data[i] = forward ? (field.data[i] - mean[ch]) / std_[ch]
                              : field.data[i] * std_[ch] + mean[ch];
    }
    return out;
}

}  // namespace

Field standardize(const Field& field, const StandardizationStats& stats) {
    return apply_affine(field, stats, true);
}

Field destandardize(const Field& field, const StandardizationStats& stats) {
    return apply_affine(field, stats, false);
}

StandardizationStats compute_stats(const std::vector<Field>& fields) {
    if (fields.empty()) throw std::invalid_argument("compute_stats: empty field sequence");
    const auto& channels = fields[0].channels;
    const int c = static_cast<int>(channels.size());
    for (const auto& f : fields)
        if (f.channels != channels)
            throw std::invalid_argument("compute_stats: inconsistent channels across fields");

    StandardizationStats stats;
    stats.channel_names.resize(c);
    stats.mean.assign(c, 0.0);
    stats.std.assign(c, 0.0);
    for (int ch = 0; ch < c; ++ch) stats.channel_names[ch] = channels[ch].name;

    std::vector<size_t> count(c, 0);
    for (const auto& f : fields) {
        const size_t n = f.data.size();
        for (size_t i = 0; i < n; ++i) {
            int ch = static_cast<int>(i % c);
            stats.mean[ch] += f.data[i];
            ++count[ch];
        }
    }
    for (int ch = 0; ch < c; ++ch) stats.mean[ch] /= static_cast<double>(count[ch]);

    for (const auto& f : fields) {
        const size_t n = f.data.size();
        for (size_t i = 0; i < n; ++i) {
            int ch = static_cast<int>(i % c);
            double d = f.data[i] - stats.mean[ch];
            stats.std[ch] += d * d;
        }
    }
    for (int ch = 0; ch < c; ++ch) {
        stats.std[ch] = std::sqrt(stats.std[ch] / static_cast<double>(count[ch]));
        if (!(stats.std[ch] > 0.0))
            throw std::runtime_error("compute_stats: zero variance in channel " +
                                     channels[ch].name);
    }
    return stats;
}

}  // namespace downscale
