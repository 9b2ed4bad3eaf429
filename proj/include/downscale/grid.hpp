#pragma once

#include <string>
#include <vector>

namespace downscale {

// Regular lat-lon grid with cell-center coordinates. Row r sits at
// lat0 + r*dlat, column c at lon0 + c*dlon; dlat may be negative
// (north-to-south storage).
struct Grid {
    double lat0 = 0.0, lon0 = 0.0;
    double dlat = 1.0, dlon = 1.0;
    int h = 0, w = 0;

    Grid() = default;
    Grid(double lat0_, double lon0_, double dlat_, double dlon_, int h_, int w_);

    double lat(int row) const { return lat0 + row * dlat; }
    double lon(int col) const { return lon0 + col * dlon; }

    // Coverage extends half a cell beyond the outermost centers.
    double lat_min() const;
    double lat_max() const;
    double lon_min() const;
    double lon_max() const;
    bool contains(double lat, double lon) const;

    bool operator==(const Grid& o) const = default;
};

struct Channel {
    std::string name;
    std::string unit;
    bool operator==(const Channel& o) const = default;
};

// Multi-channel field on a grid. Data is row-major with channels innermost:
// index ((row*W)+col)*C + channel.
struct Field {
    Grid grid;
    std::vector<Channel> channels;
    std::vector<double> data;

    Field() = default;
    Field(Grid g, std::vector<Channel> ch);

    int n_channels() const { return static_cast<int>(channels.size()); }
    size_t idx(int row, int col, int ch) const {
        return (static_cast<size_t>(row) * grid.w + col) * channels.size() + ch;
    }
    double& at(int row, int col, int ch) { return data[idx(row, col, ch)]; }
    double at(int row, int col, int ch) const { return data[idx(row, col, ch)]; }

    // Index of the named channel; -1 if absent.
    int channel_index(const std::string& name) const;

    // Throws if channel names collide, sizes disagree, or values are non-finite.
    void validate() const;
};

struct StandardizationStats {
    std::vector<std::string> channel_names;
    std::vector<double> mean;
    std::vector<double> std;

    int find(const std::string& name) const;
};

// Bilinear interpolation at (lat, lon). Inside the outer half-cell ring the
// weights clamp to the grid edge; beyond the coverage box it throws
// std::domain_error. Exact at grid nodes.
double bilinear_sample(const Field& field, double lat, double lon, int channel);

// Resamples every channel of `field` onto `target` node by node. Target
// coverage must lie inside the source coverage.
Field upsample_bilinear(const Field& field, const Grid& target);

Field standardize(const Field& field, const StandardizationStats& stats);
Field destandardize(const Field& field, const StandardizationStats& stats);

// Per-channel mean and population std over all points of all fields.
// A zero-variance channel is a configuration error.
StandardizationStats compute_stats(const std::vector<Field>& fields);

}  // namespace downscale
