#include "downscale/edf_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace downscale {

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.append(b, 4);
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.append(b, 8);
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}

    size_t pos() const { return pos_; }
    void skip(size_t n) { pos_ += n; }

    void need(size_t n, const char* what) {
        if (pos_ + n > b_.size()) throw FormatError(std::string("truncated ") + what, pos_);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 8;
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    float f32(const char* what) {
        uint32_t v = u32(what);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string str(const char* what) {
        uint32_t n = u32(what);
        need(n, what);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    const std::string& b_;
    size_t pos_ = 0;
};

}  // namespace

std::string encode_edf(const Field& field) {
    std::string out;
    out.append("EDF1");
    put_u32(out, static_cast<uint32_t>(field.grid.h));
    put_u32(out, static_cast<uint32_t>(field.grid.w));
    put_u32(out, static_cast<uint32_t>(field.channels.size()));
    put_f64(out, field.grid.lat0);
    put_f64(out, field.grid.lon0);
    put_f64(out, field.grid.dlat);
    put_f64(out, field.grid.dlon);
    for (const auto& ch : field.channels) {
        put_str(out, ch.name);
        put_str(out, ch.unit);
    }
    for (double v : field.data) put_f32(out, static_cast<float>(v));
    return out;
}

Field decode_edf(const std::string& bytes) {
    Reader r(bytes);
    r.need(4, "magic");
    if (bytes.compare(0, 4, "EDF1") != 0) throw FormatError("bad magic, expected EDF1", 0);
    r.skip(4);
    const uint32_t h = r.u32("height");
    const uint32_t w = r.u32("width");
    const uint32_t c = r.u32("channel count");
    const double lat0 = r.f64("lat0");
    const double lon0 = r.f64("lon0");
    const double dlat = r.f64("dlat");
    const double dlon = r.f64("dlon");
    if (h < 2 || w < 2 || c < 1) throw FormatError("implausible dimensions", 4);
    std::vector<Channel> channels;
    channels.reserve(c);
    for (uint32_t i = 0; i < c; ++i) {
        Channel ch;
        ch.name = r.str("channel name");
        ch.unit = r.str("channel unit");
        channels.push_back(std::move(ch));
    }
    Field field(Grid(lat0, lon0, dlat, dlon, static_cast<int>(h), static_cast<int>(w)),
                std::move(channels));
    const size_t n = static_cast<size_t>(h) * w * c;
    for (size_t i = 0; i < n; ++i) field.data[i] = static_cast<double>(r.f32("field values"));
    if (r.pos() != bytes.size()) throw FormatError("trailing bytes after field data", r.pos());
    return field;
}

Field read_edf(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_edf(bytes);
}

void write_edf(const std::string& path, const Field& field) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open for write: " + path);
    std::string bytes = encode_edf(field);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + path);
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hash_hex(const std::string& bytes) {
    uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hash_hex(bytes);
}

}  // namespace downscale
