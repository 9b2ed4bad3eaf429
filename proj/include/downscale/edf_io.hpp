#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "downscale/grid.hpp"

namespace downscale {

// Unreadable or unwritable input/output path; distinguishes usage problems
// (exit code 2) from runtime aborts (exit code 3) at the CLI boundary.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or truncated container. `offset` is the byte position at which
// decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    size_t offset() const { return offset_; }

private:
    size_t offset_;
};

// EDF1 container: magic "EDF1"; u32 H, W, C; f64 lat0, lon0, dlat, dlon;
// per channel a length-prefixed name and unit string; then H*W*C f32 values,
// row-major with channels innermost. All integers and floats little-endian.
void write_edf(const std::string& path, const Field& field);
Field read_edf(const std::string& path);

std::string encode_edf(const Field& field);
Field decode_edf(const std::string& bytes);

// FNV-1a hash of a file or byte string, as a 16-digit hex string. Used to pin
// artifact identity in manifests and sidecars.
uint64_t fnv1a64(const void* data, size_t n);
std::string hash_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

}  // namespace downscale
