#include "hsitl/cube.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "hsitl/errors.hpp"

namespace hsitl {
namespace {

constexpr char kCubeMagic[4] = {'H', 'S', 'I', 'C'};
constexpr char kLabelMagic[4] = {'H', 'S', 'I', 'L'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 1;

// All container formats are little-endian. The readers/writers below go
// through byte buffers so they behave identically on any host.
uint32_t read_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void write_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<uint8_t> read_all(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(std::string(what) + ": cannot open " + path);
    in.seekg(0, std::ios::end);
    auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) throw DataError(std::string(what) + ": read failed for " + path);
    return buf;
}

}  // namespace

uint16_t LabelMap::class_count() const {
    uint16_t c = 0;
    for (uint16_t v : labels) c = std::max(c, v);
    return c;
}

void LabelMap::validate() const {
    if (labels.size() != size_t(height) * width)
        throw DataError("label map: size does not match dimensions");
    uint16_t c = class_count();
    if (c == 0) throw DataError("label map: no labeled pixels");
    std::vector<uint64_t> counts(size_t(c) + 1, 0);
    for (uint16_t v : labels) counts[v]++;
    for (uint16_t k = 1; k <= c; ++k) {
        if (counts[k] == 0)
            throw DataError("label map: class ids are not contiguous (class " +
                            std::to_string(k) + " is empty)");
    }
}

SpectralCube load_cube(const std::string& path) {
    auto buf = read_all(path, "cube");
    if (buf.size() < 18 || std::memcmp(buf.data(), kCubeMagic, 4) != 0)
        throw DataError("cube: bad magic in " + path);
    if (buf[4] != kVersion)
        throw DataError("cube: unsupported version " + std::to_string(buf[4]));
    SpectralCube cube;
    cube.height = read_u32(buf.data() + 5);
    cube.width = read_u32(buf.data() + 9);
    cube.bands = read_u32(buf.data() + 13);
    uint8_t dtype = buf[17];
    if (dtype != kDtypeF32)
        throw DataError("cube: unsupported dtype code " + std::to_string(dtype));
    if (cube.height == 0 || cube.width == 0 || cube.bands == 0)
        throw DataError("cube: zero dimension in header of " + path);
    size_t n = cube.value_count();
    if (buf.size() != 18 + n * 4)
        throw DataError("cube: truncated or oversized payload in " + path + " (expected " +
                        std::to_string(n) + " values, got " +
                        std::to_string((buf.size() - 18) / 4) + ")");
    cube.data.resize(n);
    std::memcpy(cube.data.data(), buf.data() + 18, n * 4);
    for (float v : cube.data)
        if (!std::isfinite(v)) throw DataError("cube: non-finite value in " + path);
    return cube;
}

void save_cube(const SpectralCube& cube, const std::string& path) {
    if (cube.height == 0 || cube.width == 0 || cube.bands == 0)
        throw DataError("cube: refusing to write zero dimension");
    if (cube.data.size() != cube.value_count())
        throw DataError("cube: data length does not match dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cube: cannot open " + path + " for writing");
    out.write(kCubeMagic, 4);
    out.put(char(kVersion));
    write_u32(out, cube.height);
    write_u32(out, cube.width);
    write_u32(out, cube.bands);
    out.put(char(kDtypeF32));
    out.write(reinterpret_cast<const char*>(cube.data.data()),
              std::streamsize(cube.data.size() * 4));
    if (!out) throw DataError("cube: write failed for " + path);
}

LabelMap load_labels(const std::string& path) {
    auto buf = read_all(path, "labels");
    if (buf.size() < 13 || std::memcmp(buf.data(), kLabelMagic, 4) != 0)
        throw DataError("labels: bad magic in " + path);
    if (buf[4] != kVersion)
        throw DataError("labels: unsupported version " + std::to_string(buf[4]));
    LabelMap map;
    map.height = read_u32(buf.data() + 5);
    map.width = read_u32(buf.data() + 9);
    if (map.height == 0 || map.width == 0)
        throw DataError("labels: zero dimension in header of " + path);
    size_t n = size_t(map.height) * map.width;
    if (buf.size() != 13 + n * 2)
        throw DataError("labels: truncated or oversized payload in " + path);
    map.labels.resize(n);
    for (size_t i = 0; i < n; ++i)
        map.labels[i] = uint16_t(buf[13 + 2 * i]) | uint16_t(buf[13 + 2 * i + 1]) << 8;
    map.validate();
    return map;
}

void save_labels(const LabelMap& map, const std::string& path) {
    if (map.labels.size() != size_t(map.height) * map.width)
        throw DataError("labels: data length does not match dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("labels: cannot open " + path + " for writing");
    out.write(kLabelMagic, 4);
    out.put(char(kVersion));
    write_u32(out, map.height);
    write_u32(out, map.width);
    for (uint16_t v : map.labels) {
        uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!out) throw DataError("labels: write failed for " + path);
}

}  // namespace hsitl
