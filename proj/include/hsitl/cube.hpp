#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hsitl {

/// H x W x B raster of per-pixel spectra, pixel-interleaved: for each (y, x)
/// the `bands` values are consecutive.
struct SpectralCube {
    uint32_t height = 0;
    uint32_t width = 0;
    uint32_t bands = 0;
    std::vector<float> data;  // height * width * bands, (y, x, band) order

    size_t pixel_count() const { return size_t(height) * width; }
    size_t value_count() const { return pixel_count() * bands; }

    std::span<const float> spectrum(uint32_t y, uint32_t x) const {
        return {data.data() + (size_t(y) * width + x) * bands, bands};
    }
    float& at(uint32_t y, uint32_t x, uint32_t b) {
        return data[(size_t(y) * width + x) * bands + b];
    }
    float at(uint32_t y, uint32_t x, uint32_t b) const {
        return data[(size_t(y) * width + x) * bands + b];
    }
};

/// Per-pixel class ids. 0 = unlabeled, 1..C = classes; class ids must form a
/// contiguous range with at least one pixel each.
struct LabelMap {
    uint32_t height = 0;
    uint32_t width = 0;
    std::vector<uint16_t> labels;  // height * width, row-major

    uint16_t at(uint32_t y, uint32_t x) const { return labels[size_t(y) * width + x]; }

    /// Highest class id. Valid maps have classes 1..class_count().
    uint16_t class_count() const;

    /// Throws DataError unless labels form a contiguous 1..C range with at
    /// least one labeled pixel per class.
    void validate() const;
};

/// Reads an HSIC container: magic "HSIC", version u8 = 1, height u32,
/// width u32, bands u32, dtype u8 = 1 (f32), then height*width*bands
/// little-endian floats in (y, x, band) order.
SpectralCube load_cube(const std::string& path);
void save_cube(const SpectralCube& cube, const std::string& path);

/// Reads an HSIL container: magic "HSIL", version u8 = 1, height u32,
/// width u32, then height*width little-endian u16 labels. Validates the
/// class range.
LabelMap load_labels(const std::string& path);
void save_labels(const LabelMap& map, const std::string& path);

}  // namespace hsitl
