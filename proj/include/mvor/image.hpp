#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mvor {

/// 8-bit RGB image, interleaved row-major.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // 3 * width * height

    ImageU8() = default;
    ImageU8(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* pixel(int x, int y) {
        return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
};

/// Reads a PNG or binary PPM (P6) file, selected by extension.
ImageU8 load_image(const std::filesystem::path& path);

/// Writes PNG or binary PPM (P6), selected by extension (.png / .ppm).
void save_image(const ImageU8& img, const std::filesystem::path& path);

} // namespace mvor
