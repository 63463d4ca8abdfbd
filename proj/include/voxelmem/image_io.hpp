#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace voxelmem {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples per the netpbm spec).
// Used for depth images (millimeters) and label-index images.
struct Pgm16 {
    int width = 0;
    int height = 0;
    std::vector<uint16_t> pixels;  // row-major
};

void write_pgm16(const std::filesystem::path& path, const Pgm16& img);
Pgm16 read_pgm16(const std::filesystem::path& path);  // throws DataError

// 8-bit PGM, used for value/obstacle map exports.
void write_pgm8(const std::filesystem::path& path, int width, int height,
                const std::vector<uint8_t>& pixels);

}  // namespace voxelmem
