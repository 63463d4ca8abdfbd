#include "voxelmem/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include "voxelmem/errors.hpp"

namespace voxelmem {

void write_pgm16(const std::filesystem::path& path, const Pgm16& img) {
    if (img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw StructuralError("pgm16 pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<uint8_t> raw(img.pixels.size() * 2);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        raw[2 * i] = static_cast<uint8_t>(img.pixels[i] >> 8);
        raw[2 * i + 1] = static_cast<uint8_t>(img.pixels[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError("short write: " + path.string());
}

namespace {

int read_pnm_token(std::istream& in, const std::filesystem::path& path) {
    // Skips whitespace and '#' comments between header fields.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw DataError("truncated pgm header: " + path.string());
    try {
        return std::stoi(tok);
    } catch (const std::exception&) {
        throw DataError("bad pgm header token '" + tok + "': " + path.string());
    }
}

}  // namespace

Pgm16 read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw DataError("not a binary pgm: " + path.string());
    Pgm16 img;
    img.width = read_pnm_token(in, path);
    img.height = read_pnm_token(in, path);
    int maxval = read_pnm_token(in, path);
    if (img.width <= 0 || img.height <= 0 || maxval != 65535)
        throw DataError("unsupported pgm geometry or maxval: " + path.string());
    size_t n = static_cast<size_t>(img.width) * img.height;
    std::vector<uint8_t> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw DataError("truncated pgm payload: " + path.string());
    img.pixels.resize(n);
    for (size_t i = 0; i < n; ++i)
        img.pixels[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    return img;
}

void write_pgm8(const std::filesystem::path& path, int width, int height,
                const std::vector<uint8_t>& pixels) {
    if (pixels.size() != static_cast<size_t>(width) * height)
        throw StructuralError("pgm8 pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw DataError("short write: " + path.string());
}

}  // namespace voxelmem
