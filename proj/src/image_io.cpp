#include "grela/image_io.hpp"

#include <fstream>

namespace grela {

Image Image::filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img;
    img.h = h;
    img.w = w;
    img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

BinaryMask BinaryMask::zeros(int h, int w) {
    BinaryMask m;
    m.h = h;
    m.w = w;
    m.fg.assign(static_cast<std::size_t>(h) * w, 0);
    return m;
}

long BinaryMask::count() const {
    long n = 0;
    for (std::uint8_t v : fg) n += v;
    return n;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comment lines.
int next_header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c))
        throw IoError("malformed netpbm header in " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    // c is the single whitespace terminating the token; leave stream here.
    return value;
}

void check_dims(int h, int w, const std::string& path) {
    if (h < 1 || w < 1 || h > 1 << 14 || w > 1 << 14)
        throw IoError("unreasonable image dimensions in " + path);
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw IoError("write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw IoError("not a P6 file: " + path);
    int w = next_header_int(in, path);
    int h = next_header_int(in, path);
    int maxval = next_header_int(in, path);
    if (maxval != 255) throw IoError("unsupported maxval in " + path);
    check_dims(h, w, path);
    Image img;
    img.h = h;
    img.w = w;
    img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    if (!in.read(reinterpret_cast<char*>(img.rgb.data()),
                 static_cast<std::streamsize>(img.rgb.size())))
        throw IoError("truncated pixel data in " + path);
    return img;
}

void write_pgm(const std::string& path, const BinaryMask& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << mask.w << ' ' << mask.h << "\n255\n";
    std::vector<std::uint8_t> bytes(mask.fg.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = mask.fg[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

BinaryMask read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw IoError("not a P5 file: " + path);
    int w = next_header_int(in, path);
    int h = next_header_int(in, path);
    int maxval = next_header_int(in, path);
    if (maxval != 255) throw IoError("unsupported maxval in " + path);
    check_dims(h, w, path);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h) * w);
    if (!in.read(reinterpret_cast<char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size())))
        throw IoError("truncated pixel data in " + path);
    BinaryMask mask = BinaryMask::zeros(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (bytes[i] == 255)
            mask.fg[i] = 1;
        else if (bytes[i] != 0)
            throw InputError("mask byte " + std::to_string(int(bytes[i])) +
                             " is neither 0 nor 255 in " + path);
    }
    return mask;
}

BinaryMask nn_resize(const BinaryMask& mask, int out_h, int out_w) {
    if (mask.h < 1 || mask.w < 1 || out_h < 1 || out_w < 1)
        throw DimError("nn_resize: degenerate dimensions");
    BinaryMask out = BinaryMask::zeros(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = static_cast<int>(static_cast<long>(y) * mask.h / out_h);
        for (int x = 0; x < out_w; ++x) {
            int sx = static_cast<int>(static_cast<long>(x) * mask.w / out_w);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

std::vector<long> grid_foreground_counts(const BinaryMask& mask, int rows, int cols) {
    std::vector<int> rb = grid_cell_bounds(mask.h, rows);
    std::vector<int> cb = grid_cell_bounds(mask.w, cols);
    std::vector<long> counts(static_cast<std::size_t>(rows) * cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            long n = 0;
            for (int y = rb[r]; y < rb[r + 1]; ++y)
                for (int x = cb[c]; x < cb[c + 1]; ++x) n += mask.at(y, x);
            counts[static_cast<std::size_t>(r) * cols + c] = n;
        }
    return counts;
}

std::vector<double> grid_foreground_fractions(const BinaryMask& mask, int rows, int cols) {
    std::vector<int> rb = grid_cell_bounds(mask.h, rows);
    std::vector<int> cb = grid_cell_bounds(mask.w, cols);
    std::vector<long> counts = grid_foreground_counts(mask, rows, cols);
    std::vector<double> frac(counts.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            long area = static_cast<long>(rb[r + 1] - rb[r]) * (cb[c + 1] - cb[c]);
            frac[static_cast<std::size_t>(r) * cols + c] =
                static_cast<double>(counts[static_cast<std::size_t>(r) * cols + c]) /
                static_cast<double>(area);
        }
    return frac;
}

}  // namespace grela
