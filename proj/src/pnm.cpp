#include "agnomap/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace agnomap::pnm {

void write(const std::filesystem::path& path, const VectorXf& pixels, const ImageShape& shape) {
    if (shape.channels != 1 && shape.channels != 3) throw InputError("pnm: only 1 or 3 channels supported");
    if (pixels.size() != shape.size()) throw InputError("pnm: pixel count does not match shape");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot open " + path.string() + " for writing");
    out << (shape.channels == 1 ? "P5" : "P6") << '\n' << shape.width << ' ' << shape.height << "\n255\n";
    std::vector<unsigned char> bytes(std::size_t(pixels.size()));
    for (Eigen::Index i = 0; i < pixels.size(); ++i)
        bytes[std::size_t(i)] = static_cast<unsigned char>(std::lround(std::clamp(pixels[i], 0.f, 1.f) * 255.f));
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("pnm: write failed for " + path.string());
}

namespace {
// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
    std::string t;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!t.empty()) break;
            continue;
        }
        t.push_back(char(c));
    }
    return t;
}
}  // namespace

VectorXf read(const std::filesystem::path& path, ImageShape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("pnm: cannot open " + path.string());
    const std::string magic = token(in);
    if (magic != "P5" && magic != "P6") throw InputError("pnm: " + path.string() + " is not a binary P5/P6 file");
    try {
        shape.width = std::stoi(token(in));
        shape.height = std::stoi(token(in));
        if (std::stoi(token(in)) != 255) throw InputError("pnm: only maxval 255 is supported");
    } catch (const std::logic_error&) {
        throw InputError("pnm: malformed header in " + path.string());
    }
    shape.channels = magic == "P5" ? 1 : 3;
    if (shape.width <= 0 || shape.height <= 0) throw InputError("pnm: bad dimensions in " + path.string());
    std::vector<unsigned char> bytes(std::size_t(shape.size()));
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (in.gcount() != std::streamsize(bytes.size())) throw InputError("pnm: truncated data in " + path.string());
    VectorXf px(shape.size());
    for (Eigen::Index i = 0; i < px.size(); ++i) px[i] = float(bytes[std::size_t(i)]) / 255.f;
    return px;
}

}  // namespace agnomap::pnm
