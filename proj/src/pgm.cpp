#include "copdflow/pgm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "copdflow/errors.hpp"

namespace copdflow {

void write_pgm(const std::string& path, const PgmImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        static_cast<std::int64_t>(img.pixels.size()) != img.width * img.height)
        throw ContractError("write_pgm: inconsistent image " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("short write: " + path);
}

namespace {
int next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {  // comment to end of line
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) break;
    }
    if (c == EOF) return -1;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return c;  // the whitespace terminator (or EOF)
}
}  // namespace

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string tok;
    if (next_token(in, tok) < 0 || tok != "P5")
        throw ParseError(path + ": not a binary PGM (P5)");
    auto read_int = [&](const char* what) {
        if (next_token(in, tok) < 0) throw ParseError(path + ": truncated header");
        try {
            std::size_t pos = 0;
            long v = std::stol(tok, &pos);
            if (pos != tok.size() || v <= 0) throw std::invalid_argument(what);
            return v;
        } catch (const std::exception&) {
            throw ParseError(path + ": bad " + what + " '" + tok + "'");
        }
    };
    PgmImage img;
    img.width = read_int("width");
    img.height = read_int("height");
    const long maxval = read_int("maxval");
    if (maxval != 255) throw ParseError(path + ": maxval must be 255");
    img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw ParseError(path + ": truncated pixel data");
    return img;
}

PgmImage to_pgm(const Tensor& img) {
    Shape s = img.shape;
    while (s.size() > 2 && s.front() == 1) s.erase(s.begin());
    if (s.size() != 2) throw ShapeError("to_pgm: expected a single-channel 2d image");
    PgmImage out;
    out.height = s[0];
    out.width = s[1];
    out.pixels.resize(static_cast<std::size_t>(out.width * out.height));
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        double v = (static_cast<double>(img.data[i]) + 1.0) / 2.0 * 255.0;
        v = std::min(std::max(v, 0.0), 255.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

Tensor from_pgm(const PgmImage& img) {
    Tensor out({img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out.data[i] = static_cast<real>(img.pixels[i] / 255.0 * 2.0 - 1.0);
    return out;
}

}  // namespace copdflow
