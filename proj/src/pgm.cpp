#include "haaseg/pgm.hpp"

#include "haaseg/errors.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace haaseg {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

    void skip_space() {
        for (;;) {
            while (pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_])))
                ++pos_;
            if (pos_ < b_.size() && b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n')
                    ++pos_;
                continue;
            }
            return;
        }
    }

    std::size_t number(const char* what) {
        skip_space();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            if (v > 1u << 24)
                throw ParseError(std::string("PGM ") + what + " is too large", start);
            ++pos_;
        }
        if (pos_ == start)
            throw ParseError(std::string("PGM header: expected ") + what, start);
        return v;
    }

    std::size_t pos_ = 0;

private:
    const std::string& b_;
};

Shape map_extent(const Tensor& map, std::size_t& h, std::size_t& w) {
    const auto& s = map.shape();
    if (s.size() == 2) {
        h = s[0];
        w = s[1];
    } else if (s.size() == 3 && s[0] == 1) {
        h = s[1];
        w = s[2];
    } else {
        throw ShapeError("PGM maps must be [1, H, W] or [H, W], got " + shape_str(s));
    }
    return s;
}

} // namespace

std::string encode_pgm(const Tensor& map) {
    std::size_t h = 0, w = 0;
    map_extent(map, h, w);
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + h * w);
    for (double v : map.data()) {
        if (!(v >= 0.0 && v <= 1.0))
            throw ContractError("PGM values must lie in [0, 1], found " + std::to_string(v));
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    return out;
}

Tensor decode_pgm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw ParseError("not a binary PGM (missing P5 magic)", 0);
    HeaderReader r(bytes);
    r.pos_ = 2;
    const std::size_t w = r.number("width");
    const std::size_t h = r.number("height");
    const std::size_t maxval_at = r.pos_;
    const std::size_t maxval = r.number("maxval");
    if (w == 0 || h == 0)
        throw ParseError("PGM has a zero dimension", maxval_at);
    if (maxval != 255)
        throw ParseError("PGM maxval must be 255, got " + std::to_string(maxval), maxval_at);
    if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_])))
        throw ParseError("PGM header must end with a single whitespace byte", r.pos_);
    const std::size_t payload = r.pos_ + 1;
    if (bytes.size() - payload != w * h)
        throw ParseError("PGM payload has " + std::to_string(bytes.size() - payload) + " bytes, expected " +
                             std::to_string(w * h),
                         payload);
    Tensor out({1, h, w});
    auto d = out.mutable_data();
    for (std::size_t i = 0; i < w * h; ++i)
        d[i] = static_cast<double>(static_cast<unsigned char>(bytes[payload + i])) / 255.0;
    return out;
}

void write_pgm(const Tensor& map, const std::filesystem::path& path) {
    const auto bytes = encode_pgm(map);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw std::runtime_error("failed writing " + path.string());
}

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes);
}

} // namespace haaseg
