#include "haaseg/checkpoint.hpp"

#include "haaseg/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace haaseg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<char>& out, T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    void doubles(std::span<double> dst, const char* what) {
        need(dst.size() * sizeof(double), what);
        std::memcpy(dst.data(), bytes_.data() + pos_, dst.size() * sizeof(double));
        pos_ += dst.size() * sizeof(double);
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n)
            throw ParseError(std::string("checkpoint truncated while reading ") + what, pos_);
    }

    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<char> encode_checkpoint(const ParamList& params) {
    std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 8);
    put<std::uint64_t>(out, params.size());
    for (const auto& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto e : p.tensor.shape())
            put<std::uint64_t>(out, e);
        const auto data = p.tensor.data();
        const auto* raw = reinterpret_cast<const char*>(data.data());
        out.insert(out.end(), raw, raw + data.size() * sizeof(double));
    }
    return out;
}

ParamList decode_checkpoint(const std::vector<char>& bytes) {
    Reader r(bytes);
    if (r.str(8, "header") != std::string(kCheckpointMagic, 8))
        throw ParseError("not a HAASEG1 checkpoint", 0);
    const auto count = r.get<std::uint64_t>("record count");
    ParamList out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>("name length");
        std::string name = r.str(name_len, "name");
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank == 0)
            throw ParseError("record '" + name + "' has rank 0", r.pos());
        Shape shape(rank);
        for (auto& e : shape) {
            e = r.get<std::uint64_t>("extent");
            if (e == 0)
                throw ParseError("record '" + name + "' has a zero extent", r.pos());
        }
        // Reject extents whose payload could not fit before allocating.
        std::size_t numel = 1;
        for (auto e : shape) {
            if (e > r.remaining() / sizeof(double) / numel)
                throw ParseError("record '" + name + "' is larger than the file", r.pos());
            numel *= e;
        }
        Tensor t(shape);
        r.doubles(t.mutable_data(), "tensor data");
        out.push_back({std::move(name), std::move(t)});
    }
    if (r.remaining() != 0)
        throw ParseError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes", r.pos());
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot write checkpoint " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw std::runtime_error("failed writing checkpoint " + path.string());
}

ParamList load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot read checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

void apply_checkpoint(HAANet& net, const ParamList& records) {
    auto params = net.parameters();
    if (params.size() != records.size())
        throw IncompatibleCheckpoint("checkpoint has " + std::to_string(records.size()) +
                                     " tensors but the configured network has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& want = params[i];
        const auto& got = records[i];
        if (want.name != got.name)
            throw IncompatibleCheckpoint("checkpoint tensor #" + std::to_string(i) + " is '" + got.name +
                                         "', network expects '" + want.name + "'");
        if (want.tensor.shape() != got.tensor.shape())
            throw IncompatibleCheckpoint("checkpoint tensor '" + got.name + "' has shape " +
                                         shape_str(got.tensor.shape()) + ", network expects " +
                                         shape_str(want.tensor.shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.mutable_data();
        auto src = records[i].tensor.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

} // namespace haaseg
