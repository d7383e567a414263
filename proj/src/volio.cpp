#include "upl/volio.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace upl {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string context;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error(context + ": truncated payload");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) | (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace

std::string uvol_bytes(const Volume& v) {
    std::string out;
    out.reserve(30 + v.data.size() * 4);
    out += "UVOL";
    put_u16(out, 1);
    for (int i = 0; i < 3; ++i) put_u32(out, static_cast<std::uint32_t>(v.dims[static_cast<std::size_t>(i)]));
    for (int i = 0; i < 3; ++i) put_f32(out, v.voxel_size[static_cast<std::size_t>(i)]);
    for (float x : v.data) put_f32(out, x);
    return out;
}

void save_uvol(const Volume& v, const std::string& path) { write_file(path, uvol_bytes(v)); }

Volume load_uvol(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, "load_uvol(" + path + ")"};
    r.need(4);
    if (buf.compare(0, 4, "UVOL") != 0) throw std::runtime_error(r.context + ": bad magic");
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != 1) throw std::runtime_error(r.context + ": version mismatch (got " + std::to_string(version) + ")");
    Volume v;
    for (int i = 0; i < 3; ++i) v.dims[static_cast<std::size_t>(i)] = r.u32();
    for (int i = 0; i < 3; ++i) v.voxel_size[static_cast<std::size_t>(i)] = r.f32();
    const std::int64_t n = v.numel();
    r.need(static_cast<std::size_t>(n) * 4);
    if (r.pos + static_cast<std::size_t>(n) * 4 != buf.size()) {
        throw std::runtime_error(r.context + ": trailing bytes after payload");
    }
    v.data.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) v.data[static_cast<std::size_t>(i)] = r.f32();
    return v;
}

Volume import_raw(const std::string& path, std::int64_t d, std::int64_t h, std::int64_t w, RawDtype dtype,
                  Endianness endianness) {
    const std::string buf = read_file(path);
    const std::int64_t n = d * h * w;
    const std::size_t elem = dtype == RawDtype::kF32 ? 4 : 2;
    const std::size_t expected = static_cast<std::size_t>(n) * elem;
    if (buf.size() != expected) {
        throw std::runtime_error("import_raw(" + path + "): length mismatch, expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(buf.size()));
    }
    Volume v(d, h, w);
    const bool swap = endianness == Endianness::kBig;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * elem;
        if (dtype == RawDtype::kF32) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int src = swap ? 3 - b : b;
                bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[off + static_cast<std::size_t>(src)]))
                        << (8 * b);
            }
            float f;
            std::memcpy(&f, &bits, 4);
            v.data[static_cast<std::size_t>(i)] = f;
        } else {
            const int lo = swap ? 1 : 0, hi = swap ? 0 : 1;
            const std::uint16_t u =
                static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[off + static_cast<std::size_t>(lo)]) |
                                           (static_cast<std::uint16_t>(static_cast<std::uint8_t>(
                                                buf[off + static_cast<std::size_t>(hi)]))
                                            << 8));
            v.data[static_cast<std::size_t>(i)] = static_cast<float>(u) / 65535.0f;
        }
    }
    return v;
}

Image2D mip_project(const Volume& v, MipAxis axis) {
    const std::int64_t D = v.dims[0], H = v.dims[1], W = v.dims[2];
    Image2D img;
    switch (axis) {
        case MipAxis::kAxial: {
            img = Image2D(H, W);
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) img.at(y, x) = std::max(img.at(y, x), v.at(z, y, x));
            break;
        }
        case MipAxis::kCoronal: {
            img = Image2D(D, W);
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) img.at(z, x) = std::max(img.at(z, x), v.at(z, y, x));
            break;
        }
        case MipAxis::kSagittal: {
            img = Image2D(D, H);
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) img.at(z, y) = std::max(img.at(z, y), v.at(z, y, x));
            break;
        }
    }
    return img;
}

void export_pgm(const Image2D& img, const std::string& path) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::domain_error("export_pgm: value " + std::to_string(v) + " outside [0,1]");
        }
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::floor(255.0 * static_cast<double>(v) + 0.5))));
    }
    write_file(path, out);
}

MipAxis parse_mip_axis(const std::string& s) {
    if (s == "axial") return MipAxis::kAxial;
    if (s == "coronal") return MipAxis::kCoronal;
    if (s == "sagittal") return MipAxis::kSagittal;
    throw std::invalid_argument("unknown MIP axis '" + s + "'");
}

}  // namespace upl
