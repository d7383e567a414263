#include "upl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace upl {

namespace {

constexpr const char* kMagic = "UPLCKPT1";

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw std::runtime_error("checkpoint: truncated payload");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

std::string checkpoint_bytes(const std::vector<NamedTensor<float>>& tensors) {
    std::string out = kMagic;
    for (const auto& t : tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        for (auto d : t.value.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.value.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    return out;
}

std::vector<NamedTensor<float>> checkpoint_from_bytes(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 8, kMagic) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    std::vector<NamedTensor<float>> out;
    std::size_t pos = 8;
    while (pos < bytes.size()) {
        const std::uint32_t name_len = get_u32(bytes, pos);
        if (pos + name_len > bytes.size()) throw std::runtime_error("checkpoint: truncated name");
        NamedTensor<float> t;
        t.name = bytes.substr(pos, name_len);
        pos += name_len;
        Shape5 shape;
        for (auto& d : shape) d = get_u32(bytes, pos);
        t.value = Tensor5f(shape);
        for (auto& v : t.value.data) {
            const std::uint32_t bits = get_u32(bytes, pos);
            std::memcpy(&v, &bits, 4);
        }
        out.push_back(std::move(t));
    }
    return out;
}

void save_checkpoint(const std::vector<NamedTensor<float>>& tensors, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    const std::string bytes = checkpoint_bytes(tensors);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to '" + path + "'");
}

std::vector<NamedTensor<float>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return checkpoint_from_bytes(os.str());
}

}  // namespace upl
