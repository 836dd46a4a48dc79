#include "copdflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "copdflow/errors.hpp"

namespace copdflow {

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    const std::string& path;
    std::size_t pos = 0;

    void need(std::size_t n) {
        if (pos + n > buf.size()) throw ParseError(path + ": truncated checkpoint");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::string buf;
    buf += "CFN1";
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > std::numeric_limits<std::uint16_t>::max())
            throw ContractError("checkpoint: tensor name too long");
        if (t.shape.size() > 255) throw ContractError("checkpoint: rank too large");
        put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
        buf += t.name;
        buf.push_back(static_cast<char>(t.shape.size()));
        std::int64_t numel = 1;
        for (auto d : t.shape) {
            put_u32(buf, static_cast<std::uint32_t>(d));
            numel *= d;
        }
        if (numel != static_cast<std::int64_t>(t.data.size()))
            throw ContractError("checkpoint: data/shape mismatch for '" + t.name + "'");
        static_assert(sizeof(float) == 4);
        const std::size_t off = buf.size();
        buf.resize(off + t.data.size() * 4);
        std::memcpy(buf.data() + off, t.data.data(), t.data.size() * 4);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, path};
    r.need(4);
    if (buf.compare(0, 4, "CFN1") != 0)
        throw MissingArtifactError(path + ": bad checkpoint magic");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t ti = 0; ti < count; ++ti) {
        NamedTensor t;
        const std::uint16_t name_len = r.u16();
        r.need(name_len);
        t.name.assign(buf, r.pos, name_len);
        r.pos += name_len;
        const std::uint8_t rank = r.u8();
        std::int64_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim == 0) throw ParseError(path + ": zero dimension in '" + t.name + "'");
            t.shape.push_back(dim);
            numel *= dim;
        }
        r.need(static_cast<std::size_t>(numel) * 4);
        t.data.resize(static_cast<std::size_t>(numel));
        std::memcpy(t.data.data(), buf.data() + r.pos, static_cast<std::size_t>(numel) * 4);
        r.pos += static_cast<std::size_t>(numel) * 4;
        out.push_back(std::move(t));
    }
    if (r.pos != buf.size()) throw ParseError(path + ": trailing bytes in checkpoint");
    return out;
}

}  // namespace copdflow
