#include "v6recon/zip.hpp"

#include <cstdint>
#include <cstring>

#include <zlib.h>

namespace v6recon::zip {

namespace {

constexpr uint32_t kLocalHeaderSig = 0x04034b50;
constexpr uint32_t kCentralHeaderSig = 0x02014b50;
constexpr uint32_t kEndOfCentralSig = 0x06054b50;
constexpr uint16_t kDosDate1980 = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr uint16_t kVersion = 20;

void put16(std::string& out, uint16_t v) {
    out += static_cast<char>(v & 0xff);
    out += static_cast<char>(v >> 8);
}

void put32(std::string& out, uint32_t v) {
    put16(out, static_cast<uint16_t>(v & 0xffff));
    put16(out, static_cast<uint16_t>(v >> 16));
}

uint16_t get16(const std::string& in, size_t off) {
    if (off + 2 > in.size()) {
        throw ZipError("truncated archive");
    }
    return static_cast<uint16_t>(static_cast<uint8_t>(in[off]) |
                                 (static_cast<uint8_t>(in[off + 1]) << 8));
}

uint32_t get32(const std::string& in, size_t off) {
    return get16(in, off) | (uint32_t{get16(in, off + 2)} << 16);
}

uint32_t crc_of(const std::string& data) {
    return static_cast<uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::string inflate_raw(const std::string& compressed, size_t expected_size) {
    std::string out(expected_size, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
        throw ZipError("inflateInit2 failed");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size) {
        throw ZipError("corrupt deflate stream");
    }
    return out;
}

}  // namespace

std::string encode(const std::vector<Entry>& entries) {
    std::string out;
    std::string central;
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff || e.data.size() > 0xffffffffu) {
            throw ZipError("member too large: " + e.name);
        }
        uint32_t crc = crc_of(e.data);
        auto offset = static_cast<uint32_t>(out.size());
        auto size = static_cast<uint32_t>(e.data.size());
        auto name_len = static_cast<uint16_t>(e.name.size());

        put32(out, kLocalHeaderSig);
        put16(out, kVersion);
        put16(out, 0);  // flags
        put16(out, 0);  // stored
        put16(out, 0);  // time
        put16(out, kDosDate1980);
        put32(out, crc);
        put32(out, size);
        put32(out, size);
        put16(out, name_len);
        put16(out, 0);  // extra
        out += e.name;
        out += e.data;

        put32(central, kCentralHeaderSig);
        put16(central, kVersion);  // made by
        put16(central, kVersion);  // needed
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, kDosDate1980);
        put32(central, crc);
        put32(central, size);
        put32(central, size);
        put16(central, name_len);
        put16(central, 0);  // extra
        put16(central, 0);  // comment
        put16(central, 0);  // disk
        put16(central, 0);  // internal attributes
        put32(central, 0);  // external attributes
        put32(central, offset);
        central += e.name;
    }
    if (entries.size() > 0xffff) {
        throw ZipError("too many members");
    }
    auto central_offset = static_cast<uint32_t>(out.size());
    out += central;
    put32(out, kEndOfCentralSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<uint16_t>(entries.size()));
    put16(out, static_cast<uint16_t>(entries.size()));
    put32(out, static_cast<uint32_t>(central.size()));
    put32(out, central_offset);
    put16(out, 0);
    return out;
}

std::vector<Entry> decode(const std::string& archive) {
    if (archive.size() < 22) {
        throw ZipError("not a ZIP archive");
    }
    // The end record sits in the last 22 + 65535 bytes.
    size_t eocd = std::string::npos;
    size_t floor = archive.size() > 22 + 0xffff ? archive.size() - 22 - 0xffff : 0;
    for (size_t pos = archive.size() - 22 + 1; pos-- > floor;) {
        if (get32(archive, pos) == kEndOfCentralSig) {
            eocd = pos;
            break;
        }
    }
    if (eocd == std::string::npos) {
        throw ZipError("end of central directory not found");
    }
    uint16_t count = get16(archive, eocd + 10);
    size_t pos = get32(archive, eocd + 16);

    std::vector<Entry> entries;
    entries.reserve(count);
    for (uint16_t i = 0; i < count; ++i) {
        if (get32(archive, pos) != kCentralHeaderSig) {
            throw ZipError("bad central directory entry");
        }
        uint16_t flags = get16(archive, pos + 8);
        uint16_t method = get16(archive, pos + 10);
        uint32_t crc = get32(archive, pos + 16);
        uint32_t csize = get32(archive, pos + 20);
        uint32_t usize = get32(archive, pos + 24);
        uint16_t name_len = get16(archive, pos + 28);
        uint16_t extra_len = get16(archive, pos + 30);
        uint16_t comment_len = get16(archive, pos + 32);
        uint32_t local = get32(archive, pos + 42);
        if (pos + 46 + name_len > archive.size()) {
            throw ZipError("truncated central directory");
        }
        std::string name = archive.substr(pos + 46, name_len);
        pos += 46 + name_len + extra_len + comment_len;

        if (flags & 0x1) {
            throw ZipError("encrypted member " + name);
        }
        if (get32(archive, local) != kLocalHeaderSig) {
            throw ZipError("bad local header for " + name);
        }
        size_t data_off = local + 30 + get16(archive, local + 26) + get16(archive, local + 28);
        if (data_off + csize > archive.size()) {
            throw ZipError("truncated member " + name);
        }
        std::string raw = archive.substr(data_off, csize);
        std::string data;
        if (method == 0) {
            data = std::move(raw);
        } else if (method == 8) {
            data = inflate_raw(raw, usize);
        } else {
            throw ZipError("unsupported compression method " + std::to_string(method));
        }
        if (crc_of(data) != crc) {
            throw ZipError("CRC mismatch in " + name);
        }
        if (name.empty() || name.back() == '/') {
            continue;  // directory entry
        }
        entries.push_back({std::move(name), std::move(data)});
    }
    return entries;
}

}  // namespace v6recon::zip
