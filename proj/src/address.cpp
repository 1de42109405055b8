#include "v6recon/address.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace v6recon {

namespace {

int hex_digit(char c) {
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    if (c >= 'A' && c <= 'F') {
        return c - 'A' + 10;
    }
    return -1;
}

// Parses colon-separated groups; returns false on any malformed group.
bool parse_groups(std::string_view text, std::vector<uint16_t>& groups) {
    if (text.empty()) {
        return true;
    }
    size_t start = 0;
    while (true) {
        size_t end = text.find(':', start);
        std::string_view group = text.substr(start, end == std::string_view::npos
                                                        ? std::string_view::npos
                                                        : end - start);
        if (group.empty() || group.size() > 4) {
            return false;
        }
        unsigned v = 0;
        for (char c : group) {
            int d = hex_digit(c);
            if (d < 0) {
                return false;
            }
            v = (v << 4) | static_cast<unsigned>(d);
        }
        groups.push_back(static_cast<uint16_t>(v));
        if (end == std::string_view::npos) {
            return true;
        }
        start = end + 1;
    }
}

const char* kHex = "0123456789abcdef";

}  // namespace

Address128 Address128::from_bytes(std::span<const uint8_t, 16> bytes) {
    u128 v = 0;
    for (uint8_t b : bytes) {
        v = (v << 8) | b;
    }
    return Address128{v};
}

Address128 Address128::parse(std::string_view text) {
    auto fail = [&](const char* why) {
        return MalformedAddress("malformed address '" + std::string(text) + "': " + why);
    };
    if (text.empty()) {
        throw fail("empty");
    }
    std::vector<uint16_t> head;
    std::vector<uint16_t> tail;
    size_t elision = text.find("::");
    if (elision != std::string_view::npos) {
        if (text.find("::", elision + 1) != std::string_view::npos) {
            throw fail("multiple '::'");
        }
        if (!parse_groups(text.substr(0, elision), head) ||
            !parse_groups(text.substr(elision + 2), tail)) {
            throw fail("bad group");
        }
        if (head.size() + tail.size() > 7) {
            throw fail("too many groups");
        }
    } else {
        if (!parse_groups(text, head)) {
            throw fail("bad group");
        }
        if (head.size() != 8) {
            throw fail("expected 8 groups");
        }
    }
    std::array<uint16_t, 8> groups{};
    std::copy(head.begin(), head.end(), groups.begin());
    std::copy(tail.begin(), tail.end(), groups.end() - static_cast<long>(tail.size()));
    u128 v = 0;
    for (uint16_t g : groups) {
        v = (v << 16) | g;
    }
    return Address128{v};
}

std::array<uint8_t, 16> Address128::to_bytes() const {
    std::array<uint8_t, 16> out{};
    write_bytes(out);
    return out;
}

void Address128::write_bytes(std::span<uint8_t, 16> out) const {
    for (int i = 0; i < 16; ++i) {
        out[static_cast<size_t>(i)] = static_cast<uint8_t>(value_ >> (120 - 8 * i));
    }
}

std::string Address128::to_string(Form form) const {
    std::array<uint16_t, 8> groups{};
    for (int i = 0; i < 8; ++i) {
        groups[static_cast<size_t>(i)] = static_cast<uint16_t>(value_ >> (112 - 16 * i));
    }
    std::string out;
    if (form == Form::exploded) {
        out.reserve(39);
        for (int i = 0; i < 8; ++i) {
            if (i > 0) {
                out += ':';
            }
            for (int shift = 12; shift >= 0; shift -= 4) {
                out += kHex[(groups[static_cast<size_t>(i)] >> shift) & 0xf];
            }
        }
        return out;
    }

    // Leftmost longest run of two or more zero groups.
    int best_start = -1;
    int best_len = 0;
    for (int i = 0; i < 8;) {
        if (groups[static_cast<size_t>(i)] != 0) {
            ++i;
            continue;
        }
        int j = i;
        while (j < 8 && groups[static_cast<size_t>(j)] == 0) {
            ++j;
        }
        if (j - i > best_len) {
            best_start = i;
            best_len = j - i;
        }
        i = j;
    }
    if (best_len < 2) {
        best_start = -1;  // a lone zero group is written out
    }

    auto append_group = [&](uint16_t g) {
        bool leading = true;
        for (int shift = 12; shift >= 0; shift -= 4) {
            unsigned d = (g >> shift) & 0xf;
            if (leading && d == 0 && shift > 0) {
                continue;
            }
            leading = false;
            out += kHex[d];
        }
    };

    for (int i = 0; i < 8; ++i) {
        if (i == best_start) {
            out += "::";
            i += best_len - 1;
            continue;
        }
        if (!out.empty() && out.back() != ':') {
            out += ':';
        }
        append_group(groups[static_cast<size_t>(i)]);
    }
    return out;
}

Prefix::Prefix(Address128 address, int length) : address_{address}, length_{length} {
    if (length < 0 || length > 128) {
        throw MalformedPrefix("prefix length out of range: " + std::to_string(length));
    }
    if ((address.value() & ~prefix_mask(length)) != 0) {
        throw NonzeroHostBits("host bits set in " + address.to_string() + "/" +
                              std::to_string(length));
    }
}

Prefix Prefix::truncate(Address128 address, int length) {
    if (length < 0 || length > 128) {
        throw MalformedPrefix("prefix length out of range: " + std::to_string(length));
    }
    return Prefix{Address128{address.value() & prefix_mask(length)}, length};
}

Prefix Prefix::parse(std::string_view text) {
    size_t slash = text.find('/');
    if (slash == std::string_view::npos) {
        throw MalformedPrefix("missing '/' in prefix '" + std::string(text) + "'");
    }
    std::string_view len_text = text.substr(slash + 1);
    if (len_text.empty() || len_text.size() > 3) {
        throw MalformedPrefix("bad prefix length in '" + std::string(text) + "'");
    }
    int length = 0;
    for (char c : len_text) {
        if (c < '0' || c > '9') {
            throw MalformedPrefix("bad prefix length in '" + std::string(text) + "'");
        }
        length = length * 10 + (c - '0');
    }
    if (length > 128) {
        throw MalformedPrefix("prefix length > 128 in '" + std::string(text) + "'");
    }
    Address128 addr;
    try {
        addr = Address128::parse(text.substr(0, slash));
    } catch (const MalformedAddress& e) {
        throw MalformedPrefix(e.what());
    }
    return Prefix{addr, length};
}

std::string Prefix::to_string() const {
    return address_.to_string() + "/" + std::to_string(length_);
}

int common_prefix_length(Address128 a, Address128 b) {
    u128 diff = a.value() ^ b.value();
    if (diff == 0) {
        return 128;
    }
    uint64_t hi = static_cast<uint64_t>(diff >> 64);
    if (hi != 0) {
        return std::countl_zero(hi);
    }
    return 64 + std::countl_zero(static_cast<uint64_t>(diff));
}

Prefix longest_common_prefix(std::span<const Address128> addresses) {
    if (addresses.empty()) {
        throw EmptySet("longest_common_prefix of empty set");
    }
    int length = 128;
    Address128 first = addresses.front();
    for (Address128 a : addresses.subspan(1)) {
        length = std::min(length, common_prefix_length(first, a));
        if (length == 0) {
            break;
        }
    }
    return Prefix::truncate(first, length);
}

namespace {

template <typename T, typename ParseFn>
std::vector<T> read_lines(std::istream& in, ParseFn parse) {
    std::vector<T> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) {
            continue;
        }
        size_t e = line.find_last_not_of(" \t\r");
        std::string_view token(line.data() + b, e - b + 1);
        try {
            out.push_back(parse(token));
        } catch (const ParseError& err) {
            throw ParseError("line " + std::to_string(lineno) + ": " + err.what());
        }
    }
    return out;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return in;
}

}  // namespace

std::vector<Address128> read_address_list(std::istream& in) {
    return read_lines<Address128>(in, [](std::string_view t) { return Address128::parse(t); });
}

std::vector<Address128> read_address_list_file(const std::string& path) {
    auto in = open_or_throw(path);
    return read_address_list(in);
}

std::vector<Prefix> read_prefix_list(std::istream& in) {
    return read_lines<Prefix>(in, [](std::string_view t) { return Prefix::parse(t); });
}

std::vector<Prefix> read_prefix_list_file(const std::string& path) {
    auto in = open_or_throw(path);
    return read_prefix_list(in);
}

std::ostream& operator<<(std::ostream& os, Address128 a) { return os << a.to_string(); }
std::ostream& operator<<(std::ostream& os, const Prefix& p) { return os << p.to_string(); }

u128 parse_hex_u128(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) {
        hex.remove_prefix(2);
    }
    if (hex.size() > 32) {
        throw ParseError("hex value longer than 128 bits: " + std::string(hex));
    }
    u128 v = 0;
    for (char c : hex) {
        int d = hex_digit(c);
        if (d < 0) {
            throw ParseError("bad hex digit in '" + std::string(hex) + "'");
        }
        v = (v << 4) | static_cast<unsigned>(d);
    }
    return v;
}

std::string hex_u128(u128 value) {
    if (value == 0) {
        return "0";
    }
    std::string out;
    while (value != 0) {
        out += kHex[static_cast<unsigned>(value & 0xf)];
        value >>= 4;
    }
    return {out.rbegin(), out.rend()};
}

}  // namespace v6recon
