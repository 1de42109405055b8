#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace v6recon {

using u128 = unsigned __int128;

/// Base class for input errors raised while parsing text forms.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedAddress : public ParseError {
public:
    using ParseError::ParseError;
};

class MalformedPrefix : public ParseError {
public:
    using ParseError::ParseError;
};

class NonzeroHostBits : public ParseError {
public:
    using ParseError::ParseError;
};

class EmptySet : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An IPv6 address held as a 128-bit unsigned integer. Bit 1 is the most
/// significant bit, so the hex value reads like the exploded text form.
class Address128 {
public:
    constexpr Address128() = default;
    constexpr explicit Address128(u128 value) : value_{value} {}
    static constexpr Address128 from_halves(uint64_t hi, uint64_t lo) {
        return Address128{(u128{hi} << 64) | lo};
    }
    static Address128 from_bytes(std::span<const uint8_t, 16> bytes);

    static Address128 parse(std::string_view text);

    constexpr u128 value() const { return value_; }
    constexpr uint64_t hi() const { return static_cast<uint64_t>(value_ >> 64); }
    constexpr uint64_t lo() const { return static_cast<uint64_t>(value_); }
    constexpr uint64_t iid() const { return lo(); }

    /// 1-based bit access, bit 1 = MSB.
    constexpr bool bit(int position) const {
        return ((value_ >> (128 - position)) & 1) != 0;
    }

    std::array<uint8_t, 16> to_bytes() const;
    void write_bytes(std::span<uint8_t, 16> out) const;

    enum class Form { compressed, exploded };
    std::string to_string(Form form = Form::compressed) const;

    constexpr auto operator<=>(const Address128&) const = default;

private:
    u128 value_ = 0;
};

/// Mask with the top `length` bits set.
constexpr u128 prefix_mask(int length) {
    if (length <= 0) {
        return 0;
    }
    if (length >= 128) {
        return ~u128{0};
    }
    return ~u128{0} << (128 - length);
}

/// A CIDR prefix. Host bits past `length` are always zero.
class Prefix {
public:
    constexpr Prefix() = default;
    /// Throws NonzeroHostBits if `address` has bits set past `length`.
    Prefix(Address128 address, int length);

    /// Lenient constructor: clears host bits instead of rejecting them.
    static Prefix truncate(Address128 address, int length);
    static Prefix parse(std::string_view text);

    constexpr Address128 address() const { return address_; }
    constexpr int length() const { return length_; }

    constexpr bool contains(Address128 a) const {
        return (a.value() & prefix_mask(length_)) == address_.value();
    }
    constexpr bool contains(const Prefix& other) const {
        return other.length_ >= length_ && contains(other.address_);
    }

    Address128 first() const { return address_; }
    Address128 last() const {
        return Address128{address_.value() | ~prefix_mask(length_)};
    }

    std::string to_string() const;

    constexpr auto operator<=>(const Prefix&) const = default;

private:
    Address128 address_{};
    int length_ = 0;
};

inline Address128 parse_address(std::string_view text) { return Address128::parse(text); }
inline std::string format_address(Address128 a,
                                  Address128::Form form = Address128::Form::compressed) {
    return a.to_string(form);
}
inline Prefix parse_prefix(std::string_view text) { return Prefix::parse(text); }
inline bool prefix_contains(const Prefix& p, Address128 a) { return p.contains(a); }

/// Most specific prefix containing every address. Throws EmptySet.
Prefix longest_common_prefix(std::span<const Address128> addresses);

/// Number of leading bits two addresses share (0..128).
int common_prefix_length(Address128 a, Address128 b);

/// Reads a plain-text address list: one address per line, '#' starts a comment,
/// blank lines skipped. Parse errors carry the line number.
std::vector<Address128> read_address_list(std::istream& in);
std::vector<Address128> read_address_list_file(const std::string& path);

/// Same conventions as the address list, one CIDR prefix per line.
std::vector<Prefix> read_prefix_list(std::istream& in);
std::vector<Prefix> read_prefix_list_file(const std::string& path);

std::ostream& operator<<(std::ostream& os, Address128 a);
std::ostream& operator<<(std::ostream& os, const Prefix& p);

/// Parses an unsigned 128-bit integer from hex digits (no prefix, at most 32 digits).
u128 parse_hex_u128(std::string_view hex);
std::string hex_u128(u128 value);

}  // namespace v6recon

template <>
struct std::hash<v6recon::Address128> {
    size_t operator()(v6recon::Address128 a) const noexcept {
        uint64_t h = a.hi() * 0x9e3779b97f4a7c15ULL;
        h ^= a.lo() + 0x7f4a7c159e3779b9ULL + (h << 6) + (h >> 2);
        return static_cast<size_t>(h);
    }
};
