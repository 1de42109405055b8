#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "v6recon/address.hpp"

// Wire formats for probes and their responses. Packets are raw IPv6 (no
// link layer): a 40-byte IPv6 header followed by an ICMPv6 message.
//
// Probe (ICMPv6 offsets):
//   0  type 128      1  code 0      2  checksum
//   4  token (identifier = high 16 bits, sequence number = low 16 bits)
//   8  HMAC-SHA-256(key, 4 big-endian token bytes), 32 bytes
namespace v6recon::codec {

inline constexpr size_t kIpv6HeaderSize = 40;
inline constexpr size_t kIcmpHeaderSize = 8;
inline constexpr size_t kMacSize = 32;
inline constexpr size_t kProbeSize = kIpv6HeaderSize + kIcmpHeaderSize + kMacSize;  // 80
inline constexpr size_t kAuthTrailerSize = kIcmpHeaderSize + kMacSize;              // 40
inline constexpr uint8_t kNextHeaderIcmpv6 = 58;

inline constexpr uint8_t kEchoRequest = 128;
inline constexpr uint8_t kEchoReply = 129;
inline constexpr uint8_t kDestinationUnreachable = 1;
inline constexpr uint8_t kPacketTooBig = 2;
inline constexpr uint8_t kTimeExceeded = 3;
inline constexpr uint8_t kParameterProblem = 4;

using Packet = std::vector<uint8_t>;
using ProbeBytes = std::array<uint8_t, kProbeSize>;
using Mac = std::array<uint8_t, kMacSize>;

/// 32-byte HMAC secret. Only its fingerprint ever leaves the process.
class MacKey {
public:
    MacKey() = default;
    explicit MacKey(const std::array<uint8_t, 32>& bytes) : bytes_{bytes} {}

    /// Exactly 64 hex digits; throws std::invalid_argument otherwise.
    static MacKey from_hex(std::string_view hex);
    static MacKey random();

    const std::array<uint8_t, 32>& bytes() const { return bytes_; }
    /// First 4 key bytes as hex.
    std::string fingerprint() const;

    bool operator==(const MacKey&) const = default;

private:
    std::array<uint8_t, 32> bytes_{};
};

/// HMAC-SHA-256 over 4-byte tokens with the key schedule precomputed.
/// const member functions are safe to call from several threads.
class TokenAuthenticator {
public:
    explicit TokenAuthenticator(const MacKey& key);
    ~TokenAuthenticator();
    TokenAuthenticator(TokenAuthenticator&&) noexcept;
    TokenAuthenticator& operator=(TokenAuthenticator&&) noexcept;
    TokenAuthenticator(const TokenAuthenticator&) = delete;
    TokenAuthenticator& operator=(const TokenAuthenticator&) = delete;

    Mac mac(uint32_t token) const;
    Mac mac(std::span<const uint8_t> message) const;
    /// Constant-time check of a trailing token + MAC.
    bool verify(std::span<const uint8_t, 4> token, std::span<const uint8_t, kMacSize> mac) const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

uint16_t load_be16(std::span<const uint8_t> p, size_t off);
uint32_t load_be32(std::span<const uint8_t> p, size_t off);
void store_be16(std::span<uint8_t> p, size_t off, uint16_t v);
void store_be32(std::span<uint8_t> p, size_t off, uint32_t v);

/// Ones'-complement checksum over the IPv6 pseudo-header and `icmp`. The
/// checksum field inside `icmp` is included as-is, so zero it first.
uint16_t icmpv6_checksum(Address128 src, Address128 dst, std::span<const uint8_t> icmp);
/// True when the ones'-complement sum including the stored checksum is 0xFFFF.
bool icmpv6_checksum_ok(Address128 src, Address128 dst, std::span<const uint8_t> icmp);

/// Writes an IPv6 header with zero traffic class and flow label.
void write_ipv6_header(std::span<uint8_t> out, uint16_t payload_length, uint8_t hop_limit,
                       Address128 src, Address128 dst);
/// Recomputes the ICMPv6 checksum of a full IPv6 packet in place.
void fix_icmpv6_checksum(std::span<uint8_t> packet);

ProbeBytes build_probe(Address128 src, Address128 dst, uint8_t hop_limit, uint32_t token,
                       const TokenAuthenticator& auth);
ProbeBytes build_probe(Address128 src, Address128 dst, uint8_t hop_limit, uint32_t token,
                       const MacKey& key);

/// Echo reply for `request` as a responder would send it: type 129, addresses
/// swapped (source = `responder`, or the request's destination), fresh checksum.
Packet build_echo_reply(std::span<const uint8_t> request, std::optional<Address128> responder,
                        uint8_t hop_limit);

/// ICMPv6 error of type 1..4 carrying `invoking_packet` unmodified, sent from
/// `responder` to the invoking packet's source.
Packet build_error_response(uint8_t err_type, uint8_t code, uint32_t fourth_field,
                            Address128 responder, std::span<const uint8_t> invoking_packet,
                            uint8_t hop_limit);

class NegativeDistance : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// sent - embedded. Routers differ in whether the quoted packet carries hop
/// limit 1 or 0 on expiry, so the estimate is +-1.
int estimate_distance(int sent_hop_limit, int embedded_hop_limit);

struct ParsedResponse {
    uint32_t token = 0;
    Address128 target;
    Address128 responder;
    uint8_t icmp_type = 0;
    uint8_t icmp_code = 0;
    std::optional<int> distance;
    bool operator==(const ParsedResponse&) const = default;
};

struct BadMac {};

enum class FailureReason {
    outer_malformed,
    unexpected_type,
    bad_checksum,
    truncated,
    embedded_bad_version,
    embedded_payload_too_short,
    embedded_not_icmpv6,
    embedded_source_mismatch,
    embedded_dest_mismatch,
    embedded_not_echo_request,
    embedded_hop_limit_above_sent,
    unknown_token,
};

std::string_view to_string(FailureReason reason);

struct ParseFailure {
    FailureReason reason;
    Packet raw;
    /// Reason plus hex dump, for logs.
    std::string describe() const;
};

using Verdict = std::variant<ParsedResponse, BadMac, ParseFailure>;

/// Maps a token to the target its probe was sent to; nullopt for tokens the
/// scan never issued.
using TargetLookup = std::function<std::optional<Address128>(uint32_t token)>;

/// Validates a received packet: MAC over the trailing 40 bytes first, then
/// the echo-reply or error-message parse.
Verdict verify_and_extract(std::span<const uint8_t> packet, const TokenAuthenticator& auth,
                           uint8_t sent_hop_limit, Address128 scan_src,
                           const TargetLookup& expected_target_of);
Verdict verify_and_extract(std::span<const uint8_t> packet, const MacKey& key,
                           uint8_t sent_hop_limit, Address128 scan_src,
                           const TargetLookup& expected_target_of);

std::string to_hex(std::span<const uint8_t> bytes);

}  // namespace v6recon::codec
