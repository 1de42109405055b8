#include "v6recon/codec.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

namespace v6recon::codec {

namespace {

using MdCtx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

MdCtx new_ctx() {
    MdCtx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx) {
        throw std::runtime_error("EVP_MD_CTX_new failed");
    }
    return ctx;
}

void check(int rc, const char* what) {
    if (rc != 1) {
        throw std::runtime_error(std::string("openssl: ") + what + " failed");
    }
}

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

uint32_t sum_words(std::span<const uint8_t> bytes, uint32_t acc) {
    size_t i = 0;
    for (; i + 1 < bytes.size(); i += 2) {
        acc += (uint32_t{bytes[i]} << 8) | bytes[i + 1];
        // Fold early so long payloads cannot overflow.
        if (acc & 0x80000000u) {
            acc = (acc & 0xffff) + (acc >> 16);
        }
    }
    if (i < bytes.size()) {
        acc += uint32_t{bytes[i]} << 8;
    }
    return acc;
}

uint32_t pseudo_header_sum(Address128 src, Address128 dst, size_t length) {
    auto s = src.to_bytes();
    auto d = dst.to_bytes();
    uint32_t acc = sum_words(s, 0);
    acc = sum_words(d, acc);
    acc += static_cast<uint32_t>(length >> 16) + static_cast<uint32_t>(length & 0xffff);
    acc += kNextHeaderIcmpv6;
    return acc;
}

uint16_t fold(uint32_t acc) {
    while (acc >> 16) {
        acc = (acc & 0xffff) + (acc >> 16);
    }
    return static_cast<uint16_t>(acc);
}

Address128 address_at(std::span<const uint8_t> p, size_t off) {
    return Address128::from_bytes(p.subspan(off).first<16>());
}

}  // namespace

// --- key ------------------------------------------------------------------

MacKey MacKey::from_hex(std::string_view hex) {
    if (hex.size() != 64) {
        throw std::invalid_argument("MAC key must be 64 hex digits, got " +
                                    std::to_string(hex.size()));
    }
    std::array<uint8_t, 32> bytes{};
    for (size_t i = 0; i < 32; ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw std::invalid_argument("MAC key contains a non-hex digit");
        }
        bytes[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return MacKey{bytes};
}

MacKey MacKey::random() {
    std::array<uint8_t, 32> bytes{};
    check(RAND_bytes(bytes.data(), static_cast<int>(bytes.size())), "RAND_bytes");
    return MacKey{bytes};
}

std::string MacKey::fingerprint() const { return to_hex(std::span(bytes_).first(4)); }

// --- HMAC -----------------------------------------------------------------

struct TokenAuthenticator::State {
    MdCtx inner = new_ctx();  // SHA-256 state after absorbing key ^ ipad
    MdCtx outer = new_ctx();  // SHA-256 state after absorbing key ^ opad
};

TokenAuthenticator::TokenAuthenticator(const MacKey& key) : state_{std::make_unique<State>()} {
    // Keys of at most one block (64 bytes) are zero-padded, never hashed.
    std::array<uint8_t, 64> ipad{};
    std::array<uint8_t, 64> opad{};
    for (size_t i = 0; i < 64; ++i) {
        uint8_t k = i < key.bytes().size() ? key.bytes()[i] : 0;
        ipad[i] = k ^ 0x36;
        opad[i] = k ^ 0x5c;
    }
    check(EVP_DigestInit_ex(state_->inner.get(), EVP_sha256(), nullptr), "DigestInit");
    check(EVP_DigestUpdate(state_->inner.get(), ipad.data(), ipad.size()), "DigestUpdate");
    check(EVP_DigestInit_ex(state_->outer.get(), EVP_sha256(), nullptr), "DigestInit");
    check(EVP_DigestUpdate(state_->outer.get(), opad.data(), opad.size()), "DigestUpdate");
    OPENSSL_cleanse(ipad.data(), ipad.size());
    OPENSSL_cleanse(opad.data(), opad.size());
}

TokenAuthenticator::~TokenAuthenticator() = default;
TokenAuthenticator::TokenAuthenticator(TokenAuthenticator&&) noexcept = default;
TokenAuthenticator& TokenAuthenticator::operator=(TokenAuthenticator&&) noexcept = default;

Mac TokenAuthenticator::mac(std::span<const uint8_t> message) const {
    thread_local MdCtx scratch = new_ctx();
    Mac inner_hash{};
    Mac out{};
    unsigned len = 0;
    check(EVP_MD_CTX_copy_ex(scratch.get(), state_->inner.get()), "MD_CTX_copy");
    check(EVP_DigestUpdate(scratch.get(), message.data(), message.size()), "DigestUpdate");
    check(EVP_DigestFinal_ex(scratch.get(), inner_hash.data(), &len), "DigestFinal");
    check(EVP_MD_CTX_copy_ex(scratch.get(), state_->outer.get()), "MD_CTX_copy");
    check(EVP_DigestUpdate(scratch.get(), inner_hash.data(), inner_hash.size()), "DigestUpdate");
    check(EVP_DigestFinal_ex(scratch.get(), out.data(), &len), "DigestFinal");
    return out;
}

Mac TokenAuthenticator::mac(uint32_t token) const {
    std::array<uint8_t, 4> be{};
    store_be32(be, 0, token);
    return mac(std::span<const uint8_t>(be));
}

bool TokenAuthenticator::verify(std::span<const uint8_t, 4> token,
                                std::span<const uint8_t, kMacSize> mac_bytes) const {
    Mac expected = mac(std::span<const uint8_t>(token));
    return CRYPTO_memcmp(expected.data(), mac_bytes.data(), kMacSize) == 0;
}

// --- byte helpers -----------------------------------------------------------

uint16_t load_be16(std::span<const uint8_t> p, size_t off) {
    return static_cast<uint16_t>((p[off] << 8) | p[off + 1]);
}

uint32_t load_be32(std::span<const uint8_t> p, size_t off) {
    return (uint32_t{p[off]} << 24) | (uint32_t{p[off + 1]} << 16) |
           (uint32_t{p[off + 2]} << 8) | p[off + 3];
}

void store_be16(std::span<uint8_t> p, size_t off, uint16_t v) {
    p[off] = static_cast<uint8_t>(v >> 8);
    p[off + 1] = static_cast<uint8_t>(v);
}

void store_be32(std::span<uint8_t> p, size_t off, uint32_t v) {
    p[off] = static_cast<uint8_t>(v >> 24);
    p[off + 1] = static_cast<uint8_t>(v >> 16);
    p[off + 2] = static_cast<uint8_t>(v >> 8);
    p[off + 3] = static_cast<uint8_t>(v);
}

std::string to_hex(std::span<const uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out += kDigits[b >> 4];
        out += kDigits[b & 0xf];
    }
    return out;
}

// --- checksum ---------------------------------------------------------------

uint16_t icmpv6_checksum(Address128 src, Address128 dst, std::span<const uint8_t> icmp) {
    uint32_t acc = sum_words(icmp, pseudo_header_sum(src, dst, icmp.size()));
    return static_cast<uint16_t>(~fold(acc));
}

bool icmpv6_checksum_ok(Address128 src, Address128 dst, std::span<const uint8_t> icmp) {
    uint32_t acc = sum_words(icmp, pseudo_header_sum(src, dst, icmp.size()));
    return fold(acc) == 0xffff;
}

void write_ipv6_header(std::span<uint8_t> out, uint16_t payload_length, uint8_t hop_limit,
                       Address128 src, Address128 dst) {
    store_be32(out, 0, 0x60000000u);
    store_be16(out, 4, payload_length);
    out[6] = kNextHeaderIcmpv6;
    out[7] = hop_limit;
    src.write_bytes(out.subspan(8).first<16>());
    dst.write_bytes(out.subspan(24).first<16>());
}

void fix_icmpv6_checksum(std::span<uint8_t> packet) {
    auto icmp = packet.subspan(kIpv6HeaderSize);
    store_be16(icmp, 2, 0);
    store_be16(icmp, 2, icmpv6_checksum(address_at(packet, 8), address_at(packet, 24), icmp));
}

// --- builders ---------------------------------------------------------------

ProbeBytes build_probe(Address128 src, Address128 dst, uint8_t hop_limit, uint32_t token,
                       const TokenAuthenticator& auth) {
    ProbeBytes p{};
    write_ipv6_header(p, kIcmpHeaderSize + kMacSize, hop_limit, src, dst);
    std::span<uint8_t> icmp = std::span(p).subspan(kIpv6HeaderSize);
    icmp[0] = kEchoRequest;
    icmp[1] = 0;
    store_be32(icmp, 4, token);
    Mac mac = auth.mac(token);
    std::copy(mac.begin(), mac.end(), icmp.begin() + kIcmpHeaderSize);
    store_be16(icmp, 2, icmpv6_checksum(src, dst, icmp));
    return p;
}

ProbeBytes build_probe(Address128 src, Address128 dst, uint8_t hop_limit, uint32_t token,
                       const MacKey& key) {
    return build_probe(src, dst, hop_limit, token, TokenAuthenticator(key));
}

Packet build_echo_reply(std::span<const uint8_t> request, std::optional<Address128> responder,
                        uint8_t hop_limit) {
    if (request.size() < kIpv6HeaderSize + kIcmpHeaderSize) {
        throw std::invalid_argument("echo request too short");
    }
    Packet reply(request.begin(), request.end());
    Address128 orig_src = address_at(request, 8);
    Address128 orig_dst = address_at(request, 24);
    write_ipv6_header(reply, load_be16(request, 4), hop_limit, responder.value_or(orig_dst),
                      orig_src);
    reply[kIpv6HeaderSize] = kEchoReply;
    fix_icmpv6_checksum(reply);
    return reply;
}

Packet build_error_response(uint8_t err_type, uint8_t code, uint32_t fourth_field,
                            Address128 responder, std::span<const uint8_t> invoking_packet,
                            uint8_t hop_limit) {
    if (err_type < kDestinationUnreachable || err_type > kParameterProblem) {
        throw std::invalid_argument("ICMPv6 error type must be 1..4, got " +
                                    std::to_string(err_type));
    }
    if (invoking_packet.size() < kIpv6HeaderSize + kIcmpHeaderSize) {
        throw std::invalid_argument("invoking packet shorter than 48 bytes");
    }
    size_t icmp_len = kIcmpHeaderSize + invoking_packet.size();
    if (icmp_len > 0xffff) {
        throw std::invalid_argument("invoking packet too large");
    }
    Packet out(kIpv6HeaderSize + icmp_len, 0);
    write_ipv6_header(out, static_cast<uint16_t>(icmp_len), hop_limit, responder,
                      address_at(invoking_packet, 8));
    out[kIpv6HeaderSize] = err_type;
    out[kIpv6HeaderSize + 1] = code;
    store_be32(out, kIpv6HeaderSize + 4, fourth_field);
    std::copy(invoking_packet.begin(), invoking_packet.end(),
              out.begin() + kIpv6HeaderSize + kIcmpHeaderSize);
    fix_icmpv6_checksum(out);
    return out;
}

int estimate_distance(int sent_hop_limit, int embedded_hop_limit) {
    if (embedded_hop_limit > sent_hop_limit) {
        throw NegativeDistance("embedded hop limit " + std::to_string(embedded_hop_limit) +
                               " exceeds sent hop limit " + std::to_string(sent_hop_limit));
    }
    return sent_hop_limit - embedded_hop_limit;
}

// --- parsing ----------------------------------------------------------------

std::string_view to_string(FailureReason reason) {
    switch (reason) {
        case FailureReason::outer_malformed: return "outer_malformed";
        case FailureReason::unexpected_type: return "unexpected_type";
        case FailureReason::bad_checksum: return "bad_checksum";
        case FailureReason::truncated: return "truncated";
        case FailureReason::embedded_bad_version: return "embedded_bad_version";
        case FailureReason::embedded_payload_too_short: return "embedded_payload_too_short";
        case FailureReason::embedded_not_icmpv6: return "embedded_not_icmpv6";
        case FailureReason::embedded_source_mismatch: return "embedded_source_mismatch";
        case FailureReason::embedded_dest_mismatch: return "embedded_dest_mismatch";
        case FailureReason::embedded_not_echo_request: return "embedded_not_echo_request";
        case FailureReason::embedded_hop_limit_above_sent: return "embedded_hop_limit_above_sent";
        case FailureReason::unknown_token: return "unknown_token";
    }
    return "unknown";
}

std::string ParseFailure::describe() const {
    return std::string(to_string(reason)) + " " + to_hex(raw);
}

Verdict verify_and_extract(std::span<const uint8_t> packet, const TokenAuthenticator& auth,
                           uint8_t sent_hop_limit, Address128 scan_src,
                           const TargetLookup& expected_target_of) {
    if (packet.size() < kAuthTrailerSize) {
        return BadMac{};
    }
    auto trailer = packet.last<kAuthTrailerSize>();
    auto token_bytes = trailer.subspan<4, 4>();
    if (!auth.verify(token_bytes, trailer.subspan<8, kMacSize>())) {
        return BadMac{};
    }
    uint32_t token = load_be32(trailer, 4);

    auto fail = [&](FailureReason r) {
        return ParseFailure{r, Packet(packet.begin(), packet.end())};
    };

    if (packet.size() < kIpv6HeaderSize + kIcmpHeaderSize || (packet[0] >> 4) != 6 ||
        packet[6] != kNextHeaderIcmpv6) {
        return fail(FailureReason::outer_malformed);
    }
    auto icmp = packet.subspan(kIpv6HeaderSize);
    uint8_t type = icmp[0];
    uint8_t code = icmp[1];

    auto target = expected_target_of(token);

    if (type == kEchoReply && code == 0) {
        if (!target) {
            return fail(FailureReason::unknown_token);
        }
        return ParsedResponse{token, *target, address_at(packet, 8), type, code, std::nullopt};
    }
    if (type < kDestinationUnreachable || type > kParameterProblem) {
        return fail(FailureReason::unexpected_type);
    }
    if (!icmpv6_checksum_ok(address_at(packet, 8), address_at(packet, 24), icmp)) {
        return fail(FailureReason::bad_checksum);
    }

    // Embedded probe, offsets relative to the outer ICMPv6 header.
    if (icmp.size() < kIcmpHeaderSize + kIpv6HeaderSize + kIcmpHeaderSize) {
        return fail(FailureReason::truncated);
    }
    auto inner = icmp.subspan(kIcmpHeaderSize);
    if ((inner[0] >> 4) != 6) {
        return fail(FailureReason::embedded_bad_version);
    }
    if (load_be16(inner, 4) < kAuthTrailerSize) {
        return fail(FailureReason::embedded_payload_too_short);
    }
    if (inner[6] != kNextHeaderIcmpv6) {
        return fail(FailureReason::embedded_not_icmpv6);
    }
    uint8_t embedded_hop_limit = inner[7];
    if (address_at(inner, 8) != scan_src) {
        return fail(FailureReason::embedded_source_mismatch);
    }
    if (!target) {
        return fail(FailureReason::unknown_token);
    }
    if (address_at(inner, 24) != *target) {
        return fail(FailureReason::embedded_dest_mismatch);
    }
    auto inner_icmp = inner.subspan(kIpv6HeaderSize);
    if (inner_icmp[0] != kEchoRequest || inner_icmp[1] != 0) {
        return fail(FailureReason::embedded_not_echo_request);
    }
    if (embedded_hop_limit > sent_hop_limit) {
        return fail(FailureReason::embedded_hop_limit_above_sent);
    }
    return ParsedResponse{token,
                          *target,
                          address_at(packet, 8),
                          type,
                          code,
                          estimate_distance(sent_hop_limit, embedded_hop_limit)};
}

Verdict verify_and_extract(std::span<const uint8_t> packet, const MacKey& key,
                           uint8_t sent_hop_limit, Address128 scan_src,
                           const TargetLookup& expected_target_of) {
    return verify_and_extract(packet, TokenAuthenticator(key), sent_hop_limit, scan_src,
                              expected_target_of);
}

}  // namespace v6recon::codec
