#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "oracle/oracles.hpp"
#include "oracle/sha256_oracle.hpp"
#include "v6recon/codec.hpp"
#include "v6recon/random.hpp"

using namespace v6recon;
using namespace v6recon::codec;

namespace {

const Address128 kSrc = Address128::parse("2001:db8::1");
const Address128 kDst = Address128::parse("2003:c0:1:2::");
const Address128 kRouter = Address128::parse("2003:0:1::9");

MacKey test_key() {
    std::array<uint8_t, 32> k{};
    for (int i = 0; i < 32; ++i) {
        k[i] = static_cast<uint8_t>(i * 7 + 1);
    }
    return MacKey(k);
}

TargetLookup lookup_for(uint32_t token, Address128 target) {
    return [=](uint32_t t) -> std::optional<Address128> {
        if (t == token) return target;
        return std::nullopt;
    };
}

std::string read_golden(const std::string& name) {
    std::ifstream in(std::string(V6RECON_SOURCE_DIR) + "/tests/golden/" + name);
    REQUIRE(in.good());
    std::string s;
    std::getline(in, s);
    return s;
}

}  // namespace

TEST_CASE("SHA-256 oracle reproduces FIPS 180 examples") {
    std::string abc = "abc";
    auto d = oracle::sha256({reinterpret_cast<const uint8_t*>(abc.data()), abc.size()});
    CHECK(oracle::to_hex(d) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    auto empty = oracle::sha256({});
    CHECK(oracle::to_hex(empty) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("HMAC oracle reproduces RFC 4231 vectors") {
    struct Vector {
        std::string key, data, mac;
    };
    auto repeat = [](const std::string& byte, int n) {
        std::string s;
        for (int i = 0; i < n; ++i) s += byte;
        return s;
    };
    std::vector<Vector> vectors{
        {repeat("0b", 20), "4869205468657265",
         "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"},
        {"4a656665", "7768617420646f2079612077616e7420666f72206e6f7468696e673f",
         "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"},
        {repeat("aa", 20), repeat("dd", 50),
         "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"},
        {"0102030405060708090a0b0c0d0e0f10111213141516171819", repeat("cd", 50),
         "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"},
        {repeat("aa", 131),
         "54657374205573696e67204c6172676572205468616e20426c6f636b2d53697a65204b6579202d2048617368204b6579204669727374",
         "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"},
    };
    for (const auto& v : vectors) {
        auto key = oracle::from_hex(v.key);
        auto data = oracle::from_hex(v.data);
        CHECK(oracle::to_hex(oracle::hmac_sha256(key, data)) == v.mac);
    }
}

TEST_CASE("token MAC matches the oracle") {
    MacKey zero;
    TokenAuthenticator auth(zero);
    std::array<uint8_t, 4> token0{};
    auto expected = oracle::hmac_sha256(zero.bytes(), token0);
    CHECK(auth.mac(0) == expected);

    SplitMix64 rng(99);
    for (int i = 0; i < 200; ++i) {
        std::array<uint8_t, 32> kb{};
        for (auto& b : kb) b = static_cast<uint8_t>(rng.next());
        MacKey key(kb);
        TokenAuthenticator a(key);
        uint32_t token = static_cast<uint32_t>(rng.next());
        std::array<uint8_t, 4> be{static_cast<uint8_t>(token >> 24), static_cast<uint8_t>(token >> 16),
                                  static_cast<uint8_t>(token >> 8), static_cast<uint8_t>(token)};
        REQUIRE(a.mac(token) == oracle::hmac_sha256(kb, be));
    }
}

TEST_CASE("MacKey hex and fingerprint") {
    auto k = MacKey::from_hex(std::string(62, '0') + "ff");
    CHECK(k.bytes()[31] == 0xff);
    CHECK(k.fingerprint() == "00000000");
    CHECK(test_key().fingerprint() == "01080f16");
    CHECK_THROWS_AS(MacKey::from_hex("abcd"), std::invalid_argument);
    CHECK_THROWS_AS(MacKey::from_hex(std::string(64, 'g')), std::invalid_argument);
    CHECK(MacKey::random() != MacKey::random());
}

TEST_CASE("checksum agrees with the byte-level oracle") {
    std::vector<uint8_t> echo_header{128, 0, 0, 0, 0, 0, 0, 0};
    auto zero = Address128::parse("::");
    auto one = Address128::parse("::1");
    CHECK(icmpv6_checksum(zero, one, echo_header) == oracle::checksum(zero, one, echo_header));
    // Sum of pseudo header (len 8, nh 58, ::1) and 0x8000.
    CHECK(icmpv6_checksum(zero, one, echo_header) == static_cast<uint16_t>(~(0x0001 + 0x0008 + 0x003a + 0x8000)));

    SplitMix64 rng(5);
    for (int i = 0; i < 500; ++i) {
        std::vector<uint8_t> payload(4 + rng.below(100));
        for (auto& b : payload) b = static_cast<uint8_t>(rng.next());
        payload[2] = payload[3] = 0;
        auto s = Address128::from_halves(rng.next(), rng.next());
        auto d = Address128::from_halves(rng.next(), rng.next());
        uint16_t c = icmpv6_checksum(s, d, payload);
        REQUIRE(c == oracle::checksum(s, d, payload));
        store_be16(payload, 2, c);
        REQUIRE(icmpv6_checksum_ok(s, d, payload));
        size_t byte = rng.below(payload.size());
        payload[byte] ^= static_cast<uint8_t>(1u << rng.below(8));
        CHECK_FALSE(icmpv6_checksum_ok(s, d, payload));
    }
}

TEST_CASE("probe layout") {
    auto key = test_key();
    auto p = build_probe(kSrc, kDst, 64, 0x80000005, key);
    CHECK(p.size() == 80);
    CHECK(p[0] == 0x60);
    CHECK(load_be16(p, 4) == 40);
    CHECK(p[6] == 58);
    CHECK(p[7] == 64);
    CHECK(Address128::from_bytes(std::span(p).subspan<8, 16>()) == kSrc);
    CHECK(Address128::from_bytes(std::span(p).subspan<24, 16>()) == kDst);
    CHECK(p[40] == 128);
    CHECK(p[41] == 0);
    CHECK(p[44] == 0x80);
    CHECK(p[45] == 0x00);
    CHECK(p[46] == 0x00);
    CHECK(p[47] == 0x05);
    std::array<uint8_t, 4> token_be{0x80, 0, 0, 5};
    auto mac = oracle::hmac_sha256(key.bytes(), token_be);
    CHECK(std::equal(mac.begin(), mac.end(), p.begin() + 48));
    CHECK(icmpv6_checksum_ok(kSrc, kDst, std::span(p).subspan(40)));
    CHECK(build_probe(kSrc, kDst, 64, 0x80000005, key) == p);
}

TEST_CASE("probe assembled independently matches byte for byte") {
    MacKey zero;
    auto p = build_probe(kSrc, kDst, 64, 0, zero);
    std::vector<uint8_t> expected{0x60, 0, 0, 0, 0, 40, 58, 64};
    auto s = kSrc.to_bytes();
    auto d = kDst.to_bytes();
    expected.insert(expected.end(), s.begin(), s.end());
    expected.insert(expected.end(), d.begin(), d.end());
    std::vector<uint8_t> icmp{128, 0, 0, 0, 0, 0, 0, 0};
    std::array<uint8_t, 4> token0{};
    auto mac = oracle::hmac_sha256(zero.bytes(), token0);
    icmp.insert(icmp.end(), mac.begin(), mac.end());
    uint16_t c = oracle::checksum(kSrc, kDst, icmp);
    icmp[2] = static_cast<uint8_t>(c >> 8);
    icmp[3] = static_cast<uint8_t>(c);
    expected.insert(expected.end(), icmp.begin(), icmp.end());
    CHECK(std::vector<uint8_t>(p.begin(), p.end()) == expected);
}

TEST_CASE("golden probe and error dumps") {
    auto key = test_key();
    auto p = build_probe(kSrc, kDst, 64, 0x12345678, key);
    CHECK(to_hex(p) == read_golden("probe.hex"));
    auto err = build_error_response(3, 0, 0, kRouter, p, 64);
    CHECK(to_hex(err) == read_golden("time_exceeded.hex"));
}

TEST_CASE("echo reply parses") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    auto p = build_probe(kSrc, kDst, 64, 42, auth);
    // Mutation oracle: flip the type, then recompute the checksum.
    std::vector<uint8_t> reply(p.begin(), p.end());
    std::copy(p.begin() + 24, p.begin() + 40, reply.begin() + 8);
    std::copy(p.begin() + 8, p.begin() + 24, reply.begin() + 24);
    reply[40] = 129;
    reply[42] = reply[43] = 0;
    uint16_t c = oracle::checksum(kDst, kSrc, std::span(reply).subspan(40));
    reply[42] = static_cast<uint8_t>(c >> 8);
    reply[43] = static_cast<uint8_t>(c);
    CHECK(reply == build_echo_reply(p, std::nullopt, 64));

    auto v = verify_and_extract(reply, auth, 64, kSrc, lookup_for(42, kDst));
    REQUIRE(std::holds_alternative<ParsedResponse>(v));
    auto r = std::get<ParsedResponse>(v);
    CHECK(r.token == 42);
    CHECK(r.target == kDst);
    CHECK(r.responder == kDst);
    CHECK(r.icmp_type == 129);
    CHECK(r.icmp_code == 0);
    CHECK_FALSE(r.distance.has_value());

    auto cpe = Address128::parse("2003:c0:1:2:3a10:d5ff:fe00:1");
    auto from_cpe = build_echo_reply(p, cpe, 64);
    auto v2 = verify_and_extract(from_cpe, auth, 64, kSrc, lookup_for(42, kDst));
    REQUIRE(std::holds_alternative<ParsedResponse>(v2));
    CHECK(std::get<ParsedResponse>(v2).responder == cpe);
}

TEST_CASE("error responses parse for every error type") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    for (uint8_t type = 1; type <= 4; ++type) {
        auto p = build_probe(kSrc, kDst, 64, 7, auth);
        std::vector<uint8_t> invoking(p.begin(), p.end());
        invoking[7] = 57;
        auto err = build_error_response(type, 3, 1280, kRouter, invoking, 64);
        CHECK(err.size() == 128);
        auto v = verify_and_extract(err, auth, 64, kSrc, lookup_for(7, kDst));
        REQUIRE(std::holds_alternative<ParsedResponse>(v));
        auto r = std::get<ParsedResponse>(v);
        CHECK(r.icmp_type == type);
        CHECK(r.icmp_code == 3);
        CHECK(r.responder == kRouter);
        CHECK(r.target == kDst);
        CHECK(r.distance == 7);
    }
    auto p = build_probe(kSrc, kDst, 64, 7, auth);
    CHECK_THROWS_AS(build_error_response(5, 0, 0, kRouter, p, 64), std::invalid_argument);
    CHECK_THROWS_AS(build_error_response(0, 0, 0, kRouter, p, 64), std::invalid_argument);
    CHECK_THROWS_AS(build_error_response(3, 0, 0, kRouter, std::span(p).first(47), 64), std::invalid_argument);
}

TEST_CASE("distance estimate") {
    CHECK(estimate_distance(64, 57) == 7);
    CHECK(estimate_distance(64, 64) == 0);
    CHECK(estimate_distance(64, 0) == 64);
    CHECK_THROWS_AS(estimate_distance(64, 65), NegativeDistance);
}

TEST_CASE("MAC check comes first") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    auto p = build_probe(kSrc, kDst, 64, 9, auth);
    auto reply = build_echo_reply(p, std::nullopt, 64);
    SplitMix64 rng(31);
    // Token and MAC: the last 36 bytes.
    for (int trial = 0; trial < 2000; ++trial) {
        auto bad = reply;
        size_t pos = bad.size() - 36 + rng.below(36);
        bad[pos] ^= static_cast<uint8_t>(1 + rng.below(255));
        REQUIRE(std::holds_alternative<BadMac>(verify_and_extract(bad, auth, 64, kSrc, lookup_for(9, kDst))));
    }
    // Type, code and checksum sit inside the trailer but outside the MAC.
    auto retyped = reply;
    retyped[40] = 135;
    CHECK(std::holds_alternative<ParseFailure>(verify_and_extract(retyped, auth, 64, kSrc, lookup_for(9, kDst))));
    auto resummed = reply;
    resummed[43] ^= 1;
    CHECK(std::holds_alternative<ParsedResponse>(verify_and_extract(resummed, auth, 64, kSrc, lookup_for(9, kDst))));
    for (size_t n = 0; n < 40; ++n) {
        CHECK(std::holds_alternative<BadMac>(
            verify_and_extract(std::span(reply).first(n), auth, 64, kSrc, lookup_for(9, kDst))));
    }
    // A different key never validates.
    auto other = MacKey::from_hex(std::string(64, 'a'));
    CHECK(std::holds_alternative<BadMac>(verify_and_extract(reply, other, 64, kSrc, lookup_for(9, kDst))));
}

TEST_CASE("parse failures carry distinct reasons") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    auto p = build_probe(kSrc, kDst, 64, 3, auth);
    auto look = lookup_for(3, kDst);
    auto reason_of = [&](std::span<const uint8_t> pkt) {
        auto v = verify_and_extract(pkt, auth, 64, kSrc, look);
        REQUIRE(std::holds_alternative<ParseFailure>(v));
        return std::get<ParseFailure>(v).reason;
    };
    auto wrap = [&](std::vector<uint8_t> inner) {
        return build_error_response(1, 0, 0, kRouter, inner, 64);
    };
    std::vector<uint8_t> probe(p.begin(), p.end());

    auto bad_version = probe;
    bad_version[0] = 0x40;
    CHECK(reason_of(wrap(bad_version)) == FailureReason::embedded_bad_version);

    auto short_payload = probe;
    store_be16(short_payload, 4, 39);
    CHECK(reason_of(wrap(short_payload)) == FailureReason::embedded_payload_too_short);

    auto not_icmp = probe;
    not_icmp[6] = 17;
    CHECK(reason_of(wrap(not_icmp)) == FailureReason::embedded_not_icmpv6);

    auto wrong_src = probe;
    wrong_src[23] ^= 1;
    CHECK(reason_of(wrap(wrong_src)) == FailureReason::embedded_source_mismatch);

    auto wrong_dst = probe;
    wrong_dst[39] ^= 1;
    CHECK(reason_of(wrap(wrong_dst)) == FailureReason::embedded_dest_mismatch);

    auto not_request = probe;
    not_request[40] = 129;
    CHECK(reason_of(wrap(not_request)) == FailureReason::embedded_not_echo_request);

    auto bad_code = probe;
    bad_code[41] = 1;
    CHECK(reason_of(wrap(bad_code)) == FailureReason::embedded_not_echo_request);

    auto above = probe;
    above[7] = 65;
    CHECK(reason_of(wrap(above)) == FailureReason::embedded_hop_limit_above_sent);

    auto bad_sum = wrap(probe);
    bad_sum[42] ^= 0xff;
    CHECK(reason_of(bad_sum) == FailureReason::bad_checksum);

    auto reply = build_echo_reply(p, std::nullopt, 64);
    auto unexpected = reply;
    unexpected[40] = 135;
    CHECK(reason_of(unexpected) == FailureReason::unexpected_type);
    auto code1 = reply;
    code1[41] = 1;
    CHECK(reason_of(code1) == FailureReason::unexpected_type);

    auto not_v6 = reply;
    not_v6[0] = 0x45;
    CHECK(reason_of(not_v6) == FailureReason::outer_malformed);

    // Echo replies are taken as they are; their checksum is not consulted.
    auto reply_bad_sum = reply;
    reply_bad_sum[42] ^= 0xff;
    CHECK(std::holds_alternative<ParsedResponse>(verify_and_extract(reply_bad_sum, auth, 64, kSrc, look)));

    // Just the 40 trailing bytes: too short to hold even the outer headers.
    std::vector<uint8_t> bare(p.end() - 40, p.end());
    CHECK(reason_of(bare) == FailureReason::outer_malformed);

    auto unknown = verify_and_extract(reply, auth, 64, kSrc, [](uint32_t) { return std::nullopt; });
    REQUIRE(std::holds_alternative<ParseFailure>(unknown));
    CHECK(std::get<ParseFailure>(unknown).reason == FailureReason::unknown_token);

    auto f = ParseFailure{FailureReason::embedded_dest_mismatch, {0xde, 0xad}};
    CHECK(f.describe().find("embedded_dest_mismatch") != std::string::npos);
    CHECK(f.describe().find("dead") != std::string::npos);
}

TEST_CASE("truncated embedded probe is dropped at the MAC check") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    auto p = build_probe(kSrc, kDst, 64, 3, auth);
    auto err = build_error_response(3, 0, 0, kRouter, std::span(p).first(60), 64);
    CHECK(std::holds_alternative<BadMac>(verify_and_extract(err, auth, 64, kSrc, lookup_for(3, kDst))));
}

TEST_CASE("authenticator is usable from several threads") {
    auto key = test_key();
    TokenAuthenticator auth(key);
    std::vector<Mac> expected;
    for (uint32_t t = 0; t < 256; ++t) expected.push_back(auth.mac(t));
    std::atomic<int> mismatches = 0;
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&] {
            for (int round = 0; round < 50; ++round) {
                for (uint32_t t = 0; t < 256; ++t) {
                    if (auth.mac(t) != expected[t]) ++mismatches;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(mismatches == 0);
}
