#include <random>
#include <sstream>

#include "doctest.h"
#include "oracle/oracles.hpp"
#include "v6recon/address.hpp"
#include "v6recon/random.hpp"

using namespace v6recon;

namespace {

Address128 random_address(SplitMix64& rng) {
    // Mix in zero groups so the "::" elision paths get exercised.
    uint64_t hi = rng.next();
    uint64_t lo = rng.next();
    uint64_t mask = rng.next();
    for (int g = 0; g < 4; ++g) {
        if ((mask >> g) & 1) hi &= ~(uint64_t{0xffff} << (16 * g));
        if ((mask >> (g + 4)) & 1) lo &= ~(uint64_t{0xffff} << (16 * g));
    }
    return Address128::from_halves(hi, lo);
}

}  // namespace

TEST_CASE("parse_address: compressed and exploded forms") {
    CHECK(Address128::parse("::").value() == 0);
    CHECK((Address128::parse("2003:c0::").hi() >> 32) == 0x200300c0);
    CHECK(Address128::parse("2003:c0::").lo() == 0);
    auto a = Address128::parse("2001:db8::5");
    CHECK(a.hi() == 0x20010db800000000ULL);
    CHECK(a.lo() == 5);
    CHECK(Address128::parse("0000:0000:0000:0000:0000:0000:0000:0001").value() == 1);
    CHECK(Address128::parse("2001:DB8::A").lo() == 0xa);
    CHECK(Address128::parse("1:2:3:4:5:6:7::") == Address128::from_halves(0x0001000200030004ULL, 0x0005000600070000ULL));
}

TEST_CASE("parse_address: malformed input") {
    for (const char* bad : {"", ":", ":::", "1::2::3", "1:2:3:4:5:6:7:8:9", "12345::", "g::",
                            "1:2:3:4:5:6:7", "2001:db8::/32", "::ffff:1.2.3.4", "fe80::1%eth0",
                            "1:2:3:4:5:6:7:8::"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(Address128::parse(bad), MalformedAddress);
    }
}

TEST_CASE("format_address") {
    CHECK(Address128{}.to_string() == "::");
    CHECK(Address128{}.to_string(Address128::Form::exploded) ==
          "0000:0000:0000:0000:0000:0000:0000:0000");
    CHECK(Address128::parse("2a02:8100::").to_string() == "2a02:8100::");
    CHECK(Address128::parse("2001:db8:0:0:1:0:0:1").to_string() == "2001:db8::1:0:0:1");
    CHECK(Address128::parse("2001:0:0:1:0:0:0:1").to_string() == "2001:0:0:1::1");
    CHECK(Address128::parse("2001:db8:0:1:1:1:1:1").to_string() == "2001:db8:0:1:1:1:1:1");
    CHECK(Address128::parse("::1").to_string() == "::1");
    CHECK(Address128::parse("1::").to_string() == "1::");
}

TEST_CASE("hex value reads like the exploded text") {
    SplitMix64 rng(42);
    for (int i = 0; i < 1000; ++i) {
        auto a = random_address(rng);
        std::string exploded = a.to_string(Address128::Form::exploded);
        std::erase(exploded, ':');
        std::string hex = hex_u128(a.value());
        CHECK(std::string(32 - hex.size(), '0') + hex == exploded);
    }
}

TEST_CASE("parse/format round trip on 1e5 random addresses") {
    SplitMix64 rng(7);
    for (int i = 0; i < 100000; ++i) {
        auto a = random_address(rng);
        auto c = a.to_string();
        auto e = a.to_string(Address128::Form::exploded);
        REQUIRE(Address128::parse(c) == a);
        REQUIRE(Address128::parse(e) == a);
        REQUIRE(Address128::parse(c).to_string() == c);
    }
}

TEST_CASE("bit numbering starts at the MSB") {
    auto a = Address128::parse("8000::1");
    CHECK(a.bit(1));
    CHECK_FALSE(a.bit(2));
    CHECK(a.bit(128));
    SplitMix64 rng(1);
    auto b = random_address(rng);
    for (int i = 1; i <= 128; ++i) {
        CHECK(b.bit(i) == (oracle::text_bit(b, i) == 1));
    }
}

TEST_CASE("bytes round trip") {
    auto a = Address128::parse("2001:db8:1:2:3:4:5:6");
    auto bytes = a.to_bytes();
    CHECK(bytes[0] == 0x20);
    CHECK(bytes[1] == 0x01);
    CHECK(bytes[15] == 0x06);
    CHECK(Address128::from_bytes(bytes) == a);
}

TEST_CASE("parse_prefix") {
    auto all = Prefix::parse("::/0");
    CHECK(all.address().value() == 0);
    CHECK(all.length() == 0);
    auto vkd = Prefix::parse("2a02:8100::/27");
    CHECK((vkd.address().hi() >> 32) == 0x2a028100);
    CHECK(vkd.length() == 27);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::1/64"), NonzeroHostBits);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::"), MalformedPrefix);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::/129"), MalformedPrefix);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::/-1"), MalformedPrefix);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::/"), MalformedPrefix);
    CHECK_THROWS_AS(Prefix::parse("2001:db8::/3x"), MalformedPrefix);
    CHECK_THROWS_AS(Prefix::parse("2001:zz8::/32"), ParseError);
    CHECK(Prefix::truncate(Address128::parse("2001:db8::1"), 64) == Prefix::parse("2001:db8::/64"));
    CHECK(Prefix::parse("2001:db8::/32").to_string() == "2001:db8::/32");
}

TEST_CASE("prefix_contains") {
    CHECK(prefix_contains(Prefix::parse("::/0"), Address128::parse("ffff::1")));
    CHECK(prefix_contains(Prefix::parse("2a02:8100::/27"), Address128::parse("2a02:8108::")));
    CHECK_FALSE(prefix_contains(Prefix::parse("2003::/19"), Address128::parse("2001:db8::")));
    CHECK(Prefix::parse("2a02:8100::/27").contains(Prefix::parse("2a02:8108::/29")));
    CHECK_FALSE(Prefix::parse("2a02:8108::/29").contains(Prefix::parse("2a02:8100::/27")));

    SplitMix64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        int len = static_cast<int>(rng.below(129));
        auto p = Prefix::truncate(random_address(rng), len);
        CHECK(p.contains(p.address()));
        CHECK(p.contains(p.last()));
    }
}

TEST_CASE("prefix membership size is exact for long prefixes") {
    for (int len = 120; len <= 128; ++len) {
        auto p = Prefix::truncate(Address128::parse("2001:db8::1234"), len);
        // Count members within the enclosing /112 window.
        Address128 base{p.address().value() & prefix_mask(112)};
        uint64_t members = 0;
        for (uint64_t i = 0; i < 65536; ++i) {
            members += p.contains(Address128{base.value() | i}) ? 1 : 0;
        }
        CHECK(members == (uint64_t{1} << (128 - len)));
    }
}

TEST_CASE("longest_common_prefix") {
    auto a = Address128::parse("2001:db8::1");
    std::vector<Address128> one{a};
    CHECK(longest_common_prefix(one) == Prefix(a, 128));
    std::vector<Address128> neighbors{Address128::parse("2001:db8:0:4::"), Address128::parse("2001:db8:0:5::")};
    CHECK(longest_common_prefix(neighbors) == Prefix::parse("2001:db8:0:4::/63"));
    std::vector<Address128> split{Address128{0}, Address128{u128{1} << 127}};
    CHECK(longest_common_prefix(split) == Prefix::parse("::/0"));
    CHECK_THROWS_AS(longest_common_prefix(std::span<const Address128>{}), EmptySet);
}

TEST_CASE("longest_common_prefix matches a bit-by-bit scan") {
    SplitMix64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        auto base = random_address(rng);
        int shared = static_cast<int>(rng.below(129));
        std::vector<Address128> set;
        size_t n = 1 + rng.below(6);
        for (size_t i = 0; i < n; ++i) {
            u128 noise = (u128{rng.next()} << 64) | rng.next();
            set.emplace_back((base.value() & prefix_mask(shared)) | (noise & ~prefix_mask(shared)));
        }
        int expected = 0;
        while (expected < 128) {
            bool same = true;
            for (const auto& s : set) {
                same = same && s.bit(expected + 1) == set.front().bit(expected + 1);
            }
            if (!same) break;
            ++expected;
        }
        auto lcp = longest_common_prefix(set);
        CHECK(lcp.length() == expected);
        std::reverse(set.begin(), set.end());
        CHECK(longest_common_prefix(set) == lcp);
        std::vector<Address128> doubled = set;
        doubled.insert(doubled.end(), set.begin(), set.end());
        CHECK(longest_common_prefix(doubled) == lcp);
    }
}

TEST_CASE("address and prefix list files") {
    std::istringstream in("# header\n2001:db8::1\n\n  2001:db8::2  # trailing\n");
    auto list = read_address_list(in);
    REQUIRE(list.size() == 2);
    CHECK(list[1] == Address128::parse("2001:db8::2"));

    std::istringstream bad("2001:db8::1\nnot-an-address\n");
    try {
        read_address_list(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::istringstream prefixes("2003::/19\n2a02:8100::/27\n");
    CHECK(read_prefix_list(prefixes).size() == 2);
}

TEST_CASE("hex helpers") {
    CHECK(parse_hex_u128("0") == 0);
    CHECK(parse_hex_u128("ff") == 255);
    CHECK(hex_u128(255) == "ff");
    CHECK(parse_hex_u128(std::string(32, 'f')) == ~u128{0});
    CHECK_THROWS(parse_hex_u128(std::string(33, 'f')));
    CHECK_THROWS(parse_hex_u128("xyz"));
}
