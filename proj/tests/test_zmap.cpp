#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "oracle/oracles.hpp"
#include "v6recon/random.hpp"
#include "v6recon/zmap.hpp"

using namespace v6recon;
using namespace v6recon::zmap;

namespace {

constexpr u128 k2_64 = u128{1} << 64;
constexpr uint64_t k2_63 = uint64_t{1} << 63;

Address128 random_address(SplitMix64& rng) { return Address128::from_halves(rng.next(), rng.next()); }

}  // namespace

TEST_CASE("address_to_xy fixed points") {
    CHECK(address_to_xy(Address128{0}) == GridPoint{0, 0});
    CHECK(address_to_xy(Address128::parse("8000::")) == GridPoint{0, k2_63});
    CHECK(address_to_xy(Address128::parse("4000::")) == GridPoint{k2_63, 0});
    CHECK(address_to_xy(Address128{~u128{0}}) == GridPoint{UINT64_MAX, UINT64_MAX});
    CHECK(address_to_xy(Address128{1}) == GridPoint{1, 0});
    CHECK(address_to_xy(Address128{2}) == GridPoint{0, 1});
    CHECK(xy_to_address(GridPoint{0, 0}) == Address128{0});
    CHECK(xy_to_address(GridPoint{k2_63, 0}) == Address128::parse("4000::"));
}

TEST_CASE("address_to_xy agrees with bit-by-bit de-interleaving") {
    SplitMix64 rng(11);
    for (int i = 0; i < 20000; ++i) {
        auto a = random_address(rng);
        auto [x, y] = oracle::zorder_xy(a);
        auto p = address_to_xy(a);
        REQUIRE(p.x == x);
        REQUIRE(p.y == y);
        REQUIRE(xy_to_address(p) == a);
    }
}

TEST_CASE("prefix_to_rect examples") {
    CHECK(prefix_to_rect(Prefix::parse("::/0")) == MapRect{0, 0, k2_64, k2_64});
    CHECK(prefix_to_rect(Prefix::parse("8000::/1")) == MapRect{0, k2_63, k2_64, u128{k2_63}});
    CHECK(prefix_to_rect(Prefix::parse("c000::/2")) == MapRect{k2_63, k2_63, u128{k2_63}, u128{k2_63}});
}

TEST_CASE("rect geometry: square for even lengths, 2:1 for odd") {
    for (int len = 0; len <= 128; ++len) {
        auto r = prefix_to_rect(Prefix::truncate(Address128::parse("2003:c0::"), len));
        if (len % 2 == 0) {
            CHECK(r.width == r.height);
        } else {
            CHECK(r.width == 2 * r.height);
        }
        CHECK(r.width * r.height == (len == 0 ? k2_64 * k2_64 : u128{1} << (128 - len)));
    }
}

TEST_CASE("corner and nesting properties") {
    SplitMix64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        int len = static_cast<int>(rng.below(129));
        auto p = Prefix::truncate(random_address(rng), len);
        auto r = prefix_to_rect(p);
        auto first = address_to_xy(p.first());
        auto last = address_to_xy(p.last());
        CHECK(first == GridPoint{r.x0, r.y0});
        CHECK(u128{last.x} == r.x0 + r.width - 1);
        CHECK(u128{last.y} == r.y0 + r.height - 1);
        if (len < 128) {
            int sub_len = len + 1 + static_cast<int>(rng.below(128 - len));
            u128 noise = (u128{rng.next()} << 64) | rng.next();
            auto q = Prefix::truncate(Address128{p.address().value() | (noise & ~prefix_mask(len))}, sub_len);
            REQUIRE(p.contains(q));
            CHECK(r.contains(prefix_to_rect(q)));
        }
        CHECK(r.contains(address_to_xy(p.first())));
    }
}

TEST_CASE("one nibble subdivides a square into 4x4 sub-squares in Z order") {
    auto parent = Prefix::parse("2001:db8::/32");
    auto pr = prefix_to_rect(parent);
    for (uint64_t nibble = 0; nibble < 16; ++nibble) {
        u128 addr = parent.address().value() | (u128{nibble} << (128 - 36));
        auto r = prefix_to_rect(Prefix(Address128{addr}, 36));
        CHECK(r.width == pr.width / 4);
        // Bits of the nibble are y1 x1 y0 x0.
        uint64_t col = ((nibble >> 2) & 1) << 1 | (nibble & 1);
        uint64_t row = ((nibble >> 3) & 1) << 1 | ((nibble >> 1) & 1);
        CHECK(u128{r.x0 - pr.x0} == col * r.width);
        CHECK(u128{r.y0 - pr.y0} == row * r.height);
    }
}

TEST_CASE("heatmap geometry") {
    std::vector<Prefix> none;
    auto h = build_heatmap(none, Prefix::parse("2003::/32"), 40, false);
    CHECK(h.width == 16);
    CHECK(h.height == 16);
    CHECK(h.counts.size() == 256);
    CHECK(h.total() == 0);

    // Free bits 20..32: seven even-numbered (x), six odd-numbered (y).
    auto wide = build_heatmap(none, Prefix::parse("2003::/19"), 32, true);
    CHECK(wide.counts.size() == 8192);
    CHECK(wide.width == 128);
    CHECK(wide.height == 64);

    CHECK_THROWS_AS(build_heatmap(none, Prefix::parse("2003::/32"), 32, false), InvalidCellLength);
    CHECK_THROWS_AS(build_heatmap(none, Prefix::parse("2003::/32"), 59, false), InvalidCellLength);
}

TEST_CASE("heatmap counts land in the cell of their rectangle") {
    auto viewport = Prefix::parse("2003:c0::/26");
    SplitMix64 rng(17);
    std::vector<Prefix> entries;
    for (int i = 0; i < 3000; ++i) {
        u128 noise = (u128{rng.next()} << 64) | rng.next();
        entries.push_back(Prefix::truncate(Address128{viewport.address().value() | (noise & ~prefix_mask(26))}, 56));
    }
    entries.push_back(Prefix::parse("2a02:8100::/56"));
    auto h = build_heatmap(entries, viewport, 40, false);
    CHECK(h.ignored == 1);
    CHECK(h.total() == 3000);
    auto view = prefix_to_rect(viewport);
    for (size_t i = 0; i < 50; ++i) {
        auto cell = prefix_to_rect(Prefix::truncate(entries[i].address(), 40));
        auto cx = static_cast<uint32_t>((cell.x0 - view.x0) / cell.width);
        auto cy = static_cast<uint32_t>((cell.y0 - view.y0) / cell.height);
        CHECK(h.at(cx, cy) > 0);
    }
    std::vector<Prefix> too_short{Prefix::parse("2003:c0::/32")};
    CHECK_THROWS_AS(build_heatmap(too_short, viewport, 40, false), std::invalid_argument);
}

TEST_CASE("intensity normalization") {
    auto viewport = Prefix::parse("2001:db8::/32");
    std::vector<Prefix> single{Prefix::parse("2001:db8:100::/40")};
    auto h = build_heatmap(single, viewport, 40, false);
    auto px = heatmap_intensities(h);
    CHECK(std::count(px.begin(), px.end(), 255) == 1);
    CHECK(std::count(px.begin(), px.end(), 0) == 255);

    Heatmap log_map;
    log_map.width = 2;
    log_map.height = 1;
    log_map.log_scale = true;
    log_map.counts = {1, 1024};
    auto lp = heatmap_intensities(log_map);
    CHECK(lp[1] == 255);
    CHECK(lp[0] == std::lround(255.0 * std::log2(2.0) / std::log2(1025.0)));

    Heatmap linear = log_map;
    linear.log_scale = false;
    linear.counts = {1, 100000};
    CHECK(heatmap_intensities(linear)[0] == 1);
}

TEST_CASE("PGM encoding and CSV dump") {
    std::vector<Prefix> none;
    auto h = build_heatmap(none, Prefix::parse("2003::/32"), 40, false);
    auto pgm = encode_pgm(h);
    std::string header = "P5\n16 16\n255\n";
    REQUIRE(pgm.size() == header.size() + 256);
    CHECK(pgm.substr(0, header.size()) == header);
    CHECK(std::all_of(pgm.begin() + static_cast<std::ptrdiff_t>(header.size()), pgm.end(),
                      [](char c) { return c == 0; }));

    std::vector<Prefix> two{Prefix::parse("2003:0:100::/40"), Prefix::parse("2003:0:100::/48")};
    auto g = build_heatmap(two, Prefix::parse("2003::/32"), 40, false);
    auto dir = std::filesystem::temp_directory_path();
    auto csv_path = (dir / "v6recon_heatmap_test.csv").string();
    write_heatmap_csv(g, csv_path);
    std::ifstream in(csv_path);
    std::stringstream ss;
    ss << in.rdbuf();
    // /40 number 1 sets bit 40, an even bit: x = 1, y = 0.
    CHECK(ss.str() == "x,y,count\n1,0,2\n");
    std::filesystem::remove(csv_path);
}
