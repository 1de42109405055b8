#include "v6recon/zmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace v6recon::zmap {

namespace {

// Gathers the bits at even LSB positions (0, 2, ..., 62) into 32 bits.
uint64_t compact_even(uint64_t v) {
    v &= 0x5555555555555555ULL;
    v = (v | (v >> 1)) & 0x3333333333333333ULL;
    v = (v | (v >> 2)) & 0x0f0f0f0f0f0f0f0fULL;
    v = (v | (v >> 4)) & 0x00ff00ff00ff00ffULL;
    v = (v | (v >> 8)) & 0x0000ffff0000ffffULL;
    v = (v | (v >> 16)) & 0x00000000ffffffffULL;
    return v;
}

uint64_t spread_even(uint64_t v) {
    v &= 0x00000000ffffffffULL;
    v = (v | (v << 16)) & 0x0000ffff0000ffffULL;
    v = (v | (v << 8)) & 0x00ff00ff00ff00ffULL;
    v = (v | (v << 4)) & 0x0f0f0f0f0f0f0f0fULL;
    v = (v | (v << 2)) & 0x3333333333333333ULL;
    v = (v | (v << 1)) & 0x5555555555555555ULL;
    return v;
}

// Number of fixed x (even-numbered) and y (odd-numbered) bits in a prefix.
int x_bits(int length) { return length / 2; }
int y_bits(int length) { return (length + 1) / 2; }

}  // namespace

GridPoint address_to_xy(Address128 a) {
    // Even-numbered address bits sit at even LSB positions.
    uint64_t hi = a.hi();
    uint64_t lo = a.lo();
    return GridPoint{
        (compact_even(hi) << 32) | compact_even(lo),
        (compact_even(hi >> 1) << 32) | compact_even(lo >> 1),
    };
}

Address128 xy_to_address(GridPoint p) {
    uint64_t hi = spread_even(p.x >> 32) | (spread_even(p.y >> 32) << 1);
    uint64_t lo = spread_even(p.x) | (spread_even(p.y) << 1);
    return Address128::from_halves(hi, lo);
}

MapRect prefix_to_rect(const Prefix& p) {
    GridPoint origin = address_to_xy(p.first());
    return MapRect{
        origin.x,
        origin.y,
        u128{1} << (64 - x_bits(p.length())),
        u128{1} << (64 - y_bits(p.length())),
    };
}

bool MapRect::contains(GridPoint p) const {
    return p.x >= x0 && p.y >= y0 && u128{p.x} - x0 < width && u128{p.y} - y0 < height;
}

bool MapRect::contains(const MapRect& other) const {
    return other.x0 >= x0 && other.y0 >= y0 &&
           u128{other.x0} + other.width <= u128{x0} + width &&
           u128{other.y0} + other.height <= u128{y0} + height;
}

uint64_t Heatmap::total() const {
    uint64_t sum = 0;
    for (uint64_t c : counts) {
        sum += c;
    }
    return sum;
}

Heatmap build_heatmap(std::span<const Prefix> entries, const Prefix& viewport, int cell_length,
                      bool log_scale) {
    if (cell_length <= viewport.length() || cell_length > 128) {
        throw InvalidCellLength("cell length " + std::to_string(cell_length) +
                                " must be in (" + std::to_string(viewport.length()) + ", 128]");
    }
    int depth = cell_length - viewport.length();
    if (depth > kMaxHeatmapDepth) {
        throw InvalidCellLength("cell length " + std::to_string(cell_length) + " is more than " +
                                std::to_string(kMaxHeatmapDepth) + " bits below the viewport");
    }

    Heatmap h;
    h.viewport = viewport;
    h.cell_length = cell_length;
    h.log_scale = log_scale;
    int grid_x_bits = x_bits(cell_length) - x_bits(viewport.length());
    int grid_y_bits = y_bits(cell_length) - y_bits(viewport.length());
    h.width = uint32_t{1} << grid_x_bits;
    h.height = uint32_t{1} << grid_y_bits;
    h.counts.assign(size_t{h.width} * h.height, 0);

    MapRect view = prefix_to_rect(viewport);
    int cell_x_shift = 64 - x_bits(cell_length);
    int cell_y_shift = 64 - y_bits(cell_length);
    for (const Prefix& entry : entries) {
        if (entry.length() < cell_length) {
            throw std::invalid_argument("entry " + entry.to_string() +
                                        " is shorter than the cell length");
        }
        if (!viewport.contains(entry.address())) {
            ++h.ignored;
            continue;
        }
        GridPoint pt = address_to_xy(entry.address());
        // A /1 cell has no x bits, so its x shift is 64.
        uint64_t dx = pt.x - view.x0;
        uint64_t dy = pt.y - view.y0;
        uint64_t cx = cell_x_shift >= 64 ? 0 : dx >> cell_x_shift;
        uint64_t cy = cell_y_shift >= 64 ? 0 : dy >> cell_y_shift;
        ++h.counts[static_cast<size_t>(cy) * h.width + static_cast<size_t>(cx)];
    }
    return h;
}

std::vector<uint8_t> heatmap_intensities(const Heatmap& h) {
    std::vector<uint8_t> out(h.counts.size(), 0);
    uint64_t max = 0;
    for (uint64_t c : h.counts) {
        max = std::max(max, c);
    }
    if (max == 0) {
        return out;
    }
    auto scale = [&](uint64_t c) {
        if (h.log_scale) {
            return std::log2(static_cast<double>(c) + 1.0) /
                   std::log2(static_cast<double>(max) + 1.0);
        }
        return static_cast<double>(c) / static_cast<double>(max);
    };
    for (size_t i = 0; i < h.counts.size(); ++i) {
        if (h.counts[i] != 0) {
            out[i] = static_cast<uint8_t>(std::max(1L, std::lround(255.0 * scale(h.counts[i]))));
        }
    }
    return out;
}

std::string encode_pgm(const Heatmap& h) {
    std::string out = "P5\n" + std::to_string(h.width) + " " + std::to_string(h.height) +
                      "\n255\n";
    auto pixels = heatmap_intensities(h);
    out.append(pixels.begin(), pixels.end());
    return out;
}

void render_heatmap(const Heatmap& h, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    std::string data = encode_pgm(h);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

void write_heatmap_csv(const Heatmap& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "x,y,count\n";
    for (uint32_t y = 0; y < h.height; ++y) {
        for (uint32_t x = 0; x < h.width; ++x) {
            if (uint64_t c = h.at(x, y); c != 0) {
                out << x << ',' << y << ',' << c << '\n';
            }
        }
    }
}

}  // namespace v6recon::zmap
