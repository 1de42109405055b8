#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v6recon/address.hpp"

// Z-order layout of the address space on a 2^64 x 2^64 grid. The origin is
// the top left corner; x grows right, y grows down. x collects the
// even-numbered address bits, y the odd-numbered ones (bit 1 = MSB).
namespace v6recon::zmap {

struct GridPoint {
    uint64_t x = 0;
    uint64_t y = 0;
    constexpr auto operator<=>(const GridPoint&) const = default;
};

/// Axis-aligned rectangle on the grid. Sizes go up to 2^64 and need 65 bits.
struct MapRect {
    uint64_t x0 = 0;
    uint64_t y0 = 0;
    u128 width = 0;
    u128 height = 0;

    bool contains(const MapRect& other) const;
    bool contains(GridPoint p) const;
    bool operator==(const MapRect&) const = default;
};

GridPoint address_to_xy(Address128 a);
Address128 xy_to_address(GridPoint p);
MapRect prefix_to_rect(const Prefix& p);

class InvalidCellLength : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Largest supported cell_length - viewport.length.
inline constexpr int kMaxHeatmapDepth = 26;

struct Heatmap {
    Prefix viewport;
    int cell_length = 0;
    bool log_scale = false;
    uint32_t width = 0;
    uint32_t height = 0;
    std::vector<uint64_t> counts;  // row-major, width * height
    uint64_t ignored = 0;          // entries outside the viewport

    uint64_t at(uint32_t x, uint32_t y) const { return counts[size_t{y} * width + x]; }
    uint64_t total() const;
};

/// Counts entries per cell of length `cell_length` inside `viewport`.
/// Entries shorter than cell_length are rejected with std::invalid_argument.
Heatmap build_heatmap(std::span<const Prefix> entries, const Prefix& viewport,
                      int cell_length, bool log_scale);

/// Pixel intensities 0..255, row-major: 0 for empty cells, 255 for the maximum
/// count; log mode scales by log2(count + 1). Non-empty cells never drop below 1.
std::vector<uint8_t> heatmap_intensities(const Heatmap& h);

/// Binary PGM (P5) with one pixel per cell.
std::string encode_pgm(const Heatmap& h);
void render_heatmap(const Heatmap& h, const std::string& path);

/// `x,y,count` rows with a header line, non-empty cells only.
void write_heatmap_csv(const Heatmap& h, const std::string& path);

}  // namespace v6recon::zmap
