#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "v6recon/address.hpp"
#include "v6recon/engine.hpp"
#include "v6recon/schedule.hpp"

namespace v6recon::analysis {

/// Sorted, unique prefixes that all share one length.
struct Hitlist {
    int plen = 64;
    std::vector<Prefix> prefixes;
    bool operator==(const Hitlist&) const = default;
};

Hitlist aggregate_hitlist(std::span<const Address128> addresses, int plen);
/// Validates uniform length, then sorts and deduplicates.
Hitlist make_hitlist(std::vector<Prefix> prefixes);
Hitlist read_hitlist_file(const std::string& path);
void write_hitlist(std::ostream& out, const Hitlist& h);

struct IidEstimates {
    uint64_t manual_dhcp = 0;
    uint64_t modified_eui64 = 0;
    uint64_t semantically_opaque = 0;
    uint64_t privacy_extensions = 0;
};

struct IidBreakdown {
    uint64_t total = 0;  // unique IIDs
    uint64_t eui64 = 0;
    uint64_t leading_zero12 = 0;
    uint64_t remainder = 0;  // neither of the above
    uint64_t ul_set_remainder = 0;
    IidEstimates estimates;
    /// Set when more than half of the remainder has the u/l bit set and the
    /// privacy estimate had to be clamped to zero.
    bool clamped = false;
};

/// True when bytes 3 and 4 of the IID are ff fe.
constexpr bool looks_like_eui64(uint64_t iid) {
    return ((iid >> 24) & 0xffff) == 0xfffe;
}
constexpr bool ul_bit_set(uint64_t iid) { return ((iid >> 56) & 0x02) != 0; }

IidBreakdown classify_iids(std::span<const Address128> addresses);
IidBreakdown classify_iid_values(std::span<const uint64_t> iids);

class NotEui64 : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

uint64_t extract_eui48(uint64_t iid);
std::string format_mac(uint64_t mac48);

inline constexpr const char* kUnregisteredVendor = "(unregistered EUI-48)";

/// OUI (24 bits) to vendor name; rows are `OUI<tab>Name`, the first row for
/// an OUI wins. OUIs may be written as 6 hex digits or with ':' / '-'.
class OuiTable {
public:
    static OuiTable parse(std::istream& in);
    static OuiTable load(const std::string& path);

    void add(uint32_t oui, std::string name);
    std::optional<std::string> find(uint32_t oui) const;
    size_t size() const { return names_.size(); }

private:
    std::unordered_map<uint32_t, std::string> names_;
};

std::string lookup_vendor(uint64_t mac48, const OuiTable& table);

/// 256 bins for byte `byte_index` (0 = most significant) of each IID. With
/// split_by_ul the result has 512 bins: u/l clear first, then u/l set.
std::vector<uint64_t> iid_byte_histogram(std::span<const uint64_t> iids, int byte_index,
                                         bool split_by_ul);

class HitlistTooSmall : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Picks n_prefixes hitlist entries, one random /deeper_len inside each, and
/// turns each into an anycast range at resolution_len.
std::vector<schedule::TargetRange> sample_probe_targets(const Hitlist& hitlist, size_t n_prefixes,
                                                        int deeper_len, int resolution_len,
                                                        uint64_t seed);

struct PrResult {
    std::map<Address128, Prefix> responsibilities;
    std::set<Address128> discarded;
    std::map<int, uint64_t> histogram;  // PR length -> responders
    uint64_t ignored = 0;               // responses with targets outside the prefix
};

/// Prefix of responsibility per responder: the longest prefix (at most /64)
/// covering every target it answered for.
PrResult compute_pr(std::span<const engine::ResponseRecord> responses,
                    const Prefix& prefix_under_test);

/// Most frequent length; ties go to the shorter one.
std::optional<int> histogram_mode(const std::map<int, uint64_t>& histogram);

struct ScanStats {
    uint64_t probes_sent = 0;
    uint64_t responses = 0;
    uint64_t unique_responders = 0;
    uint64_t responders_with_eui64 = 0;
};

/// probes_sent is the number of targets in `targets`.
ScanStats scan_stats(std::span<const engine::RangeResult> results,
                     std::span<const schedule::TargetRange> targets);

}  // namespace v6recon::analysis
