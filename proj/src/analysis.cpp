#include "v6recon/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "v6recon/random.hpp"

namespace v6recon::analysis {

Hitlist aggregate_hitlist(std::span<const Address128> addresses, int plen) {
    if (plen < 1 || plen > 128) {
        throw std::invalid_argument("prefix length must be in 1..128");
    }
    Hitlist h;
    h.plen = plen;
    h.prefixes.reserve(addresses.size());
    for (auto a : addresses) {
        h.prefixes.push_back(Prefix::truncate(a, plen));
    }
    std::sort(h.prefixes.begin(), h.prefixes.end());
    h.prefixes.erase(std::unique(h.prefixes.begin(), h.prefixes.end()), h.prefixes.end());
    return h;
}

Hitlist make_hitlist(std::vector<Prefix> prefixes) {
    Hitlist h;
    if (!prefixes.empty()) {
        h.plen = prefixes.front().length();
    }
    for (const auto& p : prefixes) {
        if (p.length() != h.plen) {
            throw std::invalid_argument("hitlist mixes /" + std::to_string(h.plen) + " and /" +
                                        std::to_string(p.length()) + " prefixes");
        }
    }
    std::sort(prefixes.begin(), prefixes.end());
    prefixes.erase(std::unique(prefixes.begin(), prefixes.end()), prefixes.end());
    h.prefixes = std::move(prefixes);
    return h;
}

Hitlist read_hitlist_file(const std::string& path) {
    return make_hitlist(read_prefix_list_file(path));
}

void write_hitlist(std::ostream& out, const Hitlist& h) {
    for (const auto& p : h.prefixes) {
        out << p << '\n';
    }
}

// --- interface identifiers -----------------------------------------------------

IidBreakdown classify_iid_values(std::span<const uint64_t> iids) {
    std::vector<uint64_t> unique(iids.begin(), iids.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    IidBreakdown b;
    b.total = unique.size();
    for (uint64_t iid : unique) {
        if (looks_like_eui64(iid)) {
            ++b.eui64;
        } else if ((iid >> 52) == 0) {
            ++b.leading_zero12;
        } else {
            ++b.remainder;
            if (ul_bit_set(iid)) {
                ++b.ul_set_remainder;
            }
        }
    }
    b.estimates.manual_dhcp = b.leading_zero12;
    b.estimates.modified_eui64 = b.eui64;
    b.estimates.semantically_opaque = 2 * b.ul_set_remainder;
    if (b.estimates.semantically_opaque > b.remainder) {
        b.clamped = true;
        b.estimates.privacy_extensions = 0;
    } else {
        b.estimates.privacy_extensions = b.remainder - b.estimates.semantically_opaque;
    }
    return b;
}

IidBreakdown classify_iids(std::span<const Address128> addresses) {
    std::vector<uint64_t> iids;
    iids.reserve(addresses.size());
    for (auto a : addresses) {
        iids.push_back(a.iid());
    }
    return classify_iid_values(iids);
}

uint64_t extract_eui48(uint64_t iid) {
    if (!looks_like_eui64(iid)) {
        throw NotEui64("IID " + hex_u128(iid) + " has no ff:fe in bytes 3-4");
    }
    uint64_t mac = ((iid >> 16) & 0xffffff000000ULL) | (iid & 0xffffffULL);
    return mac ^ (uint64_t{0x02} << 40);
}

std::string format_mac(uint64_t mac48) {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x",
                  static_cast<unsigned>((mac48 >> 40) & 0xff), static_cast<unsigned>((mac48 >> 32) & 0xff),
                  static_cast<unsigned>((mac48 >> 24) & 0xff), static_cast<unsigned>((mac48 >> 16) & 0xff),
                  static_cast<unsigned>((mac48 >> 8) & 0xff), static_cast<unsigned>(mac48 & 0xff));
    return buf;
}

namespace {

uint32_t parse_oui(std::string text, size_t line_no) {
    std::erase_if(text, [](char c) { return c == ':' || c == '-'; });
    if (text.size() != 6 || !std::all_of(text.begin(), text.end(),
                                             [](unsigned char c) { return std::isxdigit(c) != 0; })) {
        throw ParseError("line " + std::to_string(line_no) + ": bad OUI '" + text + "'");
    }
    return static_cast<uint32_t>(std::stoul(text, nullptr, 16));
}

}  // namespace

OuiTable OuiTable::parse(std::istream& in) {
    OuiTable t;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected OUI<tab>Name");
        }
        t.add(parse_oui(line.substr(0, tab), line_no), line.substr(tab + 1));
    }
    return t;
}

OuiTable OuiTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return parse(in);
}

void OuiTable::add(uint32_t oui, std::string name) { names_.try_emplace(oui & 0xffffff, std::move(name)); }

std::optional<std::string> OuiTable::find(uint32_t oui) const {
    auto it = names_.find(oui);
    if (it == names_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string lookup_vendor(uint64_t mac48, const OuiTable& table) {
    return table.find(static_cast<uint32_t>(mac48 >> 24)).value_or(kUnregisteredVendor);
}

std::vector<uint64_t> iid_byte_histogram(std::span<const uint64_t> iids, int byte_index,
                                         bool split_by_ul) {
    if (byte_index < 0 || byte_index > 7) {
        throw std::invalid_argument("byte index must be in 0..7");
    }
    std::vector<uint64_t> bins(split_by_ul ? 512 : 256);
    for (uint64_t iid : iids) {
        auto value = static_cast<size_t>((iid >> (56 - 8 * byte_index)) & 0xff);
        if (split_by_ul && ul_bit_set(iid)) {
            value += 256;
        }
        ++bins[value];
    }
    return bins;
}

// --- probe targets and prefixes of responsibility ------------------------------

std::vector<schedule::TargetRange> sample_probe_targets(const Hitlist& hitlist, size_t n_prefixes,
                                                        int deeper_len, int resolution_len,
                                                        uint64_t seed) {
    if (!(hitlist.plen <= deeper_len && deeper_len <= resolution_len && resolution_len <= 64)) {
        throw std::invalid_argument("need hitlist length <= deeper <= resolution <= 64");
    }
    if (hitlist.prefixes.size() < n_prefixes) {
        throw HitlistTooSmall("hitlist has " + std::to_string(hitlist.prefixes.size()) +
                              " prefixes, " + std::to_string(n_prefixes) + " requested");
    }
    SplitMix64 rng(seed);
    std::vector<size_t> order(hitlist.prefixes.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    for (size_t i = 0; i < n_prefixes; ++i) {
        size_t j = i + static_cast<size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    std::vector<size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_prefixes));
    std::sort(chosen.begin(), chosen.end());

    int depth = deeper_len - hitlist.plen;
    std::vector<schedule::TargetRange> out;
    out.reserve(n_prefixes);
    for (size_t index : chosen) {
        const Prefix& base = hitlist.prefixes[index];
        uint64_t sub = depth == 0 ? 0 : depth >= 64 ? rng.next() : rng.below(uint64_t{1} << depth);
        u128 addr = base.address().value() | (u128{sub} << (128 - deeper_len));
        out.push_back(schedule::TargetRange::anycast(Prefix(Address128{addr}, deeper_len),
                                                     resolution_len));
    }
    return out;
}

PrResult compute_pr(std::span<const engine::ResponseRecord> responses,
                    const Prefix& prefix_under_test) {
    // The longest prefix covering a set equals the one covering its extremes.
    std::map<Address128, std::pair<Address128, Address128>> span_of;
    PrResult out;
    for (const auto& r : responses) {
        if (!prefix_under_test.contains(r.target)) {
            ++out.ignored;
            continue;
        }
        auto [it, inserted] = span_of.try_emplace(r.responder, r.target, r.target);
        if (!inserted) {
            it->second.first = std::min(it->second.first, r.target);
            it->second.second = std::max(it->second.second, r.target);
        }
    }
    for (const auto& [responder, extremes] : span_of) {
        int len = std::min(common_prefix_length(extremes.first, extremes.second), 64);
        len = std::max(len, prefix_under_test.length());
        Prefix pr = Prefix::truncate(extremes.first, len);
        if (pr == prefix_under_test) {
            out.discarded.insert(responder);
            continue;
        }
        out.responsibilities.emplace(responder, pr);
        ++out.histogram[len];
    }
    return out;
}

std::optional<int> histogram_mode(const std::map<int, uint64_t>& histogram) {
    std::optional<int> best;
    uint64_t best_count = 0;
    for (const auto& [len, count] : histogram) {
        if (count > best_count) {
            best = len;
            best_count = count;
        }
    }
    return best;
}

ScanStats scan_stats(std::span<const engine::RangeResult> results,
                     std::span<const schedule::TargetRange> targets) {
    ScanStats s;
    for (const auto& t : targets) {
        if (t.free_width() >= 64) {
            throw std::invalid_argument("target range too large to count");
        }
        s.probes_sent += static_cast<uint64_t>(t.size());
    }
    std::unordered_set<Address128> responders;
    for (const auto& r : results) {
        s.responses += r.responses.size();
        for (const auto& rec : r.responses) {
            if (responders.insert(rec.responder).second && looks_like_eui64(rec.responder.iid())) {
                ++s.responders_with_eui64;
            }
        }
    }
    s.unique_responders = responders.size();
    return s;
}

}  // namespace v6recon::analysis
