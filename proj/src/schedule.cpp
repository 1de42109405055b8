#include "v6recon/schedule.hpp"

#include <bit>

#include "json.hpp"

namespace v6recon::schedule {

uint64_t reverse_bits(uint64_t value, int width) {
    if (width < 0 || width > 64) {
        throw ValueOutOfWidth("width " + std::to_string(width) + " outside 0..64");
    }
    if (width < 64 && (value >> width) != 0) {
        throw ValueOutOfWidth("value " + std::to_string(value) + " does not fit in " +
                              std::to_string(width) + " bits");
    }
    if (width == 0) {
        return 0;
    }
    uint64_t v = value;
    v = ((v >> 1) & 0x5555555555555555ULL) | ((v & 0x5555555555555555ULL) << 1);
    v = ((v >> 2) & 0x3333333333333333ULL) | ((v & 0x3333333333333333ULL) << 2);
    v = ((v >> 4) & 0x0f0f0f0f0f0f0f0fULL) | ((v & 0x0f0f0f0f0f0f0f0fULL) << 4);
    v = __builtin_bswap64(v);
    return v >> (64 - width);
}

TargetRange::TargetRange(Prefix prefix, u128 suffix, int suffix_len)
    : prefix_{prefix}, suffix_{suffix}, suffix_len_{suffix_len} {
    if (suffix_len < 0 || suffix_len > 128 - prefix.length()) {
        throw std::invalid_argument("suffix length " + std::to_string(suffix_len) +
                                    " does not fit after " + prefix.to_string());
    }
    if (suffix_len < 128 && (suffix >> suffix_len) != 0) {
        throw std::invalid_argument("suffix value wider than suffix_len " +
                                    std::to_string(suffix_len));
    }
}

TargetRange TargetRange::anycast(Prefix prefix, int resolution) {
    if (resolution < prefix.length() || resolution > 128) {
        throw std::invalid_argument("resolution /" + std::to_string(resolution) +
                                    " is not inside " + prefix.to_string());
    }
    return TargetRange{prefix, 0, 128 - resolution};
}

bool TargetRange::contains(Address128 a) const {
    if (!prefix_.contains(a)) {
        return false;
    }
    u128 mask = suffix_len_ >= 128 ? ~u128{0} : (u128{1} << suffix_len_) - 1;
    return (a.value() & mask) == suffix_;
}

Address128 TargetRange::target(uint64_t index) const {
    int width = free_width();
    if (width < 64 && (index >> width) != 0) {
        throw IndexOutOfRange("index " + std::to_string(index) + " outside range of width " +
                              std::to_string(width));
    }
    if (width > 64) {
        throw IndexOutOfRange("range with " + std::to_string(width) +
                              " free bits cannot be enumerated");
    }
    u128 middle = u128{reverse_bits(index, width)} << suffix_len_;
    return Address128{prefix_.address().value() | middle | suffix_};
}

Scheduler::Scheduler(std::span<const TargetRange> ranges) : Scheduler([&] {
    std::vector<uint64_t> sizes;
    sizes.reserve(ranges.size());
    for (const auto& r : ranges) {
        if (r.free_width() > 63) {
            throw TokenOverflow("range " + r.prefix().to_string() + " has too many free bits");
        }
        sizes.push_back(uint64_t{1} << r.free_width());
    }
    return sizes;
}()) {}

Scheduler::Scheduler(std::vector<uint64_t> sizes) : sizes_(std::move(sizes)), sent_(sizes_.size()) {
    for (uint64_t s : sizes_) {
        total_ += s;
    }
    for (uint32_t i = 0; i < sizes_.size(); ++i) {
        enqueue(i);
    }
}

// Item j (0-based) of range i may go out once ceil(k*Ni/N) >= j+1, i.e. at
// step floor(j*N/Ni)+1, and must go out by the step where floor(k*Ni/N)
// reaches j+1, i.e. ceil((j+1)*N/Ni).
u128 Scheduler::release_step(uint32_t range, uint64_t item) const {
    return u128{item} * total_ / sizes_[range] + 1;
}

u128 Scheduler::deadline_step(uint32_t range, uint64_t item) const {
    u128 num = u128{item + 1} * total_;
    return (num + sizes_[range] - 1) / sizes_[range];
}

void Scheduler::enqueue(uint32_t range) {
    if (sent_[range] < sizes_[range]) {
        pending_.push(Entry{release_step(range, sent_[range]), range});
    }
}

std::optional<ScheduleItem> Scheduler::next() {
    if (emitted_ == total_) {
        return std::nullopt;
    }
    u128 step = u128{emitted_} + 1;
    while (!pending_.empty() && pending_.top().key <= step) {
        uint32_t r = pending_.top().range;
        pending_.pop();
        ready_.push(Entry{deadline_step(r, sent_[r]), r});
    }
    // Some item is always released: sum of ceil(k*Ni/N) is at least k.
    uint32_t r = ready_.top().range;
    ready_.pop();
    ScheduleItem item{r, sent_[r]};
    ++sent_[r];
    ++emitted_;
    enqueue(r);
    return item;
}

std::vector<ScheduleItem> make_schedule(std::span<const TargetRange> ranges) {
    check_token_capacity(ranges);
    Scheduler s(ranges);
    std::vector<ScheduleItem> out;
    out.reserve(s.total());
    while (auto item = s.next()) {
        out.push_back(*item);
    }
    return out;
}

int token_range_bits(size_t range_count) {
    if (range_count <= 1) {
        return 0;
    }
    return std::bit_width(range_count - 1);
}

uint32_t encode_token(uint32_t range_index, uint64_t address_index, int range_bits) {
    if (range_bits < 0 || range_bits > 31) {
        throw TokenOverflow("token range bits must be in 0..31");
    }
    int address_bits = 32 - range_bits;
    if ((uint64_t{range_index} >> range_bits) != 0) {
        throw TokenOverflow("range index " + std::to_string(range_index) + " needs more than " +
                            std::to_string(range_bits) + " bits");
    }
    if ((address_index >> address_bits) != 0) {
        throw TokenOverflow("address index " + std::to_string(address_index) +
                            " needs more than " + std::to_string(address_bits) + " bits");
    }
    return static_cast<uint32_t>((uint64_t{range_index} << address_bits) | address_index);
}

DecodedToken decode_token(uint32_t token, int range_bits) {
    if (range_bits < 0 || range_bits > 31) {
        throw TokenOverflow("token range bits must be in 0..31");
    }
    int address_bits = 32 - range_bits;
    uint32_t mask = static_cast<uint32_t>((uint64_t{1} << address_bits) - 1);
    return DecodedToken{static_cast<uint32_t>(uint64_t{token} >> address_bits), token & mask};
}

void check_token_capacity(std::span<const TargetRange> ranges) {
    if (ranges.empty()) {
        throw std::invalid_argument("empty target list");
    }
    if (ranges.size() > (size_t{1} << 31)) {
        throw TokenOverflow("more than 2^31 ranges");
    }
    int address_bits = 32 - token_range_bits(ranges.size());
    for (size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].free_width() > address_bits) {
            throw TokenOverflow("range " + std::to_string(i) + " (" +
                                ranges[i].prefix().to_string() + ") has " +
                                std::to_string(ranges[i].free_width()) +
                                " free bits; tokens leave room for " +
                                std::to_string(address_bits));
        }
    }
}

std::vector<TargetRange> parse_target_list(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("target list: ") + e.what());
    }
    if (!doc.is_array()) {
        throw ParseError("target list must be a JSON array");
    }
    std::vector<TargetRange> out;
    for (size_t i = 0; i < doc.size(); ++i) {
        const auto& row = doc[i];
        try {
            Prefix prefix = Prefix::parse(row.at("prefix").get<std::string>());
            u128 suffix = parse_hex_u128(row.value("suffix", std::string{}));
            int suffix_len = row.value("suffix_len", 0);
            out.emplace_back(prefix, suffix, suffix_len);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("target " + std::to_string(i) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError("target " + std::to_string(i) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError("target " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::string format_target_list(std::span<const TargetRange> ranges) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : ranges) {
        doc.push_back({{"prefix", r.prefix().to_string()},
                       {"suffix", hex_u128(r.suffix())},
                       {"suffix_len", r.suffix_len()}});
    }
    return doc.dump(1) + "\n";
}

}  // namespace v6recon::schedule
