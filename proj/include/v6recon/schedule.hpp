#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v6recon/address.hpp"

namespace v6recon::schedule {

class ValueOutOfWidth : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IndexOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class TokenOverflow : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Mirrors bit i to bit width-1-i. Requires value < 2^width, width <= 64.
uint64_t reverse_bits(uint64_t value, int width);

/// All addresses that start with `prefix` and end with the `suffix_len`
/// low-order bits of `suffix`. The bits in between are free.
class TargetRange {
public:
    TargetRange() = default;
    TargetRange(Prefix prefix, u128 suffix, int suffix_len);

    /// Range of the subnet-router anycast addresses of every /resolution in
    /// `prefix`: free bits down to `resolution`, then all-zero bits.
    static TargetRange anycast(Prefix prefix, int resolution);

    const Prefix& prefix() const { return prefix_; }
    u128 suffix() const { return suffix_; }
    int suffix_len() const { return suffix_len_; }
    int free_width() const { return 128 - prefix_.length() - suffix_len_; }
    /// 2^free_width; only meaningful for free_width < 128.
    u128 size() const { return u128{1} << free_width(); }

    bool contains(Address128 a) const;

    /// Address for sequential counter `index`, embedded bit-reversed.
    Address128 target(uint64_t index) const;

    bool operator==(const TargetRange&) const = default;

private:
    Prefix prefix_;
    u128 suffix_ = 0;
    int suffix_len_ = 0;
};

inline Address128 range_target(const TargetRange& r, uint64_t index) { return r.target(index); }

struct ScheduleItem {
    uint32_t range_index = 0;
    uint64_t address_index = 0;
    bool operator==(const ScheduleItem&) const = default;
};

/// Interleaves ranges so every range progresses in proportion to its size:
/// after k items, range i has sent floor(k*Ni/N) or ceil(k*Ni/N) items.
/// Earliest-deadline-first over per-item release/deadline steps; ties go to
/// the lower range index.
class Scheduler {
public:
    explicit Scheduler(std::vector<uint64_t> sizes);
    explicit Scheduler(std::span<const TargetRange> ranges);

    std::optional<ScheduleItem> next();
    uint64_t total() const { return total_; }
    uint64_t emitted() const { return emitted_; }

private:
    struct Entry {
        u128 key;
        uint32_t range;
        bool operator>(const Entry& o) const {
            return key != o.key ? key > o.key : range > o.range;
        }
    };
    using MinHeap = std::priority_queue<Entry, std::vector<Entry>, std::greater<>>;

    u128 release_step(uint32_t range, uint64_t item) const;
    u128 deadline_step(uint32_t range, uint64_t item) const;
    void enqueue(uint32_t range);

    std::vector<uint64_t> sizes_;
    std::vector<uint64_t> sent_;
    uint64_t total_ = 0;
    uint64_t emitted_ = 0;
    MinHeap pending_;  // by release step
    MinHeap ready_;    // by deadline step
};

std::vector<ScheduleItem> make_schedule(std::span<const TargetRange> ranges);

/// Number of token bits that address the range: ceil(log2(range_count)).
int token_range_bits(size_t range_count);

uint32_t encode_token(uint32_t range_index, uint64_t address_index, int range_bits);

struct DecodedToken {
    uint32_t range_index = 0;
    uint32_t address_index = 0;
    bool operator==(const DecodedToken&) const = default;
};
DecodedToken decode_token(uint32_t token, int range_bits);

/// Throws TokenOverflow when the ranges cannot be addressed by 32-bit tokens.
void check_token_capacity(std::span<const TargetRange> ranges);

/// Target list JSON: [{"prefix": "<cidr>", "suffix": "<hex>", "suffix_len": n}, ...].
/// The suffix hex is the integer value of the suffix bits, right-aligned.
std::vector<TargetRange> parse_target_list(const std::string& json_text);
std::string format_target_list(std::span<const TargetRange> ranges);

}  // namespace v6recon::schedule
