#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "v6recon/address.hpp"
#include "v6recon/codec.hpp"
#include "v6recon/schedule.hpp"
#include "v6recon/transport.hpp"

namespace v6recon::engine {

struct ScanConfig {
    Address128 source_address;
    uint8_t hop_limit = 64;
    double rate = 1000.0;  // packets per second
    codec::MacKey key;
    double receive_grace = 5.0;  // seconds after the last send
    /// ParseFailure records kept in the outcome; the rest are only counted.
    size_t failure_log_limit = 1000;
};

struct ResponseRecord {
    Address128 target;
    Address128 responder;
    int icmp_type = 0;
    int icmp_code = 0;
    std::optional<int> distance;
    bool operator==(const ResponseRecord&) const = default;
};

struct RangeMetadata {
    std::string source;
    int hop_limit = 0;
    std::string started;  // RFC 3339, UTC, milliseconds
    std::string ended;
    double duration_s = 0;
    double rate_pps = 0;
    std::string key_fingerprint;
    bool operator==(const RangeMetadata&) const = default;
};

struct RangeResult {
    RangeMetadata metadata;
    std::vector<ResponseRecord> responses;
    bool operator==(const RangeResult&) const = default;
};

struct ScanCounters {
    uint64_t sent = 0;
    uint64_t received = 0;
    uint64_t recorded = 0;
    uint64_t bad_mac = 0;
    uint64_t parse_failures = 0;
};

struct ScanOutcome {
    std::vector<RangeResult> ranges;
    ScanCounters counters;
    std::vector<codec::ParseFailure> failures;  // first failure_log_limit failures
    bool partial = false;
    std::string error;  // transport failure that cut the scan short
    double elapsed_s = 0;
};

/// Token bucket holding at most one second of `rate`; starts empty so the
/// first second is paced as well.
class Pacer {
public:
    using Clock = std::chrono::steady_clock;

    explicit Pacer(double rate);
    /// Blocks until one packet may be sent.
    void acquire();

private:
    void refill(Clock::time_point now);

    double rate_;
    double capacity_;
    double tokens_ = 0;
    Clock::time_point last_;
};

using FailureLogger = std::function<void(const codec::ParseFailure&)>;

/// Sends one probe per schedule item at most config.rate packets/s while a
/// receiver thread validates whatever the transport delivers. Responses are
/// attributed to ranges through their token only.
ScanOutcome run_scan(std::span<const schedule::TargetRange> ranges, const ScanConfig& config,
                     Transport& transport, const FailureLogger& log_failure = {});

std::string rfc3339_utc(std::chrono::system_clock::time_point t);

// --- archive ------------------------------------------------------------------

struct Archive {
    std::string targets_json;  // the target list exactly as supplied
    std::vector<RangeResult> ranges;
    bool operator==(const Archive&) const = default;
};

std::string metadata_to_json(const RangeMetadata& m);
RangeMetadata metadata_from_json(const std::string& text);
std::string responses_to_json(std::span<const ResponseRecord> responses);
std::vector<ResponseRecord> responses_from_json(const std::string& text);

/// targets.json first, then <index>/metadata.json and <index>/responses.json
/// for each range in ascending index order.
std::string encode_archive(const Archive& archive);
Archive decode_archive(const std::string& bytes);

void write_archive(std::span<const RangeResult> results, const std::string& targets_echo,
                   const std::string& path);
Archive read_archive(const std::string& path);

}  // namespace v6recon::engine
