#include "v6recon/engine.hpp"

#include <atomic>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "v6recon/zip.hpp"

namespace v6recon::engine {

Pacer::Pacer(double rate) : rate_{rate}, capacity_{std::max(1.0, rate)}, last_{Clock::now()} {
    if (!(rate > 0)) {
        throw std::invalid_argument("rate must be positive");
    }
}

void Pacer::refill(Clock::time_point now) {
    double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    last_ = now;
}

void Pacer::acquire() {
    while (true) {
        refill(Clock::now());
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        double wait = (1.0 - tokens_) / rate_;
        if (wait > 200e-6) {
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        } else {
            std::this_thread::yield();
        }
    }
}

std::string rfc3339_utc(std::chrono::system_clock::time_point t) {
    using namespace std::chrono;
    auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(ms % 1000));
    return buf;
}

ScanOutcome run_scan(std::span<const schedule::TargetRange> ranges, const ScanConfig& config,
                     Transport& transport, const FailureLogger& log_failure) {
    if (config.hop_limit < 1) {
        throw std::invalid_argument("hop limit must be at least 1");
    }
    schedule::check_token_capacity(ranges);
    const int range_bits = schedule::token_range_bits(ranges.size());
    const codec::TokenAuthenticator auth(config.key);
    Pacer pacer(config.rate);

    codec::TargetLookup target_of = [&](uint32_t token) -> std::optional<Address128> {
        auto decoded = schedule::decode_token(token, range_bits);
        if (decoded.range_index >= ranges.size()) {
            return std::nullopt;
        }
        const auto& r = ranges[decoded.range_index];
        if (r.free_width() < 32 && (uint64_t{decoded.address_index} >> r.free_width()) != 0) {
            return std::nullopt;
        }
        return r.target(decoded.address_index);
    };

    ScanOutcome outcome;
    outcome.ranges.resize(ranges.size());
    std::atomic<bool> sending_done = false;
    std::atomic<bool> abort = false;
    std::atomic<uint64_t> sent = 0;
    std::string receive_error;
    std::chrono::steady_clock::time_point send_end;

    auto wall_start = std::chrono::system_clock::now();
    auto start = std::chrono::steady_clock::now();

    std::thread receiver([&] {
        ScanCounters& c = outcome.counters;
        auto handle = [&](const codec::Packet& packet) {
            ++c.received;
            auto verdict = codec::verify_and_extract(packet, auth, config.hop_limit,
                                                     config.source_address, target_of);
            if (auto* parsed = std::get_if<codec::ParsedResponse>(&verdict)) {
                auto range = schedule::decode_token(parsed->token, range_bits).range_index;
                outcome.ranges[range].responses.push_back(
                    ResponseRecord{parsed->target, parsed->responder, parsed->icmp_type,
                                   parsed->icmp_code, parsed->distance});
                ++c.recorded;
            } else if (std::holds_alternative<codec::BadMac>(verdict)) {
                ++c.bad_mac;
            } else {
                auto& failure = std::get<codec::ParseFailure>(verdict);
                ++c.parse_failures;
                if (log_failure) {
                    log_failure(failure);
                }
                if (outcome.failures.size() < config.failure_log_limit) {
                    outcome.failures.push_back(std::move(failure));
                }
            }
        };
        try {
            while (!abort) {
                auto batch = transport.poll_received();
                for (const auto& packet : batch) {
                    handle(packet);
                }
                if (!batch.empty()) {
                    continue;
                }
                if (sending_done) {
                    if (transport.drained()) {
                        break;
                    }
                    double since = std::chrono::duration<double>(
                                       std::chrono::steady_clock::now() - send_end)
                                       .count();
                    if (since >= config.receive_grace) {
                        break;
                    }
                }
                std::this_thread::sleep_for(std::chrono::microseconds(200));
            }
        } catch (const TransportFailure& e) {
            receive_error = e.what();
            abort = true;
        }
    });

    std::string send_error;
    try {
        schedule::Scheduler scheduler(ranges);
        while (!abort) {
            auto item = scheduler.next();
            if (!item) {
                break;
            }
            const auto& range = ranges[item->range_index];
            uint32_t token = schedule::encode_token(item->range_index, item->address_index,
                                                    range_bits);
            auto probe = codec::build_probe(config.source_address, range.target(item->address_index),
                                            config.hop_limit, token, auth);
            pacer.acquire();
            transport.send(probe);
            sent.fetch_add(1, std::memory_order_relaxed);
        }
    } catch (const TransportFailure& e) {
        send_error = e.what();
        abort = true;
    }
    send_end = std::chrono::steady_clock::now();
    if (!abort) {
        transport.finish_sending();
    }
    sending_done = true;
    receiver.join();

    auto wall_end = std::chrono::system_clock::now();
    outcome.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.counters.sent = sent;
    if (!send_error.empty() || !receive_error.empty()) {
        outcome.partial = true;
        outcome.error = !send_error.empty() ? send_error : receive_error;
    }

    RangeMetadata meta;
    meta.source = config.source_address.to_string();
    meta.hop_limit = config.hop_limit;
    meta.started = rfc3339_utc(wall_start);
    meta.ended = rfc3339_utc(wall_end);
    meta.duration_s = outcome.elapsed_s;
    meta.rate_pps = config.rate;
    meta.key_fingerprint = config.key.fingerprint();
    for (auto& r : outcome.ranges) {
        r.metadata = meta;
    }
    return outcome;
}

// --- archive ------------------------------------------------------------------

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string metadata_to_json(const RangeMetadata& m) {
    json j = {{"source", m.source},         {"hop_limit", m.hop_limit},
              {"started", m.started},       {"ended", m.ended},
              {"duration_s", m.duration_s}, {"rate_pps", m.rate_pps},
              {"key_fingerprint", m.key_fingerprint}};
    return j.dump(1) + "\n";
}

RangeMetadata metadata_from_json(const std::string& text) {
    json j = parse_json(text, "metadata.json");
    try {
        RangeMetadata m;
        m.source = j.at("source").get<std::string>();
        m.hop_limit = j.at("hop_limit").get<int>();
        m.started = j.at("started").get<std::string>();
        m.ended = j.at("ended").get<std::string>();
        m.duration_s = j.at("duration_s").get<double>();
        m.rate_pps = j.at("rate_pps").get<double>();
        m.key_fingerprint = j.at("key_fingerprint").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("metadata.json: ") + e.what());
    }
}

std::string responses_to_json(std::span<const ResponseRecord> responses) {
    json rows = json::array();
    for (const auto& r : responses) {
        rows.push_back({{"target", r.target.to_string()},
                        {"responder", r.responder.to_string()},
                        {"type", r.icmp_type},
                        {"code", r.icmp_code},
                        {"distance", r.distance ? json(*r.distance) : json(nullptr)}});
    }
    return rows.dump() + "\n";
}

std::vector<ResponseRecord> responses_from_json(const std::string& text) {
    json rows = parse_json(text, "responses.json");
    if (!rows.is_array()) {
        throw ParseError("responses.json must be an array");
    }
    std::vector<ResponseRecord> out;
    out.reserve(rows.size());
    try {
        for (const auto& row : rows) {
            ResponseRecord r;
            r.target = Address128::parse(row.at("target").get<std::string>());
            r.responder = Address128::parse(row.at("responder").get<std::string>());
            r.icmp_type = row.at("type").get<int>();
            r.icmp_code = row.at("code").get<int>();
            if (const auto& d = row.at("distance"); !d.is_null()) {
                r.distance = d.get<int>();
            }
            out.push_back(r);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("responses.json: ") + e.what());
    }
    return out;
}

std::string encode_archive(const Archive& archive) {
    std::vector<zip::Entry> entries;
    entries.push_back({"targets.json", archive.targets_json});
    for (size_t i = 0; i < archive.ranges.size(); ++i) {
        std::string dir = std::to_string(i) + "/";
        entries.push_back({dir + "metadata.json", metadata_to_json(archive.ranges[i].metadata)});
        entries.push_back({dir + "responses.json", responses_to_json(archive.ranges[i].responses)});
    }
    return zip::encode(entries);
}

Archive decode_archive(const std::string& bytes) {
    Archive out;
    bool have_targets = false;
    std::vector<std::optional<RangeMetadata>> metas;
    std::vector<std::optional<std::vector<ResponseRecord>>> rows;
    for (auto& e : zip::decode(bytes)) {
        if (e.name == "targets.json") {
            out.targets_json = std::move(e.data);
            have_targets = true;
            continue;
        }
        auto slash = e.name.find('/');
        if (slash == std::string::npos || slash == 0) {
            throw ParseError("unexpected archive member " + e.name);
        }
        size_t index = 0;
        try {
            size_t used = 0;
            index = std::stoul(e.name.substr(0, slash), &used);
            if (used != slash) {
                throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw ParseError("unexpected archive member " + e.name);
        }
        if (index >= metas.size()) {
            metas.resize(index + 1);
            rows.resize(index + 1);
        }
        std::string file = e.name.substr(slash + 1);
        if (file == "metadata.json") {
            metas[index] = metadata_from_json(e.data);
        } else if (file == "responses.json") {
            rows[index] = responses_from_json(e.data);
        } else {
            throw ParseError("unexpected archive member " + e.name);
        }
    }
    if (!have_targets) {
        throw ParseError("archive has no targets.json");
    }
    for (size_t i = 0; i < metas.size(); ++i) {
        if (!metas[i] || !rows[i]) {
            throw ParseError("range directory " + std::to_string(i) + " is incomplete");
        }
        out.ranges.push_back(RangeResult{std::move(*metas[i]), std::move(*rows[i])});
    }
    return out;
}

void write_archive(std::span<const RangeResult> results, const std::string& targets_echo,
                   const std::string& path) {
    Archive a{targets_echo, {results.begin(), results.end()}};
    std::string bytes = encode_archive(a);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

Archive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_archive(ss.str());
}

}  // namespace v6recon::engine
