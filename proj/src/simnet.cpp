#include "v6recon/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "v6recon/random.hpp"

namespace v6recon::simnet {

namespace {

// Independent draw streams per purpose.
constexpr uint64_t kOccupancyStream = 0x6f6363757079ULL;
constexpr uint64_t kOuiStream = 0x6f7569ULL;
constexpr uint64_t kNicStream = 0x6e6963ULL;
constexpr uint64_t kOpaqueStream = 0x6f7061717565ULL;

bool looks_like_eui64(uint64_t iid) { return ((iid >> 24) & 0xffff) == 0xfffe; }

uint32_t pick_oui(const PoolSpec& spec, double u) {
    double total = 0;
    for (const auto& w : spec.oui_distribution) {
        total += w.weight;
    }
    double target = u * total;
    for (const auto& w : spec.oui_distribution) {
        if (target < w.weight) {
            return w.oui;
        }
        target -= w.weight;
    }
    return spec.oui_distribution.back().oui;
}

void validate(const PoolSpec& spec) {
    const std::string where = "pool " + spec.pool_prefix.to_string() + ": ";
    if (spec.customer_plen < spec.pool_prefix.length() || spec.customer_plen > 64) {
        throw std::invalid_argument(where + "customer_plen must be in [pool length, 64]");
    }
    if (spec.customer_plen - spec.pool_prefix.length() > kMaxPoolDepth) {
        throw std::invalid_argument(where + "more than 2^" + std::to_string(kMaxPoolDepth) +
                                    " customer slots");
    }
    if (!(spec.occupancy >= 0.0 && spec.occupancy <= 1.0)) {
        throw std::invalid_argument(where + "occupancy outside [0, 1]");
    }
    if (spec.iid_mode == IidMode::eui64 && spec.oui_distribution.empty()) {
        throw std::invalid_argument(where + "eui64 mode needs an OUI distribution");
    }
    if (spec.distance_hops < 0 || spec.distance_hops > 254) {
        throw std::invalid_argument(where + "distance_hops outside 0..254");
    }
    if (spec.translate_to && spec.translate_to->length() > spec.pool_prefix.length()) {
        throw std::invalid_argument(where + "translation prefix longer than the pool");
    }
}

Address128 address_at(std::span<const uint8_t> p, size_t off) {
    return Address128::from_bytes(p.subspan(off).first<16>());
}

}  // namespace

uint64_t eui64_iid(uint64_t mac48) {
    uint64_t oui = (mac48 >> 24) & 0xffffff;
    uint64_t nic = mac48 & 0xffffff;
    return ((oui ^ 0x020000) << 40) | (uint64_t{0xfffe} << 24) | nic;
}

uint64_t Pool::capacity() const {
    return uint64_t{1} << (spec.customer_plen - spec.pool_prefix.length());
}

const Customer* Pool::find(Address128 a) const {
    if (!spec.pool_prefix.contains(a)) {
        return nullptr;
    }
    uint64_t index = static_cast<uint64_t>((a.value() >> (128 - spec.customer_plen)) &
                                           (capacity() - 1));
    auto it = std::lower_bound(customers.begin(), customers.end(), index,
                               [](const Customer& c, uint64_t i) { return c.index < i; });
    if (it == customers.end() || it->index != index) {
        return nullptr;
    }
    return &*it;
}

SimTopology::SimTopology(std::vector<Pool> pools, InfraBehavior infra, uint64_t seed,
                         Address128 infra_router, Address128 transit_router)
    : pools_(std::move(pools)),
      infra_(infra),
      seed_(seed),
      infra_router_(infra_router),
      transit_router_(transit_router) {}

const Pool* SimTopology::pool_of(Address128 a) const {
    for (const auto& p : pools_) {
        if (p.spec.pool_prefix.contains(a)) {
            return &p;
        }
    }
    return nullptr;
}

const Customer* SimTopology::customer_of(Address128 a) const {
    const Pool* p = pool_of(a);
    return p ? p->find(a) : nullptr;
}

size_t SimTopology::customer_count() const {
    size_t n = 0;
    for (const auto& p : pools_) {
        n += p.customers.size();
    }
    return n;
}

SimTopology build_topology(std::vector<PoolSpec> specs, InfraBehavior infra, uint64_t seed,
                           BuildOptions options) {
    for (size_t i = 0; i < specs.size(); ++i) {
        validate(specs[i]);
        for (size_t j = 0; j < i; ++j) {
            if (specs[i].pool_prefix.contains(specs[j].pool_prefix) ||
                specs[j].pool_prefix.contains(specs[i].pool_prefix)) {
                throw OverlappingPools("pools " + specs[j].pool_prefix.to_string() + " and " +
                                       specs[i].pool_prefix.to_string() + " overlap");
            }
        }
    }
    if (infra.loop_hop_cost < 1) {
        throw std::invalid_argument("loop_hop_cost must be >= 1");
    }
    if (infra.expired_hop_limit != 0 && infra.expired_hop_limit != 1) {
        throw std::invalid_argument("expired_hop_limit must be 0 or 1");
    }

    std::vector<Pool> pools;
    pools.reserve(specs.size());
    for (size_t pi = 0; pi < specs.size(); ++pi) {
        Pool pool{std::move(specs[pi]), {}};
        const PoolSpec& spec = pool.spec;
        int shift = 128 - spec.customer_plen;
        uint64_t ordinal = 0;
        for (uint64_t i = 0; i < pool.capacity(); ++i) {
            if (keyed_uniform(seed ^ kOccupancyStream, pi, i) >= spec.occupancy) {
                continue;
            }
            Address128 base{spec.pool_prefix.address().value() | (u128{i} << shift)};
            uint64_t iid = 0;
            switch (spec.iid_mode) {
                case IidMode::eui64: {
                    uint64_t oui = pick_oui(spec, keyed_uniform(seed ^ kOuiStream, pi, i));
                    uint64_t nic = keyed_draw(seed ^ kNicStream, pi, i) & 0xffffff;
                    iid = eui64_iid((oui << 24) | nic);
                    break;
                }
                case IidMode::opaque:
                    iid = keyed_draw(seed ^ kOpaqueStream, pi, i);
                    if (looks_like_eui64(iid)) {
                        iid ^= uint64_t{1} << 24;
                    }
                    break;
                case IidMode::dhcp_sequential:
                    iid = spec.dhcp_start + ordinal;
                    break;
            }
            ++ordinal;
            pool.customers.push_back(Customer{i, Prefix{base, spec.customer_plen},
                                              Address128{base.value() | iid}});
        }
        pools.push_back(std::move(pool));
    }
    return SimTopology(std::move(pools), infra, seed, options.infra_router,
                       options.transit_router);
}

bool SimState::take_error_token(Address128 router, double now, const InfraBehavior& infra) {
    if (infra.error_rate_limit <= 0) {
        return false;
    }
    double burst = std::max(1.0, infra.error_burst);
    auto [it, inserted] = buckets_.try_emplace(router, Bucket{burst, now});
    Bucket& b = it->second;
    if (!inserted) {
        b.tokens = std::min(burst, b.tokens + (now - b.last) * infra.error_rate_limit);
        b.last = now;
    }
    if (b.tokens >= 1.0) {
        b.tokens -= 1.0;
        return true;
    }
    return false;
}

std::vector<SimResponse> handle_packet(const SimTopology& topology, std::span<const uint8_t> packet,
                                       SimState& state, double now) {
    std::vector<SimResponse> out;
    if (packet.size() < codec::kIpv6HeaderSize + codec::kIcmpHeaderSize || (packet[0] >> 4) != 6) {
        return out;
    }
    Address128 dst = address_at(packet, 24);
    int hop_limit = packet[7];
    const Pool* pool = topology.pool_of(dst);
    if (pool == nullptr) {
        return out;
    }
    const PoolSpec& spec = pool->spec;
    const InfraBehavior& infra = topology.infra();
    double round_trip = 2 * spec.latency;

    auto quoted = [&](int quoted_hop_limit) {
        codec::Packet copy(packet.begin(), packet.end());
        copy[7] = static_cast<uint8_t>(quoted_hop_limit);
        if (spec.translate_to) {
            int len = spec.translate_to->length();
            u128 rewritten = spec.translate_to->address().value() |
                             (dst.value() & ~prefix_mask(len));
            Address128{rewritten}.write_bytes(std::span(copy).subspan(24).first<16>());
        }
        return copy;
    };
    auto time_exceeded = [&](Address128 router, double extra_delay) {
        if (!state.take_error_token(router, now, infra)) {
            return;
        }
        out.push_back({round_trip + extra_delay,
                       codec::build_error_response(codec::kTimeExceeded, 0, 0, router,
                                                   quoted(infra.expired_hop_limit), 64)});
    };

    if (hop_limit <= spec.distance_hops) {
        time_exceeded(topology.transit_router(), 0);
        return out;
    }
    int arrival_hop_limit = hop_limit - spec.distance_hops;

    if (const Customer* customer = pool->find(dst)) {
        bool anycast = dst.iid() == 0;
        if (anycast && spec.cpe_reply == CpeReply::echo) {
            out.push_back({round_trip, codec::build_echo_reply(quoted(arrival_hop_limit),
                                                               customer->cpe, 64)});
        } else {
            out.push_back({round_trip,
                           codec::build_error_response(codec::kDestinationUnreachable, 3, 0,
                                                       customer->cpe, quoted(arrival_hop_limit),
                                                       64)});
        }
        return out;
    }

    if (infra.mode == InfraMode::routing_loop) {
        int traversals = (arrival_hop_limit + infra.loop_hop_cost - 1) / infra.loop_hop_cost;
        time_exceeded(topology.infra_router(), traversals * 0.0005);
    }
    return out;
}

// --- scenario files -----------------------------------------------------------

namespace {

IidMode parse_iid_mode(const std::string& s) {
    if (s == "eui64") return IidMode::eui64;
    if (s == "opaque") return IidMode::opaque;
    if (s == "dhcp_sequential") return IidMode::dhcp_sequential;
    throw ParseError("unknown iid_mode '" + s + "'");
}

CpeReply parse_cpe_reply(const std::string& s) {
    if (s == "echo") return CpeReply::echo;
    if (s == "addr_unreachable") return CpeReply::addr_unreachable;
    throw ParseError("unknown cpe_reply '" + s + "'");
}

InfraMode parse_infra_mode(const std::string& s) {
    if (s == "silent") return InfraMode::silent;
    if (s == "routing_loop") return InfraMode::routing_loop;
    throw ParseError("unknown infra mode '" + s + "'");
}

}  // namespace

SimTopology load_scenario(const std::string& json_text, std::optional<uint64_t> seed_override) {
    try {
        auto doc = nlohmann::json::parse(json_text);
        InfraBehavior infra;
        if (doc.contains("infra")) {
            const auto& j = doc.at("infra");
            infra.mode = parse_infra_mode(j.value("mode", std::string("silent")));
            infra.loop_hop_cost = j.value("loop_hop_cost", infra.loop_hop_cost);
            infra.error_rate_limit = j.value("error_rate_limit", infra.error_rate_limit);
            infra.error_burst = j.value("error_burst", infra.error_burst);
            infra.expired_hop_limit = j.value("expired_hop_limit", infra.expired_hop_limit);
        }
        std::vector<PoolSpec> pools;
        for (const auto& j : doc.at("pools")) {
            PoolSpec p;
            p.pool_prefix = Prefix::parse(j.at("prefix").get<std::string>());
            p.customer_plen = j.value("customer_plen", p.customer_plen);
            p.occupancy = j.value("occupancy", p.occupancy);
            p.iid_mode = parse_iid_mode(j.value("iid_mode", std::string("eui64")));
            if (j.contains("oui_distribution")) {
                for (const auto& o : j.at("oui_distribution")) {
                    auto oui = parse_hex_u128(o.at("oui").get<std::string>());
                    if (oui > 0xffffff) {
                        throw ParseError("OUI wider than 24 bits");
                    }
                    p.oui_distribution.push_back(
                        {static_cast<uint32_t>(oui), o.value("weight", 1.0)});
                }
            }
            p.cpe_reply = parse_cpe_reply(j.value("cpe_reply", std::string("echo")));
            p.distance_hops = j.value("distance_hops", p.distance_hops);
            p.latency = j.value("latency", p.latency);
            p.dhcp_start = j.value("dhcp_start", p.dhcp_start);
            if (j.contains("translate_to")) {
                p.translate_to = Prefix::parse(j.at("translate_to").get<std::string>());
            }
            pools.push_back(std::move(p));
        }
        BuildOptions options;
        if (doc.contains("infra_router")) {
            options.infra_router = Address128::parse(doc.at("infra_router").get<std::string>());
        }
        if (doc.contains("transit_router")) {
            options.transit_router =
                Address128::parse(doc.at("transit_router").get<std::string>());
        }
        uint64_t seed = seed_override.value_or(doc.value("seed", uint64_t{0}));
        return build_topology(std::move(pools), infra, seed, options);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
}

SimTopology load_scenario_file(const std::string& path, std::optional<uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str(), seed_override);
}

// --- transport ------------------------------------------------------------------

SimTransport::SimTransport(SimTopology topology, double virtual_pps)
    : topology_(std::move(topology)), step_(1.0 / virtual_pps) {
    if (!(virtual_pps > 0)) {
        throw std::invalid_argument("virtual_pps must be positive");
    }
}

void SimTransport::send(std::span<const uint8_t> packet) {
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("send on closed simulated transport");
    }
    clock_ += step_;
    ++sent_;
    for (auto& r : handle_packet(topology_, packet, state_, clock_)) {
        size_t n = responses_generated_++;
        int copies = std::count(duplicates_.begin(), duplicates_.end(), n) > 0 ? 2 : 1;
        for (int c = 0; c < copies; ++c) {
            queue_.emplace(std::make_pair(clock_ + r.delay, seq_++), r.packet);
        }
    }
}

std::vector<codec::Packet> SimTransport::poll_received() {
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("poll on closed simulated transport");
    }
    std::vector<codec::Packet> out;
    auto end = finished_ ? queue_.end() : queue_.upper_bound({clock_, UINT64_MAX});
    for (auto it = queue_.begin(); it != end; ++it) {
        out.push_back(std::move(it->second));
    }
    queue_.erase(queue_.begin(), end);
    return out;
}

void SimTransport::finish_sending() {
    std::lock_guard lock(mutex_);
    finished_ = true;
}

bool SimTransport::drained() {
    std::lock_guard lock(mutex_);
    return finished_ && queue_.empty();
}

void SimTransport::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
}

void SimTransport::duplicate_response(size_t n) {
    std::lock_guard lock(mutex_);
    duplicates_.push_back(n);
}

void SimTransport::inject(codec::Packet packet) {
    std::lock_guard lock(mutex_);
    queue_.emplace(std::make_pair(clock_, seq_++), std::move(packet));
}

size_t SimTransport::sent_count() const {
    std::lock_guard lock(mutex_);
    return sent_;
}

double SimTransport::now() const {
    std::lock_guard lock(mutex_);
    return clock_;
}

}  // namespace v6recon::simnet
