#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v6recon/address.hpp"
#include "v6recon/codec.hpp"
#include "v6recon/transport.hpp"

// Deterministic model of an access provider network: customer prefix pools
// with CPEs, transit routers in front of them, and either silent or
// routing-loop behavior for unassigned pool space.
namespace v6recon::simnet {

enum class IidMode { eui64, opaque, dhcp_sequential };
enum class CpeReply { echo, addr_unreachable };
enum class InfraMode { silent, routing_loop };

struct OuiWeight {
    uint32_t oui = 0;  // 24 bits
    double weight = 1.0;
};

struct PoolSpec {
    Prefix pool_prefix;
    int customer_plen = 56;
    double occupancy = 1.0;
    IidMode iid_mode = IidMode::eui64;
    std::vector<OuiWeight> oui_distribution;
    CpeReply cpe_reply = CpeReply::echo;
    int distance_hops = 8;
    /// One-way latency in virtual seconds.
    double latency = 0.02;
    /// First IID handed out in dhcp_sequential mode.
    uint64_t dhcp_start = 1;
    /// When set, packets into this pool are prefix-translated on the way in:
    /// the top translate_to.length() destination bits are replaced.
    std::optional<Prefix> translate_to;
};

struct InfraBehavior {
    InfraMode mode = InfraMode::silent;
    int loop_hop_cost = 1;
    /// Error messages per virtual second per router; 0 disables errors.
    double error_rate_limit = 100.0;
    double error_burst = 1.0;
    /// Hop limit quoted in time-exceeded errors: 0 (as forwarded) or 1 (as received).
    int expired_hop_limit = 0;
};

class OverlappingPools : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Customer {
    uint64_t index = 0;  // position of the customer prefix inside the pool
    Prefix prefix;
    Address128 cpe;      // first /64 of the prefix + IID
};

struct Pool {
    PoolSpec spec;
    std::vector<Customer> customers;  // sorted by index

    uint64_t capacity() const;
    const Customer* find(Address128 a) const;
};

/// Largest number of customer slots per pool.
inline constexpr int kMaxPoolDepth = 24;

class SimTopology {
public:
    SimTopology() = default;
    SimTopology(std::vector<Pool> pools, InfraBehavior infra, uint64_t seed,
                Address128 infra_router, Address128 transit_router);

    const std::vector<Pool>& pools() const { return pools_; }
    const InfraBehavior& infra() const { return infra_; }
    uint64_t seed() const { return seed_; }
    Address128 infra_router() const { return infra_router_; }
    Address128 transit_router() const { return transit_router_; }

    const Pool* pool_of(Address128 a) const;
    const Customer* customer_of(Address128 a) const;
    size_t customer_count() const;

private:
    std::vector<Pool> pools_;
    InfraBehavior infra_;
    uint64_t seed_ = 0;
    Address128 infra_router_;
    Address128 transit_router_;
};

struct BuildOptions {
    Address128 infra_router = Address128::parse("2001:db8:ffff::1");
    Address128 transit_router = Address128::parse("2001:db8:ffff::2");
};

/// Materializes every occupied customer. A slot is occupied iff its seeded
/// draw falls below the pool occupancy.
SimTopology build_topology(std::vector<PoolSpec> pools, InfraBehavior infra, uint64_t seed,
                           BuildOptions options = {});

/// Modified EUI-64 interface identifier of a MAC address.
uint64_t eui64_iid(uint64_t mac48);

/// Per-router token buckets for ICMPv6 error rate limiting.
class SimState {
public:
    bool take_error_token(Address128 router, double now, const InfraBehavior& infra);

private:
    struct Bucket {
        double tokens = 0;
        double last = 0;
    };
    std::map<Address128, Bucket> buckets_;
};

struct SimResponse {
    double delay = 0;  // virtual seconds after the probe was sent
    codec::Packet packet;
};

/// What the network sends back for one packet at virtual time `now`.
std::vector<SimResponse> handle_packet(const SimTopology& topology, std::span<const uint8_t> packet,
                                       SimState& state, double now);

/// Scenario JSON: {"seed": n, "infra": {...}, "pools": [{...}], "infra_router": "...",
/// "transit_router": "..."}.
SimTopology load_scenario(const std::string& json_text, std::optional<uint64_t> seed_override = {});
SimTopology load_scenario_file(const std::string& path, std::optional<uint64_t> seed_override = {});

/// Transport backed by a topology and a virtual clock that advances by
/// 1/virtual_pps per sent packet. Thread-safe.
class SimTransport : public Transport {
public:
    explicit SimTransport(SimTopology topology, double virtual_pps = 10000.0);

    void send(std::span<const uint8_t> packet) override;
    std::vector<codec::Packet> poll_received() override;
    void finish_sending() override;
    bool drained() override;
    void close() override;

    /// Delivers the n-th response (0-based) twice.
    void duplicate_response(size_t n);
    /// Queues an arbitrary packet for delivery at the current virtual time.
    void inject(codec::Packet packet);

    size_t sent_count() const;
    double now() const;
    const SimTopology& topology() const { return topology_; }

private:
    mutable std::mutex mutex_;
    SimTopology topology_;
    SimState state_;
    double step_;
    double clock_ = 0;
    uint64_t seq_ = 0;
    size_t responses_generated_ = 0;
    size_t sent_ = 0;
    bool finished_ = false;
    bool closed_ = false;
    std::vector<size_t> duplicates_;
    std::multimap<std::pair<double, uint64_t>, codec::Packet> queue_;
};

}  // namespace v6recon::simnet
