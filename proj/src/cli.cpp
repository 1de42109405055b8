#include "v6recon/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "v6recon/analysis.hpp"
#include "v6recon/engine.hpp"
#include "v6recon/simnet.hpp"
#include "v6recon/zmap.hpp"

namespace v6recon::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot write " + path);
    }
    f << text;
}

Prefix parse_prefix_arg(const std::string& text, const char* flag) {
    try {
        return Prefix::parse(text);
    } catch (const ParseError& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

std::vector<schedule::TargetRange> targets_of(const engine::Archive& a) {
    return schedule::parse_target_list(a.targets_json);
}

// --- map ------------------------------------------------------------------------

struct MapArgs {
    std::string hitlist;
    std::string viewport;
    int cell_len = 0;
    bool log = false;
    std::string out;
    std::string csv;
};

void add_map(CLI::App& app, MapArgs& a) {
    auto* sub = app.add_subcommand("map", "Render a hitlist as a Z-order heatmap (PGM)");
    sub->add_option("--hitlist", a.hitlist, "Prefix list, one CIDR per line")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--viewport", a.viewport, "CIDR prefix covered by the image")->required();
    sub->add_option("--cell-len", a.cell_len, "Prefix length of one pixel")->required();
    sub->add_flag("--log", a.log, "Logarithmic intensity scale");
    sub->add_option("--out", a.out, "Output PGM file")->required();
    sub->add_option("--csv", a.csv, "Also write x,y,count rows for non-empty cells");
}

int run_map(const MapArgs& a, std::ostream& out) {
    Prefix viewport = parse_prefix_arg(a.viewport, "--viewport");
    if (a.cell_len <= viewport.length() || a.cell_len > 128) {
        throw UsageError("--cell-len must be longer than the viewport and at most 128");
    }
    if (a.cell_len - viewport.length() > zmap::kMaxHeatmapDepth) {
        throw UsageError("--cell-len is more than " + std::to_string(zmap::kMaxHeatmapDepth) +
                         " bits deeper than the viewport");
    }
    auto entries = read_prefix_list_file(a.hitlist);
    auto heatmap = zmap::build_heatmap(entries, viewport, a.cell_len, a.log);
    zmap::render_heatmap(heatmap, a.out);
    if (!a.csv.empty()) {
        zmap::write_heatmap_csv(heatmap, a.csv);
    }
    out << a.out << ": " << heatmap.width << "x" << heatmap.height << ", " << heatmap.total()
        << " entries";
    if (heatmap.ignored > 0) {
        out << ", " << heatmap.ignored << " outside the viewport";
    }
    out << "\n";
    return kExitOk;
}

// --- probe ------------------------------------------------------------------------

struct ProbeArgs {
    std::string targets;
    double rate = 1000;
    int hop_limit = 64;
    std::string key;
    std::string transport;
    std::string source;
    bool live_ack = false;
    std::optional<uint64_t> seed;
    double virtual_pps = 10000;
    double grace = 5.0;
    std::string out;
};

void add_probe(CLI::App& app, ProbeArgs& a) {
    auto* sub = app.add_subcommand("probe", "Scan target ranges and write a result archive");
    sub->add_option("--targets", a.targets, "Target list JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--rate", a.rate, "Packets per second")->capture_default_str();
    sub->add_option("--hop-limit", a.hop_limit, "Hop limit of every probe")->capture_default_str();
    sub->add_option("--key", a.key,
                    std::string("HMAC key, 64 hex digits (default: $") + kKeyEnv +
                        ", else a random key)");
    sub->add_option("--transport", a.transport, "sim:SCENARIO.json or live")->required();
    sub->add_option("--source", a.source,
                    "Probe source address (default 2001:db8::1 for sim; required for live)");
    sub->add_flag("--i-understand-live", a.live_ack,
                  "Acknowledge that live sends real packets to real networks");
    sub->add_option("--seed", a.seed, "Override the scenario seed (sim only)");
    sub->add_option("--virtual-pps", a.virtual_pps, "Simulated clock speed (sim only)")
        ->capture_default_str();
    sub->add_option("--grace", a.grace, "Seconds to keep listening after the last probe")
        ->capture_default_str();
    sub->add_option("--out", a.out, "Output archive (.zip)")->required();
}

int run_probe(const ProbeArgs& a, std::ostream& out, std::ostream& err) {
    if (!(a.rate > 0)) {
        throw UsageError("--rate must be positive");
    }
    if (a.hop_limit < 1 || a.hop_limit > 255) {
        throw UsageError("--hop-limit must be in 1..255");
    }
    if (!(a.grace >= 0)) {
        throw UsageError("--grace must not be negative");
    }
    std::string key_hex = a.key;
    if (key_hex.empty()) {
        if (const char* env = std::getenv(kKeyEnv)) {
            key_hex = env;
        }
    }
    codec::MacKey key;
    if (key_hex.empty()) {
        key = codec::MacKey::random();
        err << "using random key " << key.fingerprint() << "...\n";
    } else {
        try {
            key = codec::MacKey::from_hex(key_hex);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--key: ") + e.what());
        }
    }

    bool live = a.transport == "live";
    std::string scenario;
    if (!live) {
        if (a.transport.rfind("sim:", 0) != 0 || a.transport.size() == 4) {
            throw UsageError("--transport must be sim:SCENARIO or live");
        }
        scenario = a.transport.substr(4);
        std::ifstream probe_file(scenario);
        if (!probe_file) {
            throw UsageError("scenario file not found: " + scenario);
        }
    } else {
        if (!a.live_ack) {
            throw UsageError(
                "live scanning sends packets to real networks; pass --i-understand-live to proceed");
        }
        if (a.source.empty()) {
            throw UsageError("--source is required for live scanning");
        }
        if (a.seed) {
            throw UsageError("--seed applies to simulated transports only");
        }
    }
    Address128 source = Address128::parse("2001:db8::1");
    if (!a.source.empty()) {
        try {
            source = Address128::parse(a.source);
        } catch (const ParseError& e) {
            throw UsageError(std::string("--source: ") + e.what());
        }
    }

    std::string targets_text = read_file(a.targets);
    auto ranges = schedule::parse_target_list(targets_text);
    schedule::check_token_capacity(ranges);

    std::unique_ptr<Transport> transport;
    if (live) {
        try {
            transport = std::make_unique<LiveTransport>(source);
        } catch (const TransportFailure& e) {
            err << "error: " << e.what()
                << "\nlive scanning needs raw sockets (root or CAP_NET_RAW) and IPv6 connectivity\n";
            return kExitFailure;
        }
    } else {
        transport = std::make_unique<simnet::SimTransport>(
            simnet::load_scenario_file(scenario, a.seed), a.virtual_pps);
    }

    engine::ScanConfig config;
    config.source_address = source;
    config.hop_limit = static_cast<uint8_t>(a.hop_limit);
    config.rate = a.rate;
    config.key = key;
    config.receive_grace = a.grace;
    size_t logged = 0;
    auto log = [&](const codec::ParseFailure& f) {
        if (logged++ < 20) {
            err << "unparseable response: " << f.describe() << "\n";
        }
    };
    auto outcome = engine::run_scan(ranges, config, *transport, log);
    transport->close();
    engine::write_archive(outcome.ranges, targets_text, a.out);

    const auto& c = outcome.counters;
    out << "sent " << c.sent << ", received " << c.received << ", recorded " << c.recorded
        << ", bad MAC " << c.bad_mac << ", unparseable " << c.parse_failures << " in "
        << outcome.elapsed_s << " s\n";
    out << "wrote " << a.out << "\n";
    if (outcome.partial) {
        err << "error: scan aborted: " << outcome.error << " (partial archive written)\n";
        return kExitFailure;
    }
    return kExitOk;
}

// --- aggregate / classify ------------------------------------------------------------

struct AggregateArgs {
    std::string input;
    int plen = 64;
    std::string out;
};

void add_aggregate(CLI::App& app, AggregateArgs& a) {
    auto* sub = app.add_subcommand("aggregate", "Aggregate an address list into a prefix hitlist");
    sub->add_option("--input", a.input, "Address list, one address per line")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--plen", a.plen, "Prefix length of the hitlist")->capture_default_str();
    sub->add_option("--out", a.out, "Output file (default stdout)");
}

int run_aggregate(const AggregateArgs& a, std::ostream& out) {
    if (a.plen < 1 || a.plen > 128) {
        throw UsageError("--plen must be in 1..128");
    }
    auto addresses = read_address_list_file(a.input);
    auto hitlist = analysis::aggregate_hitlist(addresses, a.plen);
    std::ostringstream text;
    analysis::write_hitlist(text, hitlist);
    emit(a.out, text.str(), out);
    return kExitOk;
}

struct ClassifyArgs {
    std::string input;
    std::string oui;
    int top = 10;
    std::string histogram;
    int byte_index = 0;
    std::string out;
};

void add_classify(CLI::App& app, ClassifyArgs& a) {
    auto* sub = app.add_subcommand("classify", "Break down interface identifiers by generation method");
    sub->add_option("--input", a.input, "Address list, one address per line")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--oui", a.oui, "OUI table (OUI<tab>Name) for vendor counts")
        ->check(CLI::ExistingFile);
    sub->add_option("--top", a.top, "Vendors to list")->capture_default_str();
    sub->add_option("--histogram", a.histogram,
                    "Write a byte histogram CSV of the IIDs left after the EUI-64 and 0x000 splits");
    sub->add_option("--byte", a.byte_index, "IID byte for --histogram (0 = first)")
        ->capture_default_str();
    sub->add_option("--out", a.out, "Output JSON (default stdout)");
}

int run_classify(const ClassifyArgs& a, std::ostream& out, std::ostream& err) {
    if (a.byte_index < 0 || a.byte_index > 7) {
        throw UsageError("--byte must be in 0..7");
    }
    if (a.top < 0) {
        throw UsageError("--top must not be negative");
    }
    std::optional<analysis::OuiTable> table;
    if (!a.oui.empty()) {
        table = analysis::OuiTable::load(a.oui);
    }
    auto addresses = read_address_list_file(a.input);
    std::vector<uint64_t> iids;
    iids.reserve(addresses.size());
    for (auto addr : addresses) {
        iids.push_back(addr.iid());
    }
    std::sort(iids.begin(), iids.end());
    iids.erase(std::unique(iids.begin(), iids.end()), iids.end());
    auto b = analysis::classify_iid_values(iids);
    if (b.clamped) {
        err << "warning: more than half of the remaining IIDs have the u/l bit set; "
               "privacy extension estimate clamped to 0\n";
    }
    json j = {{"iids_seen", b.total},
              {"eui64", b.eui64},
              {"leading_zero12", b.leading_zero12},
              {"remaining", b.remainder},
              {"ul_set", b.ul_set_remainder},
              {"estimated",
               {{"manual_dhcp", b.estimates.manual_dhcp},
                {"modified_eui64", b.estimates.modified_eui64},
                {"semantically_opaque", b.estimates.semantically_opaque},
                {"privacy_extensions", b.estimates.privacy_extensions}}},
              {"clamped", b.clamped}};
    if (table) {
        std::map<std::string, uint64_t> by_vendor;
        for (uint64_t iid : iids) {
            if (analysis::looks_like_eui64(iid)) {
                ++by_vendor[analysis::lookup_vendor(analysis::extract_eui48(iid), *table)];
            }
        }
        std::vector<std::pair<std::string, uint64_t>> ranked(by_vendor.begin(), by_vendor.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        json vendors = json::array();
        for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(a.top); ++i) {
            vendors.push_back({{"vendor", ranked[i].first}, {"count", ranked[i].second}});
        }
        j["vendors"] = vendors;
    }
    if (!a.histogram.empty()) {
        std::vector<uint64_t> rest;
        for (uint64_t iid : iids) {
            if (!analysis::looks_like_eui64(iid) && (iid >> 52) != 0) {
                rest.push_back(iid);
            }
        }
        bool split = a.byte_index == 0;
        auto bins = analysis::iid_byte_histogram(rest, a.byte_index, split);
        std::ostringstream csv;
        csv << (split ? "value,ul_clear,ul_set\n" : "value,count\n");
        for (size_t v = 0; v < 256; ++v) {
            csv << v << ',' << bins[v];
            if (split) {
                csv << ',' << bins[v + 256];
            }
            csv << '\n';
        }
        emit(a.histogram, csv.str(), out);
    }
    emit(a.out, j.dump(2) + "\n", out);
    return kExitOk;
}

// --- pr / gen-targets / stats ------------------------------------------------------------

struct PrArgs {
    std::string archive;
    std::string prefix;
    std::string out;
};

void add_pr(CLI::App& app, PrArgs& a) {
    auto* sub = app.add_subcommand("pr", "Prefix-of-responsibility histogram from a scan archive");
    sub->add_option("--archive", a.archive, "Scan archive (.zip)")->required()->check(CLI::ExistingFile);
    sub->add_option("--prefix", a.prefix,
                    "Prefix under test (default: each range prefix of the archive)");
    sub->add_option("--out", a.out, "Output CSV (default stdout)");
}

int run_pr(const PrArgs& a, std::ostream& out, std::ostream& err) {
    std::optional<Prefix> prefix;
    if (!a.prefix.empty()) {
        prefix = parse_prefix_arg(a.prefix, "--prefix");
    }
    auto archive = engine::read_archive(a.archive);
    std::map<int, uint64_t> histogram;
    size_t discarded = 0;
    if (prefix) {
        std::vector<engine::ResponseRecord> all;
        for (const auto& r : archive.ranges) {
            all.insert(all.end(), r.responses.begin(), r.responses.end());
        }
        auto pr = analysis::compute_pr(all, *prefix);
        histogram = pr.histogram;
        discarded = pr.discarded.size();
    } else {
        auto targets = targets_of(archive);
        if (targets.size() != archive.ranges.size()) {
            throw ParseError("archive has " + std::to_string(archive.ranges.size()) +
                             " ranges but " + std::to_string(targets.size()) + " targets");
        }
        for (size_t i = 0; i < targets.size(); ++i) {
            auto pr = analysis::compute_pr(archive.ranges[i].responses, targets[i].prefix());
            for (const auto& [len, count] : pr.histogram) {
                histogram[len] += count;
            }
            discarded += pr.discarded.size();
        }
    }
    std::ostringstream csv;
    csv << "plen,responders\n";
    for (const auto& [len, count] : histogram) {
        csv << len << ',' << count << '\n';
    }
    emit(a.out, csv.str(), out);
    err << "discarded " << discarded << " responder(s) responsible for a whole prefix under test\n";
    return kExitOk;
}

struct GenTargetsArgs {
    std::string hitlist;
    size_t n = 0;
    int deeper = 0;
    int resolution = 64;
    std::optional<uint64_t> seed;
    std::string out;
};

void add_gen_targets(CLI::App& app, GenTargetsArgs& a) {
    auto* sub = app.add_subcommand("gen-targets", "Sample probe target ranges from a hitlist");
    sub->add_option("--hitlist", a.hitlist, "Prefix hitlist, all of one length")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--n", a.n, "Number of hitlist prefixes to sample")->required();
    sub->add_option("--deeper", a.deeper, "Length of the sub-prefix picked inside each sample")
        ->required();
    sub->add_option("--resolution", a.resolution, "Prefix length probed inside each sub-prefix")
        ->capture_default_str();
    sub->add_option("--seed", a.seed, "Random seed")->required();
    sub->add_option("--out", a.out, "Output target list JSON (default stdout)");
}

int run_gen_targets(const GenTargetsArgs& a, std::ostream& out) {
    auto hitlist = analysis::read_hitlist_file(a.hitlist);
    if (!(hitlist.plen <= a.deeper && a.deeper <= a.resolution && a.resolution <= 64)) {
        throw UsageError("need hitlist length (/" + std::to_string(hitlist.plen) +
                         ") <= --deeper <= --resolution <= 64");
    }
    auto ranges = analysis::sample_probe_targets(hitlist, a.n, a.deeper, a.resolution, *a.seed);
    emit(a.out, schedule::format_target_list(ranges), out);
    return kExitOk;
}

struct StatsArgs {
    std::string archive;
};

void add_stats(CLI::App& app, StatsArgs& a) {
    auto* sub = app.add_subcommand("stats", "Summary counts of a scan archive as JSON");
    sub->add_option("archive", a.archive, "Scan archive (.zip)")->required()->check(CLI::ExistingFile);
}

int run_stats(const StatsArgs& a, std::ostream& out) {
    auto archive = engine::read_archive(a.archive);
    auto targets = targets_of(archive);
    auto s = analysis::scan_stats(archive.ranges, targets);
    json j = {{"probes_sent", s.probes_sent},
              {"responses", s.responses},
              {"unique_responders", s.unique_responders},
              {"responders_with_eui64", s.responders_with_eui64}};
    out << j.dump(2) << "\n";
    return kExitOk;
}

// --- simulate ------------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::optional<uint64_t> seed;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
    auto* sub = app.add_subcommand("simulate", "Print the topology a scenario builds");
    sub->add_option("--scenario", a.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "Random seed")->required();
}

const char* iid_mode_name(simnet::IidMode m) {
    switch (m) {
        case simnet::IidMode::eui64: return "eui64";
        case simnet::IidMode::opaque: return "opaque";
        case simnet::IidMode::dhcp_sequential: return "dhcp_sequential";
    }
    return "?";
}

int run_simulate(const SimulateArgs& a, std::ostream& out) {
    auto topo = simnet::load_scenario_file(a.scenario, a.seed);
    json pools = json::array();
    for (const auto& p : topo.pools()) {
        pools.push_back({{"prefix", p.spec.pool_prefix.to_string()},
                         {"customer_plen", p.spec.customer_plen},
                         {"slots", p.capacity()},
                         {"customers", p.customers.size()},
                         {"iid_mode", iid_mode_name(p.spec.iid_mode)},
                         {"translated", p.spec.translate_to.has_value()}});
    }
    json j = {{"seed", topo.seed()},
              {"infra", topo.infra().mode == simnet::InfraMode::silent ? "silent" : "routing_loop"},
              {"infra_router", topo.infra_router().to_string()},
              {"transit_router", topo.transit_router().to_string()},
              {"customers", topo.customer_count()},
              {"pools", pools}};
    out << j.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"IPv6 access-network reconnaissance toolkit", "v6recon"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    MapArgs map_args;
    ProbeArgs probe_args;
    AggregateArgs aggregate_args;
    ClassifyArgs classify_args;
    PrArgs pr_args;
    GenTargetsArgs gen_args;
    StatsArgs stats_args;
    SimulateArgs simulate_args;
    add_map(app, map_args);
    add_probe(app, probe_args);
    add_aggregate(app, aggregate_args);
    add_classify(app, classify_args);
    add_pr(app, pr_args);
    add_gen_targets(app, gen_args);
    add_stats(app, stats_args);
    add_simulate(app, simulate_args);

    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "map") return run_map(map_args, out);
        if (name == "probe") return run_probe(probe_args, out, err);
        if (name == "aggregate") return run_aggregate(aggregate_args, out);
        if (name == "classify") return run_classify(classify_args, out, err);
        if (name == "pr") return run_pr(pr_args, out, err);
        if (name == "gen-targets") return run_gen_targets(gen_args, out);
        if (name == "stats") return run_stats(stats_args, out);
        if (name == "simulate") return run_simulate(simulate_args, out);
        err << "error: unknown subcommand " << name << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const analysis::HitlistTooSmall& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace v6recon::cli
