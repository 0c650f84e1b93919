#include "onionwsn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>

namespace onionwsn::config {

namespace {

std::string_view trim(std::string_view s)
{
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    while (true) {
        const auto p = s.find(sep);
        out.push_back(trim(s.substr(0, p)));
        if (p == std::string_view::npos)
            return out;
        s.remove_prefix(p + 1);
    }
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view want)
{
    throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not " + std::string(want));
}

double to_double(std::string_view key, std::string_view v)
{
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
        bad(key, v, "a number");
    return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v)
{
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size())
        bad(key, v, "a non-negative integer");
    return out;
}

std::vector<std::size_t> to_list(std::string_view key, std::string_view v)
{
    std::vector<std::size_t> out;
    for (auto part : split(v, ','))
        out.push_back(static_cast<std::size_t>(to_u64(key, part)));
    return out;
}

bool to_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "on" || v == "yes" || v == "1")
        return true;
    if (v == "false" || v == "off" || v == "no" || v == "0")
        return false;
    bad(key, v, "a boolean");
}

using Setter = std::function<void(CliConfig&, std::string_view)>;

struct Entry {
    KeyInfo info;
    Setter set;
};

const std::vector<Entry>& table()
{
    static const std::vector<Entry> t = [] {
        std::vector<Entry> e;
        auto add = [&](std::string name, std::string help, Setter s) {
            e.push_back({{std::move(name), std::move(help)}, std::move(s)});
        };
        // network and run matrix
        add("topology", "grid, disc, or a comma list of both", [](CliConfig& c, std::string_view v) {
            c.experiment.topologies.clear();
            for (auto p : split(v, ','))
                c.experiment.topologies.push_back(netsim::parse_topology(p));
        });
        add("s", "network sizes, comma list", [](CliConfig& c, std::string_view v) { c.experiment.s = to_list("s", v); });
        add("n", "query path lengths, comma list", [](CliConfig& c, std::string_view v) { c.experiment.n = to_list("n", v); });
        add("queries", "queries per (topology, s, n, run)",
            [](CliConfig& c, std::string_view v) { c.experiment.queries = to_u64("queries", v); });
        add("runs", "independent runs per (topology, s)",
            [](CliConfig& c, std::string_view v) { c.experiment.runs = to_u64("runs", v); });
        add("seed", "master seed", [](CliConfig& c, std::string_view v) { c.experiment.seed = to_u64("seed", v); });
        add("a", "grid spacing in metres", [](CliConfig& c, std::string_view v) { c.experiment.a = to_double("a", v); });
        add("r_s", "disc radius scale in metres (r_p = r_s * sqrt(s))",
            [](CliConfig& c, std::string_view v) { c.experiment.r_s = to_double("r_s", v); });
        add("radio_range", "disc radio range in metres",
            [](CliConfig& c, std::string_view v) { c.experiment.radio_range = to_double("radio_range", v); });
        add("threads", "worker threads for independent cells",
            [](CliConfig& c, std::string_view v) { c.experiment.threads = to_u64("threads", v); });
        add("path_nodes", "reuse or distinct", [](CliConfig& c, std::string_view v) {
            c.experiment.sim.path_nodes = netsim::parse_path_nodes(v);
        });
        add("concurrency", "queries in flight at once",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.concurrency = to_u64("concurrency", v); });
        add("task", "aggregation run by every query, e.g. SUM(temperature)",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.task = std::string(v); });
        add("reading_min", "lowest simulated reading",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.reading_min = to_double("reading_min", v); });
        add("reading_max", "highest simulated reading",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.reading_max = to_double("reading_max", v); });
        add("entry_mitigation", "random carrier offset removed by the sink", [](CliConfig& c, std::string_view v) {
            c.experiment.sim.entry_mitigation = to_bool("entry_mitigation", v);
        });
        // node timing
        add("delays", "random forwarding delays at path nodes", [](CliConfig& c, std::string_view v) {
            c.experiment.sim.timing.delays_enabled = to_bool("delays", v);
        });
        add("delta_q", "fixed hold in seconds",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.timing.delta_q_s = to_double("delta_q", v); });
        add("r_max", "upper bound of the random delay factor",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.timing.r_max = to_double("r_max", v); });
        add("step_budget", "task VM step budget",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.timing.step_budget = to_u64("step_budget", v); });
        add("step_cost", "seconds per VM step",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.timing.step_cost_s = to_double("step_cost", v); });
        add("decrypt_cost", "seconds per decrypted byte", [](CliConfig& c, std::string_view v) {
            c.experiment.sim.timing.decrypt_cost_s_per_byte = to_double("decrypt_cost", v);
        });
        // links
        add("data_rate", "link data rate in bit/s",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.link.data_rate_bps = to_double("data_rate", v); });
        add("latency", "per radio hop latency in seconds",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.link.latency_s = to_double("latency", v); });
        add("loss", "per transmission loss probability",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.link.loss = to_double("loss", v); });
        add("rto", "first retransmission timeout in seconds",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.link.rto_s = to_double("rto", v); });
        add("hop_timeout", "seconds allowed per overlay hop before the query aborts",
            [](CliConfig& c, std::string_view v) { c.experiment.sim.link.hop_timeout_s = to_double("hop_timeout", v); });
        // outputs
        add("csv", "per-query CSV output path", [](CliConfig& c, std::string_view v) { c.csv = std::string(v); });
        add("summary", "JSON summary output path", [](CliConfig& c, std::string_view v) { c.summary = std::string(v); });
        add("trace_dir", "directory for per-cell JSONL traces (empty: none)",
            [](CliConfig& c, std::string_view v) { c.experiment.trace_dir = std::string(v); });
        // adversary
        add("owned", "adversary-owned node addresses, comma list",
            [](CliConfig& c, std::string_view v) { c.owned = parse_address_list(v); });
        add("policy", "always-deduce or mixing-aware",
            [](CliConfig& c, std::string_view v) { c.policy = adversary::parse_policy(v); });
        return e;
    }();
    return t;
}

} // namespace

const std::vector<KeyInfo>& keys()
{
    static const std::vector<KeyInfo> k = [] {
        std::vector<KeyInfo> out;
        for (const auto& e : table())
            out.push_back(e.info);
        return out;
    }();
    return k;
}

void apply_setting(CliConfig& cfg, std::string_view key, std::string_view value)
{
    for (const auto& e : table())
        if (e.info.name == key) {
            e.set(cfg, trim(value));
            return;
        }
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

CliConfig parse_config(std::istream& in, const std::string& source)
{
    CliConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view l = line;
        if (auto hash = l.find('#'); hash != std::string_view::npos)
            l = l.substr(0, hash);
        l = trim(l);
        if (l.empty())
            continue;
        const auto eq = l.find('=');
        try {
            if (eq == std::string_view::npos)
                throw ConfigError("expected 'key = value'");
            apply_setting(cfg, trim(l.substr(0, eq)), l.substr(eq + 1));
        } catch (const Error& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

CliConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, path);
}

std::set<Address> parse_address_list(std::string_view text)
{
    std::set<Address> out;
    if (trim(text).empty())
        return out;
    for (auto part : split(text, ',')) {
        try {
            out.insert(Address::parse(part));
        } catch (const Error& e) {
            throw ConfigError("bad address '" + std::string(part) + "': " + e.what());
        }
    }
    return out;
}

} // namespace onionwsn::config
