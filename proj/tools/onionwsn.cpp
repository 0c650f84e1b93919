// onionwsn: simulate | query | adversary | taskasm
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or configuration.

#include "onionwsn/config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace onionwsn;

namespace {

struct InputError : Error {
    using Error::Error;
};

std::string format_value(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (s.find_first_of(".en") == std::string::npos)
        s += ".0";
    return s;
}

std::string optional_cell(const std::optional<double>& v)
{
    if (!v)
        return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

std::ofstream open_output(const std::string& path)
{
    if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    return out;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::map<std::string, std::string> overrides;
    bool quiet = false;
};

int cmd_simulate(const SimulateArgs& args)
{
    config::CliConfig cfg = args.config.empty() ? config::CliConfig{} : config::load_config(args.config);
    for (const auto& k : config::keys())
        if (auto it = args.overrides.find(k.name); it != args.overrides.end())
            config::apply_setting(cfg, k.name, it->second);
    cfg.experiment.validate();

    const auto result = netsim::run_experiment(cfg.experiment);
    {
        auto out = open_output(cfg.csv);
        netsim::write_csv(out, result.records);
    }
    {
        auto out = open_output(cfg.summary);
        netsim::write_summary(out, cfg.experiment, result);
    }
    if (!args.quiet) {
        std::printf("%-8s %5s %5s %8s %9s %12s %12s %12s\n", "topology", "s", "n", "queries", "aborted%",
                    "q25_s", "median_s", "q75_s");
        for (const auto& c : netsim::summarize(result.records))
            std::printf("%-8s %5zu %5zu %8zu %9.2f %12s %12s %12s\n", c.topology.c_str(), c.s, c.n, c.total,
                        c.pct_aborted, optional_cell(c.q25).c_str(), optional_cell(c.median).c_str(),
                        optional_cell(c.q75).c_str());
        std::printf("wrote %s (%zu rows) and %s\n", cfg.csv.c_str(), result.records.size(),
                    cfg.summary.c_str());
    }
    return 0;
}

// ---- query -----------------------------------------------------------------

struct QueryArgs {
    std::string registry;
    std::string request;
    std::size_t n = 8;
    std::uint64_t seed = 1;
    bool entry_mitigation = true;
    std::string registry_out;
};

// Deployment file: `<address> <location> <quantity>=<value> ...`. Numeric
// values are readings, anything else a status. Keys derive from the seed
// because this command plays every node itself.
int cmd_query(const QueryArgs& args)
{
    std::ifstream in(args.registry);
    if (!in)
        throw InputError("cannot open registry '" + args.registry + "'");
    const Request request = [&] {
        try {
            return parse_request(args.request);
        } catch (const RequestError& e) {
            throw InputError("request: " + std::string(e.what()));
        }
    }();

    const Rng base(args.seed);
    Registry registry;
    std::vector<SensorNode> nodes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        std::string addr, location, item;
        if (!(ls >> addr))
            continue;
        try {
            if (!(ls >> location))
                throw FormatError("missing location");
            RegistryEntry e;
            e.address = Address::parse(addr);
            e.location = location;
            vm::SensorInterface s;
            while (ls >> item) {
                const auto eq = item.find('=');
                if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
                    throw FormatError("expected quantity=value, got '" + item + "'");
                const std::string q = item.substr(0, eq), v = item.substr(eq + 1);
                double num = 0.0;
                auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), num);
                if (ec == std::errc{} && p == v.data() + v.size())
                    s.readings[q] = num;
                else
                    s.statuses[q] = v;
                e.quantities.insert(q);
            }
            Rng key_rng = base.derive({1, e.address.value});
            auto kp = crypto::generate_keypair(key_rng);
            e.public_key = kp.public_key;
            registry.add(e);
            nodes.emplace_back(e.address, kp, s, TimingParams{.delays_enabled = false},
                               base.derive({2, e.address.value}));
        } catch (const Error& e) {
            throw InputError(args.registry + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!args.registry_out.empty()) {
        auto out = open_output(args.registry_out);
        registry.write(out);
    }

    SinkIdentityKeys sink;
    sink.address = Address{0x0a00fffe};
    Rng sink_rng = base.derive({3});
    sink.keys = crypto::generate_keypair(sink_rng);

    SinkConfig sc;
    sc.path_length = args.n;
    sc.max_path_length = std::max(sc.max_path_length, args.n);
    sc.entry_mitigation = args.entry_mitigation;
    LocalNetwork net(sink, std::move(registry), std::move(nodes));
    Rng rng = base.derive({4});
    auto report = net.run(request, sc, rng);

    std::printf("queries issued: %zu\n", report.queries_issued);
    std::printf("node visits: %zu\n", report.hops);
    for (const auto& d : report.diagnostics)
        std::printf("diagnostic: %s\n", d.c_str());
    if (!report.result.error.empty()) {
        std::fprintf(stderr, "error: %s\n", report.result.error.c_str());
        return 1;
    }
    if (report.result.value)
        std::printf("result: %s\n", format_value(*report.result.value).c_str());
    else
        std::printf("result: none (no node contributed)\n");
    return 0;
}

// ---- adversary -------------------------------------------------------------

struct AdversaryArgs {
    std::string trace;
    std::string owned;
    std::string policy = "always-deduce";
    bool external = false;
    std::string findings;
    std::string summary;
};

int cmd_adversary(const AdversaryArgs& args)
{
    std::ifstream in(args.trace);
    if (!in)
        throw InputError("cannot open trace '" + args.trace + "'");
    const netsim::Trace trace = netsim::read_trace(in);

    adversary::AdversaryConfig cfg;
    cfg.owned = config::parse_address_list(args.owned);
    cfg.policy = adversary::parse_policy(args.policy);
    cfg.validate(trace.header.sink);

    nlohmann::ordered_json summary;
    summary["trace_queries"] = trace.header.queries;
    summary["events"] = trace.events.size();
    std::vector<adversary::Finding> findings;
    if (args.external) {
        auto rep = adversary::external_view(trace);
        findings = rep.processing;
        summary["observer"] = "external";
        summary["visits"] = rep.visits;
        summary["guess_accuracy"] = rep.accuracy();
        summary["size_channel"] = rep.size_channel.size();
    } else {
        findings = adversary::internal_findings(trace, cfg);
        summary["observer"] = "internal";
        summary["owned"] = cfg.owned.size();
        summary["policy"] = adversary::to_string(cfg.policy);
    }
    const auto s = adversary::score(trace, findings);
    summary["findings"] = findings.size();
    summary["firm"] = s.firm;
    summary["firm_false"] = s.firm_false;
    summary["suspected"] = s.suspected;
    summary["suspected_false"] = s.suspected_false;
    summary["reading_disclosures"] = s.reading_disclosures;

    if (args.findings.empty()) {
        adversary::write_findings(std::cout, findings);
    } else {
        auto out = open_output(args.findings);
        adversary::write_findings(out, findings);
    }
    if (!args.summary.empty()) {
        auto out = open_output(args.summary);
        out << summary.dump(2) << '\n';
    }
    std::fprintf(stderr, "%zu findings (%zu firm, %zu false; %zu suspected, %zu false)\n", findings.size(),
                 s.firm, s.firm_false, s.suspected, s.suspected_false);
    return 0;
}

// ---- taskasm ---------------------------------------------------------------

struct TaskasmArgs {
    std::string assemble;
    std::string disassemble;
    std::string compile;
};

int cmd_taskasm(const TaskasmArgs& args)
{
    const int modes = !args.assemble.empty() + !args.disassemble.empty() + !args.compile.empty();
    if (modes != 1)
        throw InputError("give exactly one of --assemble, --disassemble, --compile");
    try {
        if (!args.assemble.empty()) {
            std::stringstream src;
            if (args.assemble == "-") {
                src << std::cin.rdbuf();
            } else {
                std::ifstream in(args.assemble);
                if (!in)
                    throw InputError("cannot open '" + args.assemble + "'");
                src << in.rdbuf();
            }
            const auto task = vm::assemble(src.str());
            vm::validate(task);
            std::printf("%s\n", to_hex(task.bytecode).c_str());
        } else if (!args.disassemble.empty()) {
            const vm::Task task{from_hex(args.disassemble)};
            vm::validate(task);
            std::printf("%s", vm::disassemble(task).c_str());
        } else {
            std::string text = args.compile;
            if (text.find('@') == std::string::npos)
                text += " @ any";
            std::printf("%s", vm::disassemble(compile_task(parse_request(text).operation)).c_str());
        }
    } catch (const vm::VmError& e) {
        throw InputError(e.what());
    } catch (const RequestError& e) {
        throw InputError(e.what());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Onion-routed WSN query protocol: simulator, adversary harness and tools"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "Run an experiment matrix and write CSV/JSON results");
    sim->add_option("-c,--config", sim_args.config, "Configuration file (key = value)");
    sim->add_flag("-q,--quiet", sim_args.quiet, "Do not print the summary table");
    for (const auto& k : config::keys())
        sim->add_option_function<std::string>(
            "--" + k.name, [&sim_args, name = k.name](const std::string& v) { sim_args.overrides[name] = v; },
            k.help);

    QueryArgs q_args;
    auto* query = app.add_subcommand("query", "Answer one request over an in-process network");
    query->add_option("-r,--registry", q_args.registry, "Deployment file: address location quantity=value ...")
        ->required();
    query->add_option("--request", q_args.request, "Request, e.g. \"AVG(temperature) @ lab\"")->required();
    query->add_option("-n,--n", q_args.n, "Query path length")->capture_default_str();
    query->add_option("--seed", q_args.seed, "Seed for keys and paths")->capture_default_str();
    query->add_option("--entry_mitigation", q_args.entry_mitigation, "Random carrier offsets")
        ->capture_default_str();
    query->add_option("--registry-out", q_args.registry_out, "Write the public registry here");

    AdversaryArgs a_args;
    auto* adv = app.add_subcommand("adversary", "Replay a trace through an adversary");
    adv->add_option("-t,--trace", a_args.trace, "Trace file (JSON lines)")->required();
    adv->add_option("--owned", a_args.owned, "Owned node addresses, comma list");
    adv->add_option("--policy", a_args.policy, "always-deduce or mixing-aware")->capture_default_str();
    adv->add_flag("--external", a_args.external, "Eavesdropper on radio links instead of owned nodes");
    adv->add_option("--findings", a_args.findings, "Findings output (default stdout)");
    adv->add_option("--summary", a_args.summary, "Summary JSON output");

    TaskasmArgs t_args;
    auto* tasm = app.add_subcommand("taskasm", "Assemble, disassemble or compile tasks");
    tasm->add_option("--assemble", t_args.assemble, "Assembly file ('-' for stdin); prints hex");
    tasm->add_option("--disassemble", t_args.disassemble, "Hex bytecode; prints assembly");
    tasm->add_option("--compile", t_args.compile, "Request or operation; prints assembly");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sim)
            return cmd_simulate(sim_args);
        if (*query)
            return cmd_query(q_args);
        if (*adv)
            return cmd_adversary(a_args);
        return cmd_taskasm(t_args);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
