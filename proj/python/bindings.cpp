// Python extension: request translation, local query runs, the simulator and
// the trace analysers.

#include "onionwsn/config.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace onionwsn;

namespace {

py::dict request_dict(const Request& r)
{
    py::dict d;
    d["kind"] = std::string(vm::to_string(r.operation.kind));
    d["quantity"] = r.operation.quantity;
    d["locations"] = r.locations;
    if (r.operation.condition) {
        const auto& c = *r.operation.condition;
        py::dict cd;
        cd["quantity"] = c.quantity;
        cd["comparator"] = static_cast<int>(c.comparator);
        if (const auto* s = std::get_if<std::string>(&c.literal))
            cd["literal"] = *s;
        else
            cd["literal"] = std::get<double>(c.literal);
        d["condition"] = cd;
    } else {
        d["condition"] = py::none();
    }
    return d;
}

py::bytes to_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

// Every node is played locally; keys derive from the seed.
py::dict run_query(const std::vector<py::dict>& deployment, const std::string& request_text, std::size_t n,
                   std::uint64_t seed, bool entry_mitigation)
{
    const Request request = parse_request(request_text);
    const Rng base(seed);
    Registry registry;
    std::vector<SensorNode> nodes;
    for (const auto& item : deployment) {
        RegistryEntry e;
        e.address = Address::parse(item["address"].cast<std::string>());
        e.location = item["location"].cast<std::string>();
        vm::SensorInterface s;
        if (item.contains("readings"))
            s.readings = item["readings"].cast<std::map<std::string, double>>();
        if (item.contains("statuses"))
            s.statuses = item["statuses"].cast<std::map<std::string, std::string>>();
        for (const auto& [q, v] : s.readings)
            e.quantities.insert(q);
        for (const auto& [q, v] : s.statuses)
            e.quantities.insert(q);
        Rng key_rng = base.derive({1, e.address.value});
        auto kp = crypto::generate_keypair(key_rng);
        e.public_key = kp.public_key;
        registry.add(e);
        nodes.emplace_back(e.address, kp, s, TimingParams{.delays_enabled = false}, base.derive({2, e.address.value}));
    }
    SinkIdentityKeys sink;
    sink.address = Address{0x0a00fffe};
    Rng sink_rng = base.derive({3});
    sink.keys = crypto::generate_keypair(sink_rng);
    SinkConfig sc;
    sc.path_length = n;
    sc.max_path_length = std::max(sc.max_path_length, n);
    sc.entry_mitigation = entry_mitigation;
    LocalNetwork net(sink, std::move(registry), std::move(nodes));
    Rng rng = base.derive({4});
    const auto report = net.run(request, sc, rng);

    py::dict out;
    out["value"] = report.result.value ? py::cast(*report.result.value) : py::none();
    out["error"] = report.result.error;
    out["queries"] = report.queries_issued;
    out["hops"] = report.hops;
    out["diagnostics"] = report.diagnostics;
    return out;
}

py::dict simulate(const std::map<std::string, py::object>& settings)
{
    config::CliConfig cfg;
    for (const auto& [key, value] : settings) {
        std::string text;
        if (py::isinstance<py::bool_>(value))
            text = value.cast<bool>() ? "true" : "false";
        else if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
            for (const auto& v : value)
                text += (text.empty() ? "" : ",") + py::str(v).cast<std::string>();
        } else
            text = py::str(value).cast<std::string>();
        config::apply_setting(cfg, key, text);
    }
    cfg.experiment.validate();
    netsim::ExperimentResult result;
    {
        py::gil_scoped_release release;
        result = netsim::run_experiment(cfg.experiment);
    }
    py::list records;
    for (const auto& r : result.records) {
        py::dict d;
        d["topology"] = r.topology;
        d["s"] = r.s;
        d["n"] = r.n;
        d["query_id"] = r.query_id;
        d["qttr_s"] = r.qttr_s ? py::cast(*r.qttr_s) : py::none();
        d["hops_total"] = r.hops_total;
        records.append(d);
    }
    std::ostringstream csv, summary;
    netsim::write_csv(csv, result.records);
    netsim::write_summary(summary, cfg.experiment, result);
    py::dict out;
    out["records"] = records;
    out["csv"] = csv.str();
    out["summary"] = summary.str();
    return out;
}

netsim::Trace load_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open trace '" + path + "'");
    return netsim::read_trace(in);
}

py::list findings_list(const std::vector<adversary::Finding>& fs)
{
    py::list out;
    for (const auto& f : fs) {
        py::dict d;
        d["query"] = f.query;
        d["subject"] = f.subject.to_string();
        d["claim"] = std::string(adversary::to_string(f.claim));
        d["value"] = f.value ? py::cast(*f.value) : py::none();
        d["quantity"] = f.quantity;
        d["suspected"] = f.suspected;
        d["evidence"] = f.evidence;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Onion-routed sensor queries: protocol core, simulator and adversary harness";

    py::register_exception<Error>(m, "Error");

    m.def("head_size_for", &onion::head_size_for, py::arg("n"), "Query head size in bytes for n path nodes");
    m.def("body_size_for", &onion::body_size_for, py::arg("task_capacity") = onion::kDefaultTaskCapacity,
          "Query body size in bytes");
    m.def("parse_request", [](const std::string& text) { return request_dict(parse_request(text)); },
          py::arg("text"));
    m.def("compile_request",
          [](const std::string& text) { return to_bytes(compile_task(parse_request(text).operation).bytecode); },
          py::arg("text"), "Task bytecode for a request");
    m.def("run_query", &run_query, py::arg("deployment"), py::arg("request"), py::arg("n") = 8,
          py::arg("seed") = 1, py::arg("entry_mitigation") = true,
          "Run one request over an in-process network; deployment is a list of dicts with "
          "address, location, readings and statuses");
    m.def("simulate", &simulate, py::arg("settings"),
          "Run the simulator with configuration keys given as a dict");
    m.def(
        "adversary_findings",
        [](const std::string& trace, const std::vector<std::string>& owned, const std::string& policy) {
            const auto t = load_trace(trace);
            adversary::AdversaryConfig cfg;
            for (const auto& a : owned)
                cfg.owned.insert(Address::parse(a));
            cfg.policy = adversary::parse_policy(policy);
            cfg.validate(t.header.sink);
            return findings_list(adversary::internal_findings(t, cfg));
        },
        py::arg("trace"), py::arg("owned"), py::arg("policy") = "always-deduce");
    m.def(
        "external_view",
        [](const std::string& trace) {
            const auto rep = adversary::external_view(load_trace(trace));
            py::dict d;
            d["visits"] = rep.visits;
            d["correct_guesses"] = rep.correct_guesses;
            d["accuracy"] = rep.accuracy();
            d["size_changes"] = rep.size_channel.size();
            return d;
        },
        py::arg("trace"));
    m.def("disclosure_rate",
          [](const std::vector<double>& fractions, std::size_t trials, std::uint64_t seed, bool mitigation) {
              std::vector<std::pair<double, double>> out;
              for (const auto& p : adversary::disclosure_rate(fractions, trials, seed, 36, 8, mitigation))
                  out.emplace_back(p.fraction, p.rate);
              return out;
          },
          py::arg("fractions"), py::arg("trials") = 200, py::arg("seed") = 1, py::arg("entry_mitigation") = true);
}
