// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--criterion N] [--cli PATH] [--workdir DIR]
//
// Exit status is non-zero when any selected criterion fails.

#include "../support.hpp"

#include "onionwsn/adversary.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

using namespace onionwsn;
using testsupport::make_registry;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what)
    {
        if (ok)
            return;
        pass = false;
        if (failures.size() < 10)
            failures.push_back(what);
    }
};

struct Options {
    std::string cli;
    std::filesystem::path workdir = std::filesystem::temp_directory_path() / "onionwsn_acceptance";
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---- 1: protocol structure ---------------------------------------------------

Outcome criterion1(const Options&)
{
    Outcome o;
    const vm::Task task = compile_task(parse_request("SUM(temperature) @ lab").operation);
    std::size_t instances = 0, hops = 0;
    for (std::uint64_t seed = 0; seed < 1200; ++seed) {
        Rng rng(1000 + seed);
        const std::size_t n = 2 + rng.below(19);                      // 2..20
        const std::size_t u = n + 1 + rng.below(40);                  // |U| > n
        const std::size_t q = 1 + rng.below(u - n);                   // |U \ Q| >= n
        auto kr = make_registry(u, rng);
        const auto universe = kr.registry.addresses();
        std::vector<Address> targets(universe.begin(), universe.end());
        for (std::size_t i = 0; i < q; ++i)
            std::swap(targets[i], targets[i + rng.below(u - i)]);
        targets.resize(q);
        const std::set<Address> tset(targets.begin(), targets.end());
        const std::string tag = "seed " + std::to_string(seed) + ": ";

        auto sel = query_path_selection(universe, targets, n, rng);
        const auto& d = sel.definition;
        o.require(d.path.size() == n, tag + "path length");
        o.require(d.target_count() == std::min(q, n / 2), tag + "target count");
        o.require(!d.keys.back().has_value() && !tset.contains(d.path.back()), tag + "last slot not a decoy");
        o.require(std::set<Address>(d.path.begin(), d.path.end()).size() == n, tag + "duplicate path node");
        crypto::SymKey chain = d.first_key;
        for (std::size_t i = 0; i < n; ++i) {
            o.require(d.keys[i].has_value() == tset.contains(d.path[i]), tag + "key/target mismatch");
            if (d.keys[i]) {
                o.require(d.keys[i]->first == chain, tag + "broken key chain");
                chain = d.keys[i]->second;
            }
        }
        o.require(chain == d.last_key, tag + "key chain does not end at e_L");

        auto plan = plan_queries(universe, targets, n, vm::Aggregation::Sum, rng);
        o.require(plan.definitions.size() == (q + n / 2 - 1) / (n / 2), tag + "|P| cardinality");

        // Full replay: sizes at every hop, path / keys / e_L reconstructed.
        const std::size_t lh = onion::head_size_for(n + rng.below(4));
        auto head = onion::build_head(d, kr.sink.identity(), kr.registry, lh, rng);
        vm::CarrierString w;
        auto body = onion::build_body(task.bytecode, w.encode(), d.first_key, rng);
        const std::size_t lb = body.size();
        o.require(lb == onion::body_size_for(onion::kDefaultTaskCapacity), tag + "L_B");
        std::vector<Address> path{d.path.front()};
        std::vector<std::optional<SymKeyPair>> keys;
        Address at = d.path.front();
        for (std::size_t i = 0; i < n; ++i, ++hops) {
            o.require(head.size() == lh && body.size() == lb, tag + "size changed at hop");
            auto peeled = onion::peel(head, kr.keys.at(at));
            keys.push_back(peeled.keys);
            if (peeled.keys) {
                auto c = onion::open_body(body, peeled.keys->first);
                body = onion::reencrypt_body(c, peeled.keys->second, rng);
            }
            head = onion::repad_head(peeled.inner, lh, rng);
            at = peeled.next_hop;
            if (i + 1 < n)
                path.push_back(at);
        }
        o.require(at == kr.sink.address, tag + "last hop is not the sink");
        o.require(head.size() == lh && body.size() == lb, tag + "size changed at sink");
        o.require(path == d.path, tag + "path not reconstructed");
        o.require(keys == d.keys, tag + "keys not reconstructed");
        o.require(onion::open_terminal(head, kr.sink.keys) == d.last_key, tag + "e_L not recovered");
        ++instances;
    }
    o.detail = std::to_string(instances) + " (U,Q,n) instances, " + std::to_string(hops) + " hops replayed";
    return o;
}

// ---- 2: end-to-end oracle ------------------------------------------------------

std::optional<double> brute_force(vm::Aggregation kind, const std::vector<double>& xs)
{
    if (xs.empty())
        return std::nullopt;
    const double n = static_cast<double>(xs.size());
    const double sum = std::accumulate(xs.begin(), xs.end(), 0.0);
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    switch (kind) {
    case vm::Aggregation::Sum: return sum;
    case vm::Aggregation::Avg: return mean;
    case vm::Aggregation::Max: return *std::max_element(xs.begin(), xs.end());
    case vm::Aggregation::Variance: return ss / n;
    case vm::Aggregation::Std: return std::sqrt(ss / n);
    }
    return std::nullopt;
}

bool passes(const Condition& c, const vm::SensorInterface& s)
{
    if (const auto* lit = std::get_if<std::string>(&c.literal)) {
        const auto& v = s.statuses.at(c.quantity);
        return c.comparator == vm::Comparator::Eq ? v == *lit : v != *lit;
    }
    const double x = s.readings.at(c.quantity), y = std::get<double>(c.literal);
    switch (c.comparator) {
    case vm::Comparator::Eq: return x == y;
    case vm::Comparator::Ne: return x != y;
    case vm::Comparator::Lt: return x < y;
    case vm::Comparator::Le: return x <= y;
    case vm::Comparator::Gt: return x > y;
    case vm::Comparator::Ge: return x >= y;
    }
    return false;
}

Outcome criterion2(const Options&)
{
    Outcome o;
    const std::vector<std::string> aggs{"SUM", "AVG", "MAX", "VARIANCE", "STD"};
    const std::vector<std::string> locations{"north", "south", "east", "west"};
    std::size_t checked = 0, empty = 0, queries = 0;
    for (std::uint64_t seed = 0; checked < 500 && seed < 2000; ++seed) {
        Rng rng(5000 + seed);
        const std::size_t count = 8 + rng.below(23);  // 8..30 nodes
        Registry registry;
        std::vector<SensorNode> nodes;
        std::map<Address, vm::SensorInterface> truth;
        for (std::size_t i = 0; i < count; ++i) {
            RegistryEntry e;
            e.address = testsupport::node_address(i);
            e.location = locations[rng.below(locations.size())];
            e.quantities = {"temperature", "light"};
            auto kp = crypto::generate_keypair(rng);
            e.public_key = kp.public_key;
            vm::SensorInterface s;
            // Quarter-unit resolution keeps every partial sum exact.
            s.readings["temperature"] = 1.0 + 0.25 * static_cast<double>(rng.below(397));
            s.statuses["light"] = rng.below(2) ? "ON" : "OFF";
            truth[e.address] = s;
            registry.add(e);
            nodes.emplace_back(e.address, kp, s, TimingParams{.delays_enabled = false}, rng.derive({seed, i}));
        }
        // Request over one or two locations, optionally conditional.
        std::string where = locations[rng.below(4)];
        if (rng.below(2))
            where += "," + locations[rng.below(4)];
        std::string text;
        switch (rng.below(4)) {
        case 1: text = "IF(light=ON) THEN "; break;
        case 2: text = "IF(temperature>=" + fmt("%.2f", 1.0 + 0.25 * static_cast<double>(rng.below(397))) + ") THEN "; break;
        case 3: text = "IF(temperature<" + fmt("%.2f", 1.0 + 0.25 * static_cast<double>(rng.below(397))) + ") THEN "; break;
        default: break;
        }
        const std::string agg = aggs[rng.below(aggs.size())];
        text += agg + "(temperature) @ " + where;
        const Request req = parse_request(text);

        std::vector<double> xs;
        std::size_t matching = 0;
        for (const auto& e : registry.entries()) {
            if (std::find(req.locations.begin(), req.locations.end(), e.location) == req.locations.end())
                continue;
            ++matching;
            const auto& s = truth.at(e.address);
            if (!req.operation.condition || passes(*req.operation.condition, s))
                xs.push_back(s.readings.at("temperature"));
        }
        const std::size_t decoys = count - matching;
        if (matching == 0 || decoys < 2)
            continue;
        const std::size_t n = 2 + rng.below(std::min<std::size_t>(7, decoys - 1));

        SinkIdentityKeys sink;
        sink.address = Address{0x0a00fffe};
        sink.keys = crypto::generate_keypair(rng);
        SinkConfig sc;
        sc.path_length = n;
        sc.entry_mitigation = rng.below(2) == 0;
        LocalNetwork net(sink, std::move(registry), std::move(nodes));
        auto report = net.run(req, sc, rng);
        queries += report.queries_issued;
        const auto want = brute_force(req.operation.kind, xs);
        const std::string tag = "seed " + std::to_string(seed) + " '" + text + "': ";
        if (!want) {
            ++empty;
            o.require(!report.result.value && !report.result.error.empty(), tag + "expected no contributors");
        } else if (!report.result.value) {
            o.require(false, tag + "no result (" + report.result.error + ")");
        } else {
            const double got = *report.result.value;
            const double tol = 1e-9 * std::max(1.0, std::fabs(*want));
            o.require(std::fabs(got - *want) <= tol,
                      tag + "got " + fmt("%.17g", got) + " want " + fmt("%.17g", *want));
        }
        ++checked;
    }
    o.require(checked == 500, "too few registries exercised: " + std::to_string(checked));
    o.detail = std::to_string(checked) + " registries, " + std::to_string(queries) + " queries, " +
               std::to_string(empty) + " with no contributor";
    return o;
}

// ---- 3: decoy transparency ---------------------------------------------------------

Outcome criterion3(const Options&)
{
    Outcome o;
    // Shape equality: identical node state and rng, processing once as a
    // target and once as a decoy.
    const vm::Task task = compile_task(parse_request("AVG(temperature) @ lab").operation);
    std::size_t shapes = 0;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(9000 + seed);
        auto kr = make_registry(6, rng);
        const auto addrs = kr.registry.addresses();
        auto def_target = assign_key_chain({addrs[0], addrs[1], addrs[2]}, {true, false, false}, rng);
        auto def_decoy = assign_key_chain({addrs[0], addrs[1], addrs[2]}, {false, true, false}, rng);
        const std::size_t lh = onion::head_size_for(3 + rng.below(5));
        auto mk = [&](const QueryDefinition& d) {
            return Query{onion::build_head(d, kr.sink.identity(), kr.registry, lh, rng),
                         onion::build_body(task.bytecode, vm::CarrierString{}.encode(), d.first_key, rng)};
        };
        const Query qt = mk(def_target), qd = mk(def_decoy);
        vm::SensorInterface s;
        s.readings["temperature"] = 20.0;
        TimingParams timing;  // delays on
        SensorNode as_target(addrs[0], kr.keys.at(addrs[0]), s, timing, Rng(seed));
        SensorNode as_decoy(addrs[0], kr.keys.at(addrs[0]), s, timing, Rng(seed));
        for (int round = 0; round < 2; ++round) {
            auto t = as_target.on_receive(qt);
            auto d = as_decoy.on_receive(qd);
            const std::string tag = "seed " + std::to_string(seed) + ": ";
            o.require(t.role == Role::Target && d.role == Role::Decoy, tag + "roles");
            o.require(t.forward && d.forward, tag + "dropped");
            if (!t.forward || !d.forward)
                continue;
            o.require(t.forward->next_hop == d.forward->next_hop, tag + "next hop");
            o.require(t.forward->delay_s == d.forward->delay_s, tag + "delay differs");
            o.require(t.forward->query.head.size() == d.forward->query.head.size(), tag + "head size");
            o.require(t.forward->query.body.size() == d.forward->query.body.size(), tag + "body size");
            o.require(d.forward->query.body == qd.body, tag + "decoy changed the body");
            o.require(t.forward->query.body != qt.body, tag + "target kept the body");
            ++shapes;
        }
    }

    // Traces: body byte-identical across every decoy visit; external guessing.
    netsim::SimParams params;
    params.timing.delays_enabled = true;
    netsim::Simulator sim(netsim::build_grid(36, 60.0), params, 31);
    Rng rng(32);
    sim.run_random(150, 8, rng);
    const auto& ev = sim.trace().events;
    std::size_t decoy_visits = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].kind != netsim::EventKind::ProcessEnd || ev[i].role != Role::Decoy)
            continue;
        const netsim::TraceEvent* in = nullptr;
        const netsim::TraceEvent* out = nullptr;
        for (std::size_t j = i; j-- > 0;)
            if (ev[j].kind == netsim::EventKind::Deliver && ev[j].link_dst == ev[i].node && ev[j].query == ev[i].query) {
                in = &ev[j];
                break;
            }
        for (std::size_t j = i + 1; j < ev.size(); ++j)
            if (ev[j].kind == netsim::EventKind::Transmit && ev[j].link_src == ev[i].node && ev[j].query == ev[i].query) {
                out = &ev[j];
                break;
            }
        o.require(in && out && in->body_digest == out->body_digest, "decoy visit altered the body");
        ++decoy_visits;
    }
    const auto rep = adversary::external_view(sim.trace());
    o.require(rep.visits >= 1000, "fewer than 1000 visits");
    o.require(rep.accuracy() >= 0.45 && rep.accuracy() <= 0.55,
              "external guess accuracy " + fmt("%.4f", rep.accuracy()));
    o.require(rep.size_channel.empty(), "packet size changed at a node");
    o.detail = std::to_string(shapes) + " shape pairs equal, " + std::to_string(decoy_visits) +
               " decoy visits body-identical, external accuracy " + fmt("%.4f", rep.accuracy()) + " over " +
               std::to_string(rep.visits) + " visits";
    return o;
}

// ---- 4: adversary scenarios ------------------------------------------------------

Outcome criterion4(const Options&)
{
    Outcome o;
    const std::set<std::string> required{"a-all-decoy", "a-with-target", "b-I", "b-II", "b-III", "entry"};
    std::size_t fixtures = 0;
    for (const auto& sc : adversary::canonical_scenarios(1)) {
        adversary::AdversaryConfig cfg;
        cfg.owned = {sc.owned.begin(), sc.owned.end()};
        const auto found = adversary::internal_findings(sc.trace, cfg);
        o.require(adversary::same_findings(found, sc.expected), "fixture " + sc.name + " finding set differs");
        fixtures += required.contains(sc.name);
    }
    o.require(fixtures == required.size(), "missing canonical fixtures");

    std::size_t scenarios = 0, firm = 0, readings = 0, wrong = 0;
    adversary::for_each_random_scenario(10000, 77, [&](const netsim::Trace& t, const std::set<Address>& owned) {
        adversary::AdversaryConfig cfg;
        cfg.owned = owned;
        const auto s = adversary::score(t, adversary::internal_findings(t, cfg));
        ++scenarios;
        firm += s.firm;
        readings += s.reading_disclosures;
        wrong += s.firm_false + s.suspected_false;
    });
    o.require(wrong == 0, std::to_string(wrong) + " false findings");
    o.require(scenarios == 10000, "scenario count");
    o.detail = std::to_string(fixtures) + " canonical fixtures exact (plus exit); " + std::to_string(scenarios) +
               " random scenarios, " + std::to_string(firm) + " findings (" + std::to_string(readings) +
               " reading disclosures), " + std::to_string(wrong) + " false";
    return o;
}

// ---- 5: experiment 1 shape -----------------------------------------------------------

Outcome criterion5(const Options&)
{
    Outcome o;
    netsim::ExperimentConfig cfg;
    cfg.topologies = {netsim::TopologyKind::Grid, netsim::TopologyKind::Disc};
    cfg.s = {50, 100, 200};
    cfg.n = {5, 10, 20, 40, 60, 100};
    cfg.queries = 40;
    cfg.seed = 1;
    const auto result = netsim::run_experiment(cfg);
    const auto cells = netsim::summarize(result.records);
    std::map<std::tuple<std::string, std::size_t, std::size_t>, netsim::CellStats> by;
    for (const auto& c : cells)
        by[{c.topology, c.s, c.n}] = c;
    for (const std::string topo : {"grid", "disc"})
        for (auto s : cfg.s) {
            std::optional<double> prev;
            for (auto n : cfg.n) {
                const auto& c = by[{topo, s, n}];
                const std::string tag = topo + " s=" + std::to_string(s) + " n=" + std::to_string(n);
                o.require(c.median.has_value(), tag + ": no returned queries");
                if (!c.median)
                    continue;
                if (prev)
                    o.require(*c.median > *prev, tag + ": median not increasing");
                prev = c.median;
                if (topo == "grid" && n <= 80)
                    o.require(c.aborted == 0, tag + ": aborted queries on the grid");
            }
        }
    const auto m20 = by[{"grid", 50, 20}].median, m100 = by[{"grid", 50, 100}].median;
    const double ratio = m20 && m100 ? *m100 / *m20 : 0.0;
    o.require(ratio > 5.0, "superlinearity ratio " + fmt("%.3f", ratio));
    o.detail = std::to_string(result.records.size()) + " queries; grid s=50 median QTTR(100)/QTTR(20) = " +
               fmt("%.2f", ratio);
    return o;
}

// ---- 6: experiment 2 ordering ----------------------------------------------------------

Outcome criterion6(const Options&)
{
    Outcome o;
    netsim::ExperimentConfig cfg;
    cfg.topologies = {netsim::TopologyKind::Grid, netsim::TopologyKind::Disc};
    cfg.s = {200};
    cfg.n = {40};
    cfg.queries = 40;
    cfg.runs = 30;
    cfg.seed = 1;
    const auto result = netsim::run_experiment(cfg);
    std::vector<double> grid, disc;
    for (const auto& r : result.runs)
        if (r.median_qttr_s)
            (r.topology == "grid" ? grid : disc).push_back(*r.median_qttr_s);
    o.require(grid.size() == 30 && disc.size() == 30, "missing run medians");
    const auto rt = netsim::mann_whitney_less(grid, disc);
    o.require(rt.p_less < 0.05, "p = " + fmt("%.4g", rt.p_less));
    o.detail = "grid median " + fmt("%.4f", netsim::quantile(grid, 0.5)) + " s vs disc " +
               fmt("%.4f", netsim::quantile(disc, 0.5)) + " s over 30 runs, one-sided p = " + fmt("%.3g", rt.p_less);
    return o;
}

// ---- 7: disc reachability ------------------------------------------------------------------

Outcome criterion7(const Options&)
{
    Outcome o;
    netsim::ExperimentConfig defaults;
    std::vector<double> fr;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng = Rng(1).derive({10, 2, 200, seed});
        fr.push_back(netsim::reachable_fraction(
            netsim::build_random_disc(200, defaults.r_s, defaults.radio_range, rng)));
    }
    const double med = netsim::quantile(fr, 0.5);
    o.require(med >= 0.80 && med <= 1.00, "median reachable fraction " + fmt("%.4f", med));
    o.detail = "s=200, 30 topologies: q25 " + fmt("%.3f", netsim::quantile(fr, 0.25)) + ", median " +
               fmt("%.3f", med) + ", q75 " + fmt("%.3f", netsim::quantile(fr, 0.75));
    return o;
}

// ---- 8: determinism ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion8(const Options& opt)
{
    Outcome o;
    std::size_t compared = 0;
    auto once = [&](const std::filesystem::path& dir) {
        netsim::ExperimentConfig cfg;
        cfg.topologies = {netsim::TopologyKind::Grid, netsim::TopologyKind::Disc};
        cfg.s = {40, 80};
        cfg.n = {4, 10};
        cfg.queries = 8;
        cfg.runs = 2;
        cfg.seed = 7;
        cfg.threads = 2;
        cfg.trace_dir = (dir / "traces").string();
        const auto r = netsim::run_experiment(cfg);
        std::ofstream csv(dir / "out.csv"), js(dir / "out.json");
        netsim::write_csv(csv, r.records);
        netsim::write_summary(js, cfg, r);
        std::ifstream tin(dir / "traces" / "trace_grid_s40_n10_r1.jsonl");
        const auto trace = netsim::read_trace(tin);
        adversary::AdversaryConfig adv;
        for (std::size_t v = 0; v < 40; v += 3)
            adv.owned.insert(netsim::vertex_address(v));
        std::ofstream fj(dir / "findings.jsonl");
        adversary::write_findings(fj, adversary::internal_findings(trace, adv));
    };
    const auto a = opt.workdir / "det_a", b = opt.workdir / "det_b";
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    std::filesystem::create_directories(a);
    std::filesystem::create_directories(b);
    once(a);
    once(b);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file())
            continue;
        const auto rel = std::filesystem::relative(entry.path(), a);
        o.require(slurp(entry.path()) == slurp(b / rel), rel.string() + " differs between runs");
        ++compared;
    }
    if (!opt.cli.empty()) {
        for (const char* tag : {"cli_a", "cli_b"}) {
            const auto dir = opt.workdir / tag;
            std::filesystem::remove_all(dir);
            std::filesystem::create_directories(dir);
            const std::string cmd = "\"" + opt.cli + "\" simulate -q --topology grid,disc --s 30,60 --n 4,8 "
                                    "--queries 6 --runs 2 --seed 7 --csv \"" + (dir / "r.csv").string() +
                                    "\" --summary \"" + (dir / "r.json").string() + "\"";
            o.require(std::system(cmd.c_str()) == 0, "CLI simulate failed");
        }
        for (const char* f : {"r.csv", "r.json"}) {
            o.require(slurp(opt.workdir / "cli_a" / f) == slurp(opt.workdir / "cli_b" / f),
                      std::string("CLI ") + f + " differs between runs");
            ++compared;
        }
    }
    o.require(compared >= 3, "nothing compared");
    o.detail = std::to_string(compared) + " output files byte-identical across two runs";
    return o;
}

const std::vector<std::pair<const char*, std::function<Outcome(const Options&)>>> kCriteria{
    {"protocol structure over >= 1000 instances", criterion1},
    {"end-to-end results equal brute force (500 registries)", criterion2},
    {"decoy transparency and observable-shape equality", criterion3},
    {"adversary canonical scenarios and soundness", criterion4},
    {"experiment 1 shape (desk scale)", criterion5},
    {"experiment 2 ordering grid < disc", criterion6},
    {"disc reachability at s=200", criterion7},
    {"determinism of outputs", criterion8},
};

} // namespace

int main(int argc, char** argv)
{
    Options opt;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc)
            only = std::atoi(argv[++i]);
        else if (a == "--cli" && i + 1 < argc)
            opt.cli = argv[++i];
        else if (a == "--workdir" && i + 1 < argc)
            opt.workdir = argv[++i];
        else {
            std::fprintf(stderr, "usage: acceptance [--criterion N] [--cli PATH] [--workdir DIR]\n");
            return 2;
        }
    }
    if (only < 0 || only > static_cast<int>(kCriteria.size())) {
        std::fprintf(stderr, "criterion must be 1..%zu\n", kCriteria.size());
        return 2;
    }
    std::filesystem::create_directories(opt.workdir);
    bool all = true;
    for (std::size_t i = 0; i < kCriteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = kCriteria[i].second(opt);
        } catch (const std::exception& e) {
            out.pass = false;
            out.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %zu: %s  %s: %s [%.1f s]\n", i + 1, out.pass ? "PASS" : "FAIL", kCriteria[i].first,
                    out.detail.c_str(), secs);
        for (const auto& f : out.failures)
            std::printf("    - %s\n", f.c_str());
        std::fflush(stdout);
        all = all && out.pass;
    }
    return all ? 0 : 1;
}
