#include "onionwsn/adversary.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

namespace onionwsn::adversary {

using netsim::EventKind;
using netsim::TraceEvent;

namespace {

constexpr std::array<std::pair<Claim, std::string_view>, 5> kClaimNames{{
    {Claim::ProcessedQuery, "processed-query"},
    {Claim::IsDecoy, "is-decoy-for-query"},
    {Claim::IsTarget, "is-target-for-query"},
    {Claim::SensesQuantity, "senses-quantity"},
    {Claim::ReadingDisclosed, "reading-disclosed"},
}};

} // namespace

std::string_view to_string(Claim c)
{
    for (const auto& [k, name] : kClaimNames)
        if (k == c)
            return name;
    return "?";
}

Claim parse_claim(std::string_view name)
{
    for (const auto& [k, n] : kClaimNames)
        if (n == name)
            return k;
    throw FormatError("unknown claim '" + std::string(name) + "'");
}

std::string_view to_string(Policy p)
{
    return p == Policy::AlwaysDeduce ? "always-deduce" : "mixing-aware";
}

Policy parse_policy(std::string_view name)
{
    if (name == "always-deduce")
        return Policy::AlwaysDeduce;
    if (name == "mixing-aware")
        return Policy::MixingAware;
    throw ConfigError("unknown policy '" + std::string(name) +
                      "' (expected always-deduce or mixing-aware)");
}

void AdversaryConfig::validate(Address sink) const
{
    if (owned.contains(sink))
        throw ConfigError("the sink cannot be owned by the adversary");
}

namespace {

bool is_link(const TraceEvent& e) { return e.kind == EventKind::Transmit || e.kind == EventKind::Deliver; }

// Ground-truth visit of `node` in `query` located by a finding's evidence.
const TraceEvent* visit_of(const Trace& trace, Address node, std::uint64_t query,
                           std::uint64_t after, std::optional<std::uint64_t> before)
{
    for (const auto& e : trace.events) {
        if (e.id <= after || e.kind != EventKind::ProcessEnd || e.query != query || e.node != node)
            continue;
        if (before && e.id >= *before)
            return nullptr;
        return &e;
    }
    return nullptr;
}

class Collector {
public:
    void add(Finding f)
    {
        auto key = std::make_tuple(f.query, f.subject, f.claim, f.quantity);
        if (!seen_.insert(key).second)
            return;
        out_.push_back(std::move(f));
    }
    std::vector<Finding> take() { return std::move(out_); }

private:
    std::set<std::tuple<std::uint64_t, Address, Claim, std::string>> seen_;
    std::vector<Finding> out_;
};

} // namespace

ExternalReport external_view(const Trace& trace)
{
    ExternalReport report;
    struct Visit {
        const TraceEvent* in;
        const TraceEvent* out;
        double hold;
    };
    std::vector<Visit> visits;
    const auto& ev = trace.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const auto& d = ev[i];
        if (d.kind != EventKind::Deliver)
            continue;
        // Follow the packet: the next transmission leaving the receiver.
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            const auto& t = ev[j];
            if (t.kind != EventKind::Transmit || t.query != d.query || t.link_src != d.link_dst)
                continue;
            if (t.t > d.t)
                visits.push_back({&d, &t, t.t - d.t});
            break;
        }
    }
    std::vector<double> holds;
    for (const auto& v : visits) {
        Finding f;
        f.query = v.in->query;
        f.subject = v.in->link_dst;
        f.claim = Claim::ProcessedQuery;
        f.evidence = {v.in->id, v.out->id};
        report.processing.push_back(f);
        if (v.in->bytes != v.out->bytes)
            report.size_channel.push_back({v.in->query, v.in->link_dst, v.in->bytes, v.out->bytes});
        holds.push_back(v.hold);
    }
    if (holds.empty())
        return report;
    const double median = netsim::quantile(holds, 0.5);
    for (const auto& v : visits) {
        const auto* truth = visit_of(trace, v.in->link_dst, v.in->query, v.in->id, v.out->id + 1);
        if (!truth || !truth->role)
            continue;
        ++report.visits;
        const bool guess_target = v.hold > median;
        if (guess_target == (*truth->role == Role::Target))
            ++report.correct_guesses;
    }
    return report;
}

std::vector<Finding> internal_findings(const Trace& trace, const AdversaryConfig& cfg)
{
    cfg.validate(trace.header.sink);
    const Address sink = trace.header.sink;
    const auto owned = [&](Address a) { return cfg.owned.contains(a); };

    std::set<std::uint64_t> query_ids;
    for (const auto& e : trace.events)
        query_ids.insert(e.query);
    const bool mixing = trace.header.queries > 1 || trace.header.concurrency > 1 || query_ids.size() > 1;
    const bool linkage_suspect = cfg.policy == Policy::MixingAware && mixing;

    std::optional<vm::Aggregation> kind;
    try {
        kind = parse_request(trace.header.task + " @ x").operation.kind;
    } catch (const Error&) {
    }

    std::vector<const TraceEvent*> sends, receives, relayed;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::Transmit && e.link_src == e.ip_src && owned(e.ip_src))
            sends.push_back(&e);
        if (e.kind == EventKind::Deliver && e.link_dst == e.ip_dst && owned(e.ip_dst))
            receives.push_back(&e);
        if (is_link(e)) {
            const bool src_relay = owned(e.link_src) && e.link_src != e.ip_src && e.link_src != e.ip_dst;
            const bool dst_relay = owned(e.link_dst) && e.link_dst != e.ip_dst && e.link_dst != e.ip_src;
            if (src_relay || dst_relay)
                relayed.push_back(&e);
        }
    }

    // An owned node's record of its own processing around a packet it sent or received.
    const auto own_before = [&](Address node, std::uint64_t query, std::uint64_t id) -> const TraceEvent* {
        const TraceEvent* best = nullptr;
        for (const auto& e : trace.events) {
            if (e.id >= id)
                break;
            if (e.kind == EventKind::ProcessEnd && e.node == node && e.query == query)
                best = &e;
        }
        return best;
    };
    const auto own_after = [&](Address node, std::uint64_t query, std::uint64_t id) {
        return visit_of(trace, node, query, id, std::nullopt);
    };
    const auto first_receive_from = [&](Address from, std::uint64_t after) -> const TraceEvent* {
        for (const auto* r : receives)
            if (r->id > after && r->ip_src == from)
                return r;
        return nullptr;
    };
    const auto honest = [&](Address a) { return a != sink && !owned(a); };

    Collector out;
    const auto emit = [&](std::uint64_t q, Address subject, Claim claim, bool suspected,
                          std::vector<std::uint64_t> evidence, std::optional<double> value = {},
                          std::string quantity = {}) {
        Finding f;
        f.query = q;
        f.subject = subject;
        f.claim = claim;
        f.value = value;
        f.quantity = std::move(quantity);
        f.suspected = suspected;
        f.evidence = std::move(evidence);
        out.add(std::move(f));
    };

    for (const auto* s : sends) {
        const Address x = s->ip_dst;
        // Unchanged body between two owned nodes: every node in between only forwarded it.
        for (const auto* r : receives) {
            if (r->id <= s->id || r->body_digest != s->body_digest)
                continue;
            if (honest(x))
                emit(s->query, x, Claim::IsDecoy, false, {s->id, r->id});
            if (honest(r->ip_src))
                emit(s->query, r->ip_src, Claim::IsDecoy, false, {s->id, r->id});
        }
        if (!honest(x))
            continue;
        // One honest node between two owned ones, linked by its addresses.
        const auto* r = first_receive_from(x, s->id);
        if (!r || r->body_digest == s->body_digest)
            continue;
        const std::vector<std::uint64_t> evidence{s->id, r->id};
        emit(s->query, x, Claim::IsTarget, linkage_suspect, evidence);

        const auto* pa = own_before(s->ip_src, s->query, s->id);
        const auto* pb = own_after(r->ip_dst, r->query, r->id);
        const bool a_target = pa && pa->role == Role::Target && pa->carrier_out;
        const bool b_target = pb && pb->role == Role::Target && pb->carrier_in;
        if (a_target || b_target) {
            for (const auto& q : (a_target ? pa : pb)->quantities)
                emit(s->query, x, Claim::SensesQuantity, linkage_suspect, evidence, {}, q);
        }
        if (a_target && b_target && kind) {
            const auto& before = *pa->carrier_out;
            const auto& after = *pb->carrier_in;
            if (after.count == before.count + 1) {
                std::optional<double> value;
                if (*kind == vm::Aggregation::Max) {
                    if (after.acc1 != before.acc1)
                        value = after.acc1;
                } else {
                    value = after.acc1 - before.acc1;
                }
                if (value)
                    emit(s->query, x, Claim::ReadingDisclosed, linkage_suspect, evidence, value);
            }
        }
    }

    // Entry point: an owned relay on the sink's first hop names s1; an owned
    // target right after it sees a carrier holding exactly one contribution.
    for (const auto* rl : relayed) {
        if (rl->ip_src != sink || !honest(rl->ip_dst))
            continue;
        const Address s1 = rl->ip_dst;
        const auto* r = first_receive_from(s1, rl->id);
        if (!r)
            continue;
        const auto* pb = own_after(r->ip_dst, r->query, r->id);
        if (!pb || pb->role != Role::Target || !pb->carrier_in || pb->carrier_in->count != 1)
            continue;
        emit(rl->query, s1, Claim::ReadingDisclosed, linkage_suspect, {rl->id, r->id},
             pb->carrier_in->acc1);
    }
    return out.take();
}

bool finding_holds(const Trace& trace, const Finding& f, double tolerance)
{
    if (f.evidence.empty())
        return false;
    std::optional<std::uint64_t> before;
    if (f.evidence.size() >= 2)
        before = f.evidence.back();
    const auto* v = visit_of(trace, f.subject, f.query, f.evidence.front(), before);
    if (!v || !v->role)
        return false;
    const bool target = *v->role == Role::Target;
    switch (f.claim) {
    case Claim::ProcessedQuery: return true;
    case Claim::IsDecoy: return !target;
    case Claim::IsTarget: return target;
    case Claim::SensesQuantity:
        return target && std::find(v->quantities.begin(), v->quantities.end(), f.quantity) !=
                             v->quantities.end();
    case Claim::ReadingDisclosed:
        return target && v->contributed.value_or(false) && v->reading && f.value &&
               std::fabs(*v->reading - *f.value) <= tolerance * std::max(1.0, std::fabs(*v->reading));
    }
    return false;
}

Score score(const Trace& trace, const std::vector<Finding>& findings)
{
    Score s;
    for (const auto& f : findings) {
        const bool ok = finding_holds(trace, f);
        if (f.suspected) {
            ++s.suspected;
            s.suspected_false += !ok;
        } else {
            ++s.firm;
            s.firm_false += !ok;
            s.reading_disclosures += ok && f.claim == Claim::ReadingDisclosed;
        }
    }
    return s;
}

bool same_findings(std::vector<Finding> a, std::vector<Finding> b)
{
    if (a.size() != b.size())
        return false;
    const auto key = [](const Finding& f) {
        return std::make_tuple(f.query, f.subject, f.claim, f.quantity, f.suspected);
    };
    const auto by_key = [&](const Finding& x, const Finding& y) { return key(x) < key(y); };
    std::sort(a.begin(), a.end(), by_key);
    std::sort(b.begin(), b.end(), by_key);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (key(a[i]) != key(b[i]) || a[i].value.has_value() != b[i].value.has_value())
            return false;
        if (a[i].value &&
            std::fabs(*a[i].value - *b[i].value) > 1e-9 * std::max(1.0, std::fabs(*b[i].value)))
            return false;
    }
    return true;
}

// ---- scenarios ---------------------------------------------------------------

namespace {

using netsim::vertex_address;

struct FixtureSpec {
    std::string name;
    std::vector<bool> mask;            // over the fixed path
    std::vector<std::size_t> owned;    // vertices
    bool entry_mitigation = true;
};

// 4x4 grid; the sink neighbours vertices 5, 6, 9 and 10, so the route from
// the sink to vertex 0 runs through relay 5.
const std::vector<std::size_t> kFixturePath{0, 3, 12, 15, 1, 2};

Finding expect(Address subject, Claim claim, std::optional<double> value = {}, std::string quantity = {})
{
    Finding f;
    f.subject = subject;
    f.claim = claim;
    f.value = value;
    f.quantity = std::move(quantity);
    return f;
}

Trace run_fixture(const FixtureSpec& spec, std::uint64_t seed, const std::map<std::size_t, double>& readings)
{
    netsim::SimParams params;
    params.entry_mitigation = spec.entry_mitigation;
    params.path_nodes = netsim::PathNodes::Distinct;
    netsim::Simulator sim(netsim::build_grid(16, 60.0), params, seed);
    for (const auto& [v, value] : readings)
        sim.sensor(v).sensors().readings["temperature"] = value;
    std::vector<Address> path;
    for (auto v : kFixturePath)
        path.push_back(vertex_address(v));
    Rng rng = Rng(seed).derive({77});
    auto defn = assign_key_chain(std::move(path), spec.mask, rng);
    sim.run({defn}, rng);
    return sim.take_trace();
}

} // namespace

std::vector<Scenario> canonical_scenarios(std::uint64_t seed)
{
    const auto p = [](std::size_t i) { return vertex_address(kFixturePath.at(i)); };
    const bool T = true, D = false;
    const std::map<std::size_t, double> readings{{kFixturePath[0], 21.25}, {kFixturePath[2], 7.0}};

    struct Def {
        FixtureSpec spec;
        std::vector<Finding> expected;
    };
    const std::vector<Def> defs{
        {{"a-all-decoy", {T, D, D, T, T, D}, {kFixturePath[0], kFixturePath[3]}},
         {expect(p(1), Claim::IsDecoy), expect(p(2), Claim::IsDecoy)}},
        {{"a-with-target", {T, D, T, T, T, D}, {kFixturePath[0], kFixturePath[3]}}, {}},
        {{"b-I", {T, D, D, D, T, D}, {kFixturePath[1], kFixturePath[3]}},
         {expect(p(2), Claim::IsDecoy)}},
        {{"b-II", {T, T, T, D, T, D}, {kFixturePath[1], kFixturePath[3]}},
         {expect(p(2), Claim::IsTarget), expect(p(2), Claim::SensesQuantity, {}, "temperature")}},
        {{"b-III", {T, T, T, T, D, D}, {kFixturePath[1], kFixturePath[3]}},
         {expect(p(2), Claim::IsTarget), expect(p(2), Claim::SensesQuantity, {}, "temperature"),
          expect(p(2), Claim::ReadingDisclosed, 7.0)}},
        {{"entry", {T, T, D, T, D, D}, {5, kFixturePath[1]}, false},
         {expect(p(0), Claim::ReadingDisclosed, 21.25)}},
        {{"exit", {T, T, D, T, D, D}, {5, kFixturePath[5]}, false}, {}},
    };

    std::vector<Scenario> out;
    for (const auto& d : defs) {
        Scenario sc;
        sc.name = d.spec.name;
        sc.trace = run_fixture(d.spec, seed, readings);
        for (auto v : d.spec.owned)
            sc.owned.push_back(vertex_address(v));
        const std::uint64_t q = sc.trace.events.empty() ? 0 : sc.trace.events.front().query;
        sc.expected = d.expected;
        for (auto& f : sc.expected)
            f.query = q;
        out.push_back(std::move(sc));
    }
    return out;
}

void for_each_random_scenario(std::size_t count, std::uint64_t seed,
                              const std::function<void(const Trace&, const std::set<Address>&)>& fn,
                              const RandomScenarioConfig& cfg)
{
    static const std::vector<std::string> tasks{
        "SUM(temperature)",
        "AVG(temperature)",
        "MAX(temperature)",
        "VARIANCE(temperature)",
        "STD(temperature)",
        "IF(light=ON) THEN SUM(temperature)",
        "IF(temperature>=22) THEN AVG(temperature)",
    };
    Rng rng(seed);
    std::size_t produced = 0;
    while (produced < count) {
        const std::size_t s = cfg.min_s + rng.below(cfg.max_s - cfg.min_s + 1);
        netsim::SimParams params;
        params.path_nodes = netsim::PathNodes::Distinct;
        params.entry_mitigation = rng.below(2) == 0;
        params.timing.delays_enabled = rng.below(2) == 0;
        params.task = tasks[rng.below(tasks.size())];
        netsim::Simulator sim(netsim::build_grid(s, 60.0), params, rng.next_u64());
        for (std::size_t k = 0; k < cfg.per_network && produced < count; ++k, ++produced) {
            const std::size_t max_n = std::min(cfg.max_n, s);
            const std::size_t n = cfg.min_n + rng.below(max_n - cfg.min_n + 1);
            sim.run_random(1, n, rng);
            const Trace trace = sim.take_trace();
            const double fraction = rng.uniform(0.0, 0.6);
            std::set<Address> owned;
            for (std::size_t v = 0; v < s; ++v)
                if (rng.uniform01() < fraction)
                    owned.insert(vertex_address(v));
            fn(trace, owned);
        }
    }
}

std::vector<RatePoint> disclosure_rate(const std::vector<double>& fractions, std::size_t trials,
                                       std::uint64_t seed, std::size_t s, std::size_t n,
                                       bool entry_mitigation)
{
    std::vector<std::size_t> hits(fractions.size(), 0);
    Rng rng(seed);
    std::optional<netsim::Simulator> sim;
    for (std::size_t t = 0; t < trials; ++t) {
        if (t % 50 == 0) {
            netsim::SimParams params;
            params.path_nodes = netsim::PathNodes::Distinct;
            params.entry_mitigation = entry_mitigation;
            sim.emplace(netsim::build_grid(s, 60.0), params, rng.next_u64());
        }
        sim->run_random(1, n, rng);
        const Trace trace = sim->take_trace();
        std::vector<double> u(s);
        for (auto& x : u)
            x = rng.uniform01();
        for (std::size_t i = 0; i < fractions.size(); ++i) {
            AdversaryConfig cfg;
            for (std::size_t v = 0; v < s; ++v)
                if (u[v] < fractions[i])
                    cfg.owned.insert(vertex_address(v));
            if (score(trace, internal_findings(trace, cfg)).reading_disclosures > 0)
                ++hits[i];
        }
    }
    std::vector<RatePoint> out;
    for (std::size_t i = 0; i < fractions.size(); ++i)
        out.push_back({fractions[i], trials == 0 ? 0.0
                                                 : static_cast<double>(hits[i]) / static_cast<double>(trials)});
    return out;
}

void write_findings(std::ostream& out, const std::vector<Finding>& findings)
{
    for (const auto& f : findings) {
        nlohmann::ordered_json j;
        j["query_id"] = f.query;
        j["subject"] = f.subject.to_string();
        j["claim"] = to_string(f.claim);
        if (f.value)
            j["value"] = *f.value;
        if (!f.quantity.empty())
            j["quantity"] = f.quantity;
        j["suspected"] = f.suspected;
        j["evidence_event_ids"] = f.evidence;
        out << j.dump() << '\n';
    }
}

} // namespace onionwsn::adversary
