#include "doctest.h"

#include "../support.hpp"

#include <set>
#include <sstream>

using namespace onionwsn;
using testsupport::make_registry;
using testsupport::node_address;

namespace {

std::vector<Address> first_addresses(std::size_t count)
{
    std::vector<Address> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(node_address(i));
    return out;
}

// Checks every postcondition of one path selection.
void check_selection(const PathSelection& sel, const std::vector<Address>& universe,
                     const std::vector<Address>& targets_before, std::size_t n)
{
    const auto& d = sel.definition;
    REQUIRE(d.path.size() == n);
    REQUIRE(d.keys.size() == n);
    const std::set<Address> targets(targets_before.begin(), targets_before.end());
    const std::set<Address> universe_set(universe.begin(), universe.end());

    const std::size_t want = std::min(targets_before.size(), n / 2);
    CHECK(d.target_count() == want);
    CHECK_FALSE(d.keys.back().has_value());
    CHECK(std::set<Address>(d.path.begin(), d.path.end()).size() == n);

    crypto::SymKey chain = d.first_key;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(universe_set.contains(d.path[i]));
        // Keys appear exactly at target positions; decoys come from U \ Q.
        CHECK(d.keys[i].has_value() == targets.contains(d.path[i]));
        if (d.keys[i]) {
            CHECK(d.keys[i]->first == chain);
            CHECK(d.keys[i]->second != d.keys[i]->first);
            chain = d.keys[i]->second;
        }
    }
    CHECK(chain == d.last_key);
    CHECK(sel.remaining_targets.size() == targets_before.size() - want);
    for (const auto& a : sel.remaining_targets) {
        CHECK(targets.contains(a));
        CHECK(std::find(d.path.begin(), d.path.end(), a) == d.path.end());
    }
}

} // namespace

TEST_SUITE("request")
{
    TEST_CASE("parse the conditional example")
    {
        auto r = parse_request("IF(light=ON) THEN AVG(temperature) @ room237,laboratory2");
        REQUIRE(r.operation.condition.has_value());
        CHECK(r.operation.condition->quantity == "light");
        CHECK(r.operation.condition->comparator == vm::Comparator::Eq);
        CHECK(std::get<std::string>(r.operation.condition->literal) == "ON");
        CHECK(r.operation.kind == vm::Aggregation::Avg);
        CHECK(r.operation.quantity == "temperature");
        CHECK(r.locations == std::vector<std::string>{"room237", "laboratory2"});
        CHECK(parse_request(to_string(r)) == r);
    }

    TEST_CASE("parse minimal and case-insensitive forms")
    {
        auto r = parse_request("SUM(co2) @ hall");
        CHECK_FALSE(r.operation.condition.has_value());
        CHECK(r.operation.kind == vm::Aggregation::Sum);
        CHECK(r.locations == std::vector<std::string>{"hall"});
        auto v = parse_request("if (temperature >= -3.5) then stddev(temperature) @ a , b");
        CHECK(v.operation.kind == vm::Aggregation::Std);
        CHECK(std::get<double>(v.operation.condition->literal) == -3.5);
        CHECK(v.operation.condition->comparator == vm::Comparator::Ge);
        CHECK(parse_request(to_string(v)) == v);
    }

    TEST_CASE("syntax errors carry a position")
    {
        CHECK_THROWS_AS(parse_request("AVG() @ x"), RequestError);
        CHECK_THROWS_AS(parse_request("MEDIAN(t) @ x"), RequestError);
        CHECK_THROWS_AS(parse_request("SUM(t)"), RequestError);
        CHECK_THROWS_AS(parse_request("SUM(t) @"), RequestError);
        CHECK_THROWS_AS(parse_request("IF(light<ON) THEN SUM(t) @ x"), RequestError);
        CHECK_THROWS_AS(parse_request(""), RequestError);
        try {
            parse_request("SUM(t) @ x y");
            FAIL("expected an error");
        } catch (const RequestError& e) {
            CHECK(e.position() == 11);
        }
    }

    TEST_CASE("select_targets filters by location and quantities")
    {
        Rng rng(31);
        Registry reg;
        // 10 nodes; 4 in room237 with temperature, one in room237 without it.
        for (std::size_t i = 0; i < 10; ++i) {
            RegistryEntry e;
            e.address = node_address(i);
            e.public_key = crypto::generate_keypair(rng).public_key;
            e.location = i < 5 ? "room237" : "hall";
            e.quantities = {"temperature"};
            if (i == 4)
                e.quantities = {"light"};
            reg.add(e);
        }
        auto q = select_targets(reg, parse_request("SUM(temperature) @ room237"));
        CHECK(q == first_addresses(4));
        CHECK_THROWS_AS(select_targets(reg, parse_request("SUM(temperature) @ attic")), PlanningError);
        // The condition's quantity counts too.
        CHECK_THROWS_AS(
            select_targets(reg, parse_request("IF(light=ON) THEN SUM(temperature) @ room237")),
            PlanningError);
    }

    TEST_CASE("path selection examples")
    {
        Rng rng(32);
        auto universe = first_addresses(40);
        std::vector<Address> q10(universe.begin(), universe.begin() + 10);
        auto sel = query_path_selection(universe, q10, 20, rng);
        check_selection(sel, universe, q10, 20);
        CHECK(sel.definition.target_count() == 10);

        std::vector<Address> q1{universe[0]};
        auto one = query_path_selection(universe, q1, 4, rng);
        check_selection(one, universe, q1, 4);

        CHECK_THROWS_AS(query_path_selection(universe, q10, 1, rng), PlanningError);
        auto small = first_addresses(5);
        CHECK_THROWS_AS(query_path_selection(small, {small[0]}, 6, rng), PlanningError);
        // Not enough decoys once the targets are excluded.
        std::vector<Address> q4(small.begin(), small.begin() + 4);
        CHECK_THROWS_AS(query_path_selection(small, q4, 4, rng), PlanningError);
    }

    TEST_CASE("single target position is uniform over 1..n-1")
    {
        Rng rng(33);
        auto universe = first_addresses(8);
        std::array<int, 3> hits{};
        const int runs = 10000;
        for (int i = 0; i < runs; ++i) {
            auto sel = query_path_selection(universe, {universe[0]}, 4, rng);
            for (std::size_t p = 0; p < 4; ++p)
                if (sel.definition.keys[p])
                    ++hits.at(p);
        }
        // Chi-square with 2 degrees of freedom; 13.82 is the 0.999 quantile.
        double chi2 = 0.0;
        for (int h : hits)
            chi2 += (h - runs / 3.0) * (h - runs / 3.0) / (runs / 3.0);
        CHECK(chi2 < 13.82);
    }

    TEST_CASE("plan cardinality")
    {
        Rng rng(34);
        auto universe = first_addresses(80);
        std::vector<Address> q5(universe.begin(), universe.begin() + 5);
        auto plan = plan_queries(universe, q5, 8, vm::Aggregation::Sum, rng);
        CHECK(plan.definitions.size() == 2);
        std::multiset<std::size_t> counts;
        for (const auto& d : plan.definitions)
            counts.insert(d.target_count());
        CHECK(counts == std::multiset<std::size_t>{1, 4});

        std::vector<Address> q4(universe.begin(), universe.begin() + 4);
        CHECK(plan_queries(universe, q4, 8, vm::Aggregation::Sum, rng).definitions.size() == 1);

        for (std::size_t nq = 1; nq <= 50; ++nq) {
            for (std::size_t n = 4; n <= 20; ++n) {
                std::vector<Address> q(universe.begin(), universe.begin() + static_cast<std::ptrdiff_t>(nq));
                if (universe.size() - nq < n)
                    continue;
                auto p = plan_queries(universe, q, n, vm::Aggregation::Avg, rng);
                const std::size_t want = (nq + n / 2 - 1) / (n / 2);
                CHECK(p.definitions.size() == want);
                CHECK(p.rules.query_ids.size() == want);
                CHECK(expected_query_count(nq, n) == want);
                std::set<Address> covered;
                std::size_t total = 0;
                for (std::size_t k = 0; k < p.definitions.size(); ++k) {
                    CHECK(p.rules.query_ids[k] == p.definitions[k].last_key);
                    for (const auto& t : p.definitions[k].targets()) {
                        covered.insert(t);
                        ++total;
                    }
                }
                CHECK(total == nq);
                CHECK(covered == std::set<Address>(q.begin(), q.end()));
            }
        }
        CHECK_THROWS_AS(plan_queries(universe, {}, 8, vm::Aggregation::Sum, rng), PlanningError);
    }

    TEST_CASE("planning is deterministic per seed")
    {
        auto universe = first_addresses(30);
        std::vector<Address> q(universe.begin(), universe.begin() + 9);
        Rng a(7), b(7);
        auto pa = plan_queries(universe, q, 6, vm::Aggregation::Sum, a);
        auto pb = plan_queries(universe, q, 6, vm::Aggregation::Sum, b);
        REQUIRE(pa.definitions.size() == pb.definitions.size());
        for (std::size_t i = 0; i < pa.definitions.size(); ++i) {
            CHECK(pa.definitions[i].path == pb.definitions[i].path);
            CHECK(pa.definitions[i].keys == pb.definitions[i].keys);
        }
    }

    TEST_CASE("registry text format")
    {
        Rng rng(35);
        auto kr = make_registry(3, rng, {"lab", "hall"}, {"temperature", "light"});
        std::stringstream ss;
        kr.registry.write(ss);
        auto back = Registry::parse(ss);
        REQUIRE(back.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back.entries()[i].address == kr.registry.entries()[i].address);
            CHECK(back.entries()[i].public_key == kr.registry.entries()[i].public_key);
            CHECK(back.entries()[i].location == kr.registry.entries()[i].location);
            CHECK(back.entries()[i].quantities == kr.registry.entries()[i].quantities);
        }
        std::istringstream bad("10.0.0.1 abcd lab temperature\n");
        CHECK_THROWS(Registry::parse(bad));
        std::istringstream dup("# c\n\n10.0.0.1 " + std::string(64, '0') + " lab t\n10.0.0.1 " +
                               std::string(64, '1') + " lab t\n");
        CHECK_THROWS(Registry::parse(dup));
    }
}
