#ifndef ONIONWSN_REQUEST_HPP
#define ONIONWSN_REQUEST_HPP

// Request translation at the sink: parse the DSL, pick target nodes, plan
// randomized circuits and compile the aggregation task.
//
// Grammar:
//   request    := [ "IF" "(" quantity cmp literal ")" "THEN" ] agg "(" quantity ")"
//                 "@" location { "," location }
//   cmp        := "=" | "!=" | "<" | "<=" | ">" | ">="
//   agg        := "SUM" | "AVG" | "MAX" | "VARIANCE" | "VAR" | "STD" | "STDDEV"
//   literal    := number | identifier        (identifiers compare node statuses)

#include "onionwsn/registry.hpp"
#include "onionwsn/rng.hpp"
#include "onionwsn/task_vm.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace onionwsn {

class RequestError : public Error {
public:
    RequestError(const std::string& msg, std::size_t position)
        : Error(msg + " (at column " + std::to_string(position + 1) + ")"), position_(position)
    {
    }
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class PlanningError : public Error {
public:
    using Error::Error;
};

struct Condition {
    std::string quantity;
    vm::Comparator comparator = vm::Comparator::Eq;
    std::variant<double, std::string> literal;

    bool operator==(const Condition&) const = default;
};

struct Operation {
    std::optional<Condition> condition;
    vm::Aggregation kind = vm::Aggregation::Sum;
    std::string quantity;

    std::vector<std::string> quantities() const;
    bool operator==(const Operation&) const = default;
};

struct Request {
    Operation operation;
    std::vector<std::string> locations;

    bool operator==(const Request&) const = default;
};

Request parse_request(std::string_view text);
std::string to_string(const Request& request);

// Nodes located in one of the request locations that sense every quantity
// the operation mentions. Throws PlanningError when nothing matches.
std::vector<Address> select_targets(const Registry& registry, const Request& request);

struct PathSelection {
    QueryDefinition definition;
    std::vector<Address> remaining_targets;
};

// One run of the path-selection algorithm: min(|Q|, floor(n/2)) targets at
// random positions 1..n-1 (1-based; the last node is always a decoy), the
// remaining slots filled with distinct decoys from U \ Q, and a chained key
// list. Targets are drawn uniformly from Q and removed from it.
PathSelection query_path_selection(std::span<const Address> universe,
                                   std::vector<Address> targets, std::size_t n, Rng& rng);

// Chains keys over the target positions of a fixed path: the first target
// gets (e_F, x), the next (x, y), ..., the last (z, e_L).
QueryDefinition assign_key_chain(std::vector<Address> path, const std::vector<bool>& is_target,
                                 Rng& rng);

struct RecoveryRules {
    std::vector<crypto::SymKey> query_ids;
    vm::Aggregation kind = vm::Aggregation::Sum;
    std::size_t expected_count = 0;
};

struct QueryPlan {
    std::vector<QueryDefinition> definitions;
    RecoveryRules rules;
};

// Repeats path selection until every target is covered:
// |P| = ceil(|Q| / floor(n/2)).
QueryPlan plan_queries(std::span<const Address> universe, std::vector<Address> targets,
                       std::size_t n, vm::Aggregation kind, Rng& rng);

std::size_t expected_query_count(std::size_t target_count, std::size_t n);

vm::Task compile_task(const Operation& operation);

} // namespace onionwsn

#endif // ONIONWSN_REQUEST_HPP
