#include "onionwsn/request.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <unordered_set>

namespace onionwsn {

namespace {

enum class Tok { Ident, Number, LParen, RParen, Cmp, At, Comma, End };

struct Token {
    Tok kind;
    std::string text;
    std::size_t pos;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::vector<Token> tokenize(std::string_view s)
{
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (ident_start(c)) {
            while (i < s.size() && ident_char(s[i]))
                ++i;
            out.push_back({Tok::Ident, std::string(s.substr(start, i - start)), start});
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
            double v = 0.0;
            auto [end, ec] = std::from_chars(s.data() + i + (c == '+'), s.data() + s.size(), v);
            if (ec != std::errc{})
                throw RequestError("malformed number", start);
            i = static_cast<std::size_t>(end - s.data());
            out.push_back({Tok::Number, std::string(s.substr(start, i - start)), start});
        } else if (c == '(') {
            out.push_back({Tok::LParen, "(", i++});
        } else if (c == ')') {
            out.push_back({Tok::RParen, ")", i++});
        } else if (c == '@') {
            out.push_back({Tok::At, "@", i++});
        } else if (c == ',') {
            out.push_back({Tok::Comma, ",", i++});
        } else if (c == '=' || c == '<' || c == '>' || c == '!') {
            ++i;
            if (i < s.size() && s[i] == '=')
                ++i;
            std::string op(s.substr(start, i - start));
            if (op == "!" )
                throw RequestError("expected '!='", start);
            if (op == "==")
                op = "=";
            out.push_back({Tok::Cmp, op, start});
        } else {
            throw RequestError(std::string("unexpected character '") + c + "'", start);
        }
    }
    out.push_back({Tok::End, "", s.size()});
    return out;
}

std::string upper(std::string s)
{
    for (auto& c : s)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Request parse()
    {
        Request r;
        if (peek().kind == Tok::Ident && upper(peek().text) == "IF") {
            ++at_;
            expect(Tok::LParen, "'('");
            Condition c;
            c.quantity = expect(Tok::Ident, "a sensor name").text;
            c.comparator = comparator(expect(Tok::Cmp, "a comparison operator"));
            const Token& lit = next();
            if (lit.kind == Tok::Number) {
                c.literal = std::stod(lit.text);
            } else if (lit.kind == Tok::Ident) {
                c.literal = lit.text;
                if (c.comparator != vm::Comparator::Eq && c.comparator != vm::Comparator::Ne)
                    throw RequestError("status literals only support '=' and '!='", lit.pos);
            } else {
                throw RequestError("expected a number or a status literal", lit.pos);
            }
            expect(Tok::RParen, "')'");
            const Token& then = expect(Tok::Ident, "THEN");
            if (upper(then.text) != "THEN")
                throw RequestError("expected THEN", then.pos);
            r.operation.condition = std::move(c);
        }
        const Token& agg = expect(Tok::Ident, "an aggregation");
        auto kind = vm::parse_aggregation(upper(agg.text));
        if (!kind)
            throw RequestError("unknown aggregation '" + agg.text + "'", agg.pos);
        r.operation.kind = *kind;
        expect(Tok::LParen, "'('");
        r.operation.quantity = expect(Tok::Ident, "a sensor name").text;
        expect(Tok::RParen, "')'");
        expect(Tok::At, "'@' followed by locations");
        r.locations.push_back(expect(Tok::Ident, "a location").text);
        while (peek().kind == Tok::Comma) {
            ++at_;
            r.locations.push_back(expect(Tok::Ident, "a location").text);
        }
        if (peek().kind != Tok::End)
            throw RequestError("unexpected trailing input", peek().pos);
        return r;
    }

private:
    const Token& peek() const { return toks_[at_]; }
    const Token& next() { return toks_[at_ == toks_.size() - 1 ? at_ : at_++]; }

    const Token& expect(Tok kind, const std::string& what)
    {
        const Token& t = peek();
        if (t.kind != kind)
            throw RequestError("expected " + what, t.pos);
        ++at_;
        return t;
    }

    static vm::Comparator comparator(const Token& t)
    {
        if (t.text == "=") return vm::Comparator::Eq;
        if (t.text == "!=") return vm::Comparator::Ne;
        if (t.text == "<") return vm::Comparator::Lt;
        if (t.text == "<=") return vm::Comparator::Le;
        if (t.text == ">") return vm::Comparator::Gt;
        if (t.text == ">=") return vm::Comparator::Ge;
        throw RequestError("unknown comparison '" + t.text + "'", t.pos);
    }

    std::vector<Token> toks_;
    std::size_t at_ = 0;
};

std::string_view comparator_text(vm::Comparator c)
{
    switch (c) {
    case vm::Comparator::Eq: return "=";
    case vm::Comparator::Ne: return "!=";
    case vm::Comparator::Lt: return "<";
    case vm::Comparator::Le: return "<=";
    case vm::Comparator::Gt: return ">";
    case vm::Comparator::Ge: return ">=";
    }
    return "?";
}

std::string_view comparator_mnemonic(vm::Comparator c)
{
    switch (c) {
    case vm::Comparator::Eq: return "eq";
    case vm::Comparator::Ne: return "ne";
    case vm::Comparator::Lt: return "lt";
    case vm::Comparator::Le: return "le";
    case vm::Comparator::Gt: return "gt";
    case vm::Comparator::Ge: return "ge";
    }
    return "?";
}

std::string hexfloat(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

} // namespace

std::vector<std::string> Operation::quantities() const
{
    std::vector<std::string> out{quantity};
    if (condition && condition->quantity != quantity)
        out.push_back(condition->quantity);
    return out;
}

Request parse_request(std::string_view text)
{
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
        throw RequestError("empty request", 0);
    return Parser(tokenize(text)).parse();
}

std::string to_string(const Request& r)
{
    std::string out;
    if (const auto& c = r.operation.condition) {
        out += "IF(" + c->quantity + std::string(comparator_text(c->comparator));
        if (const double* v = std::get_if<double>(&c->literal)) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", *v);
            out += buf;
        } else {
            out += std::get<std::string>(c->literal);
        }
        out += ") THEN ";
    }
    out += std::string(vm::to_string(r.operation.kind)) + "(" + r.operation.quantity + ") @ ";
    for (std::size_t i = 0; i < r.locations.size(); ++i)
        out += (i ? "," : "") + r.locations[i];
    return out;
}

std::vector<Address> select_targets(const Registry& registry, const Request& request)
{
    if (registry.empty())
        throw PlanningError("registry is empty");
    const std::set<std::string> wanted(request.locations.begin(), request.locations.end());
    const auto needs = request.operation.quantities();
    std::vector<Address> out;
    for (const auto& e : registry.entries()) {
        if (!wanted.contains(e.location))
            continue;
        const bool has_all = std::all_of(needs.begin(), needs.end(),
                                         [&](const std::string& q) { return e.quantities.contains(q); });
        if (has_all)
            out.push_back(e.address);
    }
    if (out.empty())
        throw PlanningError("no matching nodes for request '" + to_string(request) + "'");
    return out;
}

QueryDefinition assign_key_chain(std::vector<Address> path, const std::vector<bool>& is_target,
                                 Rng& rng)
{
    if (is_target.size() != path.size())
        throw PlanningError("target mask does not match the path");
    QueryDefinition defn;
    defn.first_key = crypto::generate_sym_key(rng);
    defn.last_key = defn.first_key;
    defn.keys.resize(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (!is_target[i])
            continue;
        crypto::SymKey fresh;
        do {
            fresh = crypto::generate_sym_key(rng);
        } while (fresh == defn.last_key);
        defn.keys[i] = SymKeyPair{defn.last_key, fresh};
        defn.last_key = fresh;
    }
    defn.path = std::move(path);
    return defn;
}

PathSelection query_path_selection(std::span<const Address> universe,
                                   std::vector<Address> targets, std::size_t n, Rng& rng)
{
    if (n < 2)
        throw PlanningError("query path length must be at least 2");
    if (universe.size() < n)
        throw PlanningError("path length " + std::to_string(n) + " exceeds the " +
                            std::to_string(universe.size()) + " available nodes");
    const std::unordered_set<Address> in_universe(universe.begin(), universe.end());
    const std::unordered_set<Address> in_targets(targets.begin(), targets.end());
    if (in_targets.size() != targets.size())
        throw PlanningError("target set contains duplicates");
    for (const auto& t : targets)
        if (!in_universe.contains(t))
            throw PlanningError("target " + t.to_string() + " is not a registered node");

    const std::size_t l = std::min(targets.size(), n / 2);
    std::vector<Address> decoys;
    for (const auto& u : universe)
        if (!in_targets.contains(u))
            decoys.push_back(u);
    if (decoys.size() < n - l)
        throw PlanningError("not enough decoy candidates: need " + std::to_string(n - l) +
                            ", have " + std::to_string(decoys.size()));

    std::vector<std::optional<Address>> slots(n);
    for (std::size_t placed = 0; placed < l;) {
        const auto t = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(n - 1)) + 1;
        if (slots[t - 1])
            continue;
        const auto pick = static_cast<std::ptrdiff_t>(rng.below(targets.size()));
        slots[t - 1] = targets[static_cast<std::size_t>(pick)];
        targets.erase(targets.begin() + pick);
        ++placed;
    }

    std::vector<Address> path(n);
    std::vector<bool> is_target(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            path[i] = *slots[i];
            is_target[i] = true;
        } else {
            const auto pick = rng.below(decoys.size());
            path[i] = decoys[pick];
            decoys[pick] = decoys.back();
            decoys.pop_back();
        }
    }
    return {assign_key_chain(std::move(path), is_target, rng), std::move(targets)};
}

std::size_t expected_query_count(std::size_t target_count, std::size_t n)
{
    const std::size_t per_query = n / 2;
    if (per_query == 0)
        throw PlanningError("query path length must be at least 2");
    return (target_count + per_query - 1) / per_query;
}

QueryPlan plan_queries(std::span<const Address> universe, std::vector<Address> targets,
                       std::size_t n, vm::Aggregation kind, Rng& rng)
{
    if (targets.empty())
        throw PlanningError("no target nodes to query");
    QueryPlan plan;
    plan.rules.kind = kind;
    while (!targets.empty()) {
        auto sel = query_path_selection(universe, std::move(targets), n, rng);
        targets = std::move(sel.remaining_targets);
        plan.rules.query_ids.push_back(sel.definition.last_key);
        plan.definitions.push_back(std::move(sel.definition));
    }
    plan.rules.expected_count = plan.definitions.size();
    return plan;
}

vm::Task compile_task(const Operation& op)
{
    std::string src;
    if (const auto& c = op.condition) {
        if (const double* v = std::get_if<double>(&c->literal)) {
            src += "read " + c->quantity + "\n";
            src += "push " + hexfloat(*v) + "\n";
        } else {
            src += "status " + c->quantity + "\n";
            src += "push " + hexfloat(vm::status_code(std::get<std::string>(c->literal))) + "\n";
        }
        src += "cmp " + std::string(comparator_mnemonic(c->comparator)) + "\n";
        src += "jf end\n";
    }
    const std::string& q = op.quantity;
    switch (op.kind) {
    case vm::Aggregation::Sum:
    case vm::Aggregation::Avg:
        src += "read " + q + "\nload acc1\nadd\nstore acc1\n";
        break;
    case vm::Aggregation::Max:
        src += "read " + q + "\nload acc1\nmax\nstore acc1\n";
        break;
    case vm::Aggregation::Variance:
    case vm::Aggregation::Std:
        src += "read " + q + "\ndup\nload acc1\nadd\nstore acc1\n";
        src += "dup\nmul\nload acc2\nadd\nstore acc2\n";
        break;
    }
    src += "load count\npush 1\nadd\nstore count\n";
    src += "end:\nhalt\n";
    vm::Task task = vm::assemble(src);
    vm::validate(task);
    return task;
}

} // namespace onionwsn
