#include "onionwsn/task_vm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace onionwsn::vm {

namespace {

void put_u64(std::uint8_t* p, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* p)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= std::uint64_t{p[i]} << (8 * i);
    return v;
}

std::uint64_t saturating_count(double v)
{
    if (!(v > 0.0))
        return 0;
    if (v >= 18446744073709551615.0)
        return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(v);
}

struct StackEffect {
    int pops;
    int pushes;
};

StackEffect effect_of(Opcode op)
{
    switch (op) {
    case Opcode::PushConst:
    case Opcode::ReadSensor:
    case Opcode::ReadStatus:
    case Opcode::LoadW: return {0, 1};
    case Opcode::Cmp:
    case Opcode::Add:
    case Opcode::Mul:
    case Opcode::Max: return {2, 1};
    case Opcode::JmpIfFalse:
    case Opcode::StoreW: return {1, 0};
    case Opcode::Dup: return {1, 2};
    case Opcode::Jmp:
    case Opcode::Halt: return {0, 0};
    }
    return {0, 0};
}

Instruction decode_one(const Bytes& code, std::size_t pc)
{
    auto need = [&](std::size_t n) {
        if (pc + n > code.size())
            throw InvalidBytecode("truncated operand at offset " + std::to_string(pc));
    };
    Instruction ins;
    ins.offset = pc;
    const std::uint8_t raw = code[pc];
    if (raw > static_cast<std::uint8_t>(Opcode::Dup))
        throw InvalidBytecode("unknown opcode 0x" + to_hex(ByteView(&code[pc], 1)) +
                              " at offset " + std::to_string(pc));
    ins.op = static_cast<Opcode>(raw);
    switch (ins.op) {
    case Opcode::PushConst:
        need(9);
        ins.constant = std::bit_cast<double>(get_u64(&code[pc + 1]));
        ins.size = 9;
        break;
    case Opcode::ReadSensor:
    case Opcode::ReadStatus: {
        need(2);
        const std::size_t len = code[pc + 1];
        need(2 + len);
        if (len == 0)
            throw InvalidBytecode("empty sensor name at offset " + std::to_string(pc));
        ins.name.assign(reinterpret_cast<const char*>(&code[pc + 2]), len);
        ins.size = 2 + len;
        break;
    }
    case Opcode::Cmp:
        need(2);
        ins.operand = code[pc + 1];
        if (ins.operand > static_cast<std::uint8_t>(Comparator::Ge))
            throw InvalidBytecode("unknown comparator at offset " + std::to_string(pc));
        ins.size = 2;
        break;
    case Opcode::LoadW:
    case Opcode::StoreW:
        need(2);
        ins.operand = code[pc + 1];
        if (ins.operand > static_cast<std::uint8_t>(Field::Count))
            throw InvalidBytecode("unknown carrier field at offset " + std::to_string(pc));
        ins.size = 2;
        break;
    case Opcode::JmpIfFalse:
    case Opcode::Jmp:
        need(3);
        ins.target = code[pc + 1] | std::size_t{code[pc + 2]} << 8;
        ins.size = 3;
        break;
    default: break;
    }
    return ins;
}

bool compare(Comparator c, double a, double b)
{
    switch (c) {
    case Comparator::Eq: return a == b;
    case Comparator::Ne: return a != b;
    case Comparator::Lt: return a < b;
    case Comparator::Le: return a <= b;
    case Comparator::Gt: return a > b;
    case Comparator::Ge: return a >= b;
    }
    return false;
}

} // namespace

onion::CarrierBytes CarrierString::encode() const
{
    onion::CarrierBytes out{};
    put_u64(&out[0], std::bit_cast<std::uint64_t>(acc1));
    put_u64(&out[8], std::bit_cast<std::uint64_t>(acc2));
    put_u64(&out[16], count);
    std::copy(reserved.begin(), reserved.end(), out.begin() + 24);
    return out;
}

CarrierString CarrierString::decode(const onion::CarrierBytes& bytes)
{
    CarrierString w;
    w.acc1 = std::bit_cast<double>(get_u64(&bytes[0]));
    w.acc2 = std::bit_cast<double>(get_u64(&bytes[8]));
    w.count = get_u64(&bytes[16]);
    std::copy(bytes.begin() + 24, bytes.end(), w.reserved.begin());
    return w;
}

double status_code(std::string_view state)
{
    std::uint32_t h = 2166136261u;
    for (char c : state) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 16777619u;
    }
    return static_cast<double>(h);
}

std::vector<Instruction> validate(const Task& task)
{
    const Bytes& code = task.bytecode;
    if (code.size() > 0xffff)
        throw InvalidBytecode("task larger than the 64 KiB address space");

    std::vector<Instruction> program;
    std::unordered_map<std::size_t, std::size_t> at_offset;
    for (std::size_t pc = 0; pc < code.size();) {
        Instruction ins = decode_one(code, pc);
        at_offset.emplace(pc, program.size());
        pc += ins.size;
        program.push_back(std::move(ins));
    }
    const std::size_t end_index = program.size();
    auto index_of = [&](std::size_t offset) -> std::size_t {
        if (offset == code.size())
            return end_index;
        auto it = at_offset.find(offset);
        if (it == at_offset.end())
            throw InvalidBytecode("jump into the middle of an instruction (offset " +
                                  std::to_string(offset) + ")");
        return it->second;
    };

    // Stack depth dataflow; every reachable instruction must see one depth.
    std::vector<int> depth(program.size() + 1, -1);
    std::vector<std::size_t> work{0};
    depth[0] = 0;
    auto flow = [&](std::size_t to, int d) {
        if (depth[to] == -1) {
            depth[to] = d;
            work.push_back(to);
        } else if (depth[to] != d) {
            throw InvalidBytecode("inconsistent stack depth at a join point");
        }
    };
    while (!work.empty()) {
        const std::size_t i = work.back();
        work.pop_back();
        if (i == end_index)
            continue;
        const Instruction& ins = program[i];
        auto [pops, pushes] = effect_of(ins.op);
        const int d = depth[i];
        if (d < pops)
            throw InvalidBytecode("stack underflow at offset " + std::to_string(ins.offset));
        const int next = d - pops + pushes;
        if (next > static_cast<int>(kMaxStackDepth))
            throw InvalidBytecode("stack depth bound exceeded at offset " +
                                  std::to_string(ins.offset));
        switch (ins.op) {
        case Opcode::Halt: break;
        case Opcode::Jmp: flow(index_of(ins.target), next); break;
        case Opcode::JmpIfFalse:
            flow(index_of(ins.target), next);
            flow(i + 1, next);
            break;
        default: flow(i + 1, next); break;
        }
    }
    return program;
}

ExecResult execute(const Task& task, const CarrierString& carrier, const SensorInterface& sensors,
                   std::uint64_t step_budget)
{
    const auto program = validate(task);
    std::unordered_map<std::size_t, std::size_t> at_offset;
    for (std::size_t i = 0; i < program.size(); ++i)
        at_offset.emplace(program[i].offset, i);
    auto index_of = [&](std::size_t offset) {
        auto it = at_offset.find(offset);
        return it == at_offset.end() ? program.size() : it->second;
    };

    CarrierString w = carrier;
    std::array<double, kMaxStackDepth> stack{};
    std::size_t sp = 0;
    auto pop = [&] { return stack[--sp]; };
    auto push = [&](double v) { stack[sp++] = v; };

    ExecResult result;
    std::size_t pc = 0;
    while (pc < program.size()) {
        if (result.steps == step_budget) {
            result.carrier = carrier;
            result.status = ExecStatus::Interrupted;
            return result;
        }
        ++result.steps;
        const Instruction& ins = program[pc];
        std::size_t next = pc + 1;
        switch (ins.op) {
        case Opcode::Halt: next = program.size(); break;
        case Opcode::PushConst: push(ins.constant); break;
        case Opcode::ReadSensor: {
            auto it = sensors.readings.find(ins.name);
            if (it == sensors.readings.end())
                throw SensorFault("no reading for '" + ins.name + "'");
            push(it->second);
            break;
        }
        case Opcode::ReadStatus: {
            auto it = sensors.statuses.find(ins.name);
            if (it == sensors.statuses.end())
                throw SensorFault("no status for '" + ins.name + "'");
            push(status_code(it->second));
            break;
        }
        case Opcode::Cmp: {
            const double b = pop();
            const double a = pop();
            push(compare(static_cast<Comparator>(ins.operand), a, b) ? 1.0 : 0.0);
            break;
        }
        case Opcode::JmpIfFalse:
            if (pop() == 0.0)
                next = index_of(ins.target);
            break;
        case Opcode::Jmp: next = index_of(ins.target); break;
        case Opcode::LoadW:
            switch (static_cast<Field>(ins.operand)) {
            case Field::Acc1: push(w.acc1); break;
            case Field::Acc2: push(w.acc2); break;
            case Field::Count: push(static_cast<double>(w.count)); break;
            }
            break;
        case Opcode::StoreW: {
            const double v = pop();
            switch (static_cast<Field>(ins.operand)) {
            case Field::Acc1: w.acc1 = v; break;
            case Field::Acc2: w.acc2 = v; break;
            case Field::Count: w.count = saturating_count(v); break;
            }
            break;
        }
        case Opcode::Add: {
            const double b = pop();
            push(pop() + b);
            break;
        }
        case Opcode::Mul: {
            const double b = pop();
            push(pop() * b);
            break;
        }
        case Opcode::Max: {
            const double b = pop();
            push(std::fmax(pop(), b));
            break;
        }
        case Opcode::Dup: {
            const double v = pop();
            push(v);
            push(v);
            break;
        }
        }
        pc = next;
    }
    result.carrier = w;
    return result;
}

std::string_view to_string(Aggregation kind)
{
    switch (kind) {
    case Aggregation::Sum: return "SUM";
    case Aggregation::Avg: return "AVG";
    case Aggregation::Max: return "MAX";
    case Aggregation::Variance: return "VARIANCE";
    case Aggregation::Std: return "STD";
    }
    return "?";
}

std::optional<Aggregation> parse_aggregation(std::string_view name)
{
    if (name == "SUM") return Aggregation::Sum;
    if (name == "AVG") return Aggregation::Avg;
    if (name == "MAX") return Aggregation::Max;
    if (name == "VARIANCE" || name == "VAR") return Aggregation::Variance;
    if (name == "STD" || name == "STDDEV") return Aggregation::Std;
    return std::nullopt;
}

CarrierString initial_carrier(Aggregation kind)
{
    CarrierString w;
    if (kind == Aggregation::Max)
        w.acc1 = -std::numeric_limits<double>::infinity();
    return w;
}

CarrierString merge(Aggregation kind, const CarrierString& a, const CarrierString& b)
{
    CarrierString out;
    out.acc1 = kind == Aggregation::Max ? std::fmax(a.acc1, b.acc1) : a.acc1 + b.acc1;
    out.acc2 = a.acc2 + b.acc2;
    out.count = a.count > std::numeric_limits<std::uint64_t>::max() - b.count
                    ? std::numeric_limits<std::uint64_t>::max()
                    : a.count + b.count;
    return out;
}

double finalize(Aggregation kind, const CarrierString& w)
{
    if (w.count == 0)
        throw VmError("no contributing nodes");
    const double n = static_cast<double>(w.count);
    switch (kind) {
    case Aggregation::Sum:
    case Aggregation::Max: return w.acc1;
    case Aggregation::Avg: return w.acc1 / n;
    case Aggregation::Variance:
    case Aggregation::Std: {
        const double mean = w.acc1 / n;
        const double var = std::max(0.0, w.acc2 / n - mean * mean);
        return kind == Aggregation::Variance ? var : std::sqrt(var);
    }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// assembler

namespace {

const std::map<std::string, Comparator>& comparators()
{
    static const std::map<std::string, Comparator> m{
        {"eq", Comparator::Eq}, {"ne", Comparator::Ne}, {"lt", Comparator::Lt},
        {"le", Comparator::Le}, {"gt", Comparator::Gt}, {"ge", Comparator::Ge}};
    return m;
}

const std::map<std::string, Field>& fields()
{
    static const std::map<std::string, Field> m{
        {"acc1", Field::Acc1}, {"acc2", Field::Acc2}, {"count", Field::Count}};
    return m;
}

template <typename Map>
std::string name_of(const Map& m, std::uint8_t v)
{
    for (const auto& [name, value] : m)
        if (static_cast<std::uint8_t>(value) == v)
            return name;
    return "?";
}

} // namespace

Task assemble(std::string_view source)
{
    struct Fixup {
        std::size_t at;
        std::string label;
        std::size_t line;
    };
    Task task;
    Bytes& out = task.bytecode;
    std::map<std::string, std::size_t> labels;
    std::vector<Fixup> fixups;

    std::istringstream in{std::string(source)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        std::istringstream words(line);
        std::string op;
        if (!(words >> op))
            continue;
        auto fail = [&](const std::string& msg) {
            throw InvalidBytecode("line " + std::to_string(lineno) + ": " + msg);
        };
        if (op.back() == ':') {
            op.pop_back();
            if (!labels.emplace(op, out.size()).second)
                fail("duplicate label '" + op + "'");
            continue;
        }
        std::string arg;
        words >> arg;
        if (std::string extra; words >> extra)
            fail("unexpected '" + extra + "'");
        auto emit = [&](Opcode o) { out.push_back(static_cast<std::uint8_t>(o)); };
        if (op == "halt") {
            emit(Opcode::Halt);
        } else if (op == "push") {
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(arg, &used);
                if (used != arg.size())
                    fail("bad constant '" + arg + "'");
            } catch (const std::logic_error&) {
                fail("bad constant '" + arg + "'");
            }
            emit(Opcode::PushConst);
            out.resize(out.size() + 8);
            put_u64(&out[out.size() - 8], std::bit_cast<std::uint64_t>(v));
        } else if (op == "read" || op == "status") {
            if (arg.empty() || arg.size() > 255)
                fail("sensor name must be 1..255 bytes");
            emit(op == "read" ? Opcode::ReadSensor : Opcode::ReadStatus);
            out.push_back(static_cast<std::uint8_t>(arg.size()));
            out.insert(out.end(), arg.begin(), arg.end());
        } else if (op == "cmp") {
            auto it = comparators().find(arg);
            if (it == comparators().end())
                fail("unknown comparator '" + arg + "'");
            emit(Opcode::Cmp);
            out.push_back(static_cast<std::uint8_t>(it->second));
        } else if (op == "load" || op == "store") {
            auto it = fields().find(arg);
            if (it == fields().end())
                fail("unknown field '" + arg + "'");
            emit(op == "load" ? Opcode::LoadW : Opcode::StoreW);
            out.push_back(static_cast<std::uint8_t>(it->second));
        } else if (op == "jf" || op == "jmp") {
            if (arg.empty())
                fail("jump needs a label");
            emit(op == "jf" ? Opcode::JmpIfFalse : Opcode::Jmp);
            fixups.push_back({out.size(), arg, lineno});
            out.push_back(0);
            out.push_back(0);
        } else if (op == "add") {
            emit(Opcode::Add);
        } else if (op == "mul") {
            emit(Opcode::Mul);
        } else if (op == "max") {
            emit(Opcode::Max);
        } else if (op == "dup") {
            emit(Opcode::Dup);
        } else {
            fail("unknown mnemonic '" + op + "'");
        }
    }
    for (const auto& f : fixups) {
        auto it = labels.find(f.label);
        if (it == labels.end())
            throw InvalidBytecode("line " + std::to_string(f.line) + ": undefined label '" +
                                  f.label + "'");
        out[f.at] = static_cast<std::uint8_t>(it->second & 0xff);
        out[f.at + 1] = static_cast<std::uint8_t>(it->second >> 8);
    }
    return task;
}

std::string disassemble(const Task& task)
{
    const auto program = validate(task);
    std::set<std::size_t> targets;
    for (const auto& ins : program)
        if (ins.op == Opcode::JmpIfFalse || ins.op == Opcode::Jmp)
            targets.insert(ins.target);
    auto label = [](std::size_t off) { return "L" + std::to_string(off); };

    std::ostringstream out;
    out.precision(17);
    for (const auto& ins : program) {
        if (targets.contains(ins.offset))
            out << label(ins.offset) << ":\n";
        out << "    ";
        switch (ins.op) {
        case Opcode::Halt: out << "halt"; break;
        case Opcode::PushConst: out << "push " << ins.constant; break;
        case Opcode::ReadSensor: out << "read " << ins.name; break;
        case Opcode::ReadStatus: out << "status " << ins.name; break;
        case Opcode::Cmp: out << "cmp " << name_of(comparators(), ins.operand); break;
        case Opcode::JmpIfFalse: out << "jf " << label(ins.target); break;
        case Opcode::Jmp: out << "jmp " << label(ins.target); break;
        case Opcode::LoadW: out << "load " << name_of(fields(), ins.operand); break;
        case Opcode::StoreW: out << "store " << name_of(fields(), ins.operand); break;
        case Opcode::Add: out << "add"; break;
        case Opcode::Mul: out << "mul"; break;
        case Opcode::Max: out << "max"; break;
        case Opcode::Dup: out << "dup"; break;
        }
        out << '\n';
    }
    if (targets.contains(task.bytecode.size()))
        out << label(task.bytecode.size()) << ":\n";
    return out.str();
}

} // namespace onionwsn::vm
