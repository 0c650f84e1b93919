#ifndef ONIONWSN_TASK_VM_HPP
#define ONIONWSN_TASK_VM_HPP

// Restricted stack machine for aggregation tasks. A task can read local
// sensors and the carrier string, nothing else.

#include "onionwsn/common.hpp"
#include "onionwsn/onion.hpp"

#include <map>
#include <optional>
#include <string>

namespace onionwsn::vm {

class VmError : public Error {
public:
    using Error::Error;
};

// Bytecode is malformed or fails static validation.
class InvalidBytecode : public VmError {
public:
    using VmError::VmError;
};

// Task read a sensor the node does not have.
class SensorFault : public VmError {
public:
    using VmError::VmError;
};

enum class Opcode : std::uint8_t {
    Halt = 0x00,
    PushConst = 0x01,   // f64 LE
    ReadSensor = 0x02,  // u8 len, name
    ReadStatus = 0x03,  // u8 len, name; pushes status_code(state)
    Cmp = 0x04,         // u8 comparator
    JmpIfFalse = 0x05,  // u16 LE absolute offset
    Jmp = 0x06,         // u16 LE absolute offset
    LoadW = 0x07,       // u8 field
    StoreW = 0x08,      // u8 field
    Add = 0x09,
    Mul = 0x0a,
    Max = 0x0b,
    Dup = 0x0c,
};

enum class Comparator : std::uint8_t { Eq = 0, Ne = 1, Lt = 2, Le = 3, Gt = 4, Ge = 5 };
enum class Field : std::uint8_t { Acc1 = 0, Acc2 = 1, Count = 2 };

inline constexpr std::size_t kMaxStackDepth = 16;
inline constexpr std::uint64_t kDefaultStepBudget = 10'000;

struct Task {
    Bytes bytecode;
    bool operator==(const Task&) const = default;
};

// Fixed 32-byte little-endian record: acc1 f64 | acc2 f64 | count u64 | reserved(8).
struct CarrierString {
    double acc1 = 0.0;
    double acc2 = 0.0;
    std::uint64_t count = 0;
    std::array<std::uint8_t, 8> reserved{};

    onion::CarrierBytes encode() const;
    static CarrierString decode(const onion::CarrierBytes& bytes);

    bool operator==(const CarrierString&) const = default;
};

struct SensorInterface {
    std::map<std::string, double> readings;
    std::map<std::string, std::string> statuses;
};

// Numeric code a status string compares as (FNV-1a, 32 bit).
double status_code(std::string_view state);

enum class ExecStatus { Completed, Interrupted };

struct ExecResult {
    CarrierString carrier;
    ExecStatus status = ExecStatus::Completed;
    std::uint64_t steps = 0;
};

struct Instruction {
    std::size_t offset = 0;
    Opcode op = Opcode::Halt;
    double constant = 0.0;
    std::string name;
    std::uint8_t operand = 0;
    std::size_t target = 0;
    std::size_t size = 1;
};

// Decodes and statically checks a task: known opcodes, operands in bounds,
// jumps landing on instruction boundaries, consistent stack depth at joins,
// no underflow and depth <= kMaxStackDepth. Throws InvalidBytecode.
std::vector<Instruction> validate(const Task& task);

// Runs the task for at most step_budget instructions. Stores to the carrier
// only take effect if the task halts in budget; an interrupted run returns
// the input carrier unchanged with status Interrupted.
ExecResult execute(const Task& task, const CarrierString& carrier,
                   const SensorInterface& sensors, std::uint64_t step_budget = kDefaultStepBudget);

enum class Aggregation { Sum, Avg, Max, Variance, Std };

std::string_view to_string(Aggregation kind);
std::optional<Aggregation> parse_aggregation(std::string_view name);

// Carrier a fresh query starts from: zeros, except MAX which starts at -inf.
CarrierString initial_carrier(Aggregation kind);

// Combines the partial results of two queries of the same request.
CarrierString merge(Aggregation kind, const CarrierString& a, const CarrierString& b);

// avg = acc1/count, variance = acc2/count - (acc1/count)^2 (population),
// std = sqrt(variance); sum and max return acc1. Throws VmError when no node
// contributed (count == 0).
double finalize(Aggregation kind, const CarrierString& carrier);

// Small assembler for tests and the taskasm subcommand. One instruction per
// line, e.g. `push 1.5`, `read temperature`, `status light`, `cmp eq`,
// `jf end`, `jmp loop`, `load acc1`, `store count`, `add`, `halt`, and
// `name:` labels. '#' starts a comment.
Task assemble(std::string_view source);
std::string disassemble(const Task& task);

} // namespace onionwsn::vm

#endif // ONIONWSN_TASK_VM_HPP
