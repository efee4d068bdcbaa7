#include <array>
#include <stdexcept>

#include "rlcf/minilang/minilang.hpp"

namespace rlcf::minilang {

const char* to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::Completed: return "Completed";
    case ExecStatus::RuntimeError: return "RuntimeError";
    case ExecStatus::FuelExhausted: return "FuelExhausted";
  }
  return "?";
}

namespace {

struct OutOfFuel {};
struct Fault {
  std::string what;
};

// Variables live in one flat slot array: the checker rejects shadowing, so a
// name denotes at most one live variable at any time.
class Machine {
 public:
  Machine(std::span<const std::int64_t> input, std::int64_t fuel) : input_(input), fuel_(fuel) {}

  ExecResult run(const Program& program) {
    ExecResult r;
    try {
      exec_block(program);
      r.status = ExecStatus::Completed;
    } catch (const OutOfFuel&) {
      r.status = ExecStatus::FuelExhausted;
    } catch (const Fault& f) {
      r.status = ExecStatus::RuntimeError;
      r.error = f.what;
    }
    r.outputs = std::move(outputs_);
    r.fuel_used = used_;
    return r;
  }

 private:
  void tick() {
    if (used_ >= fuel_) throw OutOfFuel{};
    ++used_;
  }

  std::int64_t& slot(Token name) { return slots_[static_cast<std::size_t>(ident_slot(name))]; }

  void exec_block(const std::vector<Stmt>& body) {
    for (const auto& s : body) exec(s);
  }

  void exec(const Stmt& s) {
    tick();
    switch (s.kind) {
      case Stmt::Kind::Let:
      case Stmt::Kind::Assign:
        slot(s.name) = eval(*s.expr);
        return;
      case Stmt::Kind::If:
        if (eval(*s.expr) != 0) {
          exec_block(s.body);
        } else if (s.has_else) {
          exec_block(s.else_body);
        }
        return;
      case Stmt::Kind::While:
        while (eval(*s.expr) != 0) {
          exec_block(s.body);
          tick();  // loop back-edge
        }
        return;
      case Stmt::Kind::Print:
        outputs_.push_back(eval(*s.expr));
        return;
      case Stmt::Kind::Read:
        if (next_input_ >= input_.size()) throw Fault{"input exhausted"};
        slot(s.name) = input_[next_input_++];
        return;
    }
  }

  std::int64_t eval(const Expr& e) {
    tick();
    switch (e.kind) {
      case Expr::Kind::IntLit: return literal_value(e.token);
      case Expr::Kind::BoolLit: return e.token == tok::kTrue ? 1 : 0;
      case Expr::Kind::Var: return slot(e.token);
      case Expr::Kind::Paren: return eval(*e.lhs);
      case Expr::Kind::Unary: {
        const std::int64_t v = eval(*e.lhs);
        if (e.token == tok::kNot) return v == 0 ? 1 : 0;
        std::int64_t out;
        if (__builtin_sub_overflow(std::int64_t{0}, v, &out)) throw Fault{"integer overflow"};
        return out;
      }
      case Expr::Kind::Binary: break;
    }
    // Short-circuit logical operators.
    if (e.token == tok::kAnd) return eval(*e.lhs) != 0 && eval(*e.rhs) != 0 ? 1 : 0;
    if (e.token == tok::kOr) return eval(*e.lhs) != 0 || eval(*e.rhs) != 0 ? 1 : 0;
    const std::int64_t a = eval(*e.lhs);
    const std::int64_t b = eval(*e.rhs);
    std::int64_t out = 0;
    switch (e.token) {
      case tok::kPlus:
        if (__builtin_add_overflow(a, b, &out)) throw Fault{"integer overflow"};
        return out;
      case tok::kMinus:
        if (__builtin_sub_overflow(a, b, &out)) throw Fault{"integer overflow"};
        return out;
      case tok::kStar:
        if (__builtin_mul_overflow(a, b, &out)) throw Fault{"integer overflow"};
        return out;
      case tok::kSlash:
        if (b == 0) throw Fault{"division by zero"};
        if (a == INT64_MIN && b == -1) throw Fault{"integer overflow"};
        return a / b;
      case tok::kPercent:
        if (b == 0) throw Fault{"modulo by zero"};
        if (a == INT64_MIN && b == -1) return 0;
        return a % b;
      case tok::kLt: return a < b ? 1 : 0;
      case tok::kLe: return a <= b ? 1 : 0;
      case tok::kEq: return a == b ? 1 : 0;
      case tok::kNe: return a != b ? 1 : 0;
      default: throw Fault{"unknown operator"};
    }
  }

  std::span<const std::int64_t> input_;
  std::size_t next_input_ = 0;
  std::int64_t fuel_;
  std::int64_t used_ = 0;
  std::array<std::int64_t, tok::kNumIdents> slots_{};
  std::vector<std::int64_t> outputs_;
};

}  // namespace

ExecResult execute(const Program& program, std::span<const std::int64_t> input, std::int64_t fuel) {
  if (fuel <= 0) throw std::invalid_argument("fuel must be positive");
  return Machine(input, fuel).run(program);
}

ExecResult execute(std::span<const Token> program, std::span<const std::int64_t> input,
                   std::int64_t fuel) {
  ParseOutput parsed = parse_program(program);
  if (!parsed.result.ok || !parsed.program) {
    throw std::invalid_argument("execute: program does not compile");
  }
  return execute(*parsed.program, input, fuel);
}

}  // namespace rlcf::minilang
