#ifndef RLCF_MINILANG_MINILANG_HPP_
#define RLCF_MINILANG_MINILANG_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlcf/minilang/vocab.hpp"

namespace rlcf::minilang {

// ---------------------------------------------------------------------------
// Syntax tree. Nodes are immutable and shared, so source-to-source rewrites
// (see taskgen variants) can rebuild only the spine they touch.

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { IntLit, BoolLit, Var, Paren, Unary, Binary };
  Kind kind;
  Token token;  // literal / identifier / operator token
  ExprPtr lhs;  // Unary and Paren use lhs only
  ExprPtr rhs;
};

ExprPtr make_int(int value);
ExprPtr make_bool(bool value);
ExprPtr make_var(Token name);
ExprPtr make_paren(ExprPtr inner);
ExprPtr make_unary(Token op, ExprPtr operand);
ExprPtr make_binary(Token op, ExprPtr lhs, ExprPtr rhs);

struct Stmt {
  enum class Kind { Let, Assign, If, While, Print, Read };
  Kind kind;
  Token name = tok::kPad;      // Let / Assign / Read
  Token type = tok::kInt;      // Let
  ExprPtr expr;                // Let / Assign / If / While / Print
  std::vector<Stmt> body;      // If-then / While
  std::vector<Stmt> else_body;  // If
  bool has_else = false;
};

using Program = std::vector<Stmt>;

// Binding strength of a binary operator token (|| = 1 ... * / % = 5); 0 if
// the token is not a binary operator.
int binary_precedence(Token op);

// Prints statements back to tokens (no trailing EOP). Parser output prints
// token-identically; rewritten trees get the minimal parentheses needed.
TokenSeq print_program(std::span<const Stmt> stmts);
TokenSeq print_expr(const ExprPtr& e);

// ---------------------------------------------------------------------------
// Static checking.

enum class DiagKind { SyntaxError, UnknownSymbol, TypeMismatch, Redeclaration, UnusedVariable };
inline constexpr int kNumDiagKinds = 5;

const char* to_string(DiagKind kind);

struct Diagnostic {
  DiagKind kind;
  std::size_t token_index;
  std::string message;

  bool is_error() const { return kind != DiagKind::UnusedVariable; }
};

struct CompileResult {
  bool ok = true;
  std::optional<std::size_t> first_error_index;
  std::vector<Diagnostic> diagnostics;
  std::vector<std::size_t> unused_decl_indices;
};

struct ParseOutput {
  CompileResult result;
  // Present when parsing reached the end of the program (semantic errors
  // may still be present; check result.ok).
  std::optional<Program> program;
  // Number of tokens consumed, including EOP.
  std::size_t tokens_consumed = 0;
};

// Parses and checks a complete code token sequence (must end with EOP).
ParseOutput parse_program(std::span<const Token> code);

// The program text a prompt contributes: the prompt with its description
// block and hole marker removed.
TokenSeq code_portion(std::span<const Token> prompt);

// code_portion(prompt) followed by response.
TokenSeq checked_sequence(std::span<const Token> prompt, std::span<const Token> response);

// The compiler C(x, y). Indices in the result refer to
// checked_sequence(prompt, response).
CompileResult compile_check(std::span<const Token> prompt, std::span<const Token> response);

// ---------------------------------------------------------------------------
// Interpreter (evaluation only).

enum class ExecStatus { Completed, RuntimeError, FuelExhausted };

const char* to_string(ExecStatus status);

struct ExecResult {
  ExecStatus status = ExecStatus::Completed;
  std::vector<std::int64_t> outputs;
  std::int64_t fuel_used = 0;
  std::string error;
};

inline constexpr std::int64_t kDefaultFuel = 10'000;

// Runs a code sequence (as returned by checked_sequence). Throws
// std::invalid_argument if it does not compile.
ExecResult execute(std::span<const Token> program, std::span<const std::int64_t> input,
                   std::int64_t fuel = kDefaultFuel);

// Runs an already checked tree.
ExecResult execute(const Program& program, std::span<const std::int64_t> input,
                   std::int64_t fuel = kDefaultFuel);

}  // namespace rlcf::minilang

#endif  // RLCF_MINILANG_MINILANG_HPP_
