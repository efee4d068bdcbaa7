// Single-pass recursive-descent parser and static checker for MiniLang.
//
// Every diagnostic is attached to the token at which the problem becomes
// decidable from the tokens seen so far: the offending token for syntax and
// symbol errors, the last token of the failing construct for type errors.
// That keeps localization prefix-stable: re-checking a truncated prefix can
// only add diagnostics at or after the cut.

#include <algorithm>
#include <array>
#include <string>
#include <utility>

#include "rlcf/minilang/minilang.hpp"

namespace rlcf::minilang {

const char* to_string(DiagKind kind) {
  switch (kind) {
    case DiagKind::SyntaxError: return "SyntaxError";
    case DiagKind::UnknownSymbol: return "UnknownSymbol";
    case DiagKind::TypeMismatch: return "TypeMismatch";
    case DiagKind::Redeclaration: return "Redeclaration";
    case DiagKind::UnusedVariable: return "UnusedVariable";
  }
  return "?";
}

ExprPtr make_int(int value) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::IntLit, int_literal(value), nullptr, nullptr});
}
ExprPtr make_bool(bool value) {
  return std::make_shared<const Expr>(
      Expr{Expr::Kind::BoolLit, value ? tok::kTrue : tok::kFalse, nullptr, nullptr});
}
ExprPtr make_var(Token name) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::Var, name, nullptr, nullptr});
}
ExprPtr make_paren(ExprPtr inner) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::Paren, tok::kLParen, std::move(inner), nullptr});
}
ExprPtr make_unary(Token op, ExprPtr operand) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::Unary, op, std::move(operand), nullptr});
}
ExprPtr make_binary(Token op, ExprPtr lhs, ExprPtr rhs) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::Binary, op, std::move(lhs), std::move(rhs)});
}

int binary_precedence(Token op) {
  switch (op) {
    case tok::kOr: return 1;
    case tok::kAnd: return 2;
    case tok::kLt:
    case tok::kLe:
    case tok::kEq:
    case tok::kNe: return 3;
    case tok::kPlus:
    case tok::kMinus: return 4;
    case tok::kStar:
    case tok::kSlash:
    case tok::kPercent: return 5;
    default: return 0;
  }
}

TokenSeq code_portion(std::span<const Token> prompt) {
  TokenSeq out;
  bool in_desc = false;
  for (Token t : prompt) {
    if (t == tok::kDescOpen) {
      in_desc = true;
      continue;
    }
    if (t == tok::kDescClose) {
      in_desc = false;
      continue;
    }
    if (in_desc || t == tok::kHole) continue;
    out.push_back(t);
  }
  return out;
}

TokenSeq checked_sequence(std::span<const Token> prompt, std::span<const Token> response) {
  TokenSeq out = code_portion(prompt);
  out.insert(out.end(), response.begin(), response.end());
  return out;
}

namespace {

enum class Type { Int, Bool, Error };

const char* type_name(Type t) {
  switch (t) {
    case Type::Int: return "int";
    case Type::Bool: return "bool";
    case Type::Error: return "<error>";
  }
  return "?";
}

struct SyntaxAbort {};

struct Typed {
  ExprPtr expr;
  Type type;
  std::size_t last;  // index of the expression's last token
};

class Checker {
 public:
  explicit Checker(std::span<const Token> code) : code_(code) {}

  ParseOutput run() {
    ParseOutput out;
    Program program;
    bool complete = false;
    try {
      push_scope();
      while (peek() != tok::kEop) {
        if (at_end()) syntax_error("expected statement or <eop>");
        program.push_back(statement());
      }
      ++pos_;  // EOP
      if (!at_end()) syntax_error("tokens after <eop>");
      pop_scope();
      complete = true;
    } catch (const SyntaxAbort&) {
    }
    if (complete) {
      for (const auto& d : decls_) {
        if (!d.read) {
          out.result.unused_decl_indices.push_back(d.index);
          diags_.push_back({DiagKind::UnusedVariable, d.index,
                            "variable '" + std::string(lexeme(d.name)) + "' is never read"});
        }
      }
      out.program = std::move(program);
    }
    out.tokens_consumed = pos_;
    for (const auto& d : diags_) {
      if (!d.is_error()) continue;
      if (!out.result.first_error_index || d.token_index < *out.result.first_error_index) {
        out.result.first_error_index = d.token_index;
      }
    }
    out.result.ok = !out.result.first_error_index.has_value();
    out.result.diagnostics = std::move(diags_);
    return out;
  }

 private:
  struct Decl {
    Token name;
    Type type;
    std::size_t index;
    bool read = false;
  };

  // --- token stream -------------------------------------------------------

  bool at_end() const { return pos_ >= code_.size(); }
  Token peek() const { return at_end() ? Token{-1} : code_[pos_]; }

  // Position a syntax error at the current token, or at the last token when
  // the input ran out.
  [[noreturn]] void syntax_error(const std::string& what) {
    std::size_t at = pos_;
    if (at >= code_.size()) at = code_.empty() ? 0 : code_.size() - 1;
    std::string found = pos_ < code_.size() ? std::string(lexeme(code_[pos_])) : "end of input";
    diags_.push_back({DiagKind::SyntaxError, at, what + ", found '" + found + "'"});
    throw SyntaxAbort{};
  }

  std::size_t expect(Token t) {
    if (peek() != t) syntax_error("expected '" + std::string(lexeme(t)) + "'");
    return pos_++;
  }

  std::size_t expect_ident() {
    if (at_end() || !is_ident(peek())) syntax_error("expected identifier");
    return pos_++;
  }

  // --- scopes ---------------------------------------------------------------

  void push_scope() { scopes_.emplace_back(); }
  void pop_scope() { scopes_.pop_back(); }

  Decl* lookup(Token name) {
    for (auto s = scopes_.rbegin(); s != scopes_.rend(); ++s) {
      for (int id : *s) {
        if (decls_[static_cast<std::size_t>(id)].name == name) return &decls_[static_cast<std::size_t>(id)];
      }
    }
    return nullptr;
  }

  void error(DiagKind kind, std::size_t at, std::string msg) {
    diags_.push_back({kind, at, std::move(msg)});
  }

  void require(Type got, Type want, std::size_t at, const char* what) {
    if (got == Type::Error || got == want) return;
    error(DiagKind::TypeMismatch, at,
          std::string(what) + ": expected " + type_name(want) + ", got " + type_name(got));
  }

  // --- statements -----------------------------------------------------------

  std::vector<Stmt> block() {
    expect(tok::kLBrace);
    push_scope();
    std::vector<Stmt> body;
    while (peek() != tok::kRBrace) {
      if (at_end() || peek() == tok::kEop) syntax_error("expected statement or '}'");
      body.push_back(statement());
    }
    ++pos_;
    pop_scope();
    return body;
  }

  Stmt statement() {
    const Token head = peek();
    Stmt s;
    if (head == tok::kLet) {
      ++pos_;
      s.kind = Stmt::Kind::Let;
      const std::size_t name_at = expect_ident();
      s.name = code_[name_at];
      const bool redeclared = lookup(s.name) != nullptr;
      if (redeclared) {
        error(DiagKind::Redeclaration, name_at,
              "variable '" + std::string(lexeme(s.name)) + "' is already declared");
      }
      expect(tok::kColon);
      if (peek() != tok::kInt && peek() != tok::kBool) syntax_error("expected type");
      s.type = code_[pos_++];
      expect(tok::kAssign);
      Typed init = expression();
      const Type declared = s.type == tok::kInt ? Type::Int : Type::Bool;
      require(init.type, declared, init.last, "initializer");
      expect(tok::kSemi);
      s.expr = init.expr;
      if (!redeclared) {
        decls_.push_back({s.name, declared, name_at});
        scopes_.back().push_back(static_cast<int>(decls_.size() - 1));
      }
    } else if (head >= 0 && is_ident(head)) {
      s.kind = Stmt::Kind::Assign;
      const std::size_t name_at = pos_++;
      s.name = head;
      Decl* d = lookup(head);
      if (!d) {
        error(DiagKind::UnknownSymbol, name_at,
              "cannot find symbol '" + std::string(lexeme(head)) + "'");
      }
      expect(tok::kAssign);
      Typed value = expression();
      if (d) require(value.type, d->type, value.last, "assignment");
      expect(tok::kSemi);
      s.expr = value.expr;
    } else if (head == tok::kIf) {
      ++pos_;
      s.kind = Stmt::Kind::If;
      Typed cond = expression();
      require(cond.type, Type::Bool, cond.last, "if condition");
      s.expr = cond.expr;
      s.body = block();
      if (peek() == tok::kElse) {
        ++pos_;
        s.has_else = true;
        s.else_body = block();
      }
    } else if (head == tok::kWhile) {
      ++pos_;
      s.kind = Stmt::Kind::While;
      Typed cond = expression();
      require(cond.type, Type::Bool, cond.last, "while condition");
      s.expr = cond.expr;
      s.body = block();
    } else if (head == tok::kPrint) {
      ++pos_;
      s.kind = Stmt::Kind::Print;
      Typed value = expression();
      require(value.type, Type::Int, value.last, "print");
      expect(tok::kSemi);
      s.expr = value.expr;
    } else if (head == tok::kRead) {
      ++pos_;
      s.kind = Stmt::Kind::Read;
      const std::size_t name_at = expect_ident();
      s.name = code_[name_at];
      Decl* d = lookup(s.name);
      if (!d) {
        error(DiagKind::UnknownSymbol, name_at,
              "cannot find symbol '" + std::string(lexeme(s.name)) + "'");
      } else {
        require(d->type, Type::Int, name_at, "read target");
      }
      expect(tok::kSemi);
    } else {
      syntax_error("expected statement");
    }
    return s;
  }

  // --- expressions (precedence climbing) ------------------------------------

  Typed expression() { return binary(1); }

  Typed binary(int min_prec) {
    Typed lhs = unary();
    for (;;) {
      const Token op = peek();
      const int prec = op >= 0 ? binary_precedence(op) : 0;
      if (prec == 0 || prec < min_prec) return lhs;
      ++pos_;
      Typed rhs = binary(prec + 1);
      lhs = combine(op, std::move(lhs), std::move(rhs));
    }
  }

  Typed combine(Token op, Typed lhs, Typed rhs) {
    const std::size_t last = rhs.last;
    auto node = make_binary(op, lhs.expr, rhs.expr);
    const bool poisoned = lhs.type == Type::Error || rhs.type == Type::Error;
    auto mismatch = [&](const char* want) {
      if (!poisoned) {
        error(DiagKind::TypeMismatch, last,
              "operator '" + std::string(lexeme(op)) + "' expects " + want + ", got " +
                  type_name(lhs.type) + " and " + type_name(rhs.type));
      }
    };
    switch (op) {
      case tok::kPlus:
      case tok::kMinus:
      case tok::kStar:
      case tok::kSlash:
      case tok::kPercent:
        if (lhs.type != Type::Int || rhs.type != Type::Int) mismatch("int operands");
        return {node, Type::Int, last};
      case tok::kLt:
      case tok::kLe:
        if (lhs.type != Type::Int || rhs.type != Type::Int) mismatch("int operands");
        return {node, Type::Bool, last};
      case tok::kEq:
      case tok::kNe:
        if (lhs.type != rhs.type) mismatch("operands of the same type");
        return {node, Type::Bool, last};
      case tok::kAnd:
      case tok::kOr:
        if (lhs.type != Type::Bool || rhs.type != Type::Bool) mismatch("bool operands");
        return {node, Type::Bool, last};
      default:
        syntax_error("expected binary operator");
    }
  }

  Typed unary() {
    const Token head = peek();
    if (head == tok::kMinus || head == tok::kNot) {
      ++pos_;
      Typed operand = unary();
      const Type want = head == tok::kMinus ? Type::Int : Type::Bool;
      require(operand.type, want, operand.last, head == tok::kMinus ? "unary '-'" : "'!'");
      return {make_unary(head, operand.expr), want, operand.last};
    }
    return primary();
  }

  Typed primary() {
    const Token head = peek();
    const std::size_t at = pos_;
    if (head >= 0 && is_int_literal(head)) {
      ++pos_;
      return {make_int(literal_value(head)), Type::Int, at};
    }
    if (head == tok::kTrue || head == tok::kFalse) {
      ++pos_;
      return {make_bool(head == tok::kTrue), Type::Bool, at};
    }
    if (head >= 0 && is_ident(head)) {
      ++pos_;
      Decl* d = lookup(head);
      if (!d) {
        error(DiagKind::UnknownSymbol, at, "cannot find symbol '" + std::string(lexeme(head)) + "'");
        return {make_var(head), Type::Error, at};
      }
      d->read = true;
      return {make_var(head), d->type, at};
    }
    if (head == tok::kLParen) {
      ++pos_;
      Typed inner = expression();
      const std::size_t close = expect(tok::kRParen);
      return {make_paren(inner.expr), inner.type, close};
    }
    syntax_error("expected expression");
  }

  std::span<const Token> code_;
  std::size_t pos_ = 0;
  std::vector<Diagnostic> diags_;
  std::vector<Decl> decls_;
  std::vector<std::vector<int>> scopes_;
};

}  // namespace

ParseOutput parse_program(std::span<const Token> code) {
  return Checker(code).run();
}

CompileResult compile_check(std::span<const Token> prompt, std::span<const Token> response) {
  const TokenSeq code = checked_sequence(prompt, response);
  return parse_program(code).result;
}

}  // namespace rlcf::minilang
