#include "rlcf/minilang/minilang.hpp"

namespace rlcf::minilang {

namespace {

constexpr int kUnaryPrecedence = 6;

void emit(const Expr& e, int min_prec, TokenSeq& out) {
  switch (e.kind) {
    case Expr::Kind::IntLit:
    case Expr::Kind::BoolLit:
    case Expr::Kind::Var:
      out.push_back(e.token);
      return;
    case Expr::Kind::Paren:
      out.push_back(tok::kLParen);
      emit(*e.lhs, 0, out);
      out.push_back(tok::kRParen);
      return;
    case Expr::Kind::Unary:
      out.push_back(e.token);
      emit(*e.lhs, kUnaryPrecedence, out);
      return;
    case Expr::Kind::Binary: {
      const int prec = binary_precedence(e.token);
      const bool wrap = prec < min_prec;
      if (wrap) out.push_back(tok::kLParen);
      emit(*e.lhs, prec, out);
      out.push_back(e.token);
      emit(*e.rhs, prec + 1, out);
      if (wrap) out.push_back(tok::kRParen);
      return;
    }
  }
}

void emit(const Stmt& s, TokenSeq& out);

void emit_block(const std::vector<Stmt>& body, TokenSeq& out) {
  out.push_back(tok::kLBrace);
  for (const auto& s : body) emit(s, out);
  out.push_back(tok::kRBrace);
}

void emit(const Stmt& s, TokenSeq& out) {
  switch (s.kind) {
    case Stmt::Kind::Let:
      out.insert(out.end(), {tok::kLet, s.name, tok::kColon, s.type, tok::kAssign});
      emit(*s.expr, 0, out);
      out.push_back(tok::kSemi);
      return;
    case Stmt::Kind::Assign:
      out.insert(out.end(), {s.name, tok::kAssign});
      emit(*s.expr, 0, out);
      out.push_back(tok::kSemi);
      return;
    case Stmt::Kind::If:
      out.push_back(tok::kIf);
      emit(*s.expr, 0, out);
      emit_block(s.body, out);
      if (s.has_else) {
        out.push_back(tok::kElse);
        emit_block(s.else_body, out);
      }
      return;
    case Stmt::Kind::While:
      out.push_back(tok::kWhile);
      emit(*s.expr, 0, out);
      emit_block(s.body, out);
      return;
    case Stmt::Kind::Print:
      out.push_back(tok::kPrint);
      emit(*s.expr, 0, out);
      out.push_back(tok::kSemi);
      return;
    case Stmt::Kind::Read:
      out.insert(out.end(), {tok::kRead, s.name, tok::kSemi});
      return;
  }
}

}  // namespace

TokenSeq print_expr(const ExprPtr& e) {
  TokenSeq out;
  emit(*e, 0, out);
  return out;
}

TokenSeq print_program(std::span<const Stmt> stmts) {
  TokenSeq out;
  for (const auto& s : stmts) emit(s, out);
  return out;
}

}  // namespace rlcf::minilang
