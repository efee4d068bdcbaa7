#include <algorithm>
#include <set>

#include "rlcf/taskgen/taskgen.hpp"

namespace rlcf::taskgen {

using namespace minilang;

namespace {

bool is_commutative(Token op) {
  return op == tok::kPlus || op == tok::kStar || op == tok::kEq || op == tok::kNe ||
         op == tok::kAnd || op == tok::kOr;
}

bool coin(Rng& rng, double p) { return uniform01(rng) < p; }

// Rewrites expressions bottom-up. Each enabled rewrite fires per node with the
// given probability (1.0 for the deterministic helpers).
struct ExprRewriter {
  Rng* rng = nullptr;
  double swap_p = 0.0;
  double paren_p = 0.0;
  Token rename_from = tok::kPad;
  Token rename_to = tok::kPad;

  bool fire(double p) const { return p >= 1.0 || (p > 0.0 && rng && coin(*rng, p)); }

  ExprPtr operator()(const ExprPtr& e) const {
    ExprPtr out;
    switch (e->kind) {
      case Expr::Kind::IntLit:
      case Expr::Kind::BoolLit:
        out = e;
        break;
      case Expr::Kind::Var:
        out = e->token == rename_from ? make_var(rename_to) : e;
        break;
      case Expr::Kind::Paren:
        out = make_paren((*this)(e->lhs));
        break;
      case Expr::Kind::Unary:
        out = make_unary(e->token, (*this)(e->lhs));
        break;
      case Expr::Kind::Binary: {
        ExprPtr l = (*this)(e->lhs);
        ExprPtr r = (*this)(e->rhs);
        if (is_commutative(e->token) && fire(swap_p)) std::swap(l, r);
        out = make_binary(e->token, std::move(l), std::move(r));
        break;
      }
    }
    if (out->kind != Expr::Kind::Paren && fire(paren_p)) out = make_paren(out);
    return out;
  }
};

struct StmtRewriter {
  ExprRewriter expr;
  Rng* rng = nullptr;
  double flip_p = 0.0;
  double split_p = 0.0;

  bool fire(double p) const { return p >= 1.0 || (p > 0.0 && rng && coin(*rng, p)); }

  std::vector<Stmt> block(const std::vector<Stmt>& in) const {
    std::vector<Stmt> out;
    for (const auto& s : in) emit(s, out);
    return out;
  }

  void emit(const Stmt& s, std::vector<Stmt>& out) const {
    Stmt r = s;
    auto rename = [&](Token t) { return t == expr.rename_from ? expr.rename_to : t; };
    r.name = rename(s.name);
    if (s.expr) r.expr = expr(s.expr);
    r.body = block(s.body);
    r.else_body = block(s.else_body);
    if (r.kind == Stmt::Kind::If && r.has_else && fire(flip_p)) {
      r.expr = make_unary(tok::kNot, make_paren(r.expr));
      std::swap(r.body, r.else_body);
    }
    if (r.kind == Stmt::Kind::Let && fire(split_p)) {
      Stmt decl = r;
      decl.expr = r.type == tok::kInt ? make_int(0) : make_bool(false);
      Stmt assign;
      assign.kind = Stmt::Kind::Assign;
      assign.name = r.name;
      assign.expr = r.expr;
      out.push_back(std::move(decl));
      out.push_back(std::move(assign));
      return;
    }
    out.push_back(std::move(r));
  }
};

void collect_names(const std::vector<Stmt>& stmts, std::set<Token>& used, std::vector<Token>* lets) {
  auto walk_expr = [&](auto&& self, const ExprPtr& e) -> void {
    if (!e) return;
    if (e->kind == Expr::Kind::Var) used.insert(e->token);
    self(self, e->lhs);
    self(self, e->rhs);
  };
  for (const auto& s : stmts) {
    if (s.kind == Stmt::Kind::Let || s.kind == Stmt::Kind::Assign || s.kind == Stmt::Kind::Read) {
      used.insert(s.name);
    }
    if (s.kind == Stmt::Kind::Let && lets) lets->push_back(s.name);
    walk_expr(walk_expr, s.expr);
    collect_names(s.body, used, lets);
    collect_names(s.else_body, used, lets);
  }
}

}  // namespace

Program rename_variable(const Program& program, Token from, Token to) {
  StmtRewriter rw;
  rw.expr.rename_from = from;
  rw.expr.rename_to = to;
  return rw.block(program);
}

Program swap_commutative(const Program& program) {
  StmtRewriter rw;
  rw.expr.swap_p = 1.0;
  return rw.block(program);
}

std::optional<TokenSeq> transform_response(const TaskSample& sample, const TransformSet& set,
                                           Rng& rng) {
  ParseOutput parsed = parse_program(checked_sequence(sample.prompt, sample.reference));
  if (!parsed.result.ok || !parsed.program) return std::nullopt;
  const Program& full = *parsed.program;
  const auto split = static_cast<std::ptrdiff_t>(sample.split_index);
  Program response(full.begin() + split, full.end());

  StmtRewriter rw;
  rw.rng = &rng;
  rw.expr.rng = &rng;
  if (set.swap) rw.expr.swap_p = 0.5;
  if (set.paren) rw.expr.paren_p = 0.15;
  if (set.flip) rw.flip_p = 0.5;
  if (set.split) rw.split_p = 0.5;
  if (set.rename) {
    std::set<Token> used;
    std::vector<Token> lets;
    collect_names(full, used, nullptr);
    collect_names(response, used, &lets);
    std::vector<Token> fresh;
    for (int i = 0; i < tok::kNumIdents; ++i) {
      if (!used.count(ident(i))) fresh.push_back(ident(i));
    }
    if (!lets.empty() && !fresh.empty()) {
      rw.expr.rename_from = lets[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(lets.size()) - 1))];
      rw.expr.rename_to = fresh[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(fresh.size()) - 1))];
    }
  }

  TokenSeq out = print_program(rw.block(response));
  out.push_back(tok::kEop);
  if (!compile_check(sample.prompt, out).ok || !passes_tests(sample, out)) return std::nullopt;
  return out;
}

std::vector<TokenSeq> equivalent_variants(const TaskSample& sample, std::uint64_t seed) {
  std::vector<TokenSeq> out = {sample.reference};
  constexpr std::size_t kWanted = 3;
  for (std::uint64_t attempt = 0; attempt < 64 && out.size() < kWanted; ++attempt) {
    Rng rng = make_rng(seed, "variant", attempt);
    TransformSet set{coin(rng, 0.5), coin(rng, 0.5), coin(rng, 0.5), coin(rng, 0.5), coin(rng, 0.5)};
    if (!(set.rename || set.swap || set.flip || set.split || set.paren)) set.paren = true;
    auto v = transform_response(sample, set, rng);
    if (v && std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(std::move(*v));
  }
  while (out.size() < 2) out.push_back(sample.reference);
  return out;
}

std::vector<EquivalenceTriple> make_triples(const std::vector<TaskSample>& samples,
                                            std::uint64_t seed) {
  std::vector<EquivalenceTriple> out;
  if (samples.size() < 2) return out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TaskSample& s = samples[i];
    Rng rng = make_rng(seed, "triple", i);
    std::vector<TokenSeq> variants = equivalent_variants(s, derive_seed(seed, "variants", i));
    const int nv = static_cast<int>(variants.size());
    const int a = uniform_int(rng, 0, nv - 1);
    int p = uniform_int(rng, 0, nv - 2);
    if (p >= a) ++p;

    std::vector<std::size_t> other_family;
    std::vector<std::size_t> other_task;
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (j == i) continue;
      if (samples[j].family != s.family) other_family.push_back(j);
      if (!(samples[j].params == s.params)) other_task.push_back(j);
    }
    const auto& pool = !other_family.empty() ? other_family : other_task;
    if (pool.empty()) continue;
    const std::size_t n = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];

    out.push_back({s.prompt, variants[static_cast<std::size_t>(a)], variants[static_cast<std::size_t>(p)],
                   samples[n].reference, s.family, samples[n].family});
  }
  return out;
}

}  // namespace rlcf::taskgen
