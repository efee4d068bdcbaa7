#include "rlcf/taskgen/taskgen.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace rlcf::taskgen {

using namespace minilang;

namespace {

struct FamilySpec {
  std::string_view name;
  std::array<std::string_view, 2> keys;
  std::array<std::pair<int, int>, 2> ranges;
  int reads_param;  // index of the parameter giving the number of reads, or -1
};

const FamilySpec& spec(Family f) {
  static const std::array<FamilySpec, kNumFamilies> kSpecs = {{
      {"sum", {"k=", "c="}, {{{2, 5}, {0, 20}}}, 0},
      {"max", {"k=", "c="}, {{{2, 5}, {0, 20}}}, 0},
      {"threshold", {"k=", "t="}, {{{1, 4}, {0, 20}}}, 0},
      {"countdown", {"n=", "d="}, {{{2, 20}, {1, 4}}}, -1},
      {"linear", {"a=", "b="}, {{{0, 20}, {0, 20}}}, -1},
  }};
  return kSpecs[static_cast<std::size_t>(f)];
}

std::string lit(int v) { return std::to_string(v); }

std::string template_text(const TaskParams& p, const NameBinding& names) {
  const auto [a, b] = p.values;
  const std::string A(lexeme(names[0])), B(lexeme(names[1])), C(lexeme(names[2]));
  switch (p.family) {
    case Family::Sum:
      return "let " + A + " : int = " + lit(b) + " ; let " + B + " : int = 0 ; let " + C + " : int = " + lit(a) +
             " ; while 0 < " + C + " { read " + B + " ; " + A + " = " + A + " + " + B + " ; " + C + " = " + C +
             " - 1 ; } print " + A + " ; <eop>";
    case Family::Max:
      return "let " + A + " : int = " + lit(b) + " ; let " + B + " : int = 0 ; let " + C + " : int = " + lit(a) +
             " ; while 0 < " + C + " { read " + B + " ; if " + A + " < " + B + " { " + A + " = " + B + " ; } " + C +
             " = " + C + " - 1 ; } print " + A + " ; <eop>";
    case Family::Threshold:
      return "let " + A + " : int = 0 ; let " + B + " : int = 0 ; let " + C + " : int = " + lit(a) + " ; while 0 < " +
             C + " { read " + B + " ; " + A + " = " + A + " + " + B + " ; " + C + " = " + C + " - 1 ; } if " +
             lit(a) + " * " + lit(b) + " < " + A + " { print 1 ; } else { print 0 ; } <eop>";
    case Family::Countdown:
      return "let " + A + " : int = 0 ; read " + A + " ; " + A + " = " + A + " % " + lit(a) + " ; while 0 < " + A +
             " { print " + A + " ; " + A + " = " + A + " - " + lit(b) + " ; } print 0 ; <eop>";
    case Family::Linear:
      return "let " + A + " : int = 0 ; read " + A + " ; let " + B + " : int = " + lit(a) + " * " + A + " + " +
             lit(b) + " ; print " + B + " ; <eop>";
  }
  throw std::logic_error("unknown family");
}

int reads_for(const TaskParams& p) {
  const int idx = spec(p.family).reads_param;
  return idx < 0 ? 1 : p.values[static_cast<std::size_t>(idx)];
}

}  // namespace

std::string_view family_name(Family f) { return spec(f).name; }

std::optional<Family> family_from_name(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (spec(f).name == name) return f;
  }
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Coarse: return "coarse";
    case Split::FineTune: return "finetune";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<TaskParams> all_params(Family f) {
  const auto& s = spec(f);
  std::vector<TaskParams> out;
  for (int a = s.ranges[0].first; a <= s.ranges[0].second; ++a) {
    for (int b = s.ranges[1].first; b <= s.ranges[1].second; ++b) out.push_back({f, {a, b}});
  }
  return out;
}

TokenSeq descriptor(const TaskParams& p) {
  const auto& s = spec(p.family);
  return parse_tokens("<desc> " + std::string(s.name) + " " + std::string(s.keys[0]) + " " +
                      lit(p.values[0]) + " " + std::string(s.keys[1]) + " " + lit(p.values[1]) +
                      " </desc>");
}

NameBinding default_names(Family f) {
  auto id = [](const char* n) { return *token_of(n); };
  switch (f) {
    case Family::Sum:
    case Family::Threshold: return {id("s"), id("x"), id("n")};
    case Family::Max: return {id("m"), id("x"), id("n")};
    case Family::Countdown: return {id("n"), id("x"), id("y")};
    case Family::Linear: return {id("x"), id("y"), id("n")};
  }
  throw std::logic_error("unknown family");
}

TokenSeq template_program(const TaskParams& p, const NameBinding& names) {
  return parse_tokens(template_text(p, names));
}

TokenSeq template_program(const TaskParams& p) { return template_program(p, default_names(p.family)); }

std::vector<Example> training_view(const std::vector<TaskSample>& samples) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.prompt, s.reference, s.family});
  return out;
}

TaskSample sample_task(const TaskParams& params, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = make_rng(seed, "task", attempt);
    NameBinding names;
    {
      std::vector<Token> pool;
      for (int i = 0; i < tok::kNumIdents; ++i) pool.push_back(ident(i));
      Rng name_rng = make_rng(seed, "names", attempt);
      std::shuffle(pool.begin(), pool.end(), name_rng);
      std::copy_n(pool.begin(), kNameSlots, names.begin());
    }
    const TokenSeq program = template_program(params, names);
    ParseOutput parsed = parse_program(program);
    if (!parsed.result.ok || !parsed.program) {
      if (attempt > 16) throw std::logic_error("task template does not compile");
      continue;
    }
    const Program& ast = *parsed.program;

    TaskSample s;
    s.family = params.family;
    s.params = params;
    s.names = names;
    s.seed = seed;
    s.num_statements = static_cast<int>(ast.size());

    // Hidden tests from the full reference.
    const int n_tests = uniform_int(rng, 4, 8);
    const int n_reads = reads_for(params);
    std::set<std::vector<std::int64_t>> seen;
    bool valid = true;
    for (int tries = 0; static_cast<int>(s.tests.size()) < n_tests && tries < 200; ++tries) {
      std::vector<std::int64_t> input;
      for (int r = 0; r < n_reads; ++r) input.push_back(uniform_int(rng, 0, 40));
      if (!seen.insert(input).second) continue;
      ExecResult run = execute(ast, input);
      if (run.status != ExecStatus::Completed) {
        valid = false;
        break;
      }
      s.tests.push_back({std::move(input), std::move(run.outputs)});
    }
    if (!valid) continue;

    // Split at a top-level statement boundary; the response keeps at least
    // one statement.
    s.split_index = uniform_int(rng, 0, s.num_statements - 1);
    const auto split = static_cast<std::ptrdiff_t>(s.split_index);
    s.prompt = descriptor(params);
    TokenSeq head = print_program(std::span<const Stmt>(ast.data(), ast.data() + split));
    s.prompt.insert(s.prompt.end(), head.begin(), head.end());
    s.prompt.push_back(tok::kHole);
    s.reference = print_program(std::span<const Stmt>(ast.data() + split, ast.data() + ast.size()));
    s.reference.push_back(tok::kEop);

    if (!compile_check(s.prompt, s.reference).ok) continue;
    return s;
  }
}

TaskSample sample_task_pair(Family family, std::uint64_t seed) {
  Rng rng = make_rng(seed, "params");
  const auto& s = spec(family);
  TaskParams p{family,
               {uniform_int(rng, s.ranges[0].first, s.ranges[0].second),
                uniform_int(rng, s.ranges[1].first, s.ranges[1].second)}};
  return sample_task(p, seed);
}

bool passes_tests(const TaskSample& sample, const TokenSeq& response) {
  const TokenSeq code = checked_sequence(sample.prompt, response);
  ParseOutput parsed = parse_program(code);
  if (!parsed.result.ok || !parsed.program) return false;
  for (const auto& t : sample.tests) {
    ExecResult r = execute(*parsed.program, t.input);
    if (r.status != ExecStatus::Completed || r.outputs != t.expected) return false;
  }
  return true;
}

Corpus make_corpus(std::uint64_t seed, const CorpusSizes& sizes) {
  Corpus corpus;
  corpus.seed = seed;
  auto share = [](int total, int family_index) {
    return total / kNumFamilies + (family_index < total % kNumFamilies ? 1 : 0);
  };
  std::uint64_t task_index = 0;
  for (int fi = 0; fi < kNumFamilies; ++fi) {
    const Family f = kAllFamilies[static_cast<std::size_t>(fi)];
    std::vector<TaskParams> params = all_params(f);
    Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(fi));
    std::shuffle(params.begin(), params.end(), rng);
    const int nc = share(sizes.coarse, fi);
    const int nf = share(sizes.finetune, fi);
    const int nt = share(sizes.test, fi);
    if (nc + nf + nt > static_cast<int>(params.size())) {
      throw std::invalid_argument("corpus sizes exceed the number of distinct tasks in family " +
                                  std::string(family_name(f)));
    }
    int next = 0;
    auto take = [&](int n, std::vector<TaskSample>& into) {
      for (int i = 0; i < n; ++i, ++next) {
        into.push_back(sample_task(params[static_cast<std::size_t>(next)],
                                   derive_seed(seed, "task", task_index++)));
      }
    };
    take(nc, corpus.coarse);
    take(nf, corpus.finetune);
    take(nt, corpus.test);
  }
  return corpus;
}

}  // namespace rlcf::taskgen
