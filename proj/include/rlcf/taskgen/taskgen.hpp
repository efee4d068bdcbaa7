#ifndef RLCF_TASKGEN_TASKGEN_HPP_
#define RLCF_TASKGEN_TASKGEN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlcf/core/rng.hpp"
#include "rlcf/minilang/minilang.hpp"

namespace rlcf::taskgen {

using minilang::Token;
using minilang::TokenSeq;

enum class Family { Sum, Max, Threshold, Countdown, Linear };
inline constexpr int kNumFamilies = 5;
inline constexpr std::array<Family, kNumFamilies> kAllFamilies = {
    Family::Sum, Family::Max, Family::Threshold, Family::Countdown, Family::Linear};

std::string_view family_name(Family f);
std::optional<Family> family_from_name(std::string_view name);

// One parameterization of a family template. Every family takes two
// integer parameters.
struct TaskParams {
  Family family;
  std::array<int, 2> values;

  bool operator==(const TaskParams&) const = default;
};

// All parameter tuples of a family, in a fixed order.
std::vector<TaskParams> all_params(Family f);

struct TestCase {
  std::vector<std::int64_t> input;
  std::vector<std::int64_t> expected;
};

// Identifiers filling a template's variable slots (distinct, from the pool).
inline constexpr int kNameSlots = 3;
using NameBinding = std::array<Token, kNameSlots>;
NameBinding default_names(Family f);

struct TaskSample {
  TokenSeq prompt;     // <desc> ... </desc> starter-code <hole>
  TokenSeq reference;  // remaining statements, then EOP
  std::vector<TestCase> tests;
  Family family;
  TaskParams params;
  NameBinding names{};
  std::uint64_t seed = 0;
  int split_index = 0;     // number of top-level statements in the prompt
  int num_statements = 0;  // top-level statements of the full program
};

// What training-time components may see: no tests.
struct Example {
  TokenSeq prompt;
  TokenSeq reference;
  Family family;
};

std::vector<Example> training_view(const std::vector<TaskSample>& samples);

TokenSeq descriptor(const TaskParams& p);
// Full template program (statements followed by EOP).
TokenSeq template_program(const TaskParams& p, const NameBinding& names);
TokenSeq template_program(const TaskParams& p);

// Instantiates a template with seed-drawn identifiers, generates hidden
// tests, and splits the program at a uniformly chosen top-level statement
// boundary. Deterministic in (params, seed).
TaskSample sample_task(const TaskParams& params, std::uint64_t seed);
// As sample_task, with the parameters also drawn from the seed.
TaskSample sample_task_pair(Family family, std::uint64_t seed);

// True when prompt∘reference compiles and reproduces every test.
bool passes_tests(const TaskSample& sample, const TokenSeq& response);

// --- semantics-preserving rewrites -----------------------------------------

struct TransformSet {
  bool rename = false;  // rename a response-declared variable to a fresh pool name
  bool swap = false;    // swap operands of + * == != && ||
  bool flip = false;    // if c {A} else {B}  ->  if !(c) {B} else {A}
  bool split = false;   // let v : T = e ;  ->  let v : T = <default> ; v = e ;
  bool paren = false;   // wrap an expression in redundant parentheses

  static TransformSet all() { return {true, true, true, true, true}; }
};

minilang::Program rename_variable(const minilang::Program& program, Token from, Token to);
minilang::Program swap_commutative(const minilang::Program& program);

// Rewrites the response of a sample. Returns nullopt when the rewrite would
// not compile or would change any test outcome.
std::optional<TokenSeq> transform_response(const TaskSample& sample, const TransformSet& set,
                                           Rng& rng);

// At least two responses equivalent to sample.reference; the first is the
// reference itself.
std::vector<TokenSeq> equivalent_variants(const TaskSample& sample, std::uint64_t seed);

struct EquivalenceTriple {
  TokenSeq prompt;
  TokenSeq anchor;
  TokenSeq positive;
  TokenSeq negative;  // a response to a different task; embedded with `prompt`
  Family family;
  Family negative_family;
};

// One triple per sample: anchor/positive are two variants of the sample's
// response, the negative is mined from a different family when possible.
std::vector<EquivalenceTriple> make_triples(const std::vector<TaskSample>& samples,
                                            std::uint64_t seed);

// --- corpus ---------------------------------------------------------------

enum class Split { Coarse, FineTune, Test };
std::string_view split_name(Split s);

struct CorpusSizes {
  int coarse = 200;
  int finetune = 100;
  int test = 50;
};

struct Corpus {
  std::uint64_t seed = 0;
  std::vector<TaskSample> coarse;
  std::vector<TaskSample> finetune;
  std::vector<TaskSample> test;
};

// Disjoint by parameter tuple; each split is stratified over families.
Corpus make_corpus(std::uint64_t seed, const CorpusSizes& sizes = {});

// Writes dataset.jsonl, manifest.json and vocab.txt into dir.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
// Reads a corpus written by write_corpus; verifies the vocabulary hash.
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace rlcf::taskgen

#endif  // RLCF_TASKGEN_TASKGEN_HPP_
