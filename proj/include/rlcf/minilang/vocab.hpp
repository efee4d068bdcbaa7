#ifndef RLCF_MINILANG_VOCAB_HPP_
#define RLCF_MINILANG_VOCAB_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rlcf::minilang {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Fixed vocabulary. The order here is the bit-exact id assignment written to
// the vocabulary manifest; appending is a version bump.
namespace tok {
inline constexpr Token kPad = 0;
inline constexpr Token kEop = 1;
inline constexpr Token kDescOpen = 2;
inline constexpr Token kDescClose = 3;
inline constexpr Token kHole = 4;
inline constexpr Token kCls = 5;

inline constexpr Token kLet = 6;
inline constexpr Token kIf = 7;
inline constexpr Token kElse = 8;
inline constexpr Token kWhile = 9;
inline constexpr Token kPrint = 10;
inline constexpr Token kRead = 11;
inline constexpr Token kInt = 12;
inline constexpr Token kBool = 13;
inline constexpr Token kTrue = 14;
inline constexpr Token kFalse = 15;

inline constexpr Token kColon = 16;
inline constexpr Token kAssign = 17;
inline constexpr Token kSemi = 18;
inline constexpr Token kLBrace = 19;
inline constexpr Token kRBrace = 20;
inline constexpr Token kLParen = 21;
inline constexpr Token kRParen = 22;

inline constexpr Token kPlus = 23;
inline constexpr Token kMinus = 24;
inline constexpr Token kStar = 25;
inline constexpr Token kSlash = 26;
inline constexpr Token kPercent = 27;
inline constexpr Token kLt = 28;
inline constexpr Token kLe = 29;
inline constexpr Token kEq = 30;
inline constexpr Token kNe = 31;
inline constexpr Token kAnd = 32;
inline constexpr Token kOr = 33;
inline constexpr Token kNot = 34;

inline constexpr Token kIntBase = 35;  // literals 0..20
inline constexpr int kMaxLiteral = 20;
inline constexpr Token kIdentBase = 56;  // 12 identifiers
inline constexpr int kNumIdents = 12;
inline constexpr Token kFamilyBase = 68;  // 5 task-family names
inline constexpr int kNumFamilies = 5;
inline constexpr Token kKeyBase = 73;  // 7 descriptor parameter keys
inline constexpr int kNumKeys = 7;
}  // namespace tok

inline constexpr int kVocabSize = 80;
inline constexpr int kVocabVersion = 1;

std::string_view lexeme(Token id);
std::optional<Token> token_of(std::string_view lexeme);

inline Token int_literal(int v) { return tok::kIntBase + v; }
inline bool is_int_literal(Token t) {
  return t >= tok::kIntBase && t <= tok::kIntBase + tok::kMaxLiteral;
}
inline int literal_value(Token t) { return t - tok::kIntBase; }
inline Token ident(int slot) { return tok::kIdentBase + slot; }
inline bool is_ident(Token t) {
  return t >= tok::kIdentBase && t < tok::kIdentBase + tok::kNumIdents;
}
inline int ident_slot(Token t) { return t - tok::kIdentBase; }
inline bool is_valid_token(Token t) { return t >= 0 && t < kVocabSize; }

// Description/control tokens that never belong to program text.
inline bool is_meta_token(Token t) {
  return t == tok::kPad || t == tok::kDescOpen || t == tok::kDescClose ||
         t == tok::kHole || t == tok::kCls ||
         (t >= tok::kFamilyBase && t < tok::kKeyBase + tok::kNumKeys);
}

// Checks the TokenSeq invariants: ids in range, EOP at most once and last.
bool is_well_formed(std::span<const Token> seq);

// Space-separated lexemes.
std::string render(std::span<const Token> seq);
// Inverse of render(); throws std::invalid_argument on an unknown lexeme.
TokenSeq parse_tokens(std::string_view text);

// Manifest text: version header then one "id<TAB>lexeme" line per token.
std::string vocab_manifest();
std::uint64_t vocab_hash();

}  // namespace rlcf::minilang

#endif  // RLCF_MINILANG_VOCAB_HPP_
