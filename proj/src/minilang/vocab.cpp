#include "rlcf/minilang/vocab.hpp"

#include <array>
#include <sstream>
#include <stdexcept>

#include "rlcf/core/rng.hpp"

namespace rlcf::minilang {

namespace {

constexpr std::array<std::string_view, kVocabSize> kLexemes = {
    "<pad>", "<eop>", "<desc>", "</desc>", "<hole>", "<cls>",
    "let", "if", "else", "while", "print", "read", "int", "bool", "true", "false",
    ":", "=", ";", "{", "}", "(", ")",
    "+", "-", "*", "/", "%", "<", "<=", "==", "!=", "&&", "||", "!",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10",
    "11", "12", "13", "14", "15", "16", "17", "18", "19", "20",
    "a", "b", "c", "d", "m", "n", "s", "t", "u", "v", "x", "y",
    "sum", "max", "threshold", "countdown", "linear",
    "k=", "c=", "t=", "n=", "d=", "a=", "b="};

}  // namespace

std::string_view lexeme(Token id) {
  if (!is_valid_token(id)) throw std::out_of_range("token id out of range");
  return kLexemes[static_cast<std::size_t>(id)];
}

std::optional<Token> token_of(std::string_view lex) {
  for (std::size_t i = 0; i < kLexemes.size(); ++i) {
    if (kLexemes[i] == lex) return static_cast<Token>(i);
  }
  return std::nullopt;
}

bool is_well_formed(std::span<const Token> seq) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!is_valid_token(seq[i])) return false;
    if (seq[i] == tok::kEop && i + 1 != seq.size()) return false;
  }
  return true;
}

std::string render(std::span<const Token> seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += lexeme(seq[i]);
  }
  return out;
}

TokenSeq parse_tokens(std::string_view text) {
  TokenSeq out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos >= text.size()) break;
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    auto word = text.substr(pos, end - pos);
    auto id = token_of(word);
    if (!id) throw std::invalid_argument("unknown lexeme: " + std::string(word));
    out.push_back(*id);
    pos = end;
  }
  return out;
}

std::string vocab_manifest() {
  std::ostringstream os;
  os << "# minilang-vocab v" << kVocabVersion << " size " << kVocabSize << "\n";
  for (std::size_t i = 0; i < kLexemes.size(); ++i) {
    os << i << '\t' << kLexemes[i] << '\n';
  }
  return os.str();
}

std::uint64_t vocab_hash() {
  static const std::uint64_t h = fnv1a64(vocab_manifest());
  return h;
}

}  // namespace rlcf::minilang
