#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "rlcf/taskgen/taskgen.hpp"

namespace rlcf::taskgen {

using nlohmann::json;

namespace {

constexpr int kDatasetVersion = 1;

json to_json(const TaskSample& s, Split split) {
  json tests = json::array();
  for (const auto& t : s.tests) tests.push_back({{"input", t.input}, {"expected", t.expected}});
  return {{"family", family_name(s.family)},
          {"params", s.params.values},
          {"names", s.names},
          {"seed", s.seed},
          {"split", split_name(split)},
          {"split_index", s.split_index},
          {"num_statements", s.num_statements},
          {"prompt_tokens", s.prompt},
          {"reference_tokens", s.reference},
          {"tests", tests}};
}

TaskSample from_json(const json& j) {
  TaskSample s;
  auto fam = family_from_name(j.at("family").get<std::string>());
  if (!fam) throw std::runtime_error("dataset: unknown family " + j.at("family").dump());
  s.family = *fam;
  s.params = {*fam, j.at("params").get<std::array<int, 2>>()};
  s.names = j.at("names").get<NameBinding>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.split_index = j.at("split_index").get<int>();
  s.num_statements = j.at("num_statements").get<int>();
  s.prompt = j.at("prompt_tokens").get<TokenSeq>();
  s.reference = j.at("reference_tokens").get<TokenSeq>();
  for (const auto& t : j.at("tests")) {
    s.tests.push_back({t.at("input").get<std::vector<std::int64_t>>(),
                       t.at("expected").get<std::vector<std::int64_t>>()});
  }
  if (!minilang::is_well_formed(s.prompt) || !minilang::is_well_formed(s.reference)) {
    throw std::runtime_error("dataset: malformed token sequence");
  }
  return s;
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "dataset.jsonl");
    auto dump = [&](const std::vector<TaskSample>& v, Split split) {
      for (const auto& s : v) out << to_json(s, split).dump() << '\n';
    };
    dump(corpus.coarse, Split::Coarse);
    dump(corpus.finetune, Split::FineTune);
    dump(corpus.test, Split::Test);
    if (!out) throw std::runtime_error("cannot write " + (dir / "dataset.jsonl").string());
  }
  {
    json manifest = {{"format", "rlcf-dataset"},
                     {"version", kDatasetVersion},
                     {"vocab_version", minilang::kVocabVersion},
                     {"vocab_hash", minilang::vocab_hash()},
                     {"corpus_seed", corpus.seed},
                     {"splits",
                      {{"coarse", corpus.coarse.size()},
                       {"finetune", corpus.finetune.size()},
                       {"test", corpus.test.size()}}}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  std::ofstream(dir / "vocab.txt") << minilang::vocab_manifest();
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("missing " + (dir / "manifest.json").string());
  json manifest = json::parse(mf);
  if (manifest.at("format") != "rlcf-dataset" || manifest.at("version") != kDatasetVersion) {
    throw std::runtime_error("unsupported dataset format");
  }
  if (manifest.at("vocab_hash").get<std::uint64_t>() != minilang::vocab_hash()) {
    throw std::runtime_error("dataset vocabulary hash mismatch");
  }
  Corpus corpus;
  corpus.seed = manifest.at("corpus_seed").get<std::uint64_t>();
  std::ifstream in(dir / "dataset.jsonl");
  if (!in) throw std::runtime_error("missing " + (dir / "dataset.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string split = j.at("split").get<std::string>();
    TaskSample s = from_json(j);
    if (split == "coarse") {
      corpus.coarse.push_back(std::move(s));
    } else if (split == "finetune") {
      corpus.finetune.push_back(std::move(s));
    } else if (split == "test") {
      corpus.test.push_back(std::move(s));
    } else {
      throw std::runtime_error("dataset: unknown split " + split);
    }
  }
  return corpus;
}

}  // namespace rlcf::taskgen
