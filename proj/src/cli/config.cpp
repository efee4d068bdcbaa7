#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rlcf/cli/cli.hpp"
#include "rlcf/core/rng.hpp"

namespace rlcf::cli {

namespace {

enum class Kind { Int, Real, Bool, IntList, RealList };

struct Field {
  const char* path;  // dotted
  Kind kind;
  double lo;
  double hi;
};

// Closed ranges except where noted in validate_config.
const Field kSchema[] = {
    {"seed", Kind::Int, 0, 9.007199254740992e15},
    {"workers", Kind::Int, 1, 256},
    {"corpus.coarse", Kind::Int, 1, 100000},
    {"corpus.finetune", Kind::Int, 0, 100000},
    {"corpus.test", Kind::Int, 1, 100000},
    {"model.width", Kind::Int, 4, 1024},
    {"model.layers", Kind::Int, 1, 32},
    {"model.heads", Kind::Int, 1, 64},
    {"model.max_len", Kind::Int, 16, 4096},
    {"bootstrap.epochs", Kind::Int, 0, 100000},
    {"bootstrap.lr", Kind::Real, 0, 1},
    {"bootstrap.batch_size", Kind::Int, 1, 4096},
    {"disc.triplet_epochs", Kind::Int, 0, 100000},
    {"disc.triplet_lr", Kind::Real, 0, 1},
    {"disc.margin", Kind::Real, 0, 100},
    {"disc.adv_epochs", Kind::Int, 0, 100000},
    {"disc.adv_lr", Kind::Real, 0, 1},
    {"disc.temperature", Kind::Real, 1e-6, 10},
    {"disc.top_p", Kind::Real, 1e-6, 1},
    {"disc.horizon", Kind::Int, 1, 4096},
    {"disc.batch_size", Kind::Int, 1, 4096},
    {"rlcf.episodes", Kind::Int, 0, 1e9},
    {"rlcf.batch_size", Kind::Int, 1, 4096},
    {"rlcf.lr_policy", Kind::Real, 0, 1},
    {"rlcf.lr_critic", Kind::Real, 0, 1},
    {"rlcf.lr_disc", Kind::Real, 0, 1},
    {"rlcf.gamma", Kind::Real, 0, 1},
    {"rlcf.lambda", Kind::Real, 0, 1},
    {"rlcf.clip_eps", Kind::Real, 1e-6, 1},
    {"rlcf.beta_init", Kind::Real, 0, 1e6},
    {"rlcf.kl_target", Kind::Real, 1e-9, 1e6},
    {"rlcf.kl_gain", Kind::Real, 0, 10},
    {"rlcf.adaptive_kl", Kind::Bool, 0, 0},
    {"rlcf.horizon", Kind::Int, 1, 4096},
    {"rlcf.ppo_epochs", Kind::Int, 1, 100},
    {"rlcf.unused_penalty", Kind::Real, 0, 1e3},
    {"rlcf.temperature", Kind::Real, 1e-6, 10},
    {"rlcf.top_p", Kind::Real, 1e-6, 1},
    {"rlcf.localize", Kind::Bool, 0, 0},
    {"rlcf.checkpoint_every", Kind::Int, 0, 1e9},
    {"baseline.lr", Kind::Real, 0, 1},
    {"baseline.token_budget", Kind::Int, 0, 1e15},
    {"critic.samples", Kind::Int, 1, 1e7},
    {"critic.temperature", Kind::Real, 1e-6, 10},
    {"critic.top_p", Kind::Real, 1e-6, 1},
    {"critic.epochs", Kind::Int, 0, 100000},
    {"critic.lr", Kind::Real, 0, 1},
    {"critic.batch_size", Kind::Int, 1, 4096},
    {"eval.n", Kind::Int, 2, 100000},
    {"eval.ks", Kind::IntList, 1, 100000},
    {"eval.temperatures", Kind::RealList, 1e-6, 10},
    {"eval.top_p", Kind::Real, 1e-6, 1},
    {"eval.horizon", Kind::Int, 1, 4096},
    {"eval.finetune_epochs", Kind::Int, 0, 100000},
    {"eval.finetune_lr", Kind::Real, 0, 1},
    {"eval.profile_samples", Kind::Int, 1, 100000},
    {"eval.profile_temperature", Kind::Real, 1e-6, 10},
};

json::json_pointer pointer(const std::string& dotted) {
  std::string p = "/";
  for (char ch : dotted) p += ch == '.' ? '/' : ch;
  return json::json_pointer(p);
}

const Field* find_field(const std::string& dotted) {
  for (const auto& f : kSchema) {
    if (dotted == f.path) return &f;
  }
  return nullptr;
}

bool is_int(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

void check_value(const Field& f, const json& v) {
  auto bad = [&](const std::string& why) { throw UsageError(std::string("config ") + f.path + ": " + why); };
  auto in_range = [&](double x) {
    if (!(x >= f.lo && x <= f.hi)) {
      std::ostringstream s;
      s << "value " << x << " outside [" << f.lo << ", " << f.hi << "]";
      bad(s.str());
    }
  };
  switch (f.kind) {
    case Kind::Int:
      if (!is_int(v)) bad("expected an integer");
      in_range(v.get<double>());
      break;
    case Kind::Real:
      if (!v.is_number()) bad("expected a number");
      in_range(v.get<double>());
      break;
    case Kind::Bool:
      if (!v.is_boolean()) bad("expected true or false");
      break;
    case Kind::IntList:
    case Kind::RealList:
      if (!v.is_array() || v.empty()) bad("expected a non-empty list");
      for (const auto& x : v) {
        if (f.kind == Kind::IntList ? !is_int(x) : !x.is_number()) bad("bad list element");
        in_range(x.get<double>());
      }
      break;
  }
}

// Every leaf of `config` must be in the schema.
void check_known(const json& node, const std::string& prefix) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      check_known(*it, key);
    } else if (!find_field(key)) {
      throw UsageError("config: unknown key '" + key + "'");
    }
  }
}

void overlay(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw UsageError("config: '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw UsageError("config: unknown key '" + key + "'");
    if (base[it.key()].is_object()) {
      overlay(base[it.key()], *it, key);
    } else {
      base[it.key()] = *it;
    }
  }
}

template <class T>
T get(const json& c, const char* dotted) {
  return c.at(pointer(dotted)).get<T>();
}

}  // namespace

json default_config() {
  return json{
      {"seed", 0},
      {"workers", 1},
      {"corpus", {{"coarse", 200}, {"finetune", 100}, {"test", 50}}},
      {"model", {{"width", 64}, {"layers", 2}, {"heads", 4}, {"max_len", 256}}},
      {"bootstrap", {{"epochs", 20}, {"lr", 1e-3}, {"batch_size", 8}}},
      {"disc",
       {{"triplet_epochs", 6},
        {"triplet_lr", 3e-4},
        {"margin", 0.5},
        {"adv_epochs", 5},
        {"adv_lr", 1.5e-4},
        {"temperature", 0.6},
        {"top_p", 0.95},
        {"horizon", 64},
        {"batch_size", 8}}},
      {"rlcf",
       {{"episodes", 2000},
        {"batch_size", 8},
        {"lr_policy", 3e-4},
        {"lr_critic", 3e-4},
        {"lr_disc", 1.5e-4},
        {"gamma", 0.99},
        {"lambda", 0.95},
        {"clip_eps", 0.2},
        {"beta_init", 0.1},
        {"kl_target", 0.05},
        {"kl_gain", train::kDefaultKlGain},
        {"adaptive_kl", true},
        {"horizon", 64},
        {"ppo_epochs", 1},
        {"unused_penalty", grounding::kDefaultUnusedPenalty},
        {"temperature", 0.6},
        {"top_p", 0.95},
        {"localize", true},
        {"checkpoint_every", 25}}},
      {"baseline", {{"lr", 3e-4}, {"token_budget", 0}}},
      {"critic",
       {{"samples", 4000}, {"temperature", 0.6}, {"top_p", 0.95}, {"epochs", 3}, {"lr", 3e-4}, {"batch_size", 16}}},
      {"eval",
       {{"n", 20},
        {"ks", {1, 5, 10}},
        {"temperatures", {0.2, 0.6, 0.8}},
        {"top_p", 0.95},
        {"horizon", 64},
        {"finetune_epochs", 2},
        {"finetune_lr", 3e-4},
        {"profile_samples", 20},
        {"profile_temperature", 0.6}}},
  };
}

void validate_config(const json& c) {
  if (!c.is_object()) throw UsageError("config: expected a JSON object");
  check_known(c, "");
  for (const auto& f : kSchema) {
    const auto p = pointer(f.path);
    if (!c.contains(p)) throw UsageError(std::string("config: missing key '") + f.path + "'");
    check_value(f, c.at(p));
  }
  // Cross-field constraints, reported through the module validators.
  if (get<int>(c, "model.width") % get<int>(c, "model.heads") != 0) {
    throw UsageError("config model.width: must be divisible by model.heads");
  }
  if (get<int>(c, "rlcf.horizon") > get<int>(c, "model.max_len") / 2 ||
      get<int>(c, "eval.horizon") > get<int>(c, "model.max_len") / 2) {
    throw UsageError("config: horizons must leave room for the prompt (<= model.max_len / 2)");
  }
  try {
    rlcf_config(c, "rlcf").validate();
    baseline_config(c).validate();
    eval_config(c).validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path.string());
  json file;
  try {
    file = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  json c = default_config();
  overlay(c, file, "");
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  if (!find_field(key)) throw UsageError("--set: unknown key '" + key + "'");
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  config[pointer(key)] = v;
}

std::uint64_t config_hash(const json& c, Stage stage, const std::string& method) {
  // Sections each stage reads, cumulative along the pipeline.
  std::vector<const char*> sections = {"seed", "corpus"};
  if (stage >= Stage::Bootstrap) {
    sections.push_back("model");
    sections.push_back("bootstrap");
  }
  if (stage == Stage::Disc || stage == Stage::Train) sections.push_back("disc");
  if (stage == Stage::Train) {
    sections.push_back("rlcf");
    sections.push_back("baseline");
    sections.push_back("critic");
  }
  if (stage == Stage::Eval || stage == Stage::Profile) sections.push_back("eval");
  json sub = json::object();
  for (const char* s : sections) sub[s] = c.at(s);
  sub["stage"] = static_cast<int>(stage);
  sub["method"] = method;
  // std::map-backed objects dump with sorted keys, so this is canonical.
  return fnv1a64(sub.dump());
}

std::string hex_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

taskgen::CorpusSizes corpus_sizes(const json& c) {
  return {get<int>(c, "corpus.coarse"), get<int>(c, "corpus.finetune"), get<int>(c, "corpus.test")};
}

nn::ModelConfig model_config(const json& c) {
  nn::ModelConfig m;
  m.width = get<int>(c, "model.width");
  m.layers = get<int>(c, "model.layers");
  m.heads = get<int>(c, "model.heads");
  m.max_len = get<int>(c, "model.max_len");
  return m;
}

train::SupervisedConfig bootstrap_config(const json& c) {
  train::SupervisedConfig s;
  s.epochs = get<int>(c, "bootstrap.epochs");
  s.lr = get<double>(c, "bootstrap.lr");
  s.batch_size = get<int>(c, "bootstrap.batch_size");
  s.seed = get<std::uint64_t>(c, "seed");
  return s;
}

train::DiscPretrainConfig disc_config(const json& c) {
  train::DiscPretrainConfig d;
  d.triplet_epochs = get<int>(c, "disc.triplet_epochs");
  d.triplet_lr = get<double>(c, "disc.triplet_lr");
  d.margin = get<double>(c, "disc.margin");
  d.adv_epochs = get<int>(c, "disc.adv_epochs");
  d.adv_lr = get<double>(c, "disc.adv_lr");
  d.temperature = get<double>(c, "disc.temperature");
  d.top_p = get<double>(c, "disc.top_p");
  d.horizon = get<int>(c, "disc.horizon");
  d.batch_size = get<int>(c, "disc.batch_size");
  d.seed = get<std::uint64_t>(c, "seed");
  return d;
}

const std::vector<std::string>& train_methods() {
  static const std::vector<std::string> m = {"rlcf",  "rlcf-fixdisc", "mono",         "ramp",
                                             "coderl", "disc-only",   "compiler-only"};
  return m;
}

train::RlcfConfig rlcf_config(const json& c, const std::string& method) {
  train::RlcfConfig r;
  r.episodes = get<int>(c, "rlcf.episodes");
  r.batch_size = get<int>(c, "rlcf.batch_size");
  r.lr_policy = get<double>(c, "rlcf.lr_policy");
  r.lr_critic = get<double>(c, "rlcf.lr_critic");
  r.lr_disc = get<double>(c, "rlcf.lr_disc");
  r.gamma = get<double>(c, "rlcf.gamma");
  r.lambda = get<double>(c, "rlcf.lambda");
  r.clip_eps = get<double>(c, "rlcf.clip_eps");
  r.beta_init = get<double>(c, "rlcf.beta_init");
  r.kl_target = get<double>(c, "rlcf.kl_target");
  r.kl_gain = get<double>(c, "rlcf.kl_gain");
  r.adaptive_kl = get<bool>(c, "rlcf.adaptive_kl");
  r.horizon = get<int>(c, "rlcf.horizon");
  r.ppo_epochs = get<int>(c, "rlcf.ppo_epochs");
  r.unused_penalty = get<double>(c, "rlcf.unused_penalty");
  r.temperature = get<double>(c, "rlcf.temperature");
  r.top_p = get<double>(c, "rlcf.top_p");
  r.rollout.localize = get<bool>(c, "rlcf.localize");
  r.checkpoint_every = get<int>(c, "rlcf.checkpoint_every");
  r.seed = get<std::uint64_t>(c, "seed");
  r.workers = get<int>(c, "workers");
  if (method == "rlcf-fixdisc") r.freeze_disc = true;
  if (method == "disc-only") r.rollout.feedback = grounding::Feedback::DiscOnly;
  if (method == "compiler-only") {
    // No discriminator in the loop, so nothing to co-train.
    r.rollout.feedback = grounding::Feedback::CompilerOnly;
    r.freeze_disc = true;
  }
  return r;
}

baselines::BaselineConfig baseline_config(const json& c) {
  // Same sampling and sequence budget as the RLCF run being ablated.
  baselines::BaselineConfig b;
  b.episodes = get<int>(c, "rlcf.episodes");
  b.batch_size = get<int>(c, "rlcf.batch_size");
  b.temperature = get<double>(c, "rlcf.temperature");
  b.top_p = get<double>(c, "rlcf.top_p");
  b.horizon = get<int>(c, "rlcf.horizon");
  b.lr = get<double>(c, "baseline.lr");
  b.token_budget = get<std::int64_t>(c, "baseline.token_budget");
  b.seed = get<std::uint64_t>(c, "seed");
  return b;
}

baselines::CriticTrainConfig critic_config(const json& c) {
  baselines::CriticTrainConfig k;
  k.samples = get<int>(c, "critic.samples");
  k.temperature = get<double>(c, "critic.temperature");
  k.top_p = get<double>(c, "critic.top_p");
  k.horizon = get<int>(c, "rlcf.horizon");
  k.epochs = get<int>(c, "critic.epochs");
  k.lr = get<double>(c, "critic.lr");
  k.batch_size = get<int>(c, "critic.batch_size");
  k.seed = get<std::uint64_t>(c, "seed");
  return k;
}

eval::EvalConfig eval_config(const json& c) {
  eval::EvalConfig e;
  e.n = get<int>(c, "eval.n");
  e.ks = get<std::vector<int>>(c, "eval.ks");
  e.temperatures = get<std::vector<double>>(c, "eval.temperatures");
  e.top_p = get<double>(c, "eval.top_p");
  e.horizon = get<int>(c, "eval.horizon");
  e.seed = get<std::uint64_t>(c, "seed");
  e.workers = get<int>(c, "workers");
  return e;
}

train::SupervisedConfig eval_finetune_config(const json& c) {
  train::SupervisedConfig s;
  s.epochs = get<int>(c, "eval.finetune_epochs");
  s.lr = get<double>(c, "eval.finetune_lr");
  s.batch_size = get<int>(c, "bootstrap.batch_size");
  s.seed = get<std::uint64_t>(c, "seed");
  return s;
}

}  // namespace rlcf::cli
