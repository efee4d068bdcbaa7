#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rlcf/cli/cli.hpp"
#include "rlcf/core/log.hpp"
#include "rlcf/core/rng.hpp"
#include "rlcf/nn/checkpoint.hpp"

namespace rlcf::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string command;
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> episodes;
  std::string out;
  std::string data;
  std::string policy;
  std::string disc;
  std::string method;
  std::string label;
  std::string match_run;
  std::string split = "test";
  std::vector<std::string> runs;
  bool resume = false;
  bool quiet = false;
};

struct Run {
  json config;
  fs::path out;
};

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

json file_header(const std::string& format, std::uint64_t hash) {
  return json{{"format", format}, {"version", 1}, {"tool_version", kToolVersion}, {"config_hash", hex_hash(hash)}};
}

std::string csv_header(const std::string& format, std::uint64_t hash) {
  return "# " + format + " v1 " + kToolVersion + " config_hash=" + hex_hash(hash) + "\n";
}

void save_tagged(const fs::path& path, const nn::ModelParams& m, const std::string& method, std::uint64_t hash) {
  nn::Checkpoint ck;
  ck.models.emplace("model", m);
  json meta = file_header("rlcf-model", hash);
  meta["method"] = method;
  meta["role"] = nn::role_name(m.role);
  ck.metadata = meta.dump();
  nn::save_checkpoint(path, ck);
}

std::string checkpoint_method(const fs::path& path) {
  const json meta = json::parse(nn::load_checkpoint(path).metadata, nullptr, false);
  if (meta.is_object() && meta.contains("method")) return meta["method"].get<std::string>();
  return path.stem().string();
}

taskgen::Corpus corpus_for(const Options& o, const json& c) {
  if (!o.data.empty()) return taskgen::read_corpus(o.data);
  return taskgen::make_corpus(c.at("seed").get<std::uint64_t>(), corpus_sizes(c));
}

void write_run_json(const Run& r, const std::string& command, const std::string& method, std::uint64_t hash) {
  json j = file_header("rlcf-run", hash);
  j["command"] = command;
  if (!method.empty()) j["method"] = method;
  j["config"] = r.config;
  write_text(r.out / "run.json", j.dump(2) + "\n");
}

// --- commands -------------------------------------------------------------------

void cmd_gen_data(const Options&, const Run& r) {
  const auto seed = r.config.at("seed").get<std::uint64_t>();
  const taskgen::Corpus corpus = taskgen::make_corpus(seed, corpus_sizes(r.config));
  taskgen::write_corpus(r.out, corpus);
  write_run_json(r, "gen-data", "", config_hash(r.config, Stage::Data));
  log_info("gen-data: " + std::to_string(corpus.coarse.size()) + "/" + std::to_string(corpus.finetune.size()) + "/" +
           std::to_string(corpus.test.size()) + " tasks -> " + r.out.string());
}

void cmd_bootstrap(const Options& o, const Run& r) {
  const json& c = r.config;
  const auto seed = c.at("seed").get<std::uint64_t>();
  const std::uint64_t hash = config_hash(c, Stage::Bootstrap);
  const taskgen::Corpus corpus = corpus_for(o, c);
  nn::ModelParams policy = nn::init_policy(model_config(c), derive_seed(seed, "init-policy"));
  const auto data = taskgen::training_view(corpus.coarse);
  std::ofstream log(r.out / "bootstrap.jsonl", std::ios::trunc);
  log << file_header("rlcf-bootstrap-log", hash).dump() << '\n';
  train::bootstrap_supervised(policy, data, bootstrap_config(c), [&](const train::SupervisedStep& s) {
    log << json{{"step", s.step}, {"loss", s.loss_before}}.dump() << '\n';
  });
  save_tagged(r.out / "policy.ckpt", policy, "bootstrap", hash);
  write_run_json(r, "bootstrap", "bootstrap", hash);
  log_info("bootstrap: held-in loss " + std::to_string(train::supervised_loss(policy, data)));
}

void cmd_pretrain_disc(const Options& o, const Run& r) {
  const json& c = r.config;
  const auto seed = c.at("seed").get<std::uint64_t>();
  const std::uint64_t hash = config_hash(c, Stage::Disc);
  const taskgen::Corpus corpus = corpus_for(o, c);
  const nn::ModelParams policy = nn::load_model(o.policy);
  nn::ModelParams disc = nn::init_discriminator(policy.config, derive_seed(seed, "init-disc"));
  const train::DiscPretrainReport rep = train::pretrain_discriminator(disc, corpus.coarse, policy, disc_config(c));
  json j = file_header("rlcf-disc-pretrain", hash);
  j["triplet_losses"] = rep.triplet_losses;
  j["adv_losses"] = rep.adv_losses;
  // Held-out check on triples built from the fine-tune split.
  const auto held = taskgen::make_triples(corpus.finetune, derive_seed(seed, "held-out-triples"));
  j["held_out_triplet_accuracy"] = held.empty() ? 0.0 : train::triplet_accuracy(disc, held);
  write_text(r.out / "disc_report.json", j.dump(2) + "\n");
  save_tagged(r.out / "disc.ckpt", disc, "disc", hash);
  write_run_json(r, "pretrain-disc", "", hash);
}

std::int64_t tokens_of_run(const fs::path& dir) {
  std::ifstream in(dir / "metrics.jsonl");
  if (!in) throw UsageError("--match-run: no metrics.jsonl in " + dir.string());
  std::int64_t total = 0;
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("type", "") == "batch") total += j.value("tokens", std::int64_t{0});
  }
  return total;
}

// Keeps the header and every record at or before `episode`.
void trim_metrics(const fs::path& path, std::int64_t episode) {
  std::ifstream in(path);
  std::string kept;
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line, nullptr, false);
    if (!j.is_object()) continue;
    if (j.value("type", "") == "batch" && j.value("episode", std::int64_t{0}) > episode) break;
    kept += line + '\n';
  }
  in.close();
  write_text(path, kept);
}

void cmd_train(const Options& o, const Run& r) {
  const json& c = r.config;
  const auto seed = c.at("seed").get<std::uint64_t>();
  const std::string& method = o.method;
  const std::uint64_t hash = config_hash(c, Stage::Train, method);
  const taskgen::Corpus corpus = corpus_for(o, c);
  const auto data = taskgen::training_view(corpus.coarse);
  nn::ModelParams policy = nn::load_model(o.policy);
  const fs::path metrics_path = r.out / "metrics.jsonl";

  const bool rl = method == "rlcf" || method == "rlcf-fixdisc" || method == "disc-only" || method == "compiler-only";
  if (rl) {
    train::RlcfConfig rc = rlcf_config(c, method);
    rc.checkpoint_path = r.out / "state.ckpt";
    train::RlcfState st;
    std::ofstream mf;
    if (o.resume && fs::exists(rc.checkpoint_path)) {
      st = train::load_rlcf_checkpoint(rc.checkpoint_path, rc.hash());
      trim_metrics(metrics_path, st.episode);
      mf.open(metrics_path, std::ios::app);
      log_info("train: resuming at episode " + std::to_string(st.episode));
    } else {
      nn::ModelParams disc = method == "compiler-only" && o.disc.empty()
                                 ? nn::init_discriminator(policy.config, derive_seed(seed, "init-disc"))
                                 : nn::load_model(o.disc);
      st = train::make_rlcf_state(policy, disc, rc);
      mf.open(metrics_path, std::ios::trunc);
    }
    train::MetricsWriter w(&mf, method, hash);
    if (st.episode == 0) w.header(rc.episodes);
    train::train_rlcf(rc, data, st, &w, [&](const train::BatchMetrics& m) {
      if (m.episode % 200 < rc.batch_size) {
        log_info("train " + method + ": episode " + std::to_string(m.episode) + " compile " +
                 std::to_string(m.compile_rate) + " kl " + std::to_string(m.mean_kl));
      }
    });
    save_tagged(r.out / "policy.ckpt", st.policy, method, hash);
    save_tagged(r.out / "disc.ckpt", st.disc, method, hash);
  } else {
    baselines::BaselineConfig bc = baseline_config(c);
    if (!o.match_run.empty()) bc.token_budget = tokens_of_run(o.match_run);
    std::ofstream mf(metrics_path, std::ios::trunc);
    train::MetricsWriter w(&mf, method, hash);
    w.header(bc.episodes);
    if (method == "mono") {
      baselines::train_mono(policy, data, bc, &w);
    } else if (method == "ramp") {
      baselines::train_bipolar_ramp(policy, data, bc, &w);
    } else {
      const baselines::CriticTrainConfig kc = critic_config(c);
      nn::ModelParams critic = nn::init_compile_critic(policy, derive_seed(seed, "init-compile-critic"));
      const auto samples = baselines::collect_compile_samples(policy, data, kc);
      baselines::train_compile_critic(critic, samples, kc);
      log_info("train coderl: critic accuracy on its training samples " +
               std::to_string(baselines::compile_critic_accuracy(critic, samples)));
      save_tagged(r.out / "critic.ckpt", critic, method, hash);
      baselines::train_coderl(policy, critic, data, bc, &w);
    }
    save_tagged(r.out / "policy.ckpt", policy, method, hash);
  }
  write_run_json(r, "train", method, hash);
}

void cmd_eval(const Options& o, const Run& r) {
  const json& c = r.config;
  const std::uint64_t hash = config_hash(c, Stage::Eval);
  const taskgen::Corpus corpus = corpus_for(o, c);
  const std::string method = o.label.empty() ? checkpoint_method(o.policy) : o.label;
  nn::ModelParams policy = nn::load_model(o.policy);
  eval::finetune(policy, corpus.finetune, eval_finetune_config(c));
  const eval::EvalReport rep = eval::evaluate_model(policy, corpus.test, eval_config(c));
  json j = eval::to_json(rep);
  j["method"] = method;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = hex_hash(hash);
  write_text(r.out / "eval.json", j.dump(2) + "\n");
  write_text(r.out / "eval_table.csv", csv_header("rlcf-eval-table", hash) + eval::table_csv(rep, method));
  std::ostringstream s;
  s << "eval " << method << ":";
  for (int k : rep.config.ks) s << " pass@" << k << " " << rep.best.pass.at(k) << " comp@" << k << " " << rep.best.comp.at(k);
  log_info(s.str());
}

void cmd_profile(const Options& o, const Run& r) {
  const json& c = r.config;
  const std::uint64_t hash = config_hash(c, Stage::Profile);
  const taskgen::Corpus corpus = corpus_for(o, c);
  const auto& tasks = o.split == "coarse" ? corpus.coarse : o.split == "finetune" ? corpus.finetune : corpus.test;
  const nn::ModelParams policy = nn::load_model(o.policy);
  const eval::ErrorProfile p = eval::error_profile(
      policy, tasks, c.at("/eval/profile_samples"_json_pointer).get<int>(),
      c.at("/eval/profile_temperature"_json_pointer).get<double>(), c.at("seed").get<std::uint64_t>(),
      c.at("/eval/top_p"_json_pointer).get<double>(), c.at("/eval/horizon"_json_pointer).get<int>());
  json j = file_header("rlcf-error-profile", hash);
  j["method"] = o.label.empty() ? checkpoint_method(o.policy) : o.label;
  j["split"] = o.split;
  j["profile"] = eval::to_json(p);
  write_text(r.out / "errors.json", j.dump(2) + "\n");
}

int dispatch(const Options& o, std::ostream& err) {
  if (o.command == "report") {
    if (o.runs.empty()) throw UsageError("report: --runs is required");
    for (const auto& d : o.runs) {
      if (!fs::is_directory(d)) throw UsageError("report: not a directory: " + d);
    }
    fs::create_directories(o.out);
    const ReportSummary s = emit_report({o.runs.begin(), o.runs.end()}, o.out);
    for (const auto& p : s.problems) err << "report: " << p << '\n';
    if (s.eval_reports == 0 && s.metric_streams == 0) {
      err << "report: no usable inputs\n";
      return kExitRuntime;
    }
    return kExitOk;
  }

  Run r;
  r.config = o.config_file.empty() ? default_config() : load_config(o.config_file);
  for (const auto& s : o.sets) apply_override(r.config, s);
  if (o.seed) r.config["seed"] = *o.seed;
  if (o.workers) r.config["workers"] = *o.workers;
  if (o.episodes) r.config["rlcf"]["episodes"] = *o.episodes;
  validate_config(r.config);

  if (!o.data.empty() && !fs::is_directory(o.data)) throw UsageError("--data not found: " + o.data);
  if (o.command != "gen-data" && o.command != "bootstrap") require_file("--policy", o.policy);
  if (o.command == "train") {
    const bool needs_disc = o.method == "rlcf" || o.method == "rlcf-fixdisc" || o.method == "disc-only";
    const bool resuming = o.resume && fs::exists(fs::path(o.out) / "state.ckpt");
    if (needs_disc && !resuming) require_file("--disc", o.disc);
    if (!o.disc.empty()) require_file("--disc", o.disc);
    if (!o.match_run.empty() && o.method != "mono") throw UsageError("--match-run applies to --method mono only");
  }

  r.out = o.out;
  fs::create_directories(r.out);
  if (o.command == "gen-data") cmd_gen_data(o, r);
  if (o.command == "bootstrap") cmd_bootstrap(o, r);
  if (o.command == "pretrain-disc") cmd_pretrain_disc(o, r);
  if (o.command == "train") cmd_train(o, r);
  if (o.command == "eval") cmd_eval(o, r);
  if (o.command == "profile-errors") cmd_profile(o, r);
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coarse-tuning a code policy with compiler feedback on MiniLang", "rlcf"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s, bool needs_config) {
    s->add_option("--out", o.out, "output directory")->required();
    s->add_flag("--quiet", o.quiet, "only warnings and errors on stderr");
    if (!needs_config) return;
    s->add_option("--config", o.config_file, "JSON run config (missing keys take defaults)")->check(CLI::ExistingFile);
    s->add_option("--set", o.sets, "override one config key, e.g. --set rlcf.lr_policy=1e-4");
    s->add_option("--seed", o.seed, "master seed");
    s->add_option("--workers", o.workers, "RL rollout threads; results do not depend on it")->check(CLI::Range(1, 256));
  };
  auto with_data = [&](CLI::App* s) { s->add_option("--data", o.data, "corpus directory from gen-data"); };
  auto with_policy = [&](CLI::App* s) { s->add_option("--policy", o.policy, "policy checkpoint")->required(); };

  CLI::App* gen = app.add_subcommand("gen-data", "generate and write the task corpus");
  common(gen, true);

  CLI::App* boot = app.add_subcommand("bootstrap", "supervised bootstrap of a fresh policy");
  common(boot, true);
  with_data(boot);

  CLI::App* pre = app.add_subcommand("pretrain-disc", "triplet + adversarial discriminator pretraining");
  common(pre, true);
  with_data(pre);
  with_policy(pre);

  CLI::App* tr = app.add_subcommand("train", "coarse-tune a policy with one method");
  common(tr, true);
  with_data(tr);
  with_policy(tr);
  tr->add_option("--method", o.method)->required()->check(CLI::IsMember(train_methods()));
  tr->add_option("--disc", o.disc, "pretrained discriminator checkpoint");
  tr->add_option("--episodes", o.episodes, "shortcut for --set rlcf.episodes=N")->check(CLI::NonNegativeNumber);
  tr->add_flag("--resume", o.resume, "continue from <out>/state.ckpt (RL methods)");
  tr->add_option("--match-run", o.match_run, "mono: match the token budget of this run directory");

  CLI::App* ev = app.add_subcommand("eval", "fine-tune per task split, then pass@k / exec@k / comp@k");
  common(ev, true);
  with_data(ev);
  with_policy(ev);
  ev->add_option("--label", o.label, "method name in the report (default: from the checkpoint)");

  CLI::App* pr = app.add_subcommand("profile-errors", "average compiler diagnostics per sampled response");
  common(pr, true);
  with_data(pr);
  with_policy(pr);
  pr->add_option("--label", o.label);
  pr->add_option("--split", o.split)->check(CLI::IsMember({"coarse", "finetune", "test"}));

  CLI::App* rep = app.add_subcommand("report", "comparison tables and error-rate series from run directories");
  common(rep, false);
  rep->add_option("--runs", o.runs, "run directories")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  o.command = app.get_subcommands().front()->get_name();
  if (o.quiet) set_log_level(LogLevel::Warn);

  try {
    return dispatch(o, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "fatal: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace rlcf::cli
