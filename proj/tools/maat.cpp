// maat: command-line front end for data generation, pretraining, experiments
// and the session service.

#include "maat/checkpoint.hpp"
#include "maat/errors.hpp"
#include "maat/experiment_config.hpp"
#include "maat/harness.hpp"
#include "maat/importance.hpp"
#include "maat/service.hpp"
#include "maat/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace maat;

int cmd_synth(const std::string& spec_path, const std::string& out) {
  const SyntheticSpec spec = spec_path.empty() ? [] {
    SyntheticSpec s;
    s.seed = default_seed();
    return s;
  }()
                                               : load_synthetic_spec(spec_path);
  const auto data = generate_synthetic(spec);
  save_synthetic(data, out);
  std::printf("wrote %zu records, %zu questions, %zu concepts, %zu examinees to %s\n",
              data.env.records.size(), data.env.num_questions(), data.env.num_concepts(),
              data.env.num_examinees, out.c_str());
  return 0;
}

struct PretrainArgs {
  std::string dataset, model = "irt", out;
  std::size_t epochs = 0, holdout = 0;
  double lr = 0.0, l2 = 1e-3;
  std::size_t mirt_dim = 3, hidden = 64;
};

int cmd_pretrain(const PretrainArgs& a) {
  const auto kind = parse_model_kind(a.model);
  LoadReport lr;
  const auto env = load_dataset(a.dataset, &lr);
  std::vector<Record> train = env.records;
  if (a.holdout > 0) train = split_dataset(env, a.holdout, default_seed()).historical_records;
  PretrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.ability_l2 = a.l2;
  cfg.mirt_dim = a.mirt_dim;
  cfg.ncdm_hidden = a.hidden;
  cfg.seed = default_seed();
  const auto result = pretrain(kind, env.graph, train, cfg);
  const auto r = cfg.resolved(kind);
  nlohmann::json meta{{"epochs", r.epochs},       {"learning_rate", r.learning_rate},
                      {"ability_l2", r.ability_l2}, {"seed", r.seed},
                      {"records", train.size()},    {"final_loss", result.epoch_loss.back()}};
  save_checkpoint(a.out, *result.model, env.graph, meta);
  std::printf("%s: %zu records, final training loss %.4f -> %s\n", a.model.c_str(), train.size(),
              result.epoch_loss.back(), a.out.c_str());
  return 0;
}

struct ImportanceArgs {
  std::string dataset, out;
  double gamma = 0.1;
  std::size_t k_n = 10, holdout = 0;
  SgnsConfig sgns;
};

int cmd_importance(ImportanceArgs a) {
  const auto env = load_dataset(a.dataset);
  std::vector<Record> train = env.records;
  if (a.holdout > 0) train = split_dataset(env, a.holdout, default_seed()).historical_records;
  const auto trained = train_embeddings(train, env.num_questions(), a.sgns);
  auto table = compute_importance(trained.embedding, env.graph, a.k_n, a.gamma);
  table.meta.seed = a.sgns.seed;
  save_importance(a.out, table);
  std::printf("importance for %zu concepts (skipped %zu examinees) -> %s\n", table.weights.size(),
              trained.skipped_examinees, a.out.c_str());
  return 0;
}

void print_summary(const std::vector<CurvePoint>& curves) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, CurvePoint>> arms;
  std::size_t last = 0;
  for (const auto& c : curves) last = std::max(last, c.step);
  for (const auto& c : curves) arms[{c.strategy, c.model}][c.metric + "@" + std::to_string(c.step)] = c;
  std::vector<std::string> cols;
  const std::vector<std::pair<std::string, std::size_t>> wanted{
      {"auc", 25}, {"auc", last}, {"cov", 10}, {"cov", last}, {"see", last}};
  for (const auto& [metric, step] : wanted) {
    const auto name = metric + "@" + std::to_string(std::min(step, last));
    if (std::find(cols.begin(), cols.end(), name) == cols.end()) cols.push_back(name);
  }
  std::printf("%-16s %-6s", "strategy", "model");
  for (const auto& c : cols) std::printf(" %18s", c.c_str());
  std::printf("\n");
  for (const auto& [key, metrics] : arms) {
    std::printf("%-16s %-6s", key.first.c_str(), key.second.c_str());
    for (const auto& c : cols) {
      auto it = metrics.find(c);
      if (it == metrics.end()) {
        std::printf(" %18s", "-");
      } else {
        std::printf("   %7.4f +- %6.4f", it->second.mean, it->second.stderr_);
      }
    }
    std::printf("\n");
  }
}

struct RunArgs {
  std::string config, out;
  std::vector<std::string> strategies, models;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

int cmd_run(const RunArgs& a) {
  auto file = load_experiment_config(a.config);
  if (!a.strategies.empty() || !a.models.empty()) file.config.pairs.clear();
  if (!a.strategies.empty()) file.config.strategies = a.strategies;
  if (!a.models.empty()) {
    file.config.models.clear();
    for (const auto& m : a.models) file.config.models.push_back(parse_model_kind(m));
  }
  if (a.seed) file.config.seed = *a.seed;
  if (a.threads) file.config.threads = *a.threads;
  const auto& out_override = a.out;
  std::filesystem::path out = out_override.empty()
                                  ? file.output_dir.value_or(std::filesystem::path("runs") / file.config.name)
                                  : std::filesystem::path(out_override);
  const auto report = run_experiment(file.config);
  write_report(report, out);
  print_summary(report.curves);
  std::printf("report written to %s\n", out.string().c_str());
  return 0;
}

int cmd_report(const std::string& dir) {
  const auto rows = read_runs_csv(std::filesystem::path(dir) / "runs.csv");
  print_summary(aggregate(rows));
  return 0;
}

struct ServeArgs {
  std::vector<std::string> models;
  std::string importance, host = "127.0.0.1", store, ui_dir;
  int port = 8080;
  std::size_t test_length = 50, k_c = 10;
};

HttpServer* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  ServiceOptions opts;
  opts.default_test_length = a.test_length;
  opts.default_k_c = a.k_c;
  opts.default_seed = default_seed();
  std::shared_ptr<SessionStore> store;
  if (!a.store.empty()) store = std::make_shared<SqliteSessionStore>(a.store);
  Service service(opts, store);
  for (const auto& m : a.models) service.add_model(load_checkpoint(m));
  service.set_importance(load_importance(a.importance));
  const std::size_t resumed = service.resume();

  std::optional<std::filesystem::path> ui;
  if (!a.ui_dir.empty()) ui = a.ui_dir;
  HttpServer server(service, ui);
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::printf("listening on http://%s:%d (%zu sessions resumed)\n", a.host.c_str(), port, resumed);
  std::fflush(stdout);
  server.run();
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-agnostic adaptive testing: data, pretraining, experiments and sessions"};
  app.require_subcommand(1);

  std::string spec, out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", spec, "TOML spec (defaults when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Fit a diagnosis model and write a checkpoint");
  pre->add_option("--dataset", pa.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--model", pa.model, "irt, mirt or ncdm")->check(CLI::IsMember({"irt", "mirt", "ncdm"}));
  pre->add_option("--out", pa.out, "Checkpoint path, e.g. model.irt.json")->required();
  pre->add_option("--epochs", pa.epochs, "SGD epochs (0 = model default)");
  pre->add_option("--lr", pa.lr, "Learning rate (0 = model default)");
  pre->add_option("--ability-l2", pa.l2, "L2 penalty on historical abilities");
  pre->add_option("--mirt-dim", pa.mirt_dim, "MIRT latent dimensions");
  pre->add_option("--hidden", pa.hidden, "Neural model hidden width");
  pre->add_option("--holdout", pa.holdout,
                  "Train only on examinees with fewer than this many records (0 = all)");

  ImportanceArgs ia;
  ia.sgns.seed = default_seed();
  auto* imp = app.add_subcommand("importance", "Compute per-concept importance weights");
  imp->add_option("--dataset", ia.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  imp->add_option("--out", ia.out, "Output path, e.g. importance.json")->required();
  imp->add_option("--gamma", ia.gamma, "Similarity decay");
  imp->add_option("--k-n", ia.k_n, "Neighbours per density");
  imp->add_option("--dim", ia.sgns.dim, "Embedding dimension");
  imp->add_option("--negatives", ia.sgns.negatives, "Negative samples per pair");
  imp->add_option("--epochs", ia.sgns.epochs, "Training epochs");
  imp->add_option("--seed", ia.sgns.seed, "Random seed");
  imp->add_option("--holdout", ia.holdout,
                  "Train only on examinees with fewer than this many records (0 = all)");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run an experiment from a TOML config");
  run->add_option("--config", ra.config, "Experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", ra.out, "Output directory (overrides the config)");
  run->add_option("--strategy", ra.strategies, "Strategy (repeatable; replaces the config's arms)")
      ->check(CLI::IsMember({"maat", "rand", "mfi", "kli", "dopt", "mkli"}));
  run->add_option("--model", ra.models, "Model kind (repeatable; replaces the config's arms)")
      ->check(CLI::IsMember({"irt", "mirt", "ncdm"}));
  run->add_option("--seed", ra.seed, "Seed (overrides the config)");
  run->add_option("--threads", ra.threads, "Worker threads (0 = all cores)");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summarize a finished run");
  rep->add_option("dir", report_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  ServeArgs sa;
  auto* srv = app.add_subcommand("serve", "Serve live test sessions over HTTP");
  srv->add_option("--model", sa.models, "Checkpoint file (repeatable)")->required()->check(CLI::ExistingFile);
  srv->add_option("--importance", sa.importance, "Importance table")->required()->check(CLI::ExistingFile);
  srv->add_option("--host", sa.host, "Bind address");
  srv->add_option("--port", sa.port, "Port (0 = any free port)");
  srv->add_option("--store", sa.store, "SQLite file for session persistence");
  srv->add_option("--ui-dir", sa.ui_dir, "Static UI assets served under /ui");
  srv->add_option("--test-length", sa.test_length, "Default test length N");
  srv->add_option("--k-c", sa.k_c, "Default candidate count K_C");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, out);
    if (*pre) return cmd_pretrain(pa);
    if (*imp) return cmd_importance(ia);
    if (*run) return cmd_run(ra);
    if (*rep) return cmd_report(report_dir);
    if (*srv) return cmd_serve(sa);
  } catch (const maat::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
