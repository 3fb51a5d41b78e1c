#include "maat/harness.hpp"

#include "maat/diversity.hpp"
#include "maat/errors.hpp"
#include "maat/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace maat {

// ---------------------------------------------------------------------------
// Oracles and the session loop

AnswerOracle replay_oracle(std::span<const Record> records, std::size_t num_questions) {
  auto answers = std::make_shared<std::vector<std::uint8_t>>(num_questions, 0);
  AnswerOracle oracle;
  oracle.known.assign(num_questions, 0);
  for (const auto& r : records) {
    if (idx(r.question) >= num_questions) throw LookupError("record question out of range");
    (*answers)[idx(r.question)] = r.answer;
    oracle.known[idx(r.question)] = 1;
  }
  oracle.answer = [answers](QuestionId q, std::size_t) { return (*answers)[idx(q)]; };
  return oracle;
}

AnswerOracle scripted_oracle(std::vector<std::uint8_t> answers) {
  auto script = std::make_shared<std::vector<std::uint8_t>>(std::move(answers));
  AnswerOracle oracle;
  oracle.answer = [script](QuestionId, std::size_t step) {
    if (step >= script->size()) throw PoolExhausted("scripted answers ran out at step " + std::to_string(step));
    return (*script)[step];
  };
  return oracle;
}

AnswerOracle simulated_oracle(std::shared_ptr<const DiagnosisModel> truth, Ability theta,
                              std::uint64_t seed) {
  AnswerOracle oracle;
  oracle.answer = [truth = std::move(truth), theta = std::move(theta), seed](QuestionId q, std::size_t) {
    const double p = truth->predict(theta, q);
    const double u = double(mix_seed(seed, idx(q)) >> 11) * 0x1.0p-53;
    return std::uint8_t(u < p ? 1 : 0);
  };
  return oracle;
}

SessionTrace run_session(std::shared_ptr<const DiagnosisModel> model,
                         std::shared_ptr<const ConceptGraph> graph, std::vector<double> weights,
                         std::shared_ptr<const Strategy> strategy, const AnswerOracle& oracle,
                         ExamineeId examinee, const SessionConfig& config) {
  CatSession session(std::move(model), std::move(graph), std::move(weights), std::move(strategy),
                     examinee, config);
  SessionTrace trace;
  trace.initial_theta = session.theta();
  while (!session.finished()) {
    const QuestionId q = session.select_next(oracle.known);
    const std::uint8_t a = oracle.answer(q, session.step());
    session.observe(q, a);
    trace.questions.push_back(q);
    trace.answers.push_back(a);
    trace.thetas.push_back(session.theta());
    trace.iwkc.push_back(session.coverage().iwkc());
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (test_length == 0) throw ConfigError("test_length must be at least 1");
  if (min_testing_records < test_length) {
    throw ConfigError("min_testing_records (" + std::to_string(min_testing_records) +
                      ") must be at least test_length (" + std::to_string(test_length) + ")");
  }
  if (gamma <= 0.0) throw ConfigError("gamma must be > 0");
  if (k_n == 0) throw ConfigError("k_n must be at least 1");
  for (auto t : auc_steps) {
    if (t == 0) throw ConfigError("auc steps must be >= 1");
  }
}

std::vector<RunPair> expand_pairs(const ExperimentConfig& config) {
  std::vector<RunPair> pairs = config.pairs;
  if (pairs.empty()) {
    for (const auto& s : config.strategies) {
      for (auto m : config.models) pairs.push_back(RunPair{s, m, config.k_c, ""});
    }
  }
  std::vector<ModelKind> kinds;
  for (const auto& p : pairs) {
    if (std::find(kinds.begin(), kinds.end(), p.model) == kinds.end()) kinds.push_back(p.model);
  }
  if (kinds.empty()) kinds = config.models;
  for (auto kc : config.ablation_kc) {
    for (auto m : kinds) {
      const bool present = std::any_of(pairs.begin(), pairs.end(), [&](const RunPair& p) {
        return p.strategy == "maat" && p.model == m && p.k_c == kc;
      });
      if (!present) pairs.push_back(RunPair{"maat", m, kc, ""});
    }
  }

  std::string bad;
  for (auto& p : pairs) {
    StrategyOptions options = config.strategy_options;
    options.k_c = p.k_c;
    const auto strategy = make_strategy(p.strategy, options);
    if (!strategy->supports(p.model)) {
      bad += (bad.empty() ? "" : ", ") + p.strategy + "+" + std::string(to_string(p.model));
    }
    if (p.label.empty()) {
      p.label = p.strategy;
      if (p.strategy == "maat" && p.k_c != config.k_c) {
        p.label += "@kc=" + (p.k_c == 0 ? std::string("all") : std::to_string(p.k_c));
      }
    }
  }
  if (!bad.empty()) throw ConfigError("incompatible strategy/model pairs: " + bad);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      if (pairs[i].label == pairs[j].label && pairs[i].model == pairs[j].model) {
        throw ConfigError("duplicate arm " + pairs[i].label + "+" + std::string(to_string(pairs[i].model)));
      }
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Preparation

namespace {

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

} // namespace

bool truth_is_reference(const PreparedExperiment& prep, ModelKind kind) {
  return prep.truth && prep.truth->kind == kind && prep.truth->dim == prep.models.at(kind)->ability_dim();
}

PreparedExperiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto pairs = expand_pairs(config);

  PreparedExperiment prep;
  if (config.dataset) {
    prep.env = filter_dataset(load_dataset(*config.dataset), config.filter);
  } else {
    auto data = generate_synthetic(config.synthetic);
    prep.env = filter_dataset(data.env, config.filter);
    if (prep.env.num_questions() == data.env.num_questions() &&
        prep.env.num_examinees == data.env.num_examinees) {
      prep.truth = std::move(data.truth);
    }
  }
  prep.split = split_dataset(prep.env, config.min_testing_records, config.seed, config.max_testing);
  prep.graph = std::make_shared<const ConceptGraph>(prep.env.graph);

  std::vector<ModelKind> kinds;
  for (const auto& p : pairs) {
    if (std::find(kinds.begin(), kinds.end(), p.model) == kinds.end()) kinds.push_back(p.model);
  }
  for (auto kind : kinds) {
    PretrainConfig pc = config.pretrain;
    auto result = pretrain(kind, *prep.graph, prep.split.historical_records, pc);
    prep.models[kind] = result.model;
    prep.pretrain_loss[kind] = std::move(result.epoch_loss);
  }

  if (config.importance_path) {
    prep.importance = load_importance(*config.importance_path);
    if (prep.importance.weights.size() != prep.env.num_concepts()) {
      throw ConfigError("importance table has " + std::to_string(prep.importance.weights.size()) +
                        " concepts, dataset has " + std::to_string(prep.env.num_concepts()));
    }
  } else if (config.uniform_importance) {
    prep.importance = uniform_importance(prep.env.num_concepts());
  } else {
    const auto trained = train_embeddings(prep.split.historical_records, prep.env.num_questions(), config.sgns);
    prep.importance = compute_importance(trained.embedding, *prep.graph, config.k_n, config.gamma);
    prep.importance.meta.seed = config.sgns.seed;
  }

  const auto& testing = prep.split.testing_examinees;
  std::vector<std::size_t> slot(prep.env.num_examinees, testing.size());
  for (std::size_t i = 0; i < testing.size(); ++i) slot[idx(testing[i])] = i;
  prep.testing_records.assign(testing.size(), {});
  for (const auto& r : prep.split.testing_records) prep.testing_records[slot[idx(r.examinee)]].push_back(r);

  for (auto kind : kinds) {
    auto& refs = prep.references[kind];
    refs.assign(testing.size(), {});
    const auto& model = *prep.models[kind];
    if (truth_is_reference(prep, kind)) {
      for (std::size_t i = 0; i < testing.size(); ++i) {
        refs[i] = prep.truth->abilities[std::size_t(prep.env.examinee_labels[idx(testing[i])])];
      }
      continue;
    }
    parallel_for(testing.size(), config.threads, [&](std::size_t i) {
      refs[i] = model.update(model.initial_ability(), prep.testing_records[i], config.reference_update);
    });
  }
  return prep;
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct ExamineeResult {
  std::vector<RunRow> rows;
  std::vector<std::size_t> undefined_steps;
  // Per AUC step: (score, label) pairs for the pooled AUC.
  std::vector<std::vector<std::pair<double, std::uint8_t>>> pooled;
};

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedExperiment& prep) {
  const auto pairs = expand_pairs(config);
  std::vector<std::size_t> auc_steps;
  for (auto t : config.auc_steps) {
    if (t <= config.test_length) auc_steps.push_back(t);
  }
  std::sort(auc_steps.begin(), auc_steps.end());
  auc_steps.erase(std::unique(auc_steps.begin(), auc_steps.end()), auc_steps.end());

  const auto& testing = prep.split.testing_examinees;
  ExperimentReport report;

  for (const auto& pair : pairs) {
    StrategyOptions options = config.strategy_options;
    options.k_c = pair.k_c;
    std::shared_ptr<const Strategy> strategy = make_strategy(pair.strategy, options);
    const auto model = prep.models.at(pair.model);
    const auto& refs = prep.references.at(pair.model);
    const std::string model_name(to_string(pair.model));

    std::vector<ExamineeResult> results(testing.size());
    parallel_for(testing.size(), config.threads, [&](std::size_t i) {
      const ExamineeId e = testing[i];
      const auto& recs = prep.testing_records[i];
      SessionConfig sc{config.test_length, mix_seed(config.seed, idx(e)), config.update};
      const auto trace = run_session(model, prep.graph, prep.importance.weights, strategy,
                                     replay_oracle(recs, prep.env.num_questions()), e, sc);
      const std::int64_t label = prep.env.examinee_labels[idx(e)];
      auto& out = results[i];
      out.pooled.resize(auc_steps.size());
      std::vector<std::uint8_t> administered(prep.env.num_questions(), 0);
      std::size_t next_auc = 0;
      for (std::size_t t = 1; t <= trace.questions.size(); ++t) {
        administered[idx(trace.questions[t - 1])] = 1;
        const auto& theta = trace.thetas[t - 1];
        if (next_auc < auc_steps.size() && auc_steps[next_auc] == t) {
          std::vector<double> scores;
          std::vector<std::uint8_t> labels;
          for (const auto& r : recs) {
            if (!config.auc_include_administered && administered[idx(r.question)]) continue;
            scores.push_back(model->predict(theta, r.question));
            labels.push_back(r.answer);
            out.pooled[next_auc].emplace_back(scores.back(), r.answer);
          }
          if (auto v = auc(scores, labels)) {
            out.rows.push_back({pair.label, model_name, label, t, "auc", *v});
          } else {
            out.undefined_steps.push_back(t);
          }
          ++next_auc;
        }
        const std::span<const QuestionId> prefix(trace.questions.data(), t);
        out.rows.push_back({pair.label, model_name, label, t, "cov", coverage_metric(prefix, *prep.graph)});
        out.rows.push_back({pair.label, model_name, label, t, "see", squared_error(theta, refs[i])});
      }
    });

    std::map<std::size_t, std::size_t> undefined;
    for (std::size_t s = 0; s < auc_steps.size(); ++s) {
      std::vector<double> scores;
      std::vector<std::uint8_t> labels;
      for (auto& res : results) {
        for (auto [p, y] : res.pooled[s]) {
          scores.push_back(p);
          labels.push_back(y);
        }
      }
      report.pooled_auc.push_back({pair.label, model_name, auc_steps[s], auc(scores, labels)});
    }
    for (auto& res : results) {
      for (auto& row : res.rows) report.rows.push_back(std::move(row));
      for (auto t : res.undefined_steps) ++undefined[t];
    }
    for (auto [t, count] : undefined) report.undefined_auc.push_back({pair.label, model_name, t, count});
  }

  report.curves = aggregate(report.rows);

  nlohmann::json arms = nlohmann::json::array();
  for (const auto& p : pairs) {
    arms.push_back({{"label", p.label}, {"strategy", p.strategy}, {"model", std::string(to_string(p.model))},
                    {"k_c", p.k_c}});
  }
  nlohmann::json see_reference = nlohmann::json::object();
  for (const auto& [kind, model] : prep.models) {
    see_reference[std::string(to_string(kind))] =
        truth_is_reference(prep, kind) ? "generating ability" : "full-record fit";
  }
  nlohmann::json pretrain_loss = nlohmann::json::object();
  for (const auto& [kind, loss] : prep.pretrain_loss) {
    pretrain_loss[std::string(to_string(kind))] = loss.empty() ? 0.0 : loss.back();
  }
  report.metadata = {
      {"name", config.name},
      {"seed", config.seed},
      {"test_length", config.test_length},
      {"k_c", config.k_c},
      {"arms", arms},
      {"data", config.dataset ? config.dataset->string() : std::string("synthetic")},
      {"num_questions", prep.env.num_questions()},
      {"num_concepts", prep.env.num_concepts()},
      {"historical_examinees", prep.split.historical_examinees.size()},
      {"testing_examinees", testing.size()},
      {"auc_steps", auc_steps},
      {"auc_include_administered", config.auc_include_administered},
      {"see_reference", see_reference},
      {"final_pretrain_loss", pretrain_loss},
      {"importance", {{"gamma", prep.importance.meta.gamma},
                      {"k_n", prep.importance.meta.k_n},
                      {"dim", prep.importance.meta.dim},
                      {"seed", prep.importance.meta.seed}}},
  };
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, prepare_experiment(config));
}

std::optional<CurvePoint> ExperimentReport::find(std::string_view strategy, std::string_view model,
                                                 std::size_t step, std::string_view metric) const {
  for (const auto& c : curves) {
    if (c.strategy == strategy && c.model == model && c.step == step && c.metric == metric) return c;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Aggregation and output

std::vector<CurvePoint> aggregate(std::span<const RunRow> rows) {
  using Key = std::tuple<std::string, std::string, std::size_t, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) groups[Key{r.strategy, r.model, r.step, r.metric}].push_back(r.value);

  std::vector<CurvePoint> out;
  out.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    const double n = double(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), mean, se,
                   values.size()});
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

void write_runs_csv(std::span<const RunRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "strategy,model,examinee,step,metric,value\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.model << ',' << r.examinee << ',' << r.step << ',' << r.metric << ','
        << format_double(r.value) << '\n';
  }
}

std::vector<RunRow> read_runs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "strategy,model,examinee,step,metric,value") {
    throw ParseError(path.string(), 1, "unexpected header");
  }
  std::vector<RunRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError(path.string(), lineno, "expected 6 fields");
    RunRow r;
    r.strategy = f[0];
    r.model = f[1];
    auto parse = [&](const std::string& s, auto& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        throw ParseError(path.string(), lineno, "bad number '" + s + "'");
      }
    };
    parse(f[2], r.examinee);
    parse(f[3], r.step);
    r.metric = f[4];
    parse(f[5], r.value);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_curves_csv(std::span<const CurvePoint> curves, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "strategy,model,step,metric,mean,stderr,n\n";
  for (const auto& c : curves) {
    out << c.strategy << ',' << c.model << ',' << c.step << ',' << c.metric << ','
        << format_double(c.mean) << ',' << format_double(c.stderr_) << ',' << c.n << '\n';
  }
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json curves = nlohmann::json::array();
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& c : report.curves) {
    nlohmann::json point = {{"mean", c.mean}, {"stderr", c.stderr_}, {"n", c.n}};
    curves.push_back({{"strategy", c.strategy}, {"model", c.model}, {"step", c.step}, {"metric", c.metric},
                      {"mean", c.mean}, {"stderr", c.stderr_}, {"n", c.n}});
    summary[c.strategy + "/" + c.model][c.metric + "@" + std::to_string(c.step)] = point;
  }
  nlohmann::json undefined = nlohmann::json::array();
  for (const auto& u : report.undefined_auc) {
    undefined.push_back({{"strategy", u.strategy}, {"model", u.model}, {"step", u.step}, {"count", u.count}});
  }
  nlohmann::json pooled = nlohmann::json::array();
  for (const auto& p : report.pooled_auc) {
    pooled.push_back({{"strategy", p.strategy}, {"model", p.model}, {"step", p.step},
                      {"value", p.value ? nlohmann::json(*p.value) : nlohmann::json(nullptr)}});
  }
  return {{"format", "maat-report"},  {"version", 1},          {"metadata", report.metadata},
          {"summary", summary},       {"curves", curves},      {"undefined_auc", undefined},
          {"pooled_auc", pooled}};
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_runs_csv(report.rows, dir / "runs.csv");
  write_curves_csv(report.curves, dir / "curves.csv");
  std::ofstream out(dir / "report.json");
  if (!out) throw ValidationError("cannot write " + (dir / "report.json").string());
  out << report_to_json(report).dump(2) << '\n';
}

} // namespace maat
