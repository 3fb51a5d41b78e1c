#include "maat/experiment_config.hpp"

#include "maat/errors.hpp"

#include <toml.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace maat {

namespace {

class Section {
public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const noexcept { return table_ != nullptr; }

  template <class T>
  void read(const char* key, T& out) {
    const toml::node* node = lookup(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      auto v = node->value<std::int64_t>();
      if (!v || *v < 0) fail(key, "a non-negative integer");
      out = static_cast<T>(*v);
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = node->value<double>();
      if (!v) fail(key, "a number");
      out = *v;
    } else {
      auto v = node->value<std::string>();
      if (!v) fail(key, "a string");
      out = *v;
    }
  }

  template <class T>
  void read_list(const char* key, std::vector<T>& out) {
    const toml::node* node = lookup(key);
    if (!node) return;
    const auto* arr = node->as_array();
    if (!arr) fail(key, "an array");
    out.clear();
    for (const auto& item : *arr) {
      if constexpr (std::is_integral_v<T>) {
        auto v = item.value<std::int64_t>();
        if (!v || *v < 0) fail(key, "an array of non-negative integers");
        out.push_back(static_cast<T>(*v));
      } else {
        auto v = item.value<std::string>();
        if (!v) fail(key, "an array of strings");
        out.push_back(*v);
      }
    }
  }

  const toml::array* array(const char* key) {
    const toml::node* node = lookup(key);
    if (!node) return nullptr;
    if (!node->as_array()) fail(key, "an array");
    return node->as_array();
  }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_) {
      if (!used_.count(std::string(k.str()))) {
        throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
      }
    }
  }

private:
  const toml::node* lookup(const char* key) {
    used_.insert(key);
    if (!table_) return nullptr;
    return table_->get(key);
  }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("[" + name_ + "] " + key + " must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

Section section(const toml::table& root, const char* name) {
  const toml::node* node = root.get(name);
  if (node && !node->as_table()) throw ConfigError(std::string("[") + name + "] must be a table");
  return Section(node ? node->as_table() : nullptr, name);
}

toml::table parse_toml(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_spec(Section& s, SyntheticSpec& spec) {
  s.read("num_examinees", spec.num_examinees);
  s.read("num_questions", spec.num_questions);
  s.read("num_concepts", spec.num_concepts);
  s.read("min_concepts_per_question", spec.min_concepts_per_question);
  s.read("max_concepts_per_question", spec.max_concepts_per_question);
  s.read("zipf_exponent", spec.zipf_exponent);
  s.read("min_records_per_examinee", spec.min_records_per_examinee);
  s.read("max_records_per_examinee", spec.max_records_per_examinee);
  std::string generator(to_string(spec.generator));
  s.read("generator", generator);
  spec.generator = parse_model_kind(generator);
  s.read("mirt_dim", spec.mirt_dim);
  s.read("log_discrimination_mean", spec.log_discrimination_mean);
  s.read("log_discrimination_sd", spec.log_discrimination_sd);
  s.read("discrimination_min", spec.discrimination_min);
  s.read("discrimination_max", spec.discrimination_max);
  s.read("difficulty_mean", spec.difficulty_mean);
  s.read("difficulty_sd", spec.difficulty_sd);
  s.read("ability_mean", spec.ability_mean);
  s.read("ability_sd", spec.ability_sd);
  s.read("seed", spec.seed);
  s.finish();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

} // namespace

ExperimentFile parse_experiment_toml(std::string_view text, const std::filesystem::path& base_dir) {
  const auto root = parse_toml(text);
  static const std::set<std::string> known{"experiment", "dataset", "synthetic", "pretrain", "update",
                                           "reference_update", "importance", "strategy"};
  for (auto&& [k, v] : root) {
    if (!known.count(std::string(k.str()))) throw ConfigError("unknown section [" + std::string(k.str()) + "]");
  }

  ExperimentFile file;
  auto& c = file.config;
  c.seed = default_seed();
  c.synthetic.seed = c.seed;
  c.pretrain.seed = c.seed;
  c.sgns.seed = c.seed;

  auto exp = section(root, "experiment");
  exp.read("name", c.name);
  exp.read_list("strategies", c.strategies);
  std::vector<std::string> models;
  exp.read_list("models", models);
  if (!models.empty()) {
    c.models.clear();
    for (const auto& m : models) c.models.push_back(parse_model_kind(m));
  }
  if (const auto* pairs = exp.array("pairs")) {
    for (const auto& item : *pairs) {
      const auto* pair = item.as_array();
      if (!pair || pair->size() != 2 || !(*pair)[0].value<std::string>() || !(*pair)[1].value<std::string>()) {
        throw ConfigError("[experiment] pairs must be [strategy, model] string pairs");
      }
      c.pairs.push_back(RunPair{*(*pair)[0].value<std::string>(),
                                parse_model_kind(*(*pair)[1].value<std::string>()), 0, ""});
    }
  }
  exp.read_list("ablation_kc", c.ablation_kc);
  exp.read("test_length", c.test_length);
  exp.read("k_c", c.k_c);
  std::uint64_t seed = c.seed;
  exp.read("seed", seed);
  if (seed != c.seed) {
    c.seed = c.synthetic.seed = c.pretrain.seed = c.sgns.seed = seed;
  }
  exp.read_list("auc_steps", c.auc_steps);
  exp.read("auc_include_administered", c.auc_include_administered);
  exp.read("threads", c.threads);
  std::string output;
  exp.read("output", output);
  if (!output.empty()) file.output_dir = resolve(base_dir, output);
  exp.finish();
  for (auto& p : c.pairs) p.k_c = c.k_c;
  if (c.k_c == 0) throw ConfigError("[experiment] k_c must be at least 1");

  auto ds = section(root, "dataset");
  std::string path;
  ds.read("path", path);
  if (!path.empty()) c.dataset = resolve(base_dir, path);
  ds.read("min_questions_per_concept", c.filter.min_questions_per_concept);
  ds.read("min_records_per_question", c.filter.min_records_per_question);
  ds.read("min_records_per_examinee", c.filter.min_records_per_examinee);
  ds.read("min_testing_records", c.min_testing_records);
  ds.read("max_testing", c.max_testing);
  ds.finish();

  auto syn = section(root, "synthetic");
  if (syn.present() && c.dataset) throw ConfigError("give either [dataset] path or [synthetic], not both");
  read_spec(syn, c.synthetic);

  auto pre = section(root, "pretrain");
  pre.read("epochs", c.pretrain.epochs);
  pre.read("learning_rate", c.pretrain.learning_rate);
  pre.read("ability_l2", c.pretrain.ability_l2);
  pre.read("mirt_dim", c.pretrain.mirt_dim);
  pre.read("ncdm_hidden", c.pretrain.ncdm_hidden);
  pre.read("seed", c.pretrain.seed);
  pre.finish();

  auto upd = section(root, "update");
  upd.read("learning_rate", c.update.learning_rate);
  upd.read("epochs", c.update.epochs);
  upd.finish();

  auto ref = section(root, "reference_update");
  ref.read("learning_rate", c.reference_update.learning_rate);
  ref.read("epochs", c.reference_update.epochs);
  ref.finish();

  auto imp = section(root, "importance");
  imp.read("dim", c.sgns.dim);
  imp.read("negatives", c.sgns.negatives);
  imp.read("epochs", c.sgns.epochs);
  imp.read("learning_rate", c.sgns.learning_rate);
  imp.read("max_context", c.sgns.max_context);
  imp.read("seed", c.sgns.seed);
  imp.read("gamma", c.gamma);
  imp.read("k_n", c.k_n);
  imp.read("uniform", c.uniform_importance);
  std::string table;
  imp.read("path", table);
  if (!table.empty()) c.importance_path = resolve(base_dir, table);
  imp.finish();

  auto st = section(root, "strategy");
  st.read("kli_points", c.strategy_options.kli_points);
  st.read("mkli_points", c.strategy_options.mkli_points);
  st.read("dopt_ridge", c.strategy_options.dopt_ridge);
  st.finish();

  c.strategy_options.k_c = c.k_c;
  c.validate();
  expand_pairs(c);
  return file;
}

ExperimentFile load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_toml(read_file(path), path.parent_path());
}

SyntheticSpec parse_synthetic_toml(std::string_view text) {
  const auto root = parse_toml(text);
  SyntheticSpec spec;
  spec.seed = default_seed();
  if (const auto* nested = root.get("synthetic")) {
    if (root.size() != 1 || !nested->as_table()) {
      throw ConfigError("a spec file holds either bare keys or a single [synthetic] table");
    }
    Section s(nested->as_table(), "synthetic");
    read_spec(s, spec);
  } else {
    Section s(&root, "synthetic");
    read_spec(s, spec);
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_toml(read_file(path));
}

} // namespace maat
