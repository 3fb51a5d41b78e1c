#include "maat/checkpoint.hpp"

#include "maat/errors.hpp"

#include <fstream>

namespace maat {

using nlohmann::json;

namespace {

json rows(std::span<const double> flat, std::size_t cols) {
  json out = json::array();
  for (std::size_t i = 0; i + cols <= flat.size(); i += cols) {
    out.push_back(std::vector<double>(flat.begin() + i, flat.begin() + i + cols));
  }
  return out;
}

std::vector<double> flatten(const json& matrix, std::size_t cols, const char* what) {
  std::vector<double> out;
  for (const auto& row : matrix) {
    auto values = row.get<std::vector<double>>();
    if (values.size() != cols) throw ValidationError(std::string("checkpoint: bad row width in ") + what);
    out.insert(out.end(), values.begin(), values.end());
  }
  return out;
}

} // namespace

json checkpoint_to_json(const DiagnosisModel& model, const ConceptGraph& graph,
                        const json& config) {
  if (model.num_questions() != graph.num_questions()) {
    throw ValidationError("checkpoint: model and graph disagree on the number of questions");
  }
  json doc;
  doc["format"] = "maat-model";
  doc["version"] = kCheckpointVersion;
  doc["kind"] = std::string(to_string(model.kind()));
  doc["num_questions"] = graph.num_questions();
  doc["num_concepts"] = graph.num_concepts();
  json concepts = json::array();
  for (std::size_t q = 0; q < graph.num_questions(); ++q) {
    json ks = json::array();
    for (auto k : graph.concepts_of(question_id(q))) ks.push_back(idx(k));
    concepts.push_back(std::move(ks));
  }
  doc["concepts"] = std::move(concepts);
  doc["config"] = config;

  json params;
  switch (model.kind()) {
    case ModelKind::irt: {
      const auto& m = dynamic_cast<const IrtModel&>(model);
      params["discrimination"] = m.discriminations();
      params["difficulty"] = m.difficulties();
      break;
    }
    case ModelKind::mirt: {
      const auto& m = dynamic_cast<const MirtModel&>(model);
      params["dim"] = m.ability_dim();
      params["discrimination"] = rows(m.discriminations(), m.ability_dim());
      params["intercept"] = m.intercepts();
      break;
    }
    case ModelKind::ncdm: {
      const auto& p = dynamic_cast<const NeuralCdmLite&>(model).parameters();
      params["hidden"] = p.hidden;
      params["w1"] = rows(p.w1, p.num_concepts);
      params["b1"] = p.b1;
      params["w2"] = p.w2;
      params["b2"] = p.b2;
      params["raw_difficulty"] = rows(p.raw_diff, p.num_concepts);
      params["raw_discrimination"] = p.raw_disc;
      break;
    }
  }
  doc["parameters"] = std::move(params);
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format") != "maat-model") throw ValidationError("checkpoint: not a maat model file");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("checkpoint: unsupported version " + doc.at("version").dump());
    }
    const auto kind = parse_model_kind(doc.at("kind").get<std::string>());
    const auto nq = doc.at("num_questions").get<std::size_t>();
    const auto nk = doc.at("num_concepts").get<std::size_t>();
    const auto& concepts = doc.at("concepts");
    if (concepts.size() != nq) throw ValidationError("checkpoint: concepts list has wrong length");
    std::vector<ConceptGraph::Link> links;
    for (std::size_t q = 0; q < nq; ++q) {
      for (const auto& k : concepts[q]) links.emplace_back(question_id(q), concept_id(k.get<std::size_t>()));
    }

    Checkpoint out;
    out.graph = ConceptGraph(nq, nk, std::move(links));
    out.config = doc.value("config", json::object());
    const auto& p = doc.at("parameters");
    switch (kind) {
      case ModelKind::irt:
        out.model = std::make_shared<IrtModel>(p.at("discrimination").get<std::vector<double>>(),
                                               p.at("difficulty").get<std::vector<double>>());
        break;
      case ModelKind::mirt: {
        const auto dim = p.at("dim").get<std::size_t>();
        out.model = std::make_shared<MirtModel>(dim, flatten(p.at("discrimination"), dim, "discrimination"),
                                                p.at("intercept").get<std::vector<double>>());
        break;
      }
      case ModelKind::ncdm: {
        NeuralCdmLite::Parameters params;
        params.num_concepts = nk;
        params.hidden = p.at("hidden").get<std::size_t>();
        params.w1 = flatten(p.at("w1"), nk, "w1");
        params.b1 = p.at("b1").get<std::vector<double>>();
        params.w2 = p.at("w2").get<std::vector<double>>();
        params.b2 = p.at("b2").get<double>();
        params.raw_diff = flatten(p.at("raw_difficulty"), nk, "raw_difficulty");
        params.raw_disc = p.at("raw_discrimination").get<std::vector<double>>();
        out.model = std::make_shared<NeuralCdmLite>(out.graph, std::move(params));
        break;
      }
    }
    if (out.model->num_questions() != nq) {
      throw ValidationError("checkpoint: parameter count does not match num_questions");
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const DiagnosisModel& model,
                     const ConceptGraph& graph, const json& config) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << checkpoint_to_json(model, graph, config).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

} // namespace maat
