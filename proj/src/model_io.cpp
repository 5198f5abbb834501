#include "nilmgp/model_io.hpp"

#include "nilmgp/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace nilmgp {

namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Eigen::MatrixXd m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw ParseError("matrix row count mismatch");
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto row = vector_from(data.at(static_cast<std::size_t>(i)));
    if (row.size() != cols) throw ParseError("matrix column count mismatch");
    m.row(i) = row.transpose();
  }
  return m;
}

const char* kind_tag(KernelKind kind) {
  switch (kind) {
    case KernelKind::Matern52: return "matern52";
    case KernelKind::Matern52ARD: return "matern52_ard";
    case KernelKind::LinearOnFeature: return "linear";
    case KernelKind::Sum: return "sum";
  }
  return "?";
}

KernelKind kind_from(const std::string& tag) {
  if (tag == "matern52") return KernelKind::Matern52;
  if (tag == "matern52_ard") return KernelKind::Matern52ARD;
  if (tag == "linear") return KernelKind::LinearOnFeature;
  if (tag == "sum") return KernelKind::Sum;
  throw ParseError("unknown kernel kind '" + tag + "'");
}

json spec_json(const KernelSpec& spec) {
  json j{{"kind", kind_tag(spec.kind)}, {"input_dim", spec.input_dim}};
  if (spec.linear_feature_index) j["linear_feature_index"] = *spec.linear_feature_index;
  if (!spec.children.empty()) {
    j["children"] = json::array();
    for (const auto& child : spec.children) j["children"].push_back(spec_json(child));
  }
  return j;
}

KernelSpec spec_from(const json& j) {
  KernelSpec spec;
  spec.kind = kind_from(j.at("kind").get<std::string>());
  spec.input_dim = j.at("input_dim").get<int>();
  if (j.contains("linear_feature_index")) spec.linear_feature_index = j["linear_feature_index"].get<int>();
  if (j.contains("children")) {
    for (const auto& child : j["children"]) spec.children.push_back(spec_from(child));
  }
  spec.validate();
  return spec;
}

}  // namespace

std::string model_to_json(const TrainedModel& model) {
  const auto& gp = model.gp;
  json j;
  j["format"] = "nilmgp-model-1";
  j["variant"] = to_string(model.variant);
  j["window_k"] = model.window.half_width_k;
  j["target"] = model.target;
  j["train_config"] = {{"num_inducing", model.train_config.num_inducing},
                       {"learning_rate", model.train_config.learning_rate},
                       {"epochs", model.train_config.epochs},
                       {"seed", model.train_config.seed}};
  j["kernel"] = spec_json(gp.spec);
  j["raw_kernel_params"] = vector_json(gp.params.raw);
  j["raw_noise"] = gp.raw_noise;
  j["inducing_inputs"] = matrix_json(gp.inducing_inputs);
  j["x_mean"] = vector_json(gp.x_mean);
  j["x_std"] = vector_json(gp.x_std);
  j["y_mean"] = gp.y_mean;
  j["y_std"] = gp.y_std;
  j["seed"] = gp.seed;
  if (gp.posterior) {
    j["posterior"] = {{"L", matrix_json(gp.posterior->L)},
                      {"LB", matrix_json(gp.posterior->LB)},
                      {"c", vector_json(gp.posterior->c)}};
  }
  return j.dump(1) + "\n";
}

TrainedModel model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "nilmgp-model-1") throw ParseError("not a nilmgp model file");
    TrainedModel model;
    model.variant = parse_variant(j.at("variant").get<std::string>());
    model.window.half_width_k = j.at("window_k").get<int>();
    model.target = j.at("target").get<std::string>();
    const auto& tc = j.at("train_config");
    model.train_config.num_inducing = tc.at("num_inducing").get<int>();
    model.train_config.learning_rate = tc.at("learning_rate").get<double>();
    model.train_config.epochs = tc.at("epochs").get<int>();
    model.train_config.seed = tc.at("seed").get<std::uint64_t>();
    auto& gp = model.gp;
    gp.spec = spec_from(j.at("kernel"));
    gp.params.raw = vector_from(j.at("raw_kernel_params"));
    gp.raw_noise = j.at("raw_noise").get<double>();
    gp.inducing_inputs = matrix_from(j.at("inducing_inputs"));
    gp.x_mean = vector_from(j.at("x_mean"));
    gp.x_std = vector_from(j.at("x_std"));
    gp.y_mean = j.at("y_mean").get<double>();
    gp.y_std = j.at("y_std").get<double>();
    gp.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("posterior")) {
      const auto& p = j["posterior"];
      gp.posterior = PosteriorCache{matrix_from(p.at("L")), matrix_from(p.at("LB")),
                                    vector_from(p.at("c"))};
    }
    gp.validate();
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write model file '" + path.string() + "'");
  out << model_to_json(model);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read model file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace nilmgp
