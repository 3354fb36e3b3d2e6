#include "abstain/model_io.hpp"

#include <fstream>

#include "abstain/data.hpp"

namespace abstain {

using nlohmann::json;

namespace {

json layer_to_json(const DenseLayer& l) {
  return {{"rows", l.weights.rows},
          {"cols", l.weights.cols},
          {"weights", l.weights.data},
          {"bias", l.bias},
          {"activation", l.activation == Activation::ReLU ? "relu" : "identity"}};
}

DenseLayer layer_from_json(const json& j) {
  DenseLayer l;
  l.weights.rows = j.at("rows").get<std::size_t>();
  l.weights.cols = j.at("cols").get<std::size_t>();
  l.weights.data = j.at("weights").get<std::vector<double>>();
  l.bias = j.at("bias").get<std::vector<double>>();
  const auto act = j.at("activation").get<std::string>();
  if (act == "relu") {
    l.activation = Activation::ReLU;
  } else if (act == "identity") {
    l.activation = Activation::Identity;
  } else {
    throw ParseError("unknown activation '" + act + "'");
  }
  if (l.weights.data.size() != l.weights.rows * l.weights.cols) throw ParseError("layer weights do not match rows x cols");
  return l;
}

json stack_to_json(const LayerStack& s) {
  json arr = json::array();
  for (const auto& l : s) arr.push_back(layer_to_json(l));
  return arr;
}

LayerStack stack_from_json(const json& arr) {
  LayerStack s;
  for (const auto& j : arr) s.push_back(layer_from_json(j));
  return s;
}

}  // namespace

json model_to_json(const AbstainNetwork& net) {
  json doc;
  doc["config"] = {{"format", 1},
                   {"input_dim", net.input_dim},
                   {"body_layers", net.body.size()},
                   {"pred_layers", net.pred_head.size()}};
  json layers = stack_to_json(net.body);
  for (const auto& l : net.pred_head) layers.push_back(layer_to_json(l));
  doc["layers"] = std::move(layers);
  if (const auto* scalar = std::get_if<ScalarRho>(&net.rej_mode)) {
    doc["rej_mode"] = {{"kind", "scalar"}, {"raw_rho", scalar->raw_rho}};
  } else {
    doc["rej_mode"] = {{"kind", "instance"}, {"layers", stack_to_json(std::get<InstanceRho>(net.rej_mode).layers)}};
  }
  doc["aux_head"] = net.aux_head ? stack_to_json(*net.aux_head) : json(nullptr);
  return doc;
}

AbstainNetwork model_from_json(const json& doc) {
  try {
    AbstainNetwork net;
    const auto& cfg = doc.at("config");
    if (cfg.at("format").get<int>() != 1) throw ParseError("unsupported model format");
    net.input_dim = cfg.at("input_dim").get<std::size_t>();
    const auto body_layers = cfg.at("body_layers").get<std::size_t>();
    const auto pred_layers = cfg.at("pred_layers").get<std::size_t>();
    auto layers = stack_from_json(doc.at("layers"));
    if (layers.size() != body_layers + pred_layers) throw ParseError("layer count does not match config");
    net.body.assign(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(body_layers));
    net.pred_head.assign(layers.begin() + static_cast<std::ptrdiff_t>(body_layers), layers.end());
    const auto& rej = doc.at("rej_mode");
    const auto kind = rej.at("kind").get<std::string>();
    if (kind == "scalar") {
      net.rej_mode = ScalarRho{rej.at("raw_rho").get<double>()};
    } else if (kind == "instance") {
      net.rej_mode = InstanceRho{stack_from_json(rej.at("layers"))};
    } else {
      throw ParseError("unknown rejection mode '" + kind + "'");
    }
    if (doc.contains("aux_head") && !doc.at("aux_head").is_null()) net.aux_head = stack_from_json(doc.at("aux_head"));
    validate(net);
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("inconsistent model document: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const AbstainNetwork& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model_to_json(net).dump(1) << '\n';
}

AbstainNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace abstain
