#include "tgcn/generator.hpp"

#include <charconv>

namespace tgcn {

void ModelConfig::validate() const {
  if (nodes < 1) throw ConfigError("model: node count must be positive");
  if (features < 1 || outputs < 1 || input_steps < 1 || horizon < 1 || hidden < 1 || embed_dim < 1)
    throw ConfigError("model: all extents must be positive");
  if (gru_layers < 1 || gcn_layers < 1) throw ConfigError("model: need at least one GRU and one GCN layer");
  if (hidden < 2) throw ConfigError("model: hidden width must be at least 2 for the head layer norm");
  graph.validate();
}

namespace {

Index parse_index(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  Index v = 0;
  auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || ptr != it->second.data() + it->second.size())
    throw FormatError("checkpoint metadata '" + key + "' is not an integer: " + it->second);
  return v;
}

double parse_double(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint metadata '" + key + "' is not a number: " + it->second);
  }
}

std::string exact(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_meta() const {
  return {{"model.nodes", std::to_string(nodes)},
          {"model.features", std::to_string(features)},
          {"model.outputs", std::to_string(outputs)},
          {"model.input_steps", std::to_string(input_steps)},
          {"model.horizon", std::to_string(horizon)},
          {"model.hidden", std::to_string(hidden)},
          {"model.gru_layers", std::to_string(gru_layers)},
          {"model.gcn_layers", std::to_string(gcn_layers)},
          {"model.embed_dim", std::to_string(embed_dim)},
          {"model.static_graph", static_graph ? "1" : "0"},
          {"graph.delta1", std::string(to_string(graph.delta1))},
          {"graph.delta2", std::string(to_string(graph.delta2))},
          {"graph.lambda", exact(graph.lambda)},
          {"graph.lambda1", exact(graph.lambda1)},
          {"graph.lambda2", exact(graph.lambda2)},
          {"graph.lambda3", exact(graph.lambda3)},
          {"graph.dropout_rate", exact(graph.dropout_rate)},
          {"graph.layer_norm", graph.layer_norm_enabled ? "1" : "0"}};
}

ModelConfig ModelConfig::from_meta(const std::map<std::string, std::string>& meta) {
  ModelConfig cfg;
  cfg.nodes = parse_index(meta, "model.nodes");
  cfg.features = parse_index(meta, "model.features");
  cfg.outputs = parse_index(meta, "model.outputs");
  cfg.input_steps = parse_index(meta, "model.input_steps");
  cfg.horizon = parse_index(meta, "model.horizon");
  cfg.hidden = parse_index(meta, "model.hidden");
  cfg.gru_layers = parse_index(meta, "model.gru_layers");
  cfg.gcn_layers = parse_index(meta, "model.gcn_layers");
  cfg.embed_dim = parse_index(meta, "model.embed_dim");
  cfg.static_graph = parse_index(meta, "model.static_graph") != 0;
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
    return it->second;
  };
  cfg.graph.delta1 = parse_combine(get("graph.delta1"));
  cfg.graph.delta2 = parse_combine(get("graph.delta2"));
  cfg.graph.lambda = parse_double(meta, "graph.lambda");
  cfg.graph.lambda1 = parse_double(meta, "graph.lambda1");
  cfg.graph.lambda2 = parse_double(meta, "graph.lambda2");
  cfg.graph.lambda3 = parse_double(meta, "graph.lambda3");
  cfg.graph.dropout_rate = parse_double(meta, "graph.dropout_rate");
  cfg.graph.layer_norm_enabled = parse_index(meta, "graph.layer_norm") != 0;
  cfg.validate();
  return cfg;
}

}  // namespace tgcn
