#include "tgcn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace tgcn {

namespace {

std::string trim(std::string s) {
  auto blank = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), blank));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), blank).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + key + "': expected a boolean, got '" + value + "'");
}

std::string exact(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// "6:2:2", "7,1,2" or "0.7:0.1:0.2"; integer parts are normalised.
SplitRatios parse_split(const std::string& key, const std::string& value) {
  std::string v = value;
  std::replace(v.begin(), v.end(), ',', ':');
  double parts[3];
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? v.find(':', start) : v.size();
    if (end == std::string::npos) throw ConfigError("config '" + key + "': expected three ratios, got '" + value + "'");
    parts[i] = parse_number<double>(key, trim(v.substr(start, end - start)));
    start = end + 1;
  }
  const double total = parts[0] + parts[1] + parts[2];
  if (!(total > 0)) throw ConfigError("config '" + key + "': ratios must be positive");
  return {parts[0] / total, parts[1] / total, parts[2] / total};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size < 1 || epochs < 0 || patience < 1) throw ConfigError("batch_size and patience must be positive");
  if (micro_batch < 0) throw ConfigError("micro_batch must be non-negative");
  if (!(mask_eps >= 0)) throw ConfigError("mask_eps must be non-negative");
  if (int(no_adv) + int(seq_only) + int(graph_only) > 1)
    throw ConfigError("no_adv, seq_only and graph_only are mutually exclusive");
  if (target_channel != 0) throw ConfigError("the prediction target is feature channel 0");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout must lie in [0, 1)");
  adv_config().validate();
  model_config(1, 1).validate();
}

void TrainConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = trim(raw_value);
  if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "batch_size" || key == "batch") batch_size = parse_number<Index>(key, value);
  else if (key == "epochs") epochs = parse_number<Index>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "beta") beta = parse_number<double>(key, value);
  else if (key == "de" || key == "embed_dim") embed_dim = parse_number<Index>(key, value);
  else if (key == "dropout" || key == "dropout_rate") dropout_rate = parse_number<double>(key, value);
  else if (key == "input_steps" || key == "t") input_steps = parse_number<Index>(key, value);
  else if (key == "horizon" || key == "h") horizon = parse_number<Index>(key, value);
  else if (key == "hidden") hidden = parse_number<Index>(key, value);
  else if (key == "gru_layers") gru_layers = parse_number<Index>(key, value);
  else if (key == "gcn_layers") gcn_layers = parse_number<Index>(key, value);
  else if (key == "delta1") delta1 = parse_combine(value);
  else if (key == "delta2") delta2 = parse_combine(value);
  else if (key == "variant") {
    GraphGenConfig g = with_variant(GraphGenConfig{}, parse_variant(value));
    delta1 = g.delta1;
    delta2 = g.delta2;
  } else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "lambda1") lambda1 = parse_number<double>(key, value);
  else if (key == "lambda2") lambda2 = parse_number<double>(key, value);
  else if (key == "lambda3") lambda3 = parse_number<double>(key, value);
  else if (key == "layer_norm") layer_norm = parse_bool(key, value);
  else if (key == "static_graph") static_graph = parse_bool(key, value);
  else if (key == "no_adv") no_adv = parse_bool(key, value);
  else if (key == "seq_only") seq_only = parse_bool(key, value);
  else if (key == "graph_only") graph_only = parse_bool(key, value);
  else if (key == "patience") patience = parse_number<Index>(key, value);
  else if (key == "split") split = parse_split(key, value);
  else if (key == "mask_eps") mask_eps = parse_number<double>(key, value);
  else if (key == "target_channel") target_channel = parse_number<Index>(key, value);
  else if (key == "micro_batch") micro_batch = parse_number<Index>(key, value);
  else if (key == "leaky_slope") leaky_slope = parse_number<double>(key, value);
  else if (key == "profile" || key == "dataset") apply_profile(value);
  else throw ConfigError("unknown config key '" + raw_key + "'");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  return {{"lr", exact(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"seed", std::to_string(seed)},
          {"alpha", exact(alpha)},
          {"beta", exact(beta)},
          {"embed_dim", std::to_string(embed_dim)},
          {"dropout_rate", exact(dropout_rate)},
          {"input_steps", std::to_string(input_steps)},
          {"horizon", std::to_string(horizon)},
          {"hidden", std::to_string(hidden)},
          {"gru_layers", std::to_string(gru_layers)},
          {"gcn_layers", std::to_string(gcn_layers)},
          {"delta1", std::string(to_string(delta1))},
          {"delta2", std::string(to_string(delta2))},
          {"lambda", exact(lambda)},
          {"lambda1", exact(lambda1)},
          {"lambda2", exact(lambda2)},
          {"lambda3", exact(lambda3)},
          {"layer_norm", flag(layer_norm)},
          {"static_graph", flag(static_graph)},
          {"no_adv", flag(no_adv)},
          {"seq_only", flag(seq_only)},
          {"graph_only", flag(graph_only)},
          {"patience", std::to_string(patience)},
          {"split", exact(split.train) + ":" + exact(split.val) + ":" + exact(split.test)},
          {"mask_eps", exact(mask_eps)},
          {"target_channel", std::to_string(target_channel)},
          {"micro_batch", std::to_string(micro_batch)},
          {"leaky_slope", exact(leaky_slope)}};
}

void TrainConfig::apply_profile(const std::string& name) {
  std::string key = lower(trim(name));
  key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return c == '-' || c == '_'; }), key.end());
  const std::map<std::string, std::pair<Index, SplitRatios>> profiles = {
      {"pems03", {4, {0.6, 0.2, 0.2}}},  {"pems04", {6, {0.6, 0.2, 0.2}}},
      {"pems07", {10, {0.6, 0.2, 0.2}}}, {"pems08", {4, {0.6, 0.2, 0.2}}},
      {"metrla", {10, {0.7, 0.1, 0.2}}}, {"pemsbay", {10, {0.7, 0.1, 0.2}}}};
  auto it = profiles.find(key);
  if (it == profiles.end()) throw ConfigError("unknown dataset profile '" + name + "'");
  embed_dim = it->second.first;
  split = it->second.second;
  mask_eps = (key == "metrla" || key == "pemsbay") ? 0.1 : 1.0;
}

ModelConfig TrainConfig::model_config(Index nodes, Index features) const {
  ModelConfig m;
  m.nodes = nodes;
  m.features = features;
  m.outputs = 1;
  m.input_steps = input_steps;
  m.horizon = horizon;
  m.hidden = hidden;
  m.gru_layers = gru_layers;
  m.gcn_layers = gcn_layers;
  m.embed_dim = embed_dim;
  m.static_graph = static_graph;
  m.graph.delta1 = delta1;
  m.graph.delta2 = delta2;
  m.graph.lambda = lambda;
  m.graph.lambda1 = lambda1;
  m.graph.lambda2 = lambda2;
  m.graph.lambda3 = lambda3;
  m.graph.dropout_rate = dropout_rate;
  m.graph.layer_norm_enabled = layer_norm;
  return m;
}

AdvConfig TrainConfig::adv_config() const {
  AdvConfig a;
  a.alpha = (no_adv || graph_only) ? 0.0 : alpha;
  a.beta = (no_adv || seq_only) ? 0.0 : beta;
  a.target_channel = target_channel;
  a.leaky_slope = leaky_slope;
  return a;
}

Index TrainConfig::micro_batch_for(Index nodes) const {
  if (micro_batch > 0) return std::min(micro_batch, batch_size);
  // Keep one forward pass at about 4096 node-windows.
  return std::clamp<Index>(4096 / std::max<Index>(nodes, 1), 1, batch_size);
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  std::map<std::string, std::string> kv;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  // A profile sets defaults that explicit keys may then override.
  for (const char* key : {"profile", "dataset"})
    if (auto it = kv.find(key); it != kv.end()) cfg.apply_profile(it->second);
  for (const auto& [k, v] : kv)
    if (k != "profile" && k != "dataset") cfg.set(k, v);
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) { return from_map(read_key_values(path)); }

}  // namespace tgcn
