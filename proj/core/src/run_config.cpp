#include "diunet/run_config.hpp"

#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "diunet/io_util.hpp"

namespace diunet {

namespace pt = boost::property_tree;

TrainConfig RunConfig::desk_train_defaults() {
  TrainConfig t;
  t.epochs = 60;
  t.batch_size = 16;
  t.base_lr = 1e-3;
  return t;
}

ModelConfig RunConfig::model_config(std::size_t height, std::size_t width,
                                    std::size_t channels) const {
  ModelConfig c;
  c.depth = depth;
  c.base_filters = base_filters;
  c.height = static_cast<int>(height);
  c.width = static_cast<int>(width);
  c.channels = static_cast<int>(channels);
  c.classes = 3;
  c.variant = variant;
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (dilations != std::vector<int>{1, 2, 3}) {
    throw std::invalid_argument("model.dilations: only the 1,2,3 dilation set is supported");
  }
  train.validate();
  if (target < 2) throw std::invalid_argument("data.target must be at least 2");
  if (phantoms.count < 1) throw std::invalid_argument("data.count must be positive");
  ModelConfig probe;
  probe.depth = depth;
  probe.base_filters = base_filters;
  probe.height = probe.width = static_cast<int>(target);
  probe.variant = variant;
  probe.validate();
}

namespace {

template <typename V>
V convert(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  V value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw std::invalid_argument(key + ": cannot parse '" + text + "'");
  }
  return value;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(convert<int>(key, item));
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }

  RunConfig cfg;
  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  const std::map<std::string, std::map<std::string, Setter>> schema = {
      {"model",
       {{"depth", [&](auto& k, auto& v) { cfg.depth = convert<int>(k, v); }},
        {"base_filters", [&](auto& k, auto& v) { cfg.base_filters = convert<int>(k, v); }},
        {"variant", [&](auto&, auto& v) { cfg.variant = parse_variant(v); }},
        {"dilations", [&](auto& k, auto& v) { cfg.dilations = parse_int_list(k, v); }}}},
      {"train",
       {{"epochs", [&](auto& k, auto& v) { cfg.train.epochs = convert<int>(k, v); }},
        {"batch", [&](auto& k, auto& v) { cfg.train.batch_size = convert<int>(k, v); }},
        {"lr", [&](auto& k, auto& v) { cfg.train.base_lr = convert<double>(k, v); }},
        {"gamma", [&](auto& k, auto& v) { cfg.train.gamma = convert<double>(k, v); }},
        {"decay_period", [&](auto& k, auto& v) { cfg.train.decay_period = convert<int>(k, v); }},
        {"seed", [&](auto& k, auto& v) { cfg.train.seed = convert<std::uint64_t>(k, v); }},
        {"k", [&](auto& k, auto& v) { cfg.train.folds = convert<int>(k, v); }},
        {"threshold", [&](auto& k, auto& v) { cfg.train.threshold = convert<double>(k, v); }}}},
      {"data",
       {{"container", [&](auto&, auto& v) { cfg.container = v; }},
        {"count", [&](auto& k, auto& v) { cfg.phantoms.count = convert<std::size_t>(k, v); }},
        {"size", [&](auto& k, auto& v) { cfg.phantoms.size = convert<std::size_t>(k, v); }},
        {"noise", [&](auto& k, auto& v) { cfg.phantoms.noise = convert<double>(k, v); }},
        {"target", [&](auto& k, auto& v) { cfg.target = convert<std::size_t>(k, v); }}}},
      {"output", {{"dir", [&](auto&, auto& v) { cfg.output_dir = v; }}}},
  };

  for (const auto& [section, body] : tree) {
    auto sit = schema.find(section);
    if (sit == schema.end()) {
      if (body.empty()) throw std::invalid_argument("config: key '" + section + "' outside a section");
      throw std::invalid_argument("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      auto kit = sit->second.find(key);
      if (kit == sit->second.end()) {
        throw std::invalid_argument("config: unknown key '" + key + "' in [" + section + "]");
      }
      kit->second(section + "." + key, node.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_run_config(std::string(bytes.begin(), bytes.end()));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace diunet
