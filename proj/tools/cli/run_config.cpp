#include "cli/run_config.h"

#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "ldn/background_restorer.h"
#include "ldn/compositor.h"
#include "ldn/dataset_forge.h"
#include "ldn/digest.h"
#include "ldn/error.h"
#include "ldn/glyph_transfer.h"

namespace ldn::cli {

using nlohmann::json;

std::string section_of(const std::string& command) {
  if (command == "dataset build") return "dataset";
  if (command == "train-inpaint") return "inpaint";
  if (command == "train-glyph") return "glyph";
  if (command == "edit") return "edit";
  if (command == "eval") return "eval";
  throw UsageError("unknown command '" + command + "'");
}

namespace {

json build_defaults() {
  const forge::ForgeOptions forge;
  const inpaint::ArchConfig ia;
  const inpaint::TrainConfig it;
  const glyph::GlyphNetConfig ga;
  const glyph::OrnaNetConfig oa;
  const glyph::TrainConfig gt;
  const compose::EditOptions eo;
  json j;
  j["seed"] = std::uint64_t{0};
  j["out"] = "";
  j["dataset"] = {
      {"fonts", ""},
      {"size", forge.glyph_size},
      {"color", false},
      {"n_fonts", 0},
      {"margin", forge.margin},
      {"supersample", forge.supersample},
      {"threshold", forge.threshold},
      {"fixed_color", ""},
      {"backgrounds", 0},
      {"background_size", ia.input_size},
  };
  j["inpaint"] = {
      {"data", ""},
      {"steps", it.steps},
      {"batch_size", it.batch_size},
      {"lr", it.lr},
      {"disc_lr", it.disc_lr},
      {"lr_floor", it.lr_floor},
      {"lambda_rec", it.lambda_rec},
      {"lambda_adv", it.lambda_adv},
      {"fill", it.fill},
      {"checkpoint_every", it.checkpoint_every},
      {"input_size", ia.input_size},
      {"hole_size", ia.hole_size},
      {"latent_dim", ia.latent_dim},
      {"base_channels", ia.base_channels},
      {"max_channels", ia.max_channels},
      {"disc_channels", ia.disc_channels},
  };
  j["glyph"] = {
      {"data", ""},
      {"stage", "pretrain"},
      {"init", ""},
      {"steps", gt.steps},
      {"batch_size", gt.batch_size},
      {"lr", gt.lr},
      {"orna_lr", gt.orna_lr},
      {"disc_lr", gt.disc_lr},
      {"observed_min", gt.observed_min},
      {"observed_max", gt.observed_max},
      {"lambda_shape", gt.lambda_shape},
      {"lambda_color", gt.lambda_color},
      {"lambda_adv", gt.lambda_adv},
      {"color_slots", gt.color_slots},
      {"disc_channels", gt.disc_channels},
      {"base_channels", ga.base_channels},
      {"depth", ga.depth},
      {"latent_dim", ga.latent_dim},
      {"threshold", ga.threshold},
      {"orna_hidden", oa.hidden},
  };
  j["edit"] = {
      {"image", ""},
      {"box", ""},
      {"char_boxes", ""},
      {"source", ""},
      {"target", ""},
      {"ckpt_dir", ""},
      {"audit", ""},
      {"adapt_steps", eo.adapt_steps},
      {"adapt_lr", eo.adapt_lr},
      {"overflow_slack", eo.layout.overflow_slack},
  };
  j["eval"] = {
      {"pred", ""},
      {"ref", ""},
      {"mask", ""},
      {"threshold", 0.5},
  };
  return j;
}

json toml_to_json(const toml::node& node, const std::string& key) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) {
      const std::string name(k.str());
      j[name] = toml_to_json(v, key.empty() ? name : key + "." + name);
    }
    return j;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw UsageError("unsupported value type for config key '" + key + "'");
}

bool compatible(const json& def, const json& value) {
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_number_float()) return value.is_number();
  if (def.is_number_unsigned()) return value.is_number_unsigned() ||
                                       (value.is_number_integer() &&
                                        value.get<std::int64_t>() >= 0);
  if (def.is_number_integer()) return value.is_number_integer();
  return false;
}

}  // namespace

const json& default_config() {
  static const json defaults = build_defaults();
  return defaults;
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  auto parse_json = [&] {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError("config " + path.string() + ": " + e.what());
    }
  };
  if (path.extension() == ".json") return parse_json();
  try {
    return toml_to_json(toml::parse(text, path.string()), "");
  } catch (const toml::parse_error& e) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_json();
    throw UsageError("config " + path.string() + ": " +
                     std::string(e.description()));
  }
}

void merge_config(json& base, const json& overrides, const std::string& prefix) {
  if (!overrides.is_object()) {
    throw UsageError("config " + (prefix.empty() ? "root" : "'" + prefix + "'") +
                     " must be a table");
  }
  for (const auto& [key, value] : overrides.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw UsageError("unknown config key '" + name + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, name);
    } else if (!compatible(slot, value)) {
      throw UsageError("config key '" + name + "' expects a " +
                       std::string(slot.type_name()) + ", got " +
                       std::string(value.type_name()));
    } else if (slot.is_number_float()) {
      slot = value.get<double>();
    } else if (slot.is_number_unsigned()) {
      slot = value.get<std::uint64_t>();
    } else {
      slot = value;
    }
  }
}

json effective_config(const json& full, const std::string& command) {
  const std::string section = section_of(command);
  json j;
  j["command"] = command;
  j["seed"] = full.at("seed");
  j["out"] = full.at("out");
  j[section] = full.at(section);
  return j;
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

std::string dump_config(const json& config) { return config.dump(2) + "\n"; }

}  // namespace ldn::cli
