#include "bctn/config.hpp"

#include <fstream>

#include "bctn/errors.hpp"

namespace bctn {

nlohmann::json RunConfig::to_json() const {
  return {
      {"model",
       {{"h", model.h},
        {"enc_layers", model.enc_layers},
        {"dec_layers", model.dec_layers},
        {"heads", model.heads},
        {"J", model.J},
        {"max_len", model.max_len},
        {"dropout", model.dropout}}},
      {"fusion", {{"alpha", fusion.alpha}, {"beta", fusion.beta}}},
      {"train",
       {{"lr", train.lr},
        {"batch", train.batch},
        {"epochs", train.epochs},
        {"seed", train.seed},
        {"freeze_reverse", train.freeze_reverse}}},
      {"decode", {{"max_len", decode.max_len}, {"beam", decode.beam}}},
      {"ablate",
       {{"gate_enabled", ablate.gate_enabled}, {"reverse_enabled", ablate.reverse_enabled}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  auto get = [](const nlohmann::json& obj, const char* key, auto& out) {
    if (obj.contains(key)) out = obj[key].template get<std::decay_t<decltype(out)>>();
  };
  if (j.contains("model")) {
    const auto& m = j["model"];
    get(m, "h", c.model.h);
    get(m, "enc_layers", c.model.enc_layers);
    get(m, "dec_layers", c.model.dec_layers);
    get(m, "heads", c.model.heads);
    get(m, "J", c.model.J);
    get(m, "max_len", c.model.max_len);
    get(m, "dropout", c.model.dropout);
  }
  if (j.contains("fusion")) {
    get(j["fusion"], "alpha", c.fusion.alpha);
    get(j["fusion"], "beta", c.fusion.beta);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    get(t, "lr", c.train.lr);
    get(t, "batch", c.train.batch);
    get(t, "epochs", c.train.epochs);
    get(t, "seed", c.train.seed);
    get(t, "freeze_reverse", c.train.freeze_reverse);
  }
  if (j.contains("decode")) {
    get(j["decode"], "max_len", c.decode.max_len);
    get(j["decode"], "beam", c.decode.beam);
  }
  if (j.contains("ablate")) {
    get(j["ablate"], "gate_enabled", c.ablate.gate_enabled);
    get(j["ablate"], "reverse_enabled", c.ablate.reverse_enabled);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BctnError("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw BctnError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dotpos = assignment.find('.');
  if (eq == std::string::npos || dotpos == std::string::npos || dotpos > eq)
    throw UsageError("override must look like section.key=value: " + assignment);
  const std::string section = assignment.substr(0, dotpos);
  const std::string key = assignment.substr(dotpos + 1, eq - dotpos - 1);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json j = to_json();
  if (!j.contains(section) || !j[section].contains(key))
    throw UsageError("unknown config key: " + section + "." + key);
  nlohmann::json& slot = j[section][key];
  try {
    if (slot.is_boolean())
      slot = (value == "true" || value == "1");
    else if (slot.is_number_integer() || slot.is_number_unsigned())
      slot = static_cast<int64_t>(std::stoll(value));
    else if (slot.is_number_float())
      slot = std::stod(value);
    else
      slot = value;
  } catch (const std::exception&) {
    throw UsageError("bad value for " + section + "." + key + ": " + value);
  }
  *this = from_json(j);
}

}  // namespace bctn
