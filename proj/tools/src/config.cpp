#include "hetero_cli/config.hpp"

#include <algorithm>

#include "hetero/error.hpp"

namespace hetero::cli {
namespace {

const char* type_name(const Json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

bool compatible(const Json& def, const Json& value) {
  if (def.is_number()) return value.is_number();
  return def.type() == value.type();
}

}  // namespace

Json default_config() {
  return Json::parse(R"({
    "data": {
      "source": "synthetic",
      "counts": [700, 300],
      "test_counts": [],
      "distributions": "",
      "encoding": "one_hot",
      "seed": 1,
      "path": "",
      "test_path": "",
      "images": "",
      "labels": "",
      "test_images": "",
      "test_labels": "",
      "classes": [],
      "per_class": 0,
      "test_per_class": 0,
      "num_classes": 0,
      "error_rate": 0.0,
      "split_fraction": 0.8,
      "stratified": true
    },
    "train": {
      "learning_rate": 0.001,
      "batch_size": 64,
      "epochs": 10,
      "ridge": 0.001,
      "grad_tol": 1e-8,
      "newton_refine": true,
      "max_newton_iters": 100,
      "seed": 0
    },
    "influence": {
      "ridge_attribution": "objective",
      "memory_budget_mb": 1024
    },
    "purify": {
      "iterations": 20,
      "remove_per_iter": 10,
      "method": "loo_retrain",
      "warm_start": false,
      "stop_at_inflection": false,
      "seed": 0
    },
    "sweep": {
      "kind": "sd2",
      "total": 600,
      "grid_points": 11,
      "step": 100,
      "replicates": 5,
      "seed": 0,
      "rates": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    },
    "verify": {
      "n": [20, 30, 40],
      "s": [1, 2],
      "k": [1, 2],
      "seed": 0,
      "ridge": 1e-4,
      "grad_tol": 1e-12,
      "c_hat": 5.1,
      "corollary": true,
      "lemmas": true
    },
    "output": {
      "dir": ".",
      "formats": ["csv", "json"]
    }
  })");
}

Json parse_config(std::string_view text, const std::string& origin) {
  try {
    return Json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(origin + ":" + std::to_string(line) + ": syntax error: " + e.what());
  }
}

void merge_config(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError("config" + (path.empty() ? "" : " key '" + path + "'") + ": expected an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + here + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, here);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config: key '" + here + "' expects " + type_name(slot) + ", got " +
                        type_name(value));
    } else {
      slot = value;
    }
  }
}

void apply_override(Json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  // Build {"a": {"b": value}} from "a.b" and merge it, so the same checks apply.
  Json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
    Json wrap = Json::object();
    wrap[*it] = std::move(patch);
    patch = std::move(wrap);
  }
  merge_config(config, patch);
}

}  // namespace hetero::cli
