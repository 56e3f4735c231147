#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/archive.hpp"
#include "gsavatar/core/nn.hpp"

namespace gsavatar {

inline void save_checkpoint(const std::string& path, const ParamStore& ps, const Config& cfg,
                            long step) {
  Archive ar;
  ar.meta["kind"] = "checkpoint";
  ar.meta["step"] = step;
  ar.meta["config"] = cfg.to_json();
  for (const auto& [name, v] : ps.items) ar.add_tensor("param/" + name, v->val);
  ar.save(path);
}

// Loads parameter values into an already-constructed store; shapes must match.
// Returns the step the checkpoint was taken at.
inline long load_checkpoint(const std::string& path, ParamStore& ps) {
  Archive ar = Archive::load(path);
  GS_CHECK(ar.meta.value("kind", std::string()) == "checkpoint",
           "checkpoint: not a checkpoint archive: " + path);
  for (auto& [name, v] : ps.items) {
    Tensor t = ar.get_tensor("param/" + name);
    GS_CHECK(t.shape == v->val.shape, "checkpoint: shape mismatch for " + name);
    v->val = std::move(t);
  }
  return ar.meta.value("step", 0L);
}

inline Config checkpoint_config(const std::string& path) {
  Archive ar = Archive::load(path);
  GS_CHECK(ar.meta.value("kind", std::string()) == "checkpoint",
           "checkpoint: not a checkpoint archive: " + path);
  Config cfg;
  cfg.from_json(ar.meta["config"]);
  return cfg;
}

}  // namespace gsavatar
