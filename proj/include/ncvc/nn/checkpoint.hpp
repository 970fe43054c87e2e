// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_NN_CHECKPOINT_HPP
#define NCVC_NN_CHECKPOINT_HPP

#include <map>
#include <string>

#include <json.hpp>

#include "ncvc/nn/autodiff.hpp"

namespace ncvc::nn {

// Checkpoint directory layout:
//   index.json             names, shapes, dtypes, step, config hash, config
//   a####.bin              one raw little-endian file per parameter (float32)
//   t####.bin              train-state arrays (float64): master copies of the
//                          parameter values plus Adam moments, present only
//                          when saved with train state
//
// Parameter files are the canonical interchange format; the f64 train-state
// arrays exist so a resumed run continues the exact trajectory.
struct CheckpointMeta {
  std::string model_kind;
  long step = 0;
  std::string config_hash;
  nlohmann::json config;
  // Free-form string state (RNG streams, data-dependent-init flags, ...).
  std::map<std::string, std::string> strings;
  bool has_train_state = false;
};

void save_checkpoint(const std::string& dir, const ParamStore& params,
                     const CheckpointMeta& meta, bool with_train_state);

// Fills an already-constructed store (shapes must match by name).
// When the checkpoint has train state and load_train_state is true, values
// come from the f64 master copies and Adam moments are restored; otherwise
// values come from the canonical f32 arrays.
CheckpointMeta load_checkpoint(const std::string& dir, ParamStore& params,
                               bool load_train_state);

// Reads only index.json.
CheckpointMeta peek_checkpoint(const std::string& dir);

// FNV-1a over the canonical JSON dump, hex-encoded.
std::string config_hash(const nlohmann::json& config);

}  // namespace ncvc::nn

#endif  // NCVC_NN_CHECKPOINT_HPP
