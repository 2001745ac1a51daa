// Copyright 2026 The GRCNN Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary checkpoints. All integers and floats are little-endian.
//
//   "GRCLCKPT"                      8-byte magic
//   u32 version                     currently 1
//   u64 config digest               FNV-1a of the model description below
//   u64 epoch                       completed epochs
//   u32 len, bytes                  model description (key=value lines)
//   u32 count, (u32 len, bytes)*    frozen layer groups
//   "PARM" u32 count, record*       record: u32 name_len, name, u8 kind
//                                   (0 parameter, 1 running statistic),
//                                   u32 rank, u64 dims[rank], u64 count,
//                                   f64 values[count]
//   "OPTM" f64 lr, f64 momentum, f64 weight_decay, u32 count,
//          (u32 name_len, name, u64 count, f64 values[count])*
//   "RNGS" u32 len, bytes           textual mt19937_64 state
//   "END."

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "grcnn/network.hpp"
#include "grcnn/trainer.hpp"

namespace grcnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Canonical text form of the model topology; parse_model_description
/// inverts it.
std::string describe_model(const GrcnnConfig& config);
GrcnnConfig parse_model_description(const std::string& text);
std::uint64_t config_digest(const GrcnnConfig& config);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Restores into `state`, whose network fixes the expected layout. The file
/// is parsed and checked completely before anything is assigned, so on any
/// error `state` is left untouched.
void load_checkpoint(const std::filesystem::path& path, TrainState& state);

/// Rebuilds the network described by the file and restores into it.
TrainState load_checkpoint(const std::filesystem::path& path);

/// Model topology stored in a checkpoint header.
GrcnnConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace grcnn
