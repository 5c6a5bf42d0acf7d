// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stage checkpoints as JSON: every matrix with its shape, the label registry,
// memory, optimizer moments and the progress counters. Numbers are written in
// shortest round-trip form, so loading reproduces every double exactly.

#include <filesystem>
#include <string>
#include <string_view>

#include "hanet/trainer.hpp"

namespace hanet {

struct Checkpoint {
  TrainConfig config;
  StageState state;
  std::string benchmark_checksum;
  std::string manifest_id;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hanet
