// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "fedtrace/model.hpp"

namespace fedtrace {

// Binary little-endian checkpoint: magic "FTCK", version, the model shape,
// then each tensor as (name, rows, cols, raw doubles). Round trips bit-exactly.
void save_checkpoint(const TinyModel& model, const std::filesystem::path& path);
TinyModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fedtrace
