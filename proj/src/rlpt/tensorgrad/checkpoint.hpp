// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "rlpt/tensorgrad/params.hpp"

namespace rlpt::tg {

// Checkpoint file layout:
//   u32 little-endian header length
//   UTF-8 JSON header: tensor table (name, dims, byte offset) + meta
//   payload: little-endian float32 tensor data, in header order
//
// `meta_json` is an arbitrary JSON object string stored under "meta";
// loaders can validate it (e.g. network config hashes) before use.
void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const std::string& meta_json);

// Loads values into a fresh store (Adam state zeroed). Returns meta JSON.
std::string load_checkpoint(const std::string& path, ParamStore<float>& store);

// Reads only the meta object of a checkpoint.
std::string read_checkpoint_meta(const std::string& path);

// Writes via a temp file and renames, so readers never see partial files.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace rlpt::tg
