#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sase/module.hpp"

namespace sase {

// Container layout:
//   "SASE1"                      5 magic bytes (format version 1)
//   u64 manifest_length          little-endian
//   manifest                     JSON: {"tensors": [{name, shape, dtype,
//                                offset, bytes, kind}]}
//   data                         raw little-endian buffers; offsets are
//                                relative to the start of this section
// f64 tensors are stored as IEEE doubles, f32 tensors as IEEE floats.

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::f64;
  ParamKind kind = ParamKind::trainable;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

std::string encode_checkpoint(const ParamStore& store);
void save_checkpoint(const std::string& path, const ParamStore& store);

std::vector<CheckpointEntry> read_checkpoint_manifest(const std::string& blob);

// Copies every tensor of the container into the same-named entry of `store`.
// Names, shapes and dtypes must match exactly, in both directions.
void decode_checkpoint(const std::string& blob, const ParamStore& store);
void load_checkpoint(const std::string& path, const ParamStore& store);

}  // namespace sase
