#pragma once

// Checkpoint layout: a directory holding manifest.txt (UTF-8 "key = value"
// lines, format_version = 1, one tensor.<name> entry per tensor) plus one
// .mbt file per tensor. The .mbt payload is magic "MBT1", u32 LE rank, the
// dims as u32 LE, then row-major f32 LE values; save -> load -> save is
// byte-identical.

#include <map>
#include <string>
#include <vector>

#include "wavesr/common.hpp"

namespace wavesr {

struct TensorBlob {
  Shape shape;
  std::vector<float> values;
};

struct CheckpointData {
  std::map<std::string, std::string> fields;   // manifest key/values
  std::map<std::string, TensorBlob> tensors;   // by parameter name
};

void write_mbt(const std::string& path, const Shape& shape, const std::vector<float>& values);
TensorBlob read_mbt(const std::string& path);

// writes manifest + tensors; adds format_version and a content-hash
// checkpoint_id field
void save_checkpoint(const std::string& dir, CheckpointData data);
CheckpointData load_checkpoint(const std::string& dir);

// fnv1a over all tensor payload bytes in name order
std::string checkpoint_content_id(const CheckpointData& data);

}  // namespace wavesr
