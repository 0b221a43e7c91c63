#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bctn/params.hpp"

namespace bctn {

// Binary checkpoint:
//   magic "BCTN1" (5 bytes)
//   stage (1 byte)
//   config length (u32 LE) + config JSON (UTF-8)
//   records, sorted by name:
//     name_len u32 LE | name bytes | rank u32 LE | dims u32 LE each | f32 LE values
struct NamedTensorRecord {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;
};

struct CheckpointFile {
  uint8_t stage = 1;
  std::string config_json;
  std::vector<NamedTensorRecord> tensors;  // sorted by name on save
};

void save_checkpoint_file(const CheckpointFile& ck, const std::string& path);
CheckpointFile load_checkpoint_file(const std::string& path);

// Bridges to the parameter store. Trainability is not serialized; the
// caller decides which names are trainable when rebuilding.
CheckpointFile checkpoint_from_store(const ParameterStore<float>& store, uint8_t stage,
                                     std::string config_json);
ParameterStore<float> store_from_checkpoint(const CheckpointFile& ck);

}  // namespace bctn
