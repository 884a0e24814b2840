// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ide/nn.hpp"
#include "ide/worldsim.hpp"

namespace ide {

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

constexpr std::uint32_t kCheckpointVersion = 1;

/// "IDECKPT1", u32 version, u32 count, then per tensor: u32 name length, name
/// bytes, u8 dtype (1 = f32), u32 rank, u32 extents, f32 payload. A trailing
/// CRC32 covers every byte after the version field. All integers and floats
/// are little-endian.
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
// Scalar stored as a [2] tensor (float head + float remainder) so doubles
// such as beta_min survive the f32 payload. Throws CheckpointError when absent.
double meta_value(const std::vector<NamedTensor>& tensors, const std::string& name);
NamedTensor meta_tensor(const std::string& name, double value);

// Every store entry, in insertion order.
template <typename S>
std::vector<NamedTensor> export_params(const ParamStore<S>& store);
// Copies values for every store entry; names and shapes must match.
template <typename S>
void import_params(ParamStore<S>& store, const std::vector<NamedTensor>& tensors);

}  // namespace ide
