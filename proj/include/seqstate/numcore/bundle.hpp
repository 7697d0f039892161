#pragma once

// Flat binary parameter bundle.
//
// Layout (all integers little-endian, reals IEEE-754 binary64):
//   magic      4 bytes  "SQSB"
//   version    u32      1
//   tag_len    u32, then tag_len bytes of architecture tag (UTF-8)
//   count      u32      number of tensors
//   count x { name_len u32, name bytes, rows u64, cols u64 }
//   count x { rows*cols f64, row-major }   in declaration order
//
// A bundle written and read back is bit-identical.

#include <filesystem>
#include <string>
#include <vector>

#include "seqstate/numcore/layers.hpp"

namespace seqstate::numcore {

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Bundle {
  std::string arch_tag;
  std::vector<NamedTensor> tensors;
};

std::string encode_bundle(const Bundle& bundle);
Bundle decode_bundle(const std::string& bytes);

void save_bundle(const std::filesystem::path& path, const Bundle& bundle);
Bundle load_bundle(const std::filesystem::path& path);

Bundle bundle_from_params(const std::string& arch_tag, const ParamList& params);
// Copies bundle values into `params`; names, order, and shapes must match.
void load_params(const Bundle& bundle, const ParamList& params);

}  // namespace seqstate::numcore
