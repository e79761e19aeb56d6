// Copyright (c) 2026 FixRes Lab Contributors
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

#ifndef FIXRES_CHECKPOINT_HPP_
#define FIXRES_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace fixres {

/** One named f32 tensor inside an FXCK container. */
struct NamedArray {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> values;
};

/**
 * FXCK container: magic `FXCK`, u32 version (=1), u32 tensor count; per
 * tensor u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32
 * little-endian data. Entry order is preserved.
 */
void write_fxck(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_fxck(const std::string& path);

}  // namespace fixres

#endif  // FIXRES_CHECKPOINT_HPP_
