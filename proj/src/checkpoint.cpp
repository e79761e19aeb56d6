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

#include "fixres/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fixres/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "FXCK serialization writes raw f32, assumes a little-endian host");

namespace fixres {

namespace {

void write_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& is, const char* field) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) {
    throw IoError(std::string("checkpoint read: truncated while reading ") + field);
  }
  return v;
}

}  // namespace

void write_fxck(const std::string& path, const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint write: cannot open " + path);
  os.write("FXCK", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    uint64_t numel = 1;
    for (int64_t d : a.dims) numel *= static_cast<uint64_t>(d);
    if (numel != a.values.size()) {
      throw ShapeError("checkpoint write: '" + a.name + "' dims need " +
                       std::to_string(numel) + " values, have " +
                       std::to_string(a.values.size()));
    }
    write_u32(os, static_cast<uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_u32(os, static_cast<uint32_t>(a.dims.size()));
    for (int64_t d : a.dims) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(a.values.data()),
             static_cast<std::streamsize>(a.values.size() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint write: failed writing " + path);
}

std::vector<NamedArray> read_fxck(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint read: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("checkpoint read: truncated magic in " + path);
  if (std::memcmp(magic, "FXCK", 4) != 0) {
    throw IoError("checkpoint read: bad magic in " + path + " (expected FXCK)");
  }
  const uint32_t version = read_u32(is, "version");
  if (version != 1) {
    throw IoError("checkpoint read: unsupported version " + std::to_string(version));
  }
  const uint32_t count = read_u32(is, "tensor count");
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const uint32_t name_len = read_u32(is, "name length");
    if (name_len > 4096) {
      throw IoError("checkpoint read: dimension overflow, name length " +
                    std::to_string(name_len));
    }
    a.name.resize(name_len);
    if (!is.read(a.name.data(), name_len)) {
      throw IoError("checkpoint read: truncated name at tensor " + std::to_string(i));
    }
    const uint32_t rank = read_u32(is, "rank");
    if (rank > 8) {
      throw IoError("checkpoint read: dimension overflow, rank " + std::to_string(rank) +
                    " on '" + a.name + "'");
    }
    uint64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t d = read_u32(is, "dim");
      if (d == 0) throw IoError("checkpoint read: zero dim on '" + a.name + "'");
      a.dims.push_back(static_cast<int64_t>(d));
      numel *= d;
      if (numel > (1ull << 32)) {
        throw IoError("checkpoint read: dimension overflow on '" + a.name + "'");
      }
    }
    a.values.resize(numel);
    if (!is.read(reinterpret_cast<char*>(a.values.data()),
                 static_cast<std::streamsize>(numel * sizeof(float)))) {
      throw IoError("checkpoint read: truncated data on '" + a.name + "', expected " +
                    std::to_string(numel * sizeof(float)) + " bytes, got " +
                    std::to_string(is.gcount()));
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

}  // namespace fixres
