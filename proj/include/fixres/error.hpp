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

#ifndef FIXRES_ERROR_HPP_
#define FIXRES_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace fixres {

/** Base class for all library errors. */
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/** Tensor shape or dimension contract violation. */
class ShapeError : public Error {
public:
  using Error::Error;
};

/** Invalid argument, config value, or spec violation. */
class ConfigError : public Error {
public:
  using Error::Error;
};

/** Autodiff graph misuse (non-scalar loss, stale graph, missing grad). */
class GraphError : public Error {
public:
  using Error::Error;
};

/** Non-finite values where finite math is required (NaN loss etc.). */
class NumericError : public Error {
public:
  using Error::Error;
};

/** File format or I/O failure (bad magic, truncation, overflow). */
class IoError : public Error {
public:
  using Error::Error;
};

/** Evaluation-protocol hygiene violation (e.g. test_B read twice). */
class ProtocolError : public Error {
public:
  using Error::Error;
};

}  // namespace fixres

#endif  // FIXRES_ERROR_HPP_
