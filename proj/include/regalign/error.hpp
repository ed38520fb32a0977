// Copyright 2026 The RegionAlign Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace regalign {

/// Base of every error raised by the library. `is_io()` separates
/// filesystem/format failures from validation failures so the CLI can map
/// them onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  Error(const std::string& kind, const std::string& what, bool io = false)
      : std::runtime_error(kind + ": " + what), kind_(kind), io_(io) {}

  const std::string& kind() const noexcept { return kind_; }
  bool is_io() const noexcept { return io_; }

 private:
  std::string kind_;
  bool io_;
};

#define REGALIGN_DEFINE_ERROR(Name, io)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what = {}) : Error(#Name, what, io) {} \
  };

// numerics
REGALIGN_DEFINE_ERROR(ZeroVector, false)
REGALIGN_DEFINE_ERROR(ShapeMismatch, false)
REGALIGN_DEFINE_ERROR(NonPositiveTemperature, false)
REGALIGN_DEFINE_ERROR(NotADistribution, false)
// corpus
REGALIGN_DEFINE_ERROR(EmptyPool, false)
REGALIGN_DEFINE_ERROR(BadTemplate, false)
// scenes
REGALIGN_DEFINE_ERROR(LayoutFailure, false)
REGALIGN_DEFINE_ERROR(BadConfig, false)
REGALIGN_DEFINE_ERROR(CorruptFile, true)
// encoders
REGALIGN_DEFINE_ERROR(BadShape, false)
REGALIGN_DEFINE_ERROR(DegenerateBox, false)
REGALIGN_DEFINE_ERROR(CorruptCheckpoint, true)
// train / detect / eval
REGALIGN_DEFINE_ERROR(EmptyBatch, false)
REGALIGN_DEFINE_ERROR(NoBaseAnnotations, false)
REGALIGN_DEFINE_ERROR(NoGroundTruth, false)
REGALIGN_DEFINE_ERROR(UnknownCategory, false)
REGALIGN_DEFINE_ERROR(DigestMismatch, false)
// cli
REGALIGN_DEFINE_ERROR(UsageError, false)
REGALIGN_DEFINE_ERROR(IoError, true)

#undef REGALIGN_DEFINE_ERROR

}  // namespace regalign
