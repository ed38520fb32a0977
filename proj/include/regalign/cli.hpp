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

#include <iosfwd>
#include <string>
#include <vector>

namespace regalign {

/// Runs one subcommand (gen-data, build-concepts, pretrain-image,
/// pretrain-region, zeroshot, finetune, eval, dump-vis). `args` excludes the
/// program name. Prints a one-line JSON summary to `out` and diagnostics to
/// `err`. Returns 0 on success, 1 on usage or validation errors, 2 on I/O
/// errors.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace regalign
