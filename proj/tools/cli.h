// Copyright 2026 The cmfront Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMFRONT_TOOLS_CLI_H_
#define CMFRONT_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace cmfront::cli {

// Runs one command line (argv[0] is the program name) and returns the exit
// code: 0 success, 1 usage, 2 data, 3 internal.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace cmfront::cli

#endif  // CMFRONT_TOOLS_CLI_H_
