// Copyright 2026 The ccmppi Authors
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

#ifndef CCMPPI_PARALLEL_HPP_
#define CCMPPI_PARALLEL_HPP_

#include <functional>

namespace ccmppi {

// Runs fn(i) for i in [0, count) on up to `workers` threads using a static
// partition. The first exception (lowest index) is rethrown on the caller.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

// Number of hardware threads, at least 1.
int hardware_workers();

}  // namespace ccmppi

#endif  // CCMPPI_PARALLEL_HPP_
