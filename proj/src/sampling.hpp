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

// Shared per-sample evaluation for MPPI and CC-MPPI. Both controllers go
// through the same arithmetic so a zero feedback gain reproduces MPPI
// bit for bit.

#ifndef CCMPPI_SRC_SAMPLING_HPP_
#define CCMPPI_SRC_SAMPLING_HPP_

#include <cstdint>

#include "ccmppi/covsteer.hpp"
#include "ccmppi/mppi.hpp"

namespace ccmppi::detail {

struct SampleFeedback {
  const FeedbackGain* gain = nullptr;
  const LtvModel* ltv = nullptr;
};

void evaluate_batch(const ConstVecRef& x0, const ControlSequence& mean,
                    const MppiParams& params, const CostModel& cost, const Dynamics& dynamics,
                    std::uint64_t seed, std::uint64_t iteration, const SampleFeedback* feedback,
                    SampleBatch& batch);

// Weights, weighted mean and diagnostics of an evaluated batch.
MppiIterationResult reduce_batch(SampleBatch batch, const MppiParams& params);

}  // namespace ccmppi::detail

#endif  // CCMPPI_SRC_SAMPLING_HPP_
