# Copyright 2026 The ccmppi Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Covariance-controlled MPPI for a kinematic bicycle model."""

from ._ccmppi import (
    BicycleParams,
    ConfigError,
    DomainError,
    InfeasibleError,
    RunRow,
    ScenarioConfig,
    Track,
    ValidationError,
    __version__,
    compute_weights,
    effective_sample_size,
    jacobians,
    linearize,
    load_config,
    open_loop_terminal_covariance,
    parse_config,
    parse_range,
    receding_horizon_shift,
    rollout,
    rows_from_csv,
    rows_to_csv,
    run_grid,
    run_scenario,
    solve_gain,
    step,
    summarize,
    terminal_covariance,
    weighted_mean,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
