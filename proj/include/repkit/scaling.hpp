// Copyright 2026 The RepKit Authors. All Rights Reserved.
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

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "repkit/blocks.hpp"

namespace repkit {

// Channel widths round to the nearest multiple of 8 (minimum 8, halves
// round away from zero).
int round_channels(double width);

struct TransitionDrift {
    int in_before = 0, in_after = 0;    // concat width feeding the transition
    int out_before = 0, out_after = 0;  // transition output width
    double ratio_before = 0.0, ratio_after = 0.0;  // out / in
    bool flagged = false;  // ratio moved by more than one rounding granule
};

struct DriftReport {
    std::vector<TransitionDrift> transitions;
    bool any_flagged() const;
};

// Derived widths for one scaled block. Depth scaling changes the concat
// width feeding the transition; the width factor that exactly preserves
// the transition in/out ratio is the induced factor
// (2 + new_depth) / (2 + old_depth). The plan carries both the explicit
// factor actually applied to the transition and the induced one, plus
// the ratio bookkeeping, so the two policies can be compared.
struct ScalingPlan {
    double depth_factor = 1.0;
    double width_factor = 1.0;

    int old_depth = 0, new_depth = 0;
    int old_branch_width = 0, new_branch_width = 0;
    int old_concat = 0, new_concat = 0;
    int old_transition = 0, new_transition = 0;

    double induced_width_factor = 1.0;
    int induced_transition = 0;  // round_channels(induced * old_transition)

    double old_ratio = 0.0;      // old_transition / old_concat
    double new_ratio = 0.0;      // new_transition / new_concat
    double induced_ratio = 0.0;  // induced_transition / new_concat

    DriftReport drift;
};

// Compound scaling for concatenation-based blocks: depth_factor scales
// the unit stack (max(1, round(alpha * d))), width_factor scales the
// transition output, branch widths stay fixed, and the concat width is
// recomputed from the new depth.
std::pair<ELANConfig, ScalingPlan> compound_scale(const ELANConfig& cfg, double depth_factor,
                                                  double width_factor);
std::pair<EELANConfig, ScalingPlan> compound_scale(const EELANConfig& cfg, double depth_factor,
                                                   double width_factor);

enum class ScaleMode { compound, width_only, depth_only };

// Single-factor baselines: width_only scales every width (stems, units,
// transition) and leaves depth alone; depth_only scales the stack and
// nothing else. Both report transition drift.
std::pair<ELANConfig, DriftReport> naive_scale(const ELANConfig& cfg, ScaleMode mode,
                                               double factor);

struct ScalingComparisonRow {
    std::string label;
    int64_t value_base = 0;
    int64_t value_scaled = 0;
};

struct ScalingComparison {
    std::vector<ScalingComparisonRow> rows;
    double ratio_base = 0.0;    // transition out/in
    double ratio_scaled = 0.0;
    std::string to_text() const;
};

// Builds both configs and compares parameter counts, MACs and channel
// bookkeeping side by side.
ScalingComparison scaling_report(const ELANConfig& base, const ELANConfig& scaled, int input_h,
                                 int input_w);
ScalingComparison scaling_report(const EELANConfig& base, const EELANConfig& scaled,
                                 int input_h, int input_w);

std::string to_string(ScaleMode m);

}  // namespace repkit
