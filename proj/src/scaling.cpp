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

#include "repkit/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "repkit/error.hpp"

namespace repkit {

namespace {
constexpr int kGranule = 8;
}

int round_channels(double width) {
    const long long units = std::llround(width / kGranule);
    return int(std::max(1LL, units)) * kGranule;
}

bool DriftReport::any_flagged() const {
    for (const TransitionDrift& t : transitions) {
        if (t.flagged) return true;
    }
    return false;
}

std::string to_string(ScaleMode m) {
    switch (m) {
        case ScaleMode::compound: return "compound";
        case ScaleMode::width_only: return "width-only";
        case ScaleMode::depth_only: return "depth-only";
    }
    return "?";
}

namespace {

TransitionDrift drift_entry(int in_before, int out_before, int in_after, int out_after) {
    TransitionDrift d;
    d.in_before = in_before;
    d.in_after = in_after;
    d.out_before = out_before;
    d.out_after = out_after;
    d.ratio_before = double(out_before) / in_before;
    d.ratio_after = double(out_after) / in_after;
    // flagged when the new output width misses ratio preservation by more
    // than one rounding granule
    d.flagged = std::abs(double(out_after) - d.ratio_before * in_after) > double(kGranule);
    return d;
}

int scale_depth(int depth, double factor) {
    return std::max(1, int(std::llround(factor * depth)));
}

}  // namespace

std::pair<ELANConfig, ScalingPlan> compound_scale(const ELANConfig& cfg, double depth_factor,
                                                  double width_factor) {
    cfg.check();
    if (depth_factor <= 0.0 || width_factor <= 0.0) {
        fail_domain(strf("scaling factors must be positive (depth=%g, width=%g)", depth_factor,
                         width_factor));
    }

    ScalingPlan plan;
    plan.depth_factor = depth_factor;
    plan.width_factor = width_factor;
    plan.old_depth = cfg.stack_depth;
    plan.old_branch_width = cfg.branch_width;
    plan.old_concat = cfg.concat_width();
    plan.old_transition = cfg.transition_out;

    ELANConfig scaled = cfg;
    // depth scales inside the computational block; branch widths stay put
    scaled.stack_depth = (depth_factor == 1.0) ? cfg.stack_depth
                                               : scale_depth(cfg.stack_depth, depth_factor);
    // transition width takes the explicit factor
    scaled.transition_out = (width_factor == 1.0)
                                ? cfg.transition_out
                                : round_channels(width_factor * cfg.transition_out);

    plan.new_depth = scaled.stack_depth;
    plan.new_branch_width = scaled.branch_width;
    plan.new_concat = scaled.concat_width();
    plan.new_transition = scaled.transition_out;

    // the width change induced by depth scaling alone; applying it to the
    // transition preserves the in/out ratio exactly (before rounding)
    plan.induced_width_factor = double(plan.new_concat) / plan.old_concat;
    plan.induced_transition = round_channels(plan.induced_width_factor * plan.old_transition);

    plan.old_ratio = double(plan.old_transition) / plan.old_concat;
    plan.new_ratio = double(plan.new_transition) / plan.new_concat;
    plan.induced_ratio = double(plan.induced_transition) / plan.new_concat;

    plan.drift.transitions.push_back(drift_entry(plan.old_concat, plan.old_transition,
                                                 plan.new_concat, plan.new_transition));
    return {scaled, plan};
}

std::pair<EELANConfig, ScalingPlan> compound_scale(const EELANConfig& cfg, double depth_factor,
                                                   double width_factor) {
    cfg.check();
    auto [elan, plan] = compound_scale(cfg.elan, depth_factor, width_factor);
    EELANConfig scaled = cfg;
    scaled.elan = elan;
    scaled.check();
    return {scaled, plan};
}

std::pair<ELANConfig, DriftReport> naive_scale(const ELANConfig& cfg, ScaleMode mode,
                                               double factor) {
    cfg.check();
    if (factor <= 0.0) fail_domain(strf("scaling factor %g must be positive", factor));
    if (mode == ScaleMode::compound) {
        fail_domain("naive_scale handles width-only and depth-only modes");
    }

    ELANConfig scaled = cfg;
    if (factor != 1.0) {
        if (mode == ScaleMode::width_only) {
            scaled.branch_width = round_channels(factor * cfg.branch_width);
            scaled.transition_out = round_channels(factor * cfg.transition_out);
        } else {
            scaled.stack_depth = scale_depth(cfg.stack_depth, factor);
        }
    }

    DriftReport report;
    report.transitions.push_back(drift_entry(cfg.concat_width(), cfg.transition_out,
                                             scaled.concat_width(), scaled.transition_out));
    return {scaled, report};
}

std::string ScalingComparison::to_text() const {
    std::ostringstream os;
    os << strf("%-24s %14s %14s %10s\n", "quantity", "base", "scaled", "delta");
    for (const ScalingComparisonRow& row : rows) {
        os << strf("%-24s %14lld %14lld %+10lld\n", row.label.c_str(),
                   (long long)row.value_base, (long long)row.value_scaled,
                   (long long)(row.value_scaled - row.value_base));
    }
    os << strf("%-24s %14.4f %14.4f\n", "transition out/in", ratio_base, ratio_scaled);
    return os.str();
}

namespace {

ScalingComparison compare_graphs(const Graph& gb, const Graph& gs, const ELANConfig& base,
                                 const ELANConfig& scaled, int input_h, int input_w) {
    const ParamReport pb = count_params(gb);
    const ParamReport ps = count_params(gs);
    const FlopReport fb = count_flops(gb, input_h, input_w);
    const FlopReport fs = count_flops(gs, input_h, input_w);

    ScalingComparison cmp;
    cmp.rows.push_back({"params", pb.total, ps.total});
    cmp.rows.push_back({"macs", fb.total_macs, fs.total_macs});
    cmp.rows.push_back({"flops", fb.total_flops, fs.total_flops});
    cmp.rows.push_back({"stack depth", base.stack_depth, scaled.stack_depth});
    cmp.rows.push_back({"branch width", base.branch_width, scaled.branch_width});
    cmp.rows.push_back({"concat width", base.concat_width(), scaled.concat_width()});
    cmp.rows.push_back({"transition width", base.transition_out, scaled.transition_out});
    cmp.ratio_base = double(base.transition_out) / base.concat_width();
    cmp.ratio_scaled = double(scaled.transition_out) / scaled.concat_width();
    return cmp;
}

}  // namespace

ScalingComparison scaling_report(const ELANConfig& base, const ELANConfig& scaled, int input_h,
                                 int input_w) {
    return compare_graphs(build_elan(base), build_elan(scaled), base, scaled, input_h, input_w);
}

ScalingComparison scaling_report(const EELANConfig& base, const EELANConfig& scaled, int input_h,
                                 int input_w) {
    return compare_graphs(build_eelan(base), build_eelan(scaled), base.elan, scaled.elan,
                          input_h, input_w);
}

}  // namespace repkit
