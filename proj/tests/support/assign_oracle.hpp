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

// Brute-force re-derivation of the dynamic-k matching contract, written
// against the stated rules only: repeated linear scans instead of sorts,
// corner-form IoU, no shared code with the production matcher.

#include <cmath>
#include <limits>
#include <vector>

#include "repkit/assign.hpp"

namespace testsupport {

struct OracleMatch {
    std::vector<int> assigned_gt;                 // per candidate, -1 unassigned
    std::vector<std::vector<int>> selected_per_gt;
    std::vector<int> unmatched_gts;
};

inline double oracle_iou(const repkit::Box& a, const repkit::Box& b) {
    const double left = std::max(a.cx - a.w / 2, b.cx - b.w / 2);
    const double right = std::min(a.cx + a.w / 2, b.cx + b.w / 2);
    const double top = std::max(a.cy - a.h / 2, b.cy - b.h / 2);
    const double bottom = std::min(a.cy + a.h / 2, b.cy + b.h / 2);
    if (right <= left || bottom <= top) return 0.0;
    const double inter = (right - left) * (bottom - top);
    return inter / (a.w * a.h + b.w * b.h - inter);
}

inline OracleMatch oracle_dynamic_k(const std::vector<repkit::MatchCandidate>& candidates,
                                    const std::vector<repkit::GroundTruthBox>& gts,
                                    repkit::ImageSize image, const repkit::AssignConfig& cfg) {
    const int n_cand = int(candidates.size());
    const int n_gt = int(gts.size());
    OracleMatch result;
    result.assigned_gt.assign(size_t(n_cand), -1);
    result.selected_per_gt.assign(size_t(n_gt), {});

    auto eligible = [&](int c, int g) {
        const auto& ids = candidates[size_t(c)].eligible_gts;
        if (ids.empty()) return true;
        for (int id : ids) {
            if (id == g) return true;
        }
        return false;
    };

    std::vector<std::vector<double>> cost(size_t(n_gt), std::vector<double>(size_t(n_cand), 0));
    std::vector<std::vector<double>> overlap(size_t(n_gt),
                                             std::vector<double>(size_t(n_cand), 0));
    for (int g = 0; g < n_gt; ++g) {
        const repkit::Box gt_box{gts[size_t(g)].cx * image.w, gts[size_t(g)].cy * image.h,
                                 gts[size_t(g)].w * image.w, gts[size_t(g)].h * image.h};
        for (int c = 0; c < n_cand; ++c) {
            if (!eligible(c, g)) continue;
            const double o = oracle_iou(candidates[size_t(c)].box, gt_box);
            double cls = double(
                candidates[size_t(c)].class_scores[size_t(gts[size_t(g)].class_id)]);
            if (cls < 1e-12) cls = 1e-12;
            overlap[size_t(g)][size_t(c)] = o;
            cost[size_t(g)][size_t(c)] = -std::log(cls) +
                                         cfg.iou_cost_weight *
                                             -std::log(o < 1e-12 ? 1e-12 : o);
        }
    }

    for (int g = 0; g < n_gt; ++g) {
        std::vector<int> mine;
        for (int c = 0; c < n_cand; ++c) {
            if (eligible(c, g)) mine.push_back(c);
        }
        if (mine.empty()) {
            result.unmatched_gts.push_back(g);
            continue;
        }

        // top-k IoU sum by repeated max scans
        std::vector<bool> used(mine.size(), false);
        double iou_sum = 0.0;
        const int take = std::min<int>(cfg.dynamic_k_top, int(mine.size()));
        for (int round = 0; round < take; ++round) {
            int best = -1;
            double best_val = -1.0;
            for (size_t i = 0; i < mine.size(); ++i) {
                if (used[i]) continue;
                const double v = overlap[size_t(g)][size_t(mine[i])];
                if (v > best_val) {
                    best_val = v;
                    best = int(i);
                }
            }
            used[size_t(best)] = true;
            iou_sum += best_val;
        }
        int k = int(std::floor(iou_sum));
        if (k < 1) k = 1;
        if (k > int(mine.size())) k = int(mine.size());

        // lowest-cost selection by repeated min scans, lower index on ties
        std::vector<bool> taken(mine.size(), false);
        for (int round = 0; round < k; ++round) {
            int best = -1;
            double best_cost = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < mine.size(); ++i) {
                if (taken[i]) continue;
                const double v = cost[size_t(g)][size_t(mine[i])];
                if (v < best_cost) {
                    best_cost = v;
                    best = int(i);
                }
            }
            taken[size_t(best)] = true;
            result.selected_per_gt[size_t(g)].push_back(mine[size_t(best)]);
        }
    }

    for (int c = 0; c < n_cand; ++c) {
        int winner = -1;
        double winner_cost = std::numeric_limits<double>::infinity();
        for (int g = 0; g < n_gt; ++g) {
            bool selected = false;
            for (int s : result.selected_per_gt[size_t(g)]) {
                if (s == c) selected = true;
            }
            if (!selected) continue;
            const double v = cost[size_t(g)][size_t(c)];
            if (v < winner_cost) {  // strict: first (lowest) gt wins ties
                winner_cost = v;
                winner = g;
            }
        }
        result.assigned_gt[size_t(c)] = winner;
    }

    for (int g = 0; g < n_gt; ++g) {
        if (result.selected_per_gt[size_t(g)].empty()) continue;
        bool any = false;
        for (int c = 0; c < n_cand; ++c) {
            if (result.assigned_gt[size_t(c)] == g) any = true;
        }
        if (!any) result.unmatched_gts.push_back(g);
    }
    return result;
}

}  // namespace testsupport
