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

#include <array>
#include <cstdint>
#include <vector>

#include "repkit/graph.hpp"

namespace repkit {

// Axis-aligned box, center + size, in pixels.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;
};

double iou(const Box& a, const Box& b);

struct GroundTruthBox {
    int class_id = 0;
    // normalized image coordinates in [0, 1]
    double cx = 0, cy = 0, w = 0, h = 0;
};

struct ImageSize {
    int w = 0, h = 0;
};

// One pyramid level of raw head outputs, laid out
// (anchor, gy, gx, 5 + num_classes) with channel order
// (tx, ty, tw, th, t_obj, class logits...).
struct PredictionGrid {
    double stride = 8;
    std::vector<std::pair<double, double>> anchors;  // (w, h) pixels
    int grid_h = 0, grid_w = 0;
    int num_classes = 0;
    std::vector<float> raw;

    int fields() const { return 5 + num_classes; }
    int64_t raw_index(int a, int gy, int gx, int f) const {
        return ((int64_t(a) * grid_h + gy) * grid_w + gx) * fields() + f;
    }
    void check() const;
};

// Sigmoid decode:
//   center = (2*sigmoid(t_xy) - 0.5 + cell) * stride
//   size   = (2*sigmoid(t_wh))^2 * anchor        (caps size at 4x anchor)
//   objectness / class scores = sigmoid(logit)
struct DecodedGrid {
    std::vector<Box> boxes;           // (a, gy, gx)
    std::vector<float> objectness;    // (a, gy, gx)
    std::vector<float> class_scores;  // (a, gy, gx, class)
};

DecodedGrid decode_predictions(const PredictionGrid& grid);

struct Cell {
    int gy = 0, gx = 0;
};

enum class CandidateMode { fine, coarse };

// fine: the center cell plus the two nearest axis neighbours (the half
// of the cell the center falls in decides; exact centers go left/up).
// coarse: the center cell plus all four axis neighbours. Clipped to the
// grid.
std::vector<Cell> candidate_cells(const GroundTruthBox& gt, ImageSize image, double stride,
                                  int grid_h, int grid_w, CandidateMode mode);

// Indices of anchors passing the shape gate
// max(w/aw, aw/w, h/ah, ah/h) < gate, sizes in pixels.
std::vector<int> anchor_filter(const GroundTruthBox& gt, ImageSize image,
                               const std::vector<std::pair<double, double>>& anchors,
                               double gate);

// Every tunable constant of the assignment procedure.
struct AssignConfig {
    double anchor_gate = 4.0;
    double iou_cost_weight = 3.0;  // lambda in the matching cost
    int dynamic_k_top = 10;        // IoUs summed to derive k per gt
    double bound_radius = 1.5;     // r_c of the objectness upper bound
    int fine_neighbors = 2;        // extra cells around the center, fine
    int coarse_neighbors = 4;      // extra cells around the center, coarse
};

struct MatchCandidate {
    int level = 0;
    int anchor = 0;
    int gy = 0, gx = 0;
    Box box;                        // decoded prediction
    std::vector<float> class_scores;
    // gts this candidate was generated for; empty means every gt
    std::vector<int> eligible_gts;
};

struct MatchResult {
    // candidate index -> gt index (-1 when unassigned)
    std::vector<int> assigned_gt;
    // per gt: its k lowest-cost candidate indices, before conflict
    // resolution
    std::vector<std::vector<int>> selected_per_gt;
    std::vector<int> unmatched_gts;
};

// OTA-style dynamic-k matching.
//   cost(c, g) = -log(class score of g's class) + lambda * (-log IoU)
//   k_g = clamp(floor(sum of top-k IoUs), 1, #candidates of g)
// Conflicts go to the lowest-cost gt; all ties break toward lower gt
// index then lower candidate index.
MatchResult dynamic_k_match(const std::vector<MatchCandidate>& candidates,
                            const std::vector<GroundTruthBox>& gts, ImageSize image,
                            const AssignConfig& cfg);

enum class Provenance { fine, coarse_only };

struct AssignmentRecord {
    int level = 0;
    int anchor = 0;
    int gy = 0, gx = 0;
    int gt_index = -1;
    Provenance provenance = Provenance::fine;
    float objectness = 0;            // soft target: IoU(decoded lead box, gt)
    int class_target = 0;
    std::array<float, 4> box_target{};  // gt (cx, cy, w, h) in pixels
    float center_dist = 0;           // cell center to gt center, cell units
    float upper_bound = 1;           // 1 for fine; 1 - r/r_c for coarse-only
};

struct AssignmentResult {
    std::vector<std::vector<AssignmentRecord>> per_level;
    std::vector<int> unmatched_gts;
};

struct LeadAuxTargets {
    AssignmentResult lead;  // fine labels
    AssignmentResult aux;   // coarse labels, superset of the fine set
};

// Lead-guided coarse-to-fine assignment. Both label sets derive from the
// lead head predictions only; the aux set is the coarse matching with
// every fine record force-included, so coarse is a superset of fine by
// construction.
LeadAuxTargets assign_coarse_to_fine(const std::vector<PredictionGrid>& lead_grids,
                                     const std::vector<GroundTruthBox>& gts, ImageSize image,
                                     const AssignConfig& cfg = {});

// Baseline: lead and aux heads each run an independent fine assignment
// against their own predictions.
std::pair<AssignmentResult, AssignmentResult> assign_independent(
    const std::vector<PredictionGrid>& lead_grids, const std::vector<PredictionGrid>& aux_grids,
    const std::vector<GroundTruthBox>& gts, ImageSize image, const AssignConfig& cfg = {});

// Recomputes the coarse-only upper bounds u = max(0, 1 - r/r_c) and
// clamps their objectness targets to u. Fine records stay at u = 1.
AssignmentResult apply_objectness_bound(const AssignmentResult& aux, double r_c);

// Adds an aux-head output on one pre-merge group of the level-th
// shuffle/split/add merge of the graph (counted in node order). The main
// outputs are untouched.
Graph partial_aux_tap(const Graph& g, int level);

}  // namespace repkit
