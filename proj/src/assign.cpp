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

#include "repkit/assign.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "repkit/error.hpp"

namespace repkit {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Box gt_to_pixels(const GroundTruthBox& gt, ImageSize image) {
    return Box{gt.cx * image.w, gt.cy * image.h, gt.w * image.w, gt.h * image.h};
}

void check_gt(const GroundTruthBox& gt) {
    if (gt.w <= 0.0 || gt.h <= 0.0) {
        fail_domain(strf("ground-truth size (%g, %g) must be positive", gt.w, gt.h));
    }
    if (gt.cx < 0.0 || gt.cx > 1.0 || gt.cy < 0.0 || gt.cy > 1.0) {
        fail_domain(strf("ground-truth center (%g, %g) outside [0,1]^2", gt.cx, gt.cy));
    }
}

}  // namespace

void PredictionGrid::check() const {
    if (grid_h < 1 || grid_w < 1) {
        fail_domain(strf("prediction grid dims %dx%d must be >= 1", grid_h, grid_w));
    }
    if (anchors.empty()) fail_domain("prediction grid needs at least one anchor");
    if (num_classes < 1) fail_domain("prediction grid needs at least one class");
    if (stride <= 0) fail_domain(strf("prediction grid stride %g must be positive", stride));
    const int64_t expected = int64_t(anchors.size()) * grid_h * grid_w * fields();
    if (int64_t(raw.size()) != expected) {
        fail_domain(strf("prediction grid raw length %zu, expected %lld", raw.size(),
                         (long long)expected));
    }
}

double iou(const Box& a, const Box& b) {
    const double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
    const double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
    const double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
    const double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
    const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
    const double ih = std::min(ay2, by2) - std::max(ay1, by1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

DecodedGrid decode_predictions(const PredictionGrid& grid) {
    grid.check();
    DecodedGrid out;
    const int a_count = int(grid.anchors.size());
    const int64_t cells = int64_t(a_count) * grid.grid_h * grid.grid_w;
    out.boxes.resize(size_t(cells));
    out.objectness.resize(size_t(cells));
    out.class_scores.resize(size_t(cells) * grid.num_classes);

    for (int a = 0; a < a_count; ++a) {
        for (int gy = 0; gy < grid.grid_h; ++gy) {
            for (int gx = 0; gx < grid.grid_w; ++gx) {
                const int64_t base = grid.raw_index(a, gy, gx, 0);
                const int64_t flat = (int64_t(a) * grid.grid_h + gy) * grid.grid_w + gx;
                const double sx = sigmoid(double(grid.raw[base + 0]));
                const double sy = sigmoid(double(grid.raw[base + 1]));
                const double sw = sigmoid(double(grid.raw[base + 2]));
                const double sh = sigmoid(double(grid.raw[base + 3]));
                Box box;
                box.cx = (2.0 * sx - 0.5 + gx) * grid.stride;
                box.cy = (2.0 * sy - 0.5 + gy) * grid.stride;
                box.w = (2.0 * sw) * (2.0 * sw) * grid.anchors[a].first;
                box.h = (2.0 * sh) * (2.0 * sh) * grid.anchors[a].second;
                out.boxes[flat] = box;
                out.objectness[flat] = float(sigmoid(double(grid.raw[base + 4])));
                for (int c = 0; c < grid.num_classes; ++c) {
                    out.class_scores[flat * grid.num_classes + c] =
                        float(sigmoid(double(grid.raw[base + 5 + c])));
                }
            }
        }
    }
    return out;
}

std::vector<Cell> candidate_cells(const GroundTruthBox& gt, ImageSize image, double stride,
                                  int grid_h, int grid_w, CandidateMode mode) {
    check_gt(gt);
    const double fx = gt.cx * image.w / stride;
    const double fy = gt.cy * image.h / stride;
    const int gx = std::clamp(int(std::floor(fx)), 0, grid_w - 1);
    const int gy = std::clamp(int(std::floor(fy)), 0, grid_h - 1);

    std::vector<Cell> cells{{gy, gx}};
    auto push = [&](int y, int x) {
        if (y >= 0 && y < grid_h && x >= 0 && x < grid_w) cells.push_back({y, x});
    };

    if (mode == CandidateMode::fine) {
        // nearest axis neighbours; an exact center goes left/up
        const int dx = (fx - std::floor(fx)) > 0.5 ? 1 : -1;
        const int dy = (fy - std::floor(fy)) > 0.5 ? 1 : -1;
        push(gy, gx + dx);
        push(gy + dy, gx);
    } else {
        push(gy, gx - 1);
        push(gy, gx + 1);
        push(gy - 1, gx);
        push(gy + 1, gx);
    }
    return cells;
}

std::vector<int> anchor_filter(const GroundTruthBox& gt, ImageSize image,
                               const std::vector<std::pair<double, double>>& anchors,
                               double gate) {
    check_gt(gt);
    const double gw = gt.w * image.w;
    const double gh = gt.h * image.h;
    std::vector<int> surviving;
    for (size_t i = 0; i < anchors.size(); ++i) {
        const double rw = gw / anchors[i].first;
        const double rh = gh / anchors[i].second;
        const double worst = std::max(std::max(rw, 1.0 / rw), std::max(rh, 1.0 / rh));
        if (worst < gate) surviving.push_back(int(i));
    }
    return surviving;
}

MatchResult dynamic_k_match(const std::vector<MatchCandidate>& candidates,
                            const std::vector<GroundTruthBox>& gts, ImageSize image,
                            const AssignConfig& cfg) {
    const int n_cand = int(candidates.size());
    const int n_gt = int(gts.size());
    MatchResult result;
    result.assigned_gt.assign(size_t(n_cand), -1);
    result.selected_per_gt.assign(size_t(n_gt), {});

    // eligibility: empty list on a candidate means every gt
    auto eligible = [&](int cand, int gt) {
        const auto& ids = candidates[size_t(cand)].eligible_gts;
        if (ids.empty()) return true;
        return std::find(ids.begin(), ids.end(), gt) != ids.end();
    };

    std::vector<std::vector<double>> cost(static_cast<size_t>(n_gt));
    std::vector<std::vector<double>> ious(static_cast<size_t>(n_gt));
    for (int g = 0; g < n_gt; ++g) {
        check_gt(gts[size_t(g)]);
        const Box gt_box = gt_to_pixels(gts[size_t(g)], image);
        cost[size_t(g)].assign(size_t(n_cand), 0.0);
        ious[size_t(g)].assign(size_t(n_cand), 0.0);
        for (int c = 0; c < n_cand; ++c) {
            if (!eligible(c, g)) continue;
            const MatchCandidate& cand = candidates[size_t(c)];
            if (gts[size_t(g)].class_id < 0 ||
                gts[size_t(g)].class_id >= int(cand.class_scores.size())) {
                fail_domain(strf("gt class %d outside candidate score range (%zu classes)",
                                 gts[size_t(g)].class_id, cand.class_scores.size()));
            }
            const double overlap = iou(cand.box, gt_box);
            const double cls = std::max(
                double(cand.class_scores[size_t(gts[size_t(g)].class_id)]), 1e-12);
            ious[size_t(g)][size_t(c)] = overlap;
            cost[size_t(g)][size_t(c)] =
                -std::log(cls) + cfg.iou_cost_weight * -std::log(std::max(overlap, 1e-12));
        }
    }

    // per-gt dynamic k and lowest-cost selection
    for (int g = 0; g < n_gt; ++g) {
        std::vector<int> mine;
        for (int c = 0; c < n_cand; ++c) {
            if (eligible(c, g)) mine.push_back(c);
        }
        if (mine.empty()) {
            result.unmatched_gts.push_back(g);
            continue;
        }
        std::vector<double> top_ious;
        for (int c : mine) top_ious.push_back(ious[size_t(g)][size_t(c)]);
        std::sort(top_ious.begin(), top_ious.end(), std::greater<double>());
        double iou_sum = 0.0;
        for (int i = 0; i < std::min<int>(cfg.dynamic_k_top, int(top_ious.size())); ++i) {
            iou_sum += top_ious[size_t(i)];
        }
        const int k = std::clamp(int(std::floor(iou_sum)), 1, int(mine.size()));

        std::sort(mine.begin(), mine.end(), [&](int a, int b) {
            const double ca = cost[size_t(g)][size_t(a)], cb = cost[size_t(g)][size_t(b)];
            if (ca != cb) return ca < cb;
            return a < b;
        });
        mine.resize(size_t(k));
        result.selected_per_gt[size_t(g)] = mine;
    }

    // a candidate claimed by several gts goes to the cheapest claim;
    // ties break toward the lower gt index
    std::vector<int> claim(size_t(n_cand), -1);
    for (int g = 0; g < n_gt; ++g) {
        for (int c : result.selected_per_gt[size_t(g)]) {
            if (claim[size_t(c)] < 0) {
                claim[size_t(c)] = g;
                continue;
            }
            const int other = claim[size_t(c)];
            const double mine_cost = cost[size_t(g)][size_t(c)];
            const double other_cost = cost[size_t(other)][size_t(c)];
            if (mine_cost < other_cost || (mine_cost == other_cost && g < other)) {
                claim[size_t(c)] = g;
            }
        }
    }
    result.assigned_gt = claim;

    // gts whose every selection was stolen are unmatched as well
    for (int g = 0; g < n_gt; ++g) {
        if (result.selected_per_gt[size_t(g)].empty()) continue;
        bool any = false;
        for (int c = 0; c < n_cand; ++c) {
            if (claim[size_t(c)] == g) {
                any = true;
                break;
            }
        }
        if (!any) result.unmatched_gts.push_back(g);
    }
    std::sort(result.unmatched_gts.begin(), result.unmatched_gts.end());
    return result;
}

namespace {

struct PoolKey {
    int level, anchor, gy, gx;
    bool operator<(const PoolKey& o) const {
        return std::tie(level, anchor, gy, gx) < std::tie(o.level, o.anchor, o.gy, o.gx);
    }
};

// candidate pool for one mode: union over gts of their candidate cells x
// surviving anchors, deduplicated, deterministic order
std::vector<MatchCandidate> build_pool(const std::vector<PredictionGrid>& grids,
                                       const std::vector<DecodedGrid>& decoded,
                                       const std::vector<GroundTruthBox>& gts, ImageSize image,
                                       const AssignConfig& cfg, CandidateMode mode) {
    std::map<PoolKey, std::vector<int>> eligibility;
    const int cell_limit = 1 + (mode == CandidateMode::fine ? cfg.fine_neighbors
                                                            : cfg.coarse_neighbors);
    for (int g = 0; g < int(gts.size()); ++g) {
        for (int level = 0; level < int(grids.size()); ++level) {
            const PredictionGrid& grid = grids[size_t(level)];
            const std::vector<int> anchors =
                anchor_filter(gts[size_t(g)], image, grid.anchors, cfg.anchor_gate);
            if (anchors.empty()) continue;
            std::vector<Cell> cells = candidate_cells(gts[size_t(g)], image, grid.stride,
                                                      grid.grid_h, grid.grid_w, mode);
            if (int(cells.size()) > cell_limit) cells.resize(size_t(cell_limit));
            for (int a : anchors) {
                for (const Cell& cell : cells) {
                    eligibility[PoolKey{level, a, cell.gy, cell.gx}].push_back(g);
                }
            }
        }
    }

    std::vector<MatchCandidate> pool;
    pool.reserve(eligibility.size());
    for (const auto& [key, gt_ids] : eligibility) {
        const PredictionGrid& grid = grids[size_t(key.level)];
        const DecodedGrid& dec = decoded[size_t(key.level)];
        const int64_t flat =
            (int64_t(key.anchor) * grid.grid_h + key.gy) * grid.grid_w + key.gx;
        MatchCandidate cand;
        cand.level = key.level;
        cand.anchor = key.anchor;
        cand.gy = key.gy;
        cand.gx = key.gx;
        cand.box = dec.boxes[size_t(flat)];
        cand.class_scores.assign(
            dec.class_scores.begin() + flat * grid.num_classes,
            dec.class_scores.begin() + (flat + 1) * grid.num_classes);
        cand.eligible_gts = gt_ids;
        pool.push_back(std::move(cand));
    }
    return pool;
}

AssignmentResult records_from_match(const std::vector<MatchCandidate>& pool,
                                    const MatchResult& match,
                                    const std::vector<PredictionGrid>& grids,
                                    const std::vector<GroundTruthBox>& gts, ImageSize image,
                                    const AssignConfig& cfg, Provenance provenance) {
    AssignmentResult out;
    out.per_level.resize(grids.size());
    out.unmatched_gts = match.unmatched_gts;
    for (size_t c = 0; c < pool.size(); ++c) {
        const int g = match.assigned_gt[c];
        if (g < 0) continue;
        const MatchCandidate& cand = pool[c];
        const Box gt_box = gt_to_pixels(gts[size_t(g)], image);
        AssignmentRecord rec;
        rec.level = cand.level;
        rec.anchor = cand.anchor;
        rec.gy = cand.gy;
        rec.gx = cand.gx;
        rec.gt_index = g;
        rec.provenance = provenance;
        rec.objectness = float(iou(cand.box, gt_box));
        rec.class_target = gts[size_t(g)].class_id;
        rec.box_target = {float(gt_box.cx), float(gt_box.cy), float(gt_box.w), float(gt_box.h)};
        const double stride = grids[size_t(cand.level)].stride;
        const double dx = (cand.gx + 0.5) - gt_box.cx / stride;
        const double dy = (cand.gy + 0.5) - gt_box.cy / stride;
        rec.center_dist = float(std::sqrt(dx * dx + dy * dy));
        if (provenance == Provenance::coarse_only) {
            rec.upper_bound =
                float(std::max(0.0, 1.0 - double(rec.center_dist) / cfg.bound_radius));
        } else {
            rec.upper_bound = 1.0f;
        }
        out.per_level[size_t(cand.level)].push_back(rec);
    }
    return out;
}

void sort_records(AssignmentResult& r) {
    for (auto& level : r.per_level) {
        std::sort(level.begin(), level.end(), [](const AssignmentRecord& a,
                                                 const AssignmentRecord& b) {
            return std::tie(a.anchor, a.gy, a.gx) < std::tie(b.anchor, b.gy, b.gx);
        });
    }
}

AssignmentResult fine_assignment(const std::vector<PredictionGrid>& grids,
                                 const std::vector<DecodedGrid>& decoded,
                                 const std::vector<GroundTruthBox>& gts, ImageSize image,
                                 const AssignConfig& cfg) {
    AssignmentResult result;
    result.per_level.resize(grids.size());
    if (gts.empty()) return result;
    const std::vector<MatchCandidate> pool =
        build_pool(grids, decoded, gts, image, cfg, CandidateMode::fine);
    const MatchResult match = dynamic_k_match(pool, gts, image, cfg);
    result = records_from_match(pool, match, grids, gts, image, cfg, Provenance::fine);
    sort_records(result);
    return result;
}

}  // namespace

LeadAuxTargets assign_coarse_to_fine(const std::vector<PredictionGrid>& lead_grids,
                                     const std::vector<GroundTruthBox>& gts, ImageSize image,
                                     const AssignConfig& cfg) {
    if (image.w < 1 || image.h < 1) fail_domain("image size must be positive");
    std::vector<DecodedGrid> decoded;
    decoded.reserve(lead_grids.size());
    for (const PredictionGrid& grid : lead_grids) decoded.push_back(decode_predictions(grid));

    LeadAuxTargets targets;
    targets.lead.per_level.resize(lead_grids.size());
    targets.aux.per_level.resize(lead_grids.size());
    if (gts.empty()) return targets;

    targets.lead = fine_assignment(lead_grids, decoded, gts, image, cfg);

    const std::vector<MatchCandidate> coarse_pool =
        build_pool(lead_grids, decoded, gts, image, cfg, CandidateMode::coarse);
    const MatchResult coarse_match = dynamic_k_match(coarse_pool, gts, image, cfg);
    AssignmentResult coarse = records_from_match(coarse_pool, coarse_match, lead_grids, gts,
                                                 image, cfg, Provenance::coarse_only);

    // coarse must contain every fine record: fine records overwrite any
    // coarse record on the same (anchor, cell) and fill in missing ones
    std::map<std::tuple<int, int, int, int>, AssignmentRecord> merged;
    for (size_t level = 0; level < coarse.per_level.size(); ++level) {
        for (const AssignmentRecord& rec : coarse.per_level[level]) {
            merged[{rec.level, rec.anchor, rec.gy, rec.gx}] = rec;
        }
    }
    for (size_t level = 0; level < targets.lead.per_level.size(); ++level) {
        for (const AssignmentRecord& rec : targets.lead.per_level[level]) {
            merged[{rec.level, rec.anchor, rec.gy, rec.gx}] = rec;  // provenance fine, u = 1
        }
    }
    for (const auto& [key, rec] : merged) {
        targets.aux.per_level[size_t(rec.level)].push_back(rec);
    }
    sort_records(targets.aux);

    std::vector<bool> matched(gts.size(), false);
    for (const auto& level : targets.aux.per_level) {
        for (const AssignmentRecord& rec : level) matched[size_t(rec.gt_index)] = true;
    }
    for (size_t g = 0; g < gts.size(); ++g) {
        if (!matched[g]) targets.aux.unmatched_gts.push_back(int(g));
    }
    return targets;
}

std::pair<AssignmentResult, AssignmentResult> assign_independent(
    const std::vector<PredictionGrid>& lead_grids, const std::vector<PredictionGrid>& aux_grids,
    const std::vector<GroundTruthBox>& gts, ImageSize image, const AssignConfig& cfg) {
    if (image.w < 1 || image.h < 1) fail_domain("image size must be positive");
    std::vector<DecodedGrid> lead_dec, aux_dec;
    for (const PredictionGrid& grid : lead_grids) lead_dec.push_back(decode_predictions(grid));
    for (const PredictionGrid& grid : aux_grids) aux_dec.push_back(decode_predictions(grid));
    return {fine_assignment(lead_grids, lead_dec, gts, image, cfg),
            fine_assignment(aux_grids, aux_dec, gts, image, cfg)};
}

AssignmentResult apply_objectness_bound(const AssignmentResult& aux, double r_c) {
    if (r_c <= 0.0) fail_domain(strf("objectness bound radius %g must be positive", r_c));
    AssignmentResult out = aux;
    for (auto& level : out.per_level) {
        for (AssignmentRecord& rec : level) {
            if (rec.provenance == Provenance::fine) {
                rec.upper_bound = 1.0f;
                continue;
            }
            const double u = std::max(0.0, 1.0 - double(rec.center_dist) / r_c);
            rec.upper_bound = float(u);
            rec.objectness = std::min(rec.objectness, rec.upper_bound);
        }
    }
    return out;
}

Graph partial_aux_tap(const Graph& g, int level) {
    // merge sites: Add nodes fed exclusively by one Split node
    std::vector<std::pair<NodeId, NodeId>> merges;  // (split, add)
    for (const Node& n : g.nodes) {
        if (!std::holds_alternative<AddNode>(n.kind)) continue;
        NodeId split = -1;
        bool uniform = true;
        for (const Edge& e : g.edges) {
            if (e.to != n.id) continue;
            const Node* producer = g.find(e.from);
            if (!producer || !std::holds_alternative<SplitNode>(producer->kind)) {
                uniform = false;
                break;
            }
            if (split < 0) split = e.from;
            if (e.from != split) {
                uniform = false;
                break;
            }
        }
        if (uniform && split >= 0) merges.emplace_back(split, n.id);
    }
    if (merges.empty()) fail_domain("graph has no shuffle/split/add merge to tap");
    if (level < 0 || level >= int(merges.size())) {
        fail_domain(strf("merge level %d out of range (graph has %zu merges)", level,
                         merges.size()));
    }

    Graph out = g;
    NodeId tap = out.add(OutputNode{"aux_tap"}, "aux-head-tap");
    // port 0: one pre-merge group, bypassing the add
    out.connect(merges[size_t(level)].first, tap, 0, 0);
    return out;
}

}  // namespace repkit
