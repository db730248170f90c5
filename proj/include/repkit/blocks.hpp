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

#include "repkit/graph.hpp"

namespace repkit {

// ELAN layer: two 1x1 stems, stack_depth computational units (each a
// pair of 3x3 convs) tapped into one concatenation, then a 1x1
// transition. Concat width is (2 + stack_depth) * branch_width.
//
// Parameter count, with c = branch_width, d = stack_depth, i = in_channels,
// t = transition_out and every conv followed by a BN (4 params/channel):
//   params = 2*(i*c + 5c) + d*2*(9c^2 + 5c) + (2+d)*c*t + 5t
struct ELANConfig {
    int in_channels = 64;
    int branch_width = 32;    // width of each stem and each unit tap
    int stack_depth = 2;      // number of computational units
    int transition_out = 64;  // transition conv output channels
    Activation act = Activation::silu;

    int concat_width() const { return (2 + stack_depth) * branch_width; }
    void check() const;
};

// E-ELAN: the computational units expand by group convolution
// (per-group width branch_width * multiplier inside the unit, final unit
// conv emits groups * branch_width channels), their output is shuffled
// into `groups` groups which are split and summed (merge cardinality),
// restoring branch_width per tap. Stems and transition are untouched,
// so the concat and transition widths match the plain ELAN.
//
// Per-unit parameters, with g = groups and m = multiplier:
//   conv A: (g*m*c) * (c/g) * 9 + g*m*c, plus 4*g*m*c of BN
//   conv B: (g*c) * (m*c) * 9 + g*c,     plus 4*g*c   of BN
// Stems and transition match the ELAN formula; g = m = 1 reduces every
// term to the plain ELAN count.
struct EELANConfig {
    ELANConfig elan;
    int groups = 2;
    int multiplier = 2;

    void check() const;
};

Graph build_elan(const ELANConfig& cfg);
Graph build_eelan(const EELANConfig& cfg);

// Three-unit ELAN with identity-free RepBlocks placed on the designated
// tap convolutions. Every tap conv feeds the concat, so the placement
// rule forbids identity branches at all five lettered positions.
// Canonical position sets (units numbered from the stem side):
//   base: none   a: {3}   b: {2,3}   c: {1,2,3}   d: {1}   e: {1,3}
enum class RepElanVariant { base, a, b, c, d, e };

Graph build_planned_rep_elan(RepElanVariant variant);

// CSP block with one residual unit on the dense path. dark orders the
// unit 1x1 -> 3x3 (the 3x3 meets the residual add, so rep=true places an
// identity-free RepBlock); reversed orders it 3x3 -> 1x1 (the 3x3 sits at
// the unit input, so rep=true may keep the identity branch).
enum class CspKind { dark, reversed };

Graph build_csp_dark_block(CspKind kind, int channels, bool rep);

// The fixed configuration behind build_planned_rep_elan.
ELANConfig planned_rep_elan_config();

}  // namespace repkit
