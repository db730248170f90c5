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
#include <vector>

#include "repkit/graph.hpp"
#include "repkit/weights.hpp"

namespace repkit {

// Folds inference batch-norm into the preceding convolution:
//   s_o  = gamma_o / sqrt(var_o + eps)
//   W'_o = s_o * W_o
//   b'_o = beta_o + s_o * (b_o - mean_o)
ConvSpec fold_bn(const ConvSpec& conv, const BatchNormSpec& bn);

// Lifts a 1x1 stride-1 unpadded conv onto the 3x3 lattice (weight in the
// center tap, padding becomes 1x1). Output is identical on every input.
ConvSpec pad_1x1_to_3x3(const ConvSpec& conv);

// 3x3 dirac conv equal to the identity map: W[o, o mod (c/groups), 1, 1] = 1.
ConvSpec identity_to_conv3x3(int channels, int groups);

// Collapses a multi-branch block into the single equivalent 3x3 conv:
// fold each branch's BN, lift the 1x1, materialize the identity, then
// sum kernels and biases in the order 3x3, 1x1, identity.
ConvSpec fuse_rep_block(const RepBlockSpec& rep);

enum class Verdict { rep_conv, rep_conv_n, no_replacement };

struct PlannedPlacement {
    NodeId node = -1;
    Verdict verdict = Verdict::no_replacement;
    std::string rule;  // which structural condition fired
};

// Placement analysis for every 3x3 conv node: identity-free RepConvN
// where the conv output (through BN/activation) meets a concatenation or
// an add joined by a skip path around the conv; plain RepConv otherwise.
std::vector<PlannedPlacement> plan_reparam(const Graph& g);

enum class ReparamMode {
    expand,  // conv (+ its BN) -> training-form RepBlock, function-preserving
    fuse,    // RepBlock -> fused conv, plus conv+BN folding on the whole graph
};

Graph apply_reparam(const Graph& g, const std::vector<PlannedPlacement>& placements,
                    ReparamMode mode);

// Per-channel vector folded into an adjacent convolution. addition /
// before-conv is exact only without zero padding, so that combination
// demands padding (0,0).
struct ImplicitKnowledge {
    enum class Combine { addition, multiplication };
    enum class Position { before_conv, after_conv };

    std::vector<float> values;
    Combine combine = Combine::addition;
    Position position = Position::after_conv;
};

ConvSpec fold_implicit(const ConvSpec& conv, const ImplicitKnowledge& ik);

std::string to_string(Verdict v);

}  // namespace repkit
