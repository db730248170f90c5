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

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "repkit/tensor.hpp"

namespace repkit {

using NodeId = int;

struct InputNode {
    std::string name;
    int channels = 0;
};

struct OutputNode {
    std::string name;
};

struct ActivationNode {
    Activation fn = Activation::identity;
};

struct AddNode {};
struct ConcatNode {};

struct ShuffleNode {
    int groups = 1;
};

struct SplitNode {
    int ways = 1;  // equal channel groups, one output port each
};

struct MaxPoolNode {};   // 2x2 stride 2
struct UpsampleNode {};  // nearest 2x

// Training-time re-parameterizable block: parallel 3x3, optional 1x1,
// and optional identity branch (each conv followed by its own BN),
// summed in the fixed order 3x3, 1x1, identity. The identity branch is
// only legal for stride 1 with matching channel counts.
struct RepBlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    bool has_identity = false;
    bool has_conv1x1 = true;

    ConvSpec conv3x3;
    BatchNormSpec bn3x3;
    ConvSpec conv1x1;
    BatchNormSpec bn1x1;
    BatchNormSpec identity_bn;

    void check() const;
    int64_t param_count() const;

    // Zero-weight branches, neutral BNs, correctly shaped.
    static RepBlockSpec zeros(int in_c, int out_c, int stride, bool identity,
                              bool with_1x1 = true);
};

using NodeKind = std::variant<InputNode, OutputNode, ConvSpec, BatchNormSpec, ActivationNode,
                              AddNode, ConcatNode, ShuffleNode, SplitNode, RepBlockSpec,
                              MaxPoolNode, UpsampleNode>;

struct Node {
    NodeId id = -1;
    NodeKind kind;
    std::string annotation;  // role tag: "computational-block", "transition", ...
};

struct Edge {
    NodeId from = -1;
    int from_port = 0;  // nonzero only for Split producers
    NodeId to = -1;
    int to_slot = 0;
};

struct Graph {
    std::vector<Node> nodes;
    std::vector<Edge> edges;

    NodeId add(NodeKind kind, std::string annotation = {});
    void connect(NodeId from, NodeId to, int to_slot = 0, int from_port = 0);
    const Node* find(NodeId id) const;
    Node* find(NodeId id);
};

struct Violation {
    NodeId node = -1;
    std::string code;  // "cycle", "channel-mismatch", "dangling-slot", ...
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

ValidationReport validate(const Graph& g);

// Topological evaluation with tensor-core semantics. RepBlock nodes run
// in their training-time form (sum of branch conv->BN outputs).
std::map<std::string, Tensor> eval_graph(const Graph& g,
                                         const std::map<std::string, Tensor>& inputs);

Tensor eval_rep_block(const Tensor& input, const RepBlockSpec& spec);

struct ParamReport {
    std::vector<std::pair<NodeId, int64_t>> per_node;
    int64_t total = 0;
};

ParamReport count_params(const Graph& g);

struct FlopEntry {
    NodeId node = -1;
    int64_t macs = 0;
};

struct FlopReport {
    std::vector<FlopEntry> per_node;
    int64_t total_macs = 0;
    int64_t total_flops = 0;  // 2 * MACs by convention; MACs are the
                              // unambiguous quantity
};

FlopReport count_flops(const Graph& g, int input_h, int input_w);

// Per-node output channel counts, one entry per output port.
std::map<NodeId, std::vector<int>> infer_channels(const Graph& g);

// Longest input->output path measured in Conv/RepBlock nodes.
int longest_conv_path(const Graph& g);

// Node ids in a deterministic topological order; throws on cycles.
std::vector<NodeId> topo_order(const Graph& g);

}  // namespace repkit
