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

#include "repkit/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "repkit/error.hpp"

namespace repkit {

void RepBlockSpec::check() const {
    if (in_channels < 1 || out_channels < 1) {
        fail_domain(strf("repblock channels must be positive (in=%d, out=%d)", in_channels,
                         out_channels));
    }
    if (stride < 1) fail_domain(strf("repblock stride %d must be >= 1", stride));
    if (has_identity && (in_channels != out_channels || stride != 1)) {
        fail_domain(strf("repblock identity branch requires in==out and stride 1 "
                         "(in=%d, out=%d, stride=%d)",
                         in_channels, out_channels, stride));
    }
    conv3x3.check();
    bn3x3.check();
    if (conv3x3.in_channels != in_channels || conv3x3.out_channels != out_channels ||
        conv3x3.kh != 3 || conv3x3.kw != 3 || conv3x3.sh != stride || conv3x3.sw != stride ||
        conv3x3.ph != 1 || conv3x3.pw != 1 || conv3x3.groups != 1) {
        fail_domain("repblock 3x3 branch must be an ungrouped 3x3 pad-1 conv matching the block "
                    "channels and stride");
    }
    if (bn3x3.channels() != out_channels) fail_domain("repblock 3x3 BN channels mismatch");
    if (has_conv1x1) {
        conv1x1.check();
        bn1x1.check();
        if (conv1x1.in_channels != in_channels || conv1x1.out_channels != out_channels ||
            conv1x1.kh != 1 || conv1x1.kw != 1 || conv1x1.sh != stride ||
            conv1x1.sw != stride || conv1x1.ph != 0 || conv1x1.pw != 0 || conv1x1.groups != 1) {
            fail_domain("repblock 1x1 branch must be an ungrouped unpadded 1x1 conv matching the "
                        "block channels and stride");
        }
        if (bn1x1.channels() != out_channels) fail_domain("repblock 1x1 BN channels mismatch");
    }
    if (has_identity) {
        identity_bn.check();
        if (identity_bn.channels() != out_channels) {
            fail_domain("repblock identity BN channels mismatch");
        }
    }
}

int64_t RepBlockSpec::param_count() const {
    int64_t total = conv3x3.param_count() + 4 * int64_t(out_channels);
    if (has_conv1x1) total += conv1x1.param_count() + 4 * int64_t(out_channels);
    if (has_identity) total += 4 * int64_t(out_channels);
    return total;
}

RepBlockSpec RepBlockSpec::zeros(int in_c, int out_c, int stride, bool identity, bool with_1x1) {
    RepBlockSpec rep;
    rep.in_channels = in_c;
    rep.out_channels = out_c;
    rep.stride = stride;
    rep.has_identity = identity;
    rep.has_conv1x1 = with_1x1;

    rep.conv3x3.in_channels = in_c;
    rep.conv3x3.out_channels = out_c;
    rep.conv3x3.kh = rep.conv3x3.kw = 3;
    rep.conv3x3.sh = rep.conv3x3.sw = stride;
    rep.conv3x3.ph = rep.conv3x3.pw = 1;
    rep.conv3x3.weight.assign(size_t(rep.conv3x3.weight_count()), 0.0f);
    rep.conv3x3.bias.assign(size_t(out_c), 0.0f);
    rep.bn3x3 = BatchNormSpec::neutral(out_c);

    if (with_1x1) {
        rep.conv1x1.in_channels = in_c;
        rep.conv1x1.out_channels = out_c;
        rep.conv1x1.kh = rep.conv1x1.kw = 1;
        rep.conv1x1.sh = rep.conv1x1.sw = stride;
        rep.conv1x1.ph = rep.conv1x1.pw = 0;
        rep.conv1x1.weight.assign(size_t(rep.conv1x1.weight_count()), 0.0f);
        rep.conv1x1.bias.assign(size_t(out_c), 0.0f);
        rep.bn1x1 = BatchNormSpec::neutral(out_c);
    }
    if (identity) rep.identity_bn = BatchNormSpec::neutral(out_c);
    return rep;
}

NodeId Graph::add(NodeKind kind, std::string annotation) {
    NodeId id = nodes.empty() ? 0 : nodes.back().id + 1;
    nodes.push_back(Node{id, std::move(kind), std::move(annotation)});
    return id;
}

void Graph::connect(NodeId from, NodeId to, int to_slot, int from_port) {
    edges.push_back(Edge{from, from_port, to, to_slot});
}

const Node* Graph::find(NodeId id) const {
    for (const Node& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

Node* Graph::find(NodeId id) {
    for (Node& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const Violation& v : violations) {
        os << "node " << v.node << " [" << v.code << "] " << v.message << "\n";
    }
    return os.str();
}

namespace {

int input_arity(const Node& n) {
    // -1 means variadic (>= 1)
    if (std::holds_alternative<InputNode>(n.kind)) return 0;
    if (std::holds_alternative<AddNode>(n.kind) || std::holds_alternative<ConcatNode>(n.kind)) {
        return -1;
    }
    return 1;
}

int output_ports(const Node& n) {
    if (std::holds_alternative<OutputNode>(n.kind)) return 0;
    if (const auto* split = std::get_if<SplitNode>(&n.kind)) return split->ways;
    return 1;
}

// in-edges grouped by consumer, sorted by slot
std::map<NodeId, std::vector<Edge>> in_edges_by_node(const Graph& g) {
    std::map<NodeId, std::vector<Edge>> in;
    for (const Edge& e : g.edges) in[e.to].push_back(e);
    for (auto& [id, edges] : in) {
        std::sort(edges.begin(), edges.end(),
                  [](const Edge& a, const Edge& b) { return a.to_slot < b.to_slot; });
    }
    return in;
}

}  // namespace

std::vector<NodeId> topo_order(const Graph& g) {
    std::map<NodeId, int> indegree;
    std::map<NodeId, std::vector<NodeId>> consumers;
    for (const Node& n : g.nodes) indegree[n.id] = 0;
    for (const Edge& e : g.edges) {
        indegree[e.to]++;
        consumers[e.from].push_back(e.to);
    }
    std::set<NodeId> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.insert(id);
    }
    std::vector<NodeId> order;
    while (!ready.empty()) {
        NodeId id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (NodeId next : consumers[id]) {
            if (--indegree[next] == 0) ready.insert(next);
        }
    }
    if (order.size() != g.nodes.size()) fail_domain("graph contains a cycle");
    return order;
}

std::map<NodeId, std::vector<int>> infer_channels(const Graph& g) {
    auto in_edges = in_edges_by_node(g);
    std::map<NodeId, std::vector<int>> out;
    for (NodeId id : topo_order(g)) {
        const Node* n = g.find(id);
        auto port_channels = [&](const Edge& e) -> int {
            const auto it = out.find(e.from);
            if (it == out.end() || e.from_port >= int(it->second.size())) return -1;
            return it->second[e.from_port];
        };
        const auto& ins = in_edges[id];
        int first_in = ins.empty() ? -1 : port_channels(ins[0]);
        std::visit(
            [&](const auto& kind) {
                using T = std::decay_t<decltype(kind)>;
                if constexpr (std::is_same_v<T, InputNode>) {
                    out[id] = {kind.channels};
                } else if constexpr (std::is_same_v<T, OutputNode>) {
                    out[id] = {first_in};
                } else if constexpr (std::is_same_v<T, ConvSpec>) {
                    out[id] = {kind.out_channels};
                } else if constexpr (std::is_same_v<T, RepBlockSpec>) {
                    out[id] = {kind.out_channels};
                } else if constexpr (std::is_same_v<T, ConcatNode>) {
                    int sum = 0;
                    for (const Edge& e : ins) {
                        const int c = port_channels(e);
                        if (c < 0) {
                            sum = -1;
                            break;
                        }
                        sum += c;
                    }
                    out[id] = {sum};
                } else if constexpr (std::is_same_v<T, SplitNode>) {
                    std::vector<int> ports(size_t(kind.ways), -1);
                    if (first_in > 0 && first_in % kind.ways == 0) {
                        std::fill(ports.begin(), ports.end(), first_in / kind.ways);
                    }
                    out[id] = ports;
                } else {
                    // BN, activation, add, shuffle, pooling, upsample keep width
                    out[id] = {first_in};
                }
            },
            n->kind);
    }
    return out;
}

ValidationReport validate(const Graph& g) {
    ValidationReport report;
    auto violation = [&](NodeId id, std::string code, std::string msg) {
        report.violations.push_back({id, std::move(code), std::move(msg)});
    };

    std::set<NodeId> ids;
    for (const Node& n : g.nodes) {
        if (!ids.insert(n.id).second) violation(n.id, "duplicate-id", "node id repeats");
    }
    for (const Edge& e : g.edges) {
        if (!ids.count(e.from)) violation(e.from, "missing-node", "edge producer does not exist");
        if (!ids.count(e.to)) violation(e.to, "missing-node", "edge consumer does not exist");
    }
    if (!report.ok()) return report;

    auto in_edges = in_edges_by_node(g);

    // slot discipline
    for (const Node& n : g.nodes) {
        const auto& ins = in_edges[n.id];
        const int arity = input_arity(n);
        std::set<int> slots;
        for (const Edge& e : ins) {
            if (!slots.insert(e.to_slot).second) {
                violation(n.id, "slot-conflict", strf("input slot %d filled twice", e.to_slot));
            }
            const Node* producer = g.find(e.from);
            if (e.from_port < 0 || e.from_port >= output_ports(*producer)) {
                violation(n.id, "bad-port",
                          strf("edge from node %d uses output port %d", e.from, e.from_port));
            }
        }
        const int filled = int(ins.size());
        if (arity == 0 && filled != 0) {
            violation(n.id, "dangling-slot", "input node must not consume edges");
        } else if (arity == 1 && filled != 1) {
            violation(n.id, "dangling-slot", strf("expected 1 input, found %d", filled));
        } else if (arity == -1) {
            if (filled < 1) {
                violation(n.id, "dangling-slot", "variadic node needs at least one input");
            }
            for (int s = 0; s < filled; ++s) {
                if (!slots.count(s)) {
                    violation(n.id, "dangling-slot", strf("input slot %d unfilled", s));
                    break;
                }
            }
        }
    }

    // cycle detection via Kahn
    std::map<NodeId, int> indegree;
    std::map<NodeId, std::vector<NodeId>> consumers;
    for (const Node& n : g.nodes) indegree[n.id] = 0;
    for (const Edge& e : g.edges) {
        indegree[e.to]++;
        consumers[e.from].push_back(e.to);
    }
    std::set<NodeId> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.insert(id);
    }
    std::vector<NodeId> order;
    while (!ready.empty()) {
        NodeId id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (NodeId next : consumers[id]) {
            if (--indegree[next] == 0) ready.insert(next);
        }
    }
    if (order.size() != g.nodes.size()) {
        for (const auto& [id, deg] : indegree) {
            if (deg > 0) violation(id, "cycle", "node participates in a cycle");
        }
        return report;  // channel inference needs an acyclic graph
    }

    // parameter sanity + channel consistency along the topological order
    std::map<NodeId, std::vector<int>> widths;
    for (NodeId id : order) {
        const Node* n = g.find(id);
        const auto& ins = in_edges[id];
        auto in_width = [&](size_t i) -> int {
            if (i >= ins.size()) return -1;
            const auto it = widths.find(ins[i].from);
            if (it == widths.end() || ins[i].from_port >= int(it->second.size())) return -1;
            return it->second[ins[i].from_port];
        };
        const int first = in_width(0);
        std::visit(
            [&](const auto& kind) {
                using T = std::decay_t<decltype(kind)>;
                if constexpr (std::is_same_v<T, InputNode>) {
                    if (kind.channels < 1) {
                        violation(id, "bad-spec", "input channel count must be >= 1");
                    }
                    widths[id] = {kind.channels};
                } else if constexpr (std::is_same_v<T, OutputNode>) {
                    widths[id] = {first};
                } else if constexpr (std::is_same_v<T, ConvSpec>) {
                    try {
                        kind.check();
                    } catch (const Error& e) {
                        violation(id, "bad-spec", e.what());
                    }
                    if (first > 0 && first != kind.in_channels) {
                        violation(id, "channel-mismatch",
                                  strf("conv expects %d input channels, receives %d",
                                       kind.in_channels, first));
                    }
                    widths[id] = {kind.out_channels};
                } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                    try {
                        kind.check();
                    } catch (const Error& e) {
                        violation(id, "bad-spec", e.what());
                    }
                    if (first > 0 && first != kind.channels()) {
                        violation(id, "channel-mismatch",
                                  strf("batchnorm over %d channels, receives %d", kind.channels(),
                                       first));
                    }
                    widths[id] = {first};
                } else if constexpr (std::is_same_v<T, RepBlockSpec>) {
                    try {
                        kind.check();
                    } catch (const Error& e) {
                        violation(id, "bad-spec", e.what());
                    }
                    if (first > 0 && first != kind.in_channels) {
                        violation(id, "channel-mismatch",
                                  strf("repblock expects %d input channels, receives %d",
                                       kind.in_channels, first));
                    }
                    widths[id] = {kind.out_channels};
                } else if constexpr (std::is_same_v<T, AddNode>) {
                    for (size_t i = 1; i < ins.size(); ++i) {
                        if (first > 0 && in_width(i) > 0 && in_width(i) != first) {
                            violation(id, "channel-mismatch",
                                      strf("add input slot %zu has %d channels, slot 0 has %d", i,
                                           in_width(i), first));
                        }
                    }
                    widths[id] = {first};
                } else if constexpr (std::is_same_v<T, ConcatNode>) {
                    int sum = 0;
                    for (size_t i = 0; i < ins.size(); ++i) {
                        const int c = in_width(i);
                        if (c < 0) {
                            sum = -1;
                            break;
                        }
                        sum += c;
                    }
                    widths[id] = {sum};
                } else if constexpr (std::is_same_v<T, ShuffleNode>) {
                    if (kind.groups < 1 || (first > 0 && first % kind.groups != 0)) {
                        violation(id, "channel-mismatch",
                                  strf("shuffle groups %d do not divide %d channels", kind.groups,
                                       first));
                    }
                    widths[id] = {first};
                } else if constexpr (std::is_same_v<T, SplitNode>) {
                    std::vector<int> ports(size_t(std::max(kind.ways, 1)), -1);
                    if (kind.ways < 1 || (first > 0 && first % kind.ways != 0)) {
                        violation(id, "channel-mismatch",
                                  strf("split ways %d do not divide %d channels", kind.ways,
                                       first));
                    } else if (first > 0) {
                        std::fill(ports.begin(), ports.end(), first / kind.ways);
                    }
                    widths[id] = ports;
                } else {
                    widths[id] = {first};
                }
            },
            n->kind);
    }
    return report;
}

Tensor eval_rep_block(const Tensor& input, const RepBlockSpec& spec) {
    spec.check();
    // branch order fixed: 3x3, 1x1, identity
    std::vector<Tensor> branches;
    branches.push_back(batchnorm(conv2d(input, spec.conv3x3), spec.bn3x3));
    if (spec.has_conv1x1) {
        branches.push_back(batchnorm(conv2d(input, spec.conv1x1), spec.bn1x1));
    }
    if (spec.has_identity) {
        branches.push_back(batchnorm(input, spec.identity_bn));
    }
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(branches.size());
    for (const Tensor& t : branches) ptrs.push_back(&t);
    return eltwise(EltwiseOp::add, ptrs);
}

std::map<std::string, Tensor> eval_graph(const Graph& g,
                                         const std::map<std::string, Tensor>& inputs) {
    ValidationReport report = validate(g);
    if (!report.ok()) {
        fail_domain("eval_graph on invalid graph:\n" + report.to_string());
    }
    auto in_edges = in_edges_by_node(g);
    std::map<NodeId, std::vector<Tensor>> values;
    std::map<std::string, Tensor> outputs;

    for (NodeId id : topo_order(g)) {
        const Node* n = g.find(id);
        const auto& ins = in_edges[id];
        std::vector<const Tensor*> args;
        args.reserve(ins.size());
        for (const Edge& e : ins) args.push_back(&values[e.from][e.from_port]);

        try {
            std::visit(
                [&](const auto& kind) {
                    using T = std::decay_t<decltype(kind)>;
                    if constexpr (std::is_same_v<T, InputNode>) {
                        auto it = inputs.find(kind.name);
                        if (it == inputs.end()) {
                            fail_domain(strf("missing graph input \"%s\"", kind.name.c_str()));
                        }
                        if (it->second.c != kind.channels) {
                            fail_domain(strf("input \"%s\" declares %d channels, tensor has %d",
                                             kind.name.c_str(), kind.channels, it->second.c));
                        }
                        values[id] = {it->second};
                    } else if constexpr (std::is_same_v<T, OutputNode>) {
                        outputs[kind.name] = *args[0];
                        values[id] = {*args[0]};
                    } else if constexpr (std::is_same_v<T, ConvSpec>) {
                        values[id] = {conv2d(*args[0], kind)};
                    } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                        values[id] = {batchnorm(*args[0], kind)};
                    } else if constexpr (std::is_same_v<T, ActivationNode>) {
                        values[id] = {activation(*args[0], kind.fn)};
                    } else if constexpr (std::is_same_v<T, AddNode>) {
                        values[id] = {eltwise(EltwiseOp::add, args)};
                    } else if constexpr (std::is_same_v<T, ConcatNode>) {
                        values[id] = {eltwise(EltwiseOp::concat_channels, args)};
                    } else if constexpr (std::is_same_v<T, ShuffleNode>) {
                        values[id] = {channel_shuffle(*args[0], kind.groups)};
                    } else if constexpr (std::is_same_v<T, SplitNode>) {
                        const Tensor& in = *args[0];
                        if (in.c % kind.ways != 0) {
                            fail_domain(strf("split ways %d do not divide %d channels", kind.ways,
                                             in.c));
                        }
                        const int per = in.c / kind.ways;
                        std::vector<Tensor> parts;
                        parts.reserve(size_t(kind.ways));
                        const int64_t plane = int64_t(in.h) * in.w;
                        for (int p = 0; p < kind.ways; ++p) {
                            Tensor part(in.n, per, in.h, in.w);
                            for (int b = 0; b < in.n; ++b) {
                                std::copy_n(in.data.begin() + (int64_t(b) * in.c + p * per) * plane,
                                            int64_t(per) * plane,
                                            part.data.begin() + int64_t(b) * per * plane);
                            }
                            parts.push_back(std::move(part));
                        }
                        values[id] = std::move(parts);
                    } else if constexpr (std::is_same_v<T, RepBlockSpec>) {
                        values[id] = {eval_rep_block(*args[0], kind)};
                    } else if constexpr (std::is_same_v<T, MaxPoolNode>) {
                        values[id] = {max_pool_2x2(*args[0])};
                    } else if constexpr (std::is_same_v<T, UpsampleNode>) {
                        values[id] = {upsample_nearest_2x(*args[0])};
                    }
                },
                n->kind);
        } catch (const Error& e) {
            if (e.kind() == Error::Kind::domain) {
                fail_domain(strf("node %d: %s", id, e.what()));
            }
            throw;
        }
    }
    return outputs;
}

ParamReport count_params(const Graph& g) {
    ParamReport report;
    for (const Node& n : g.nodes) {
        int64_t count = 0;
        if (const auto* conv = std::get_if<ConvSpec>(&n.kind)) {
            count = conv->param_count();
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&n.kind)) {
            count = 4 * int64_t(bn->channels());
        } else if (const auto* rep = std::get_if<RepBlockSpec>(&n.kind)) {
            count = rep->param_count();
        }
        report.per_node.emplace_back(n.id, count);
        report.total += count;
    }
    return report;
}

FlopReport count_flops(const Graph& g, int input_h, int input_w) {
    ValidationReport vr = validate(g);
    if (!vr.ok()) fail_domain("count_flops on invalid graph:\n" + vr.to_string());

    auto in_edges = in_edges_by_node(g);
    std::map<NodeId, std::pair<int, int>> dims;  // (h, w) per node
    FlopReport report;

    auto conv_macs = [](const ConvSpec& c, int h, int w, int* oh, int* ow) -> int64_t {
        *oh = (h + 2 * c.ph - c.kh) / c.sh + 1;
        *ow = (w + 2 * c.pw - c.kw) / c.sw + 1;
        if (*oh < 1 || *ow < 1) {
            fail_domain(strf("conv output collapses below 1 pixel at %dx%d input", h, w));
        }
        return int64_t(*oh) * *ow * c.out_channels * (c.in_channels / c.groups) * c.kh * c.kw;
    };

    for (NodeId id : topo_order(g)) {
        const Node* n = g.find(id);
        const auto& ins = in_edges[id];
        std::pair<int, int> in_dims = ins.empty() ? std::make_pair(input_h, input_w)
                                                  : dims[ins[0].from];
        int64_t macs = 0;
        std::pair<int, int> out_dims = in_dims;
        if (std::holds_alternative<InputNode>(n->kind)) {
            out_dims = {input_h, input_w};
        } else if (const auto* conv = std::get_if<ConvSpec>(&n->kind)) {
            int oh = 0, ow = 0;
            macs = conv_macs(*conv, in_dims.first, in_dims.second, &oh, &ow);
            out_dims = {oh, ow};
        } else if (const auto* rep = std::get_if<RepBlockSpec>(&n->kind)) {
            int oh = 0, ow = 0;
            macs = conv_macs(rep->conv3x3, in_dims.first, in_dims.second, &oh, &ow);
            if (rep->has_conv1x1) {
                int oh1 = 0, ow1 = 0;
                macs += conv_macs(rep->conv1x1, in_dims.first, in_dims.second, &oh1, &ow1);
            }
            out_dims = {oh, ow};
        } else if (std::holds_alternative<MaxPoolNode>(n->kind)) {
            out_dims = {in_dims.first / 2, in_dims.second / 2};
        } else if (std::holds_alternative<UpsampleNode>(n->kind)) {
            out_dims = {in_dims.first * 2, in_dims.second * 2};
        }
        // BN, activation, add, concat, shuffle, split count as zero MACs
        dims[id] = out_dims;
        report.per_node.push_back({id, macs});
        report.total_macs += macs;
    }
    report.total_flops = 2 * report.total_macs;
    return report;
}

int longest_conv_path(const Graph& g) {
    auto in_edges = in_edges_by_node(g);
    std::map<NodeId, int> best;
    int overall = 0;
    for (NodeId id : topo_order(g)) {
        const Node* n = g.find(id);
        int upstream = 0;
        for (const Edge& e : in_edges[id]) upstream = std::max(upstream, best[e.from]);
        const int self = (std::holds_alternative<ConvSpec>(n->kind) ||
                          std::holds_alternative<RepBlockSpec>(n->kind))
                             ? 1
                             : 0;
        best[id] = upstream + self;
        overall = std::max(overall, best[id]);
    }
    return overall;
}

}  // namespace repkit
