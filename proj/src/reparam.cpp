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

#include "repkit/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "repkit/error.hpp"

namespace repkit {

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::rep_conv: return "RepConv";
        case Verdict::rep_conv_n: return "RepConvN";
        case Verdict::no_replacement: return "no-replacement";
    }
    return "?";
}

ConvSpec fold_bn(const ConvSpec& conv, const BatchNormSpec& bn) {
    conv.check();
    bn.check();
    if (bn.channels() != conv.out_channels) {
        fail_domain(strf("fold_bn: batchnorm over %d channels, conv emits %d", bn.channels(),
                         conv.out_channels));
    }
    ConvSpec folded = conv;
    const int64_t per_out = conv.weight_count() / conv.out_channels;
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        const double s = double(bn.gamma[oc]) /
                         std::sqrt(double(bn.running_var[oc]) + double(bn.eps));
        for (int64_t i = 0; i < per_out; ++i) {
            folded.weight[oc * per_out + i] = float(s * double(conv.weight[oc * per_out + i]));
        }
        folded.bias[oc] = float(double(bn.beta[oc]) +
                                s * (double(conv.bias[oc]) - double(bn.running_mean[oc])));
    }
    return folded;
}

namespace {

// Center-embeds a 1x1 kernel into the 3x3 lattice. The conv must be
// unpadded; the output then matches on every input for any stride.
ConvSpec lift_1x1(const ConvSpec& conv) {
    ConvSpec lifted = conv;
    lifted.kh = lifted.kw = 3;
    lifted.ph = lifted.pw = 1;
    lifted.weight.assign(size_t(lifted.weight_count()), 0.0f);
    const int icpg = conv.in_channels / conv.groups;
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        for (int ic = 0; ic < icpg; ++ic) {
            lifted.weight[((int64_t(oc) * icpg + ic) * 3 + 1) * 3 + 1] =
                conv.weight[int64_t(oc) * icpg + ic];
        }
    }
    return lifted;
}

}  // namespace

ConvSpec pad_1x1_to_3x3(const ConvSpec& conv) {
    conv.check();
    if (conv.kh != 1 || conv.kw != 1) {
        fail_domain(strf("pad_1x1_to_3x3 expects a 1x1 kernel, got %dx%d", conv.kh, conv.kw));
    }
    if (conv.sh != 1 || conv.sw != 1) {
        fail_domain(strf("pad_1x1_to_3x3 expects stride 1, got %dx%d", conv.sh, conv.sw));
    }
    if (conv.ph != 0 || conv.pw != 0) {
        fail_domain(strf("pad_1x1_to_3x3 expects no padding, got %dx%d", conv.ph, conv.pw));
    }
    return lift_1x1(conv);
}

ConvSpec identity_to_conv3x3(int channels, int groups) {
    if (channels < 1 || groups < 1 || channels % groups != 0) {
        fail_domain(strf("identity conv needs channels divisible by groups (c=%d, g=%d)",
                         channels, groups));
    }
    ConvSpec conv;
    conv.in_channels = conv.out_channels = channels;
    conv.groups = groups;
    conv.kh = conv.kw = 3;
    conv.sh = conv.sw = 1;
    conv.ph = conv.pw = 1;
    conv.weight.assign(size_t(conv.weight_count()), 0.0f);
    conv.bias.assign(size_t(channels), 0.0f);
    const int icpg = channels / groups;
    for (int oc = 0; oc < channels; ++oc) {
        conv.weight[((int64_t(oc) * icpg + (oc % icpg)) * 3 + 1) * 3 + 1] = 1.0f;
    }
    return conv;
}

ConvSpec fuse_rep_block(const RepBlockSpec& rep) {
    rep.check();

    // branch order fixed: 3x3, 1x1, identity
    ConvSpec fused = fold_bn(rep.conv3x3, rep.bn3x3);
    auto accumulate = [&fused](const ConvSpec& branch) {
        for (size_t i = 0; i < fused.weight.size(); ++i) {
            fused.weight[i] = float(double(fused.weight[i]) + double(branch.weight[i]));
        }
        for (size_t i = 0; i < fused.bias.size(); ++i) {
            fused.bias[i] = float(double(fused.bias[i]) + double(branch.bias[i]));
        }
    };
    if (rep.has_conv1x1) {
        accumulate(lift_1x1(fold_bn(rep.conv1x1, rep.bn1x1)));
    }
    if (rep.has_identity) {
        accumulate(fold_bn(identity_to_conv3x3(rep.in_channels, 1), rep.identity_bn));
    }
    return fused;
}

namespace {

std::map<NodeId, std::vector<Edge>> in_edges_of(const Graph& g) {
    std::map<NodeId, std::vector<Edge>> in;
    for (const Edge& e : g.edges) in[e.to].push_back(e);
    for (auto& [id, edges] : in) {
        std::sort(edges.begin(), edges.end(),
                  [](const Edge& a, const Edge& b) { return a.to_slot < b.to_slot; });
    }
    return in;
}

bool is_transparent(const Node& n) {
    return std::holds_alternative<BatchNormSpec>(n.kind) ||
           std::holds_alternative<ActivationNode>(n.kind);
}

// nodes that can reach `target` backwards, optionally pretending
// `removed` is absent
std::set<NodeId> ancestors_of(const Graph& g, NodeId target, NodeId removed) {
    std::map<NodeId, std::vector<NodeId>> producers;
    for (const Edge& e : g.edges) producers[e.to].push_back(e.from);
    std::set<NodeId> seen;
    std::vector<NodeId> stack{target};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        if (id == removed || !seen.insert(id).second) continue;
        for (NodeId p : producers[id]) stack.push_back(p);
    }
    seen.erase(target);
    return seen;
}

}  // namespace

std::vector<PlannedPlacement> plan_reparam(const Graph& g) {
    ValidationReport vr = validate(g);
    if (!vr.ok()) fail_domain("plan_reparam on invalid graph:\n" + vr.to_string());

    auto in_edges = in_edges_of(g);
    std::map<NodeId, std::vector<NodeId>> consumers;
    for (const Edge& e : g.edges) consumers[e.from].push_back(e.to);

    std::vector<PlannedPlacement> placements;
    for (const Node& n : g.nodes) {
        const auto* conv = std::get_if<ConvSpec>(&n.kind);
        if (!conv || conv->kh != 3 || conv->kw != 3) continue;

        PlannedPlacement placement;
        placement.node = n.id;

        if (conv->groups != 1) {
            placement.verdict = Verdict::no_replacement;
            placement.rule = "grouped-conv";
            placements.push_back(std::move(placement));
            continue;
        }

        // walk forward through BN/activation to the structural consumers
        std::set<NodeId> joins;
        std::set<NodeId> visited;
        std::vector<NodeId> frontier{n.id};
        while (!frontier.empty()) {
            NodeId cur = frontier.back();
            frontier.pop_back();
            for (NodeId next : consumers[cur]) {
                if (!visited.insert(next).second) continue;
                const Node* node = g.find(next);
                if (is_transparent(*node)) {
                    frontier.push_back(next);
                } else {
                    joins.insert(next);
                }
            }
        }

        const std::set<NodeId> upstream = ancestors_of(g, n.id, -1);

        bool concat_join = false;
        bool skip_add = false;
        for (NodeId j : joins) {
            const Node* join = g.find(j);
            if (std::holds_alternative<ConcatNode>(join->kind)) {
                concat_join = true;
            } else if (std::holds_alternative<AddNode>(join->kind)) {
                // the add is residual when one of its other operands is fed
                // from the conv's input side without passing through the conv
                for (const Edge& e : in_edges[j]) {
                    if (visited.count(e.from) || e.from == n.id) continue;
                    std::set<NodeId> sources = ancestors_of(g, e.from, n.id);
                    sources.insert(e.from);
                    for (NodeId s : sources) {
                        if (upstream.count(s)) {
                            skip_add = true;
                            break;
                        }
                    }
                    if (skip_add) break;
                }
            }
        }

        if (concat_join) {
            placement.verdict = Verdict::rep_conv_n;
            placement.rule = "feeds-concat";
        } else if (skip_add) {
            placement.verdict = Verdict::rep_conv_n;
            placement.rule = "residual-add";
        } else {
            placement.verdict = Verdict::rep_conv;
            placement.rule = "plain-chain";
        }
        placements.push_back(std::move(placement));
    }
    return placements;
}

namespace {

// training-form block that evaluates exactly like conv (+ optional bn):
// 3x3 branch carries the weights, the 1x1 branch is zero behind a
// neutral BN, and the identity branch (when allowed) is silenced with
// gamma = 0.
RepBlockSpec expand_conv(const ConvSpec& conv, const BatchNormSpec* bn, bool allow_identity) {
    const bool identity = allow_identity && conv.in_channels == conv.out_channels &&
                          conv.sh == 1 && conv.sw == 1;
    RepBlockSpec rep = RepBlockSpec::zeros(conv.in_channels, conv.out_channels, conv.sh, identity);
    rep.conv3x3.weight = conv.weight;
    rep.conv3x3.bias = conv.bias;
    if (bn) rep.bn3x3 = *bn;
    if (identity) {
        rep.identity_bn.gamma.assign(size_t(conv.out_channels), 0.0f);
    }
    return rep;
}

}  // namespace

Graph apply_reparam(const Graph& g, const std::vector<PlannedPlacement>& placements,
                    ReparamMode mode) {
    for (const PlannedPlacement& p : placements) {
        if (!g.find(p.node)) {
            fail_domain(strf("placement references missing node %d", p.node));
        }
    }

    Graph out = g;
    auto fanout = [&out](NodeId id) {
        int count = 0;
        for (const Edge& e : out.edges) {
            if (e.from == id) ++count;
        }
        return count;
    };
    auto sole_consumer = [&out](NodeId id) -> NodeId {
        NodeId found = -1;
        for (const Edge& e : out.edges) {
            if (e.from == id) found = e.to;
        }
        return found;
    };
    auto drop_node = [&out](NodeId id) {
        // reconnect the removed single-input single-output node
        Edge incoming{};
        for (const Edge& e : out.edges) {
            if (e.to == id) incoming = e;
        }
        for (Edge& e : out.edges) {
            if (e.from == id) {
                e.from = incoming.from;
                e.from_port = incoming.from_port;
            }
        }
        out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                       [&](const Edge& e) { return e.to == id; }),
                        out.edges.end());
        out.nodes.erase(std::remove_if(out.nodes.begin(), out.nodes.end(),
                                       [&](const Node& n) { return n.id == id; }),
                        out.nodes.end());
    };

    if (mode == ReparamMode::expand) {
        for (const PlannedPlacement& p : placements) {
            if (p.verdict == Verdict::no_replacement) continue;
            Node* node = out.find(p.node);
            const auto* conv = std::get_if<ConvSpec>(&node->kind);
            if (!conv) fail_domain(strf("placement node %d is not a conv", p.node));

            // absorb the directly following exclusive BN into the 3x3 branch
            const BatchNormSpec* bn = nullptr;
            NodeId bn_id = -1;
            if (fanout(p.node) == 1) {
                const NodeId next = sole_consumer(p.node);
                if (const Node* nn = out.find(next)) {
                    if (const auto* bn_spec = std::get_if<BatchNormSpec>(&nn->kind)) {
                        bn = bn_spec;
                        bn_id = next;
                    }
                }
            }
            node->kind = expand_conv(*conv, bn, p.verdict == Verdict::rep_conv);
            if (bn_id >= 0) drop_node(bn_id);
        }
        return out;
    }

    // fuse mode: collapse RepBlocks, then fold exclusive conv->BN pairs
    for (Node& node : out.nodes) {
        if (const auto* rep = std::get_if<RepBlockSpec>(&node.kind)) {
            node.kind = fuse_rep_block(*rep);
        }
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (const Node& node : out.nodes) {
            const auto* bn = std::get_if<BatchNormSpec>(&node.kind);
            if (!bn) continue;
            NodeId producer = -1;
            int producer_port = 0;
            for (const Edge& e : out.edges) {
                if (e.to == node.id) {
                    producer = e.from;
                    producer_port = e.from_port;
                }
            }
            if (producer < 0 || producer_port != 0) continue;
            Node* prod = out.find(producer);
            const auto* conv = std::get_if<ConvSpec>(&prod->kind);
            if (!conv || fanout(producer) != 1) continue;
            prod->kind = fold_bn(*conv, *bn);
            drop_node(node.id);
            changed = true;
            break;
        }
    }
    return out;
}

ConvSpec fold_implicit(const ConvSpec& conv, const ImplicitKnowledge& ik) {
    conv.check();
    const bool before = ik.position == ImplicitKnowledge::Position::before_conv;
    const int expected = before ? conv.in_channels : conv.out_channels;
    if (int(ik.values.size()) != expected) {
        fail_domain(strf("implicit vector length %zu does not match %s channel count %d",
                         ik.values.size(), before ? "input" : "output", expected));
    }

    ConvSpec folded = conv;
    const int icpg = conv.in_channels / conv.groups;
    const int ocpg = conv.out_channels / conv.groups;
    const int64_t per_out = conv.weight_count() / conv.out_channels;

    if (!before) {
        if (ik.combine == ImplicitKnowledge::Combine::addition) {
            for (int oc = 0; oc < conv.out_channels; ++oc) {
                folded.bias[oc] = float(double(conv.bias[oc]) + double(ik.values[oc]));
            }
        } else {
            for (int oc = 0; oc < conv.out_channels; ++oc) {
                const double m = double(ik.values[oc]);
                for (int64_t i = 0; i < per_out; ++i) {
                    folded.weight[oc * per_out + i] =
                        float(m * double(conv.weight[oc * per_out + i]));
                }
                folded.bias[oc] = float(m * double(conv.bias[oc]));
            }
        }
        return folded;
    }

    if (ik.combine == ImplicitKnowledge::Combine::addition) {
        // a constant per-channel shift does not commute with zero padding,
        // so the fold is only exact on unpadded convolutions
        if (conv.ph != 0 || conv.pw != 0) {
            fail_domain(strf("implicit addition before a padded conv (pad %dx%d) is not exact; "
                             "padding must be (0,0)",
                             conv.ph, conv.pw));
        }
        for (int oc = 0; oc < conv.out_channels; ++oc) {
            const int group = oc / ocpg;
            double shift = 0.0;
            for (int ic = 0; ic < icpg; ++ic) {
                const double a = double(ik.values[group * icpg + ic]);
                for (int ky = 0; ky < conv.kh; ++ky) {
                    for (int kx = 0; kx < conv.kw; ++kx) {
                        shift += double(conv.weight[((int64_t(oc) * icpg + ic) * conv.kh + ky) *
                                                        conv.kw +
                                                    kx]) *
                                 a;
                    }
                }
            }
            folded.bias[oc] = float(double(conv.bias[oc]) + shift);
        }
        return folded;
    }

    // multiplication before: scale each input-channel slice; exact under
    // zero padding since the padded zeros are fixed points of the scaling
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        const int group = oc / ocpg;
        for (int ic = 0; ic < icpg; ++ic) {
            const double m = double(ik.values[group * icpg + ic]);
            for (int ky = 0; ky < conv.kh; ++ky) {
                for (int kx = 0; kx < conv.kw; ++kx) {
                    const int64_t idx =
                        ((int64_t(oc) * icpg + ic) * conv.kh + ky) * conv.kw + kx;
                    folded.weight[idx] = float(m * double(conv.weight[idx]));
                }
            }
        }
    }
    return folded;
}

WeightSet ema_update(const WeightSet& ema, const WeightSet& fresh, double decay) {
    if (decay < 0.0 || decay > 1.0) fail_domain(strf("ema decay %g outside [0, 1]", decay));
    if (ema.size() != fresh.size()) {
        fail_domain(strf("ema weight-sets differ in record count (%zu vs %zu)", ema.size(),
                         fresh.size()));
    }
    WeightSet out = ema;
    for (size_t r = 0; r < ema.size(); ++r) {
        if (ema[r].name != fresh[r].name || ema[r].dims != fresh[r].dims ||
            ema[r].data.size() != fresh[r].data.size()) {
            fail_domain(strf("ema record %zu (\"%s\") incongruent with \"%s\"", r,
                             ema[r].name.c_str(), fresh[r].name.c_str()));
        }
        for (size_t i = 0; i < ema[r].data.size(); ++i) {
            out[r].data[i] = float(decay * double(ema[r].data[i]) +
                                   (1.0 - decay) * double(fresh[r].data[i]));
        }
    }
    return out;
}

}  // namespace repkit
