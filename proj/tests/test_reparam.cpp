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

#include <doctest.h>

#include <cmath>

#include "repkit/blocks.hpp"
#include "repkit/error.hpp"
#include "repkit/reparam.hpp"
#include "repkit/serialize.hpp"
#include "support/common.hpp"

using namespace repkit;
using testsupport::max_abs_diff;
using testsupport::random_bn;
using testsupport::random_conv;
using testsupport::random_rep_block;
using testsupport::random_tensor;

TEST_CASE("fold_bn with the identity normalization leaves the conv untouched") {
    Xoshiro256 rng(31);
    const ConvSpec conv = random_conv(rng, 4, 4, 3, 1, 1);
    const ConvSpec folded = fold_bn(conv, BatchNormSpec::neutral(4));
    CHECK(folded.weight == conv.weight);
    CHECK(folded.bias == conv.bias);
}

TEST_CASE("fold_bn collapses a zero-weight conv with mean equal to its bias onto beta") {
    ConvSpec conv;
    conv.in_channels = conv.out_channels = 2;
    conv.kh = conv.kw = 1;
    conv.weight.assign(4, 0.0f);
    conv.bias = {0.7f, -0.3f};

    BatchNormSpec bn = BatchNormSpec::neutral(2);
    bn.running_mean = conv.bias;
    bn.beta = {5.0f, 6.0f};
    bn.eps = 0.0f;

    const ConvSpec folded = fold_bn(conv, bn);
    CHECK(folded.bias[0] == 5.0f);
    CHECK(folded.bias[1] == 6.0f);
}

TEST_CASE("fold_bn matches a sequential conv-then-bn evaluation within 1e-5") {
    Xoshiro256 rng(32);
    const ConvSpec conv = random_conv(rng, 8, 8, 3, 1, 1);
    const BatchNormSpec bn = random_bn(rng, 8, 0.25f, 4.0f);
    const Tensor input = random_tensor(rng, 1, 8, 16, 16);

    const Tensor sequential = batchnorm(conv2d(input, conv), bn);
    const Tensor folded = conv2d(input, fold_bn(conv, bn));
    CHECK(max_abs_diff(sequential.data, folded.data) <= 1e-5);
}

TEST_CASE("fold_bn twice with identity normalizations is idempotent") {
    Xoshiro256 rng(33);
    const ConvSpec conv = random_conv(rng, 4, 6, 3, 1, 1);
    const BatchNormSpec neutral = BatchNormSpec::neutral(6);
    const ConvSpec once = fold_bn(conv, neutral);
    const ConvSpec twice = fold_bn(once, neutral);
    CHECK(once.weight == twice.weight);
    CHECK(once.bias == twice.bias);
}

TEST_CASE("fold_bn rejects channel mismatches") {
    Xoshiro256 rng(34);
    const ConvSpec conv = random_conv(rng, 4, 6, 3, 1, 1);
    CHECK_THROWS_AS(fold_bn(conv, BatchNormSpec::neutral(4)), Error);
}

TEST_CASE("pad_1x1_to_3x3 produces a centered kernel with identical outputs") {
    Xoshiro256 rng(35);
    SUBCASE("identity 1x1 becomes the 3x3 dirac") {
        ConvSpec conv;
        conv.in_channels = conv.out_channels = 2;
        conv.kh = conv.kw = 1;
        conv.weight = {1, 0, 0, 1};
        conv.bias = {0, 0};
        const ConvSpec lifted = pad_1x1_to_3x3(conv);
        const ConvSpec dirac = identity_to_conv3x3(2, 1);
        CHECK(lifted.weight == dirac.weight);
        CHECK(lifted.ph == 1);
    }
    SUBCASE("zero 1x1 becomes the zero 3x3") {
        ConvSpec conv;
        conv.in_channels = 3;
        conv.out_channels = 2;
        conv.kh = conv.kw = 1;
        conv.weight.assign(6, 0.0f);
        conv.bias.assign(2, 0.0f);
        for (float v : pad_1x1_to_3x3(conv).weight) CHECK(v == 0.0f);
    }
    SUBCASE("random 1x1 evaluates identically after the lift") {
        const ConvSpec conv = random_conv(rng, 5, 4, 1, 1, 0);
        const Tensor input = random_tensor(rng, 1, 5, 9, 9);
        const Tensor before = conv2d(input, conv);
        const Tensor after = conv2d(input, pad_1x1_to_3x3(conv));
        CHECK(before.data == after.data);
    }
    SUBCASE("non-1x1 kernels are rejected") {
        const ConvSpec conv = random_conv(rng, 2, 2, 3, 1, 1);
        CHECK_THROWS_AS(pad_1x1_to_3x3(conv), Error);
    }
}

TEST_CASE("identity_to_conv3x3 is the identity map, including grouped layouts") {
    Xoshiro256 rng(36);
    SUBCASE("two ungrouped dirac filters") {
        const ConvSpec conv = identity_to_conv3x3(2, 1);
        int nonzero = 0;
        for (float v : conv.weight) nonzero += v != 0.0f;
        CHECK(nonzero == 2);
    }
    SUBCASE("random tensor passes through unchanged") {
        const Tensor input = random_tensor(rng, 2, 6, 7, 7);
        CHECK(conv2d(input, identity_to_conv3x3(6, 1)).data == input.data);
    }
    SUBCASE("block-diagonal grouped dirac passes a tensor through unchanged") {
        const Tensor input = random_tensor(rng, 1, 4, 5, 5);
        CHECK(conv2d(input, identity_to_conv3x3(4, 2)).data == input.data);
    }
    SUBCASE("divisibility violations are rejected") {
        CHECK_THROWS_AS(identity_to_conv3x3(5, 2), Error);
    }
}

TEST_CASE("fuse_rep_block of silenced branches with an identity branch is the dirac conv") {
    RepBlockSpec rep = RepBlockSpec::zeros(3, 3, 1, true);
    const ConvSpec fused = fuse_rep_block(rep);
    CHECK(fused.weight == identity_to_conv3x3(3, 1).weight);
    for (float v : fused.bias) CHECK(v == 0.0f);
}

TEST_CASE("fuse_rep_block with a zero 1x1 branch equals the folded 3x3 branch") {
    Xoshiro256 rng(37);
    RepBlockSpec rep = random_rep_block(rng, 4, false, true, 0.5f, 1.5f);
    rep.conv1x1.weight.assign(rep.conv1x1.weight.size(), 0.0f);
    rep.conv1x1.bias.assign(rep.conv1x1.bias.size(), 0.0f);
    rep.bn1x1 = BatchNormSpec::neutral(4);

    const ConvSpec fused = fuse_rep_block(rep);
    const ConvSpec folded3 = fold_bn(rep.conv3x3, rep.bn3x3);
    CHECK(max_abs_diff(fused.weight, folded3.weight) == 0.0);
    CHECK(max_abs_diff(fused.bias, folded3.bias) == 0.0);
}

TEST_CASE("fuse_rep_block matches the multi-branch evaluation on random blocks") {
    Xoshiro256 rng(38);
    const RepBlockSpec rep = random_rep_block(rng, 8, true, true);
    const ConvSpec fused = fuse_rep_block(rep);
    for (int round = 0; round < 10; ++round) {
        const Tensor input = random_tensor(rng, 1, 8, 16, 16);
        const Tensor branches = eval_rep_block(input, rep);
        const Tensor single = conv2d(input, fused);
        CHECK(max_abs_diff(branches.data, single.data) <= 1e-4);
    }
}

TEST_CASE("fuse_rep_block matches the float64 oracle below 1e-10") {
    Xoshiro256 rng(39);
    for (int round = 0; round < 8; ++round) {
        const bool identity = (round & 1) != 0;
        const bool with1x1 = round % 3 != 0;
        const RepBlockSpec rep = random_rep_block(rng, 8, identity, with1x1);
        const Tensor input = random_tensor(rng, 1, 8, 12, 12);
        const std::vector<double> wide(input.data.begin(), input.data.end());
        const auto branch_out = testsupport::rep_block_branches_f64(rep, wide, 1, 12, 12);
        const auto fused_out = testsupport::rep_block_fused_f64(rep, wide, 1, 12, 12);
        CHECK(max_abs_diff(branch_out, fused_out) <= 1e-10);
    }
}

TEST_CASE("rep blocks reject identity branches with mismatched channels or stride") {
    CHECK_THROWS_AS(RepBlockSpec::zeros(4, 8, 1, true).check(), Error);
    CHECK_THROWS_AS(RepBlockSpec::zeros(4, 4, 2, true).check(), Error);
}

TEST_CASE("plan_reparam marks a bare conv-conv chain RepConv at both positions") {
    Xoshiro256 rng(30);
    Graph g;
    NodeId in = g.add(InputNode{"x", 4});
    NodeId a = g.add(random_conv(rng, 4, 4, 3, 1, 1));
    NodeId b = g.add(random_conv(rng, 4, 4, 3, 1, 1));
    NodeId out = g.add(OutputNode{"y"});
    g.connect(in, a);
    g.connect(a, b);
    g.connect(b, out);

    const auto placements = plan_reparam(g);
    REQUIRE(placements.size() == 2);
    for (const auto& p : placements) {
        CHECK(p.verdict == Verdict::rep_conv);
        CHECK(p.rule == "plain-chain");
    }
}

TEST_CASE("plan_reparam marks plain chains RepConv and residual/concat joins RepConvN") {
    SUBCASE("plain conv-conv chain") {
        Graph g = build_csp_dark_block(CspKind::reversed, 8, false);
        const auto placements = plan_reparam(g);
        // the reversed block's 3x3 feeds a 1x1, a plain chain
        bool found = false;
        for (const auto& p : placements) {
            const auto* conv = std::get_if<ConvSpec>(&g.find(p.node)->kind);
            REQUIRE(conv != nullptr);
            if (conv->kh == 3) {
                found = true;
                CHECK(p.verdict == Verdict::rep_conv);
                CHECK(p.rule == "plain-chain");
            }
        }
        CHECK(found);
    }
    SUBCASE("residual add with a skip path") {
        Graph g = build_csp_dark_block(CspKind::dark, 8, false);
        bool found = false;
        for (const auto& p : plan_reparam(g)) {
            const auto* conv = std::get_if<ConvSpec>(&g.find(p.node)->kind);
            if (conv->kh == 3) {
                found = true;
                CHECK(p.verdict == Verdict::rep_conv_n);
                CHECK(p.rule == "residual-add");
            }
        }
        CHECK(found);
    }
    SUBCASE("stacked-ELAN tap convs feeding the concat") {
        Graph g = build_planned_rep_elan(RepElanVariant::base);
        int concat_verdicts = 0;
        for (const auto& p : plan_reparam(g)) {
            if (p.rule == "feeds-concat") {
                ++concat_verdicts;
                CHECK(p.verdict == Verdict::rep_conv_n);
            }
        }
        CHECK(concat_verdicts == 3);  // one tap conv per unit
    }
}

TEST_CASE("plan_reparam skips grouped convolutions") {
    EELANConfig cfg;
    cfg.elan = ELANConfig{32, 16, 1, 32, Activation::silu};
    cfg.groups = 2;
    cfg.multiplier = 1;
    Graph g = build_eelan(cfg);
    for (const auto& p : plan_reparam(g)) {
        const auto* conv = std::get_if<ConvSpec>(&g.find(p.node)->kind);
        if (conv->groups != 1) {
            CHECK(p.verdict == Verdict::no_replacement);
            CHECK(p.rule == "grouped-conv");
        }
    }
}

TEST_CASE("apply_reparam fuse mode preserves outputs and removes nodes") {
    Xoshiro256 rng(40);
    Graph g;
    NodeId in = g.add(InputNode{"x", 6});
    NodeId block = g.add(random_rep_block(rng, 6, true, true, 0.5f, 1.5f));
    NodeId act = g.add(ActivationNode{Activation::silu});
    NodeId conv = g.add(random_conv(rng, 6, 6, 3, 1, 1, 1, -0.1f, 0.1f));
    NodeId bn = g.add(random_bn(rng, 6, 0.5f, 1.5f));
    NodeId out = g.add(OutputNode{"y"});
    g.connect(in, block);
    g.connect(block, act);
    g.connect(act, conv);
    g.connect(conv, bn);
    g.connect(bn, out);
    REQUIRE(validate(g).ok());

    const Graph fused = apply_reparam(g, plan_reparam(g), ReparamMode::fuse);
    CHECK(validate(fused).ok());
    CHECK(fused.nodes.size() < g.nodes.size());
    for (const Node& n : fused.nodes) {
        CHECK(!std::holds_alternative<RepBlockSpec>(n.kind));
        CHECK(!std::holds_alternative<BatchNormSpec>(n.kind));
    }
    CHECK(count_params(fused).total < count_params(g).total);

    const Tensor input = random_tensor(rng, 1, 6, 10, 10);
    const auto before = eval_graph(g, {{"x", input}});
    const auto after = eval_graph(fused, {{"x", input}});
    CHECK(max_abs_diff(before.at("y").data, after.at("y").data) <= 1e-4);
}

TEST_CASE("apply_reparam with an empty placement list changes nothing in expand mode") {
    Graph g = build_csp_dark_block(CspKind::dark, 8, false);
    const Graph same = apply_reparam(g, {}, ReparamMode::expand);
    CHECK(same.nodes.size() == g.nodes.size());
    CHECK(same.edges.size() == g.edges.size());
}

TEST_CASE("apply_reparam expand mode is function-preserving") {
    Graph g = build_planned_rep_elan(RepElanVariant::base);
    randomize_weights(g, 77);
    const auto placements = plan_reparam(g);
    const Graph expanded = apply_reparam(g, placements, ReparamMode::expand);
    CHECK(validate(expanded).ok());

    int rep_blocks = 0;
    for (const Node& n : expanded.nodes) rep_blocks += std::holds_alternative<RepBlockSpec>(n.kind);
    CHECK(rep_blocks > 0);

    Xoshiro256 rng(41);
    const Tensor input = random_tensor(rng, 1, 64, 8, 8);
    const auto before = eval_graph(g, {{"x", input}});
    const auto after = eval_graph(expanded, {{"x", input}});
    CHECK(before.at("y").data == after.at("y").data);
}

TEST_CASE("apply_reparam rejects placements for missing nodes") {
    Graph g = build_csp_dark_block(CspKind::dark, 8, false);
    PlannedPlacement ghost;
    ghost.node = 9999;
    ghost.verdict = Verdict::rep_conv;
    CHECK_THROWS_AS(apply_reparam(g, {ghost}, ReparamMode::expand), Error);
}

TEST_CASE("fold_implicit neutral vectors change nothing") {
    Xoshiro256 rng(42);
    const ConvSpec conv = random_conv(rng, 4, 6, 3, 1, 0);
    SUBCASE("zero addition") {
        ImplicitKnowledge ik;
        ik.values.assign(6, 0.0f);
        ik.combine = ImplicitKnowledge::Combine::addition;
        ik.position = ImplicitKnowledge::Position::after_conv;
        const ConvSpec folded = fold_implicit(conv, ik);
        CHECK(folded.weight == conv.weight);
        CHECK(folded.bias == conv.bias);
    }
    SUBCASE("unit multiplication") {
        ImplicitKnowledge ik;
        ik.values.assign(4, 1.0f);
        ik.combine = ImplicitKnowledge::Combine::multiplication;
        ik.position = ImplicitKnowledge::Position::before_conv;
        const ConvSpec folded = fold_implicit(conv, ik);
        CHECK(folded.weight == conv.weight);
        CHECK(folded.bias == conv.bias);
    }
}

TEST_CASE("fold_implicit matches two-stage evaluation on all four combinations") {
    Xoshiro256 rng(43);
    const int c_in = 4, c_out = 6;
    const Tensor input = random_tensor(rng, 1, c_in, 8, 8);

    auto apply_vector_in = [&](const Tensor& t, const std::vector<float>& vec, bool mul) {
        Tensor out = t;
        const int64_t plane = int64_t(t.h) * t.w;
        for (int ch = 0; ch < t.c; ++ch) {
            for (int64_t i = 0; i < plane; ++i) {
                float& v = out.data[ch * plane + i];
                v = mul ? v * vec[size_t(ch)] : v + vec[size_t(ch)];
            }
        }
        return out;
    };

    for (const bool mul : {false, true}) {
        for (const bool before : {false, true}) {
            CAPTURE(mul);
            CAPTURE(before);
            const ConvSpec conv = random_conv(rng, c_in, c_out, 1, 1, 0);
            ImplicitKnowledge ik;
            ik.combine = mul ? ImplicitKnowledge::Combine::multiplication
                             : ImplicitKnowledge::Combine::addition;
            ik.position = before ? ImplicitKnowledge::Position::before_conv
                                 : ImplicitKnowledge::Position::after_conv;
            ik.values.resize(size_t(before ? c_in : c_out));
            for (float& v : ik.values) v = rng.uniform_f(-1.0f, 1.0f);

            const Tensor two_stage = before
                                         ? conv2d(apply_vector_in(input, ik.values, mul), conv)
                                         : apply_vector_in(conv2d(input, conv), ik.values, mul);
            const Tensor folded = conv2d(input, fold_implicit(conv, ik));
            CHECK(max_abs_diff(two_stage.data, folded.data) <= 1e-5);
        }
    }
}

TEST_CASE("fold_implicit rejects inexact padded addition and bad lengths") {
    Xoshiro256 rng(44);
    const ConvSpec padded = random_conv(rng, 4, 4, 3, 1, 1);
    ImplicitKnowledge ik;
    ik.values.assign(4, 0.5f);
    ik.combine = ImplicitKnowledge::Combine::addition;
    ik.position = ImplicitKnowledge::Position::before_conv;
    CHECK_THROWS_AS(fold_implicit(padded, ik), Error);

    ik.values.assign(3, 0.5f);
    const ConvSpec unpadded = random_conv(rng, 4, 4, 3, 1, 0);
    CHECK_THROWS_AS(fold_implicit(unpadded, ik), Error);
}

TEST_CASE("ema_update interpolates and stays inside the convex hull") {
    WeightSet ema{{"w", {4}, {1.0f, 1.0f, 0.0f, -2.0f}}};
    WeightSet fresh{{"w", {4}, {0.0f, 3.0f, 0.0f, 2.0f}}};

    SUBCASE("decay 1 keeps the ema") {
        CHECK(ema_update(ema, fresh, 1.0)[0].data == ema[0].data);
    }
    SUBCASE("decay 0 takes the new weights") {
        CHECK(ema_update(ema, fresh, 0.0)[0].data == fresh[0].data);
    }
    SUBCASE("decay 0.9 blends") {
        const WeightSet out = ema_update(ema, fresh, 0.9);
        CHECK(out[0].data[0] == doctest::Approx(0.9));
        CHECK(out[0].data[1] == doctest::Approx(1.2));
    }
    SUBCASE("convexity on random data") {
        Xoshiro256 rng(45);
        WeightSet a{{"w", {64}, {}}}, b{{"w", {64}, {}}};
        a[0].data.resize(64);
        b[0].data.resize(64);
        for (float& v : a[0].data) v = rng.uniform_f(-3.0f, 3.0f);
        for (float& v : b[0].data) v = rng.uniform_f(-3.0f, 3.0f);
        const WeightSet out = ema_update(a, b, 0.31);
        for (size_t i = 0; i < 64; ++i) {
            const float lo = std::min(a[0].data[i], b[0].data[i]);
            const float hi = std::max(a[0].data[i], b[0].data[i]);
            CHECK(out[0].data[i] >= lo);
            CHECK(out[0].data[i] <= hi);
        }
    }
    SUBCASE("incongruent sets are rejected") {
        WeightSet other{{"v", {4}, {0, 0, 0, 0}}};
        CHECK_THROWS_AS(ema_update(ema, other, 0.5), Error);
    }
}
