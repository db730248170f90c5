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

// Shared generators and float64 oracles for the unit and acceptance
// suites. Everything here is test-only and independent of the library's
// fusion path: branch evaluation goes through the serial reference
// kernel and the double-precision fusion algebra is restated from
// scratch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "repkit/graph.hpp"
#include "repkit/prng.hpp"
#include "repkit/reference.hpp"
#include "repkit/tensor.hpp"

namespace testsupport {

inline repkit::Tensor random_tensor(repkit::Xoshiro256& rng, int n, int c, int h, int w,
                                    float lo = -1.0f, float hi = 1.0f) {
    repkit::Tensor t(n, c, h, w);
    for (float& v : t.data) v = rng.uniform_f(lo, hi);
    return t;
}

inline repkit::ConvSpec random_conv(repkit::Xoshiro256& rng, int in_c, int out_c, int k,
                                    int stride, int pad, int groups = 1, float lo = -1.0f,
                                    float hi = 1.0f) {
    repkit::ConvSpec conv;
    conv.in_channels = in_c;
    conv.out_channels = out_c;
    conv.groups = groups;
    conv.kh = conv.kw = k;
    conv.sh = conv.sw = stride;
    conv.ph = conv.pw = pad;
    conv.weight.resize(size_t(conv.weight_count()));
    conv.bias.resize(size_t(out_c));
    for (float& v : conv.weight) v = rng.uniform_f(lo, hi);
    for (float& v : conv.bias) v = rng.uniform_f(lo, hi);
    return conv;
}

inline repkit::BatchNormSpec random_bn(repkit::Xoshiro256& rng, int c, float var_lo,
                                       float var_hi) {
    repkit::BatchNormSpec bn;
    bn.gamma.resize(size_t(c));
    bn.beta.resize(size_t(c));
    bn.running_mean.resize(size_t(c));
    bn.running_var.resize(size_t(c));
    for (float& v : bn.gamma) v = rng.uniform_f(-1.0f, 1.0f);
    for (float& v : bn.beta) v = rng.uniform_f(-1.0f, 1.0f);
    for (float& v : bn.running_mean) v = rng.uniform_f(-1.0f, 1.0f);
    for (float& v : bn.running_var) v = rng.uniform_f(var_lo, var_hi);
    bn.eps = 1e-5f;
    return bn;
}

inline repkit::RepBlockSpec random_rep_block(repkit::Xoshiro256& rng, int channels, bool identity,
                                             bool with_1x1, float var_lo = 0.01f,
                                             float var_hi = 4.0f) {
    repkit::RepBlockSpec rep = repkit::RepBlockSpec::zeros(channels, channels, 1, identity,
                                                           with_1x1);
    for (float& v : rep.conv3x3.weight) v = rng.uniform_f(-1.0f, 1.0f);
    for (float& v : rep.conv3x3.bias) v = rng.uniform_f(-1.0f, 1.0f);
    rep.bn3x3 = random_bn(rng, channels, var_lo, var_hi);
    if (with_1x1) {
        for (float& v : rep.conv1x1.weight) v = rng.uniform_f(-1.0f, 1.0f);
        for (float& v : rep.conv1x1.bias) v = rng.uniform_f(-1.0f, 1.0f);
        rep.bn1x1 = random_bn(rng, channels, var_lo, var_hi);
    }
    if (identity) rep.identity_bn = random_bn(rng, channels, var_lo, var_hi);
    return rep;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    }
    return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

// ---- float64 fusion oracle -------------------------------------------------

struct ConvF64 {
    std::vector<double> weight;
    std::vector<double> bias;
};

inline std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

inline ConvF64 fold_bn_f64(const std::vector<float>& weight, const std::vector<float>& bias,
                           const repkit::BatchNormSpec& bn, int out_c) {
    ConvF64 folded{widen(weight), widen(bias)};
    const size_t per_out = weight.size() / size_t(out_c);
    for (int oc = 0; oc < out_c; ++oc) {
        const double s = double(bn.gamma[oc]) /
                         std::sqrt(double(bn.running_var[oc]) + double(bn.eps));
        for (size_t i = 0; i < per_out; ++i) folded.weight[size_t(oc) * per_out + i] *= s;
        folded.bias[size_t(oc)] =
            double(bn.beta[oc]) + s * (double(bias[oc]) - double(bn.running_mean[oc]));
    }
    return folded;
}

// multi-branch output in pure float64 (the independent side of the check)
inline std::vector<double> rep_block_branches_f64(const repkit::RepBlockSpec& rep,
                                                  const std::vector<double>& input, int n, int h,
                                                  int w) {
    const int c = rep.in_channels;
    namespace ref = repkit::reference;
    std::vector<double> sum =
        ref::batchnorm_nchw<double>(ref::conv2d_nchw<double>(input, n, c, h, w,
                                                             widen(rep.conv3x3.weight),
                                                             widen(rep.conv3x3.bias),
                                                             rep.out_channels, 1, 3, 3,
                                                             rep.stride, rep.stride, 1, 1),
                                    n, rep.out_channels, h, w, widen(rep.bn3x3.gamma),
                                    widen(rep.bn3x3.beta), widen(rep.bn3x3.running_mean),
                                    widen(rep.bn3x3.running_var), double(rep.bn3x3.eps));
    if (rep.has_conv1x1) {
        const std::vector<double> branch =
            ref::batchnorm_nchw<double>(ref::conv2d_nchw<double>(input, n, c, h, w,
                                                                 widen(rep.conv1x1.weight),
                                                                 widen(rep.conv1x1.bias),
                                                                 rep.out_channels, 1, 1, 1,
                                                                 rep.stride, rep.stride, 0, 0),
                                        n, rep.out_channels, h, w, widen(rep.bn1x1.gamma),
                                        widen(rep.bn1x1.beta), widen(rep.bn1x1.running_mean),
                                        widen(rep.bn1x1.running_var), double(rep.bn1x1.eps));
        for (size_t i = 0; i < sum.size(); ++i) sum[i] += branch[i];
    }
    if (rep.has_identity) {
        const std::vector<double> branch = ref::batchnorm_nchw<double>(
            input, n, c, h, w, widen(rep.identity_bn.gamma), widen(rep.identity_bn.beta),
            widen(rep.identity_bn.running_mean), widen(rep.identity_bn.running_var),
            double(rep.identity_bn.eps));
        for (size_t i = 0; i < sum.size(); ++i) sum[i] += branch[i];
    }
    return sum;
}

// fused 3x3 kernel in pure float64, restated independently of the
// library's fuse path
inline ConvF64 fuse_rep_block_f64(const repkit::RepBlockSpec& rep) {
    const int c_in = rep.in_channels, c_out = rep.out_channels;
    ConvF64 fused = fold_bn_f64(rep.conv3x3.weight, rep.conv3x3.bias, rep.bn3x3, c_out);
    if (rep.has_conv1x1) {
        const ConvF64 one = fold_bn_f64(rep.conv1x1.weight, rep.conv1x1.bias, rep.bn1x1, c_out);
        for (int oc = 0; oc < c_out; ++oc) {
            for (int ic = 0; ic < c_in; ++ic) {
                fused.weight[((size_t(oc) * c_in + ic) * 3 + 1) * 3 + 1] +=
                    one.weight[size_t(oc) * c_in + ic];
            }
            fused.bias[size_t(oc)] += one.bias[size_t(oc)];
        }
    }
    if (rep.has_identity) {
        std::vector<float> dirac(size_t(c_out) * c_in * 9, 0.0f);
        for (int oc = 0; oc < c_out; ++oc) {
            dirac[((size_t(oc) * c_in + oc) * 3 + 1) * 3 + 1] = 1.0f;
        }
        const ConvF64 id = fold_bn_f64(dirac, std::vector<float>(size_t(c_out), 0.0f),
                                       rep.identity_bn, c_out);
        for (size_t i = 0; i < fused.weight.size(); ++i) fused.weight[i] += id.weight[i];
        for (size_t i = 0; i < fused.bias.size(); ++i) fused.bias[i] += id.bias[i];
    }
    return fused;
}

inline std::vector<double> rep_block_fused_f64(const repkit::RepBlockSpec& rep,
                                               const std::vector<double>& input, int n, int h,
                                               int w) {
    const ConvF64 fused = fuse_rep_block_f64(rep);
    return repkit::reference::conv2d_nchw<double>(input, n, rep.in_channels, h, w, fused.weight,
                                                  fused.bias, rep.out_channels, 1, 3, 3,
                                                  rep.stride, rep.stride, 1, 1);
}

}  // namespace testsupport
