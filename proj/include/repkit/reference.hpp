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

#include <cmath>
#include <cstdint>
#include <vector>

namespace repkit::reference {

// Serial scalar kernels kept alongside the parallel ones. They define
// the contract: the OpenMP conv2d must match conv2d_nchw<float>
// bit-for-bit, and the templates double as float64 oracles for the
// fusion-equivalence tests. No dependency on the production kernels.

// weight layout (out_c, in_c/groups, kh, kw); bias length out_c.
// Accumulation in float64, per output element ordered input channel ->
// kernel row -> kernel column, seeded with the bias.
template <typename T>
std::vector<T> conv2d_nchw(const std::vector<T>& input, int n, int in_c, int h, int w,
                           const std::vector<T>& weight, const std::vector<T>& bias,
                           int out_c, int groups, int kh, int kw, int sh, int sw,
                           int ph, int pw) {
    const int oh = (h + 2 * ph - kh) / sh + 1;
    const int ow = (w + 2 * pw - kw) / sw + 1;
    const int icpg = in_c / groups;
    const int ocpg = out_c / groups;
    std::vector<T> out(int64_t(n) * out_c * oh * ow);
    for (int b = 0; b < n; ++b) {
        for (int oc = 0; oc < out_c; ++oc) {
            const int g = oc / ocpg;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = double(bias[oc]);
                    for (int ic = 0; ic < icpg; ++ic) {
                        const int src_c = g * icpg + ic;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * sh + ky - ph;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * sw + kx - pw;
                                if (ix < 0 || ix >= w) continue;
                                const double v =
                                    double(input[((int64_t(b) * in_c + src_c) * h + iy) * w + ix]);
                                const double wv =
                                    double(weight[((int64_t(oc) * icpg + ic) * kh + ky) * kw + kx]);
                                acc += v * wv;
                            }
                        }
                    }
                    out[((int64_t(b) * out_c + oc) * oh + oy) * ow + ox] = T(acc);
                }
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> batchnorm_nchw(const std::vector<T>& input, int n, int c, int h, int w,
                              const std::vector<T>& gamma, const std::vector<T>& beta,
                              const std::vector<T>& mean, const std::vector<T>& var,
                              double eps) {
    std::vector<T> out(input.size());
    const int64_t plane = int64_t(h) * w;
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const double s = double(gamma[ch]) / std::sqrt(double(var[ch]) + eps);
            const double m = double(mean[ch]);
            const double bt = double(beta[ch]);
            const int64_t base = (int64_t(b) * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                out[base + i] = T(s * (double(input[base + i]) - m) + bt);
            }
        }
    }
    return out;
}

}  // namespace repkit::reference
