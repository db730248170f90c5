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

#include "repkit/tensor.hpp"

#include <cmath>
#include <cstring>

#include "repkit/error.hpp"

namespace repkit {

Tensor::Tensor(int n_, int c_, int h_, int w_, float fill) : n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
        fail_domain(strf("tensor dimensions must be >= 1, got (%d, %d, %d, %d)", n, c, h, w));
    }
    data.assign(size_t(size()), fill);
}

void ConvSpec::check() const {
    if (in_channels < 1 || out_channels < 1 || groups < 1) {
        fail_domain(strf("conv channel counts must be positive (in=%d, out=%d, groups=%d)",
                         in_channels, out_channels, groups));
    }
    if (in_channels % groups != 0) {
        fail_domain(strf("conv in_channels %d not divisible by groups %d", in_channels, groups));
    }
    if (out_channels % groups != 0) {
        fail_domain(strf("conv out_channels %d not divisible by groups %d", out_channels, groups));
    }
    if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0) {
        fail_domain(strf("conv kernel/stride/padding invalid (k=%dx%d, s=%dx%d, p=%dx%d)", kh, kw,
                         sh, sw, ph, pw));
    }
    if (int64_t(weight.size()) != weight_count()) {
        fail_domain(strf("conv weight length %zu, expected %lld for (out=%d, in/g=%d, k=%dx%d)",
                         weight.size(), (long long)weight_count(), out_channels,
                         in_channels / groups, kh, kw));
    }
    if (int(bias.size()) != out_channels) {
        fail_domain(strf("conv bias length %zu, expected %d", bias.size(), out_channels));
    }
}

void BatchNormSpec::check() const {
    const size_t c = gamma.size();
    if (c == 0 || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
        fail_domain(strf("batchnorm arrays must share one nonzero length (gamma=%zu, beta=%zu, "
                         "mean=%zu, var=%zu)",
                         gamma.size(), beta.size(), running_mean.size(), running_var.size()));
    }
    if (eps < 0.0f) fail_domain(strf("batchnorm eps %g must be >= 0", double(eps)));
    for (size_t i = 0; i < c; ++i) {
        if (running_var[i] < 0.0f) {
            fail_domain(strf("batchnorm running_var[%zu] = %g must be >= 0", i,
                             double(running_var[i])));
        }
        if (double(running_var[i]) + double(eps) <= 0.0) {
            fail_domain(strf("batchnorm var[%zu] + eps is not positive", i));
        }
    }
}

BatchNormSpec BatchNormSpec::neutral(int channels) {
    BatchNormSpec bn;
    bn.gamma.assign(channels, 1.0f);
    bn.beta.assign(channels, 0.0f);
    bn.running_mean.assign(channels, 0.0f);
    bn.running_var.assign(channels, 1.0f);
    bn.eps = 0.0f;
    return bn;
}

void conv_output_dims(const Tensor& input, const ConvSpec& spec, int* oh, int* ow) {
    *oh = (input.h + 2 * spec.ph - spec.kh) / spec.sh + 1;
    *ow = (input.w + 2 * spec.pw - spec.kw) / spec.sw + 1;
    if (input.h + 2 * spec.ph < spec.kh || *oh < 1) {
        fail_domain(strf("conv output height < 1 (input h=%d, pad=%d, kernel=%d)", input.h,
                         spec.ph, spec.kh));
    }
    if (input.w + 2 * spec.pw < spec.kw || *ow < 1) {
        fail_domain(strf("conv output width < 1 (input w=%d, pad=%d, kernel=%d)", input.w, spec.pw,
                         spec.kw));
    }
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
    spec.check();
    if (input.c != spec.in_channels) {
        fail_domain(strf("conv input channel count %d does not match spec in_channels %d", input.c,
                         spec.in_channels));
    }
    int oh = 0, ow = 0;
    conv_output_dims(input, spec, &oh, &ow);

    Tensor out(input.n, spec.out_channels, oh, ow);
    const int icpg = spec.in_channels / spec.groups;
    const int ocpg = spec.out_channels / spec.groups;
    const float* in = input.data.data();
    const float* wt = spec.weight.data();
    float* dst = out.data.data();
    const int in_c = input.c, h = input.h, w = input.w;
    const int kh = spec.kh, kw = spec.kw, sh = spec.sh, sw = spec.sw, ph = spec.ph, pw = spec.pw;

    // Each output element owns its full accumulation chain, so the
    // parallel schedule cannot change any result bit.
    const int64_t rows = int64_t(input.n) * spec.out_channels * oh;
#pragma omp parallel for schedule(static) if (rows * ow >= 4096)
    for (int64_t row = 0; row < rows; ++row) {
        const int oy = int(row % oh);
        const int oc = int((row / oh) % spec.out_channels);
        const int b = int(row / (int64_t(oh) * spec.out_channels));
        const int g = oc / ocpg;
        for (int ox = 0; ox < ow; ++ox) {
            double acc = double(spec.bias[oc]);
            for (int ic = 0; ic < icpg; ++ic) {
                const int src_c = g * icpg + ic;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * sh + ky - ph;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * sw + kx - pw;
                        if (ix < 0 || ix >= w) continue;
                        acc += double(in[((int64_t(b) * in_c + src_c) * h + iy) * w + ix]) *
                               double(wt[((int64_t(oc) * icpg + ic) * kh + ky) * kw + kx]);
                    }
                }
            }
            dst[(row * ow) + ox] = float(acc);
        }
    }
    return out;
}

Tensor batchnorm(const Tensor& input, const BatchNormSpec& spec) {
    spec.check();
    if (input.c != spec.channels()) {
        fail_domain(strf("batchnorm channel count %d does not match input channels %d",
                         spec.channels(), input.c));
    }
    Tensor out(input.n, input.c, input.h, input.w);
    const int64_t plane = int64_t(input.h) * input.w;
    for (int b = 0; b < input.n; ++b) {
        for (int ch = 0; ch < input.c; ++ch) {
            const double s = double(spec.gamma[ch]) /
                             std::sqrt(double(spec.running_var[ch]) + double(spec.eps));
            const double m = double(spec.running_mean[ch]);
            const double bt = double(spec.beta[ch]);
            const int64_t base = (int64_t(b) * input.c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                out.data[base + i] = float(s * (double(input.data[base + i]) - m) + bt);
            }
        }
    }
    return out;
}

Tensor channel_shuffle(const Tensor& input, int groups) {
    if (groups < 1 || input.c % groups != 0) {
        fail_domain(strf("channel count %d not divisible by shuffle groups %d", input.c, groups));
    }
    const int per = input.c / groups;
    Tensor out(input.n, input.c, input.h, input.w);
    const int64_t plane = int64_t(input.h) * input.w;
    for (int b = 0; b < input.n; ++b) {
        for (int oc = 0; oc < input.c; ++oc) {
            const int j = oc / per;
            const int k = oc % per;
            const int src = k * groups + j;
            std::memcpy(out.data.data() + (int64_t(b) * input.c + oc) * plane,
                        input.data.data() + (int64_t(b) * input.c + src) * plane,
                        size_t(plane) * sizeof(float));
        }
    }
    return out;
}

Tensor eltwise(EltwiseOp op, const std::vector<const Tensor*>& inputs) {
    if (inputs.empty()) fail_domain("eltwise requires at least one input");
    const Tensor& first = *inputs[0];
    if (op == EltwiseOp::add) {
        for (size_t i = 1; i < inputs.size(); ++i) {
            if (!inputs[i]->same_shape(first)) {
                fail_domain(strf("eltwise add input %zu shape (%d,%d,%d,%d) differs from "
                                 "(%d,%d,%d,%d)",
                                 i, inputs[i]->n, inputs[i]->c, inputs[i]->h, inputs[i]->w,
                                 first.n, first.c, first.h, first.w));
            }
        }
        Tensor out(first.n, first.c, first.h, first.w);
        const int64_t total = first.size();
        for (int64_t e = 0; e < total; ++e) {
            double acc = 0.0;
            for (const Tensor* t : inputs) acc += double(t->data[e]);
            out.data[e] = float(acc);
        }
        return out;
    }
    // concat_channels
    int total_c = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor* t = inputs[i];
        if (t->n != first.n || t->h != first.h || t->w != first.w) {
            fail_domain(strf("concat input %zu spatial shape (%d,·,%d,%d) differs from "
                             "(%d,·,%d,%d)",
                             i, t->n, t->h, t->w, first.n, first.h, first.w));
        }
        total_c += t->c;
    }
    Tensor out(first.n, total_c, first.h, first.w);
    const int64_t plane = int64_t(first.h) * first.w;
    for (int b = 0; b < first.n; ++b) {
        int at = 0;
        for (const Tensor* t : inputs) {
            std::memcpy(out.data.data() + (int64_t(b) * total_c + at) * plane,
                        t->data.data() + int64_t(b) * t->c * plane,
                        size_t(t->c) * plane * sizeof(float));
            at += t->c;
        }
    }
    return out;
}

Tensor activation(const Tensor& input, Activation kind) {
    Tensor out(input.n, input.c, input.h, input.w);
    const int64_t total = input.size();
    switch (kind) {
        case Activation::identity:
            out.data = input.data;
            break;
        case Activation::leaky_relu:
            for (int64_t i = 0; i < total; ++i) {
                const float x = input.data[i];
                out.data[i] = x >= 0.0f ? x : float(0.1 * double(x));
            }
            break;
        case Activation::silu:
            for (int64_t i = 0; i < total; ++i) {
                const double x = double(input.data[i]);
                out.data[i] = float(x / (1.0 + std::exp(-x)));
            }
            break;
    }
    return out;
}

Tensor max_pool_2x2(const Tensor& input) {
    if (input.h < 2 || input.w < 2) {
        fail_domain(strf("max_pool_2x2 needs spatial dims >= 2, got %dx%d", input.h, input.w));
    }
    const int oh = input.h / 2, ow = input.w / 2;
    Tensor out(input.n, input.c, oh, ow);
    for (int b = 0; b < input.n; ++b) {
        for (int ch = 0; ch < input.c; ++ch) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    // fixed scan order, first element wins ties
                    float best = input.at(b, ch, oy * 2, ox * 2);
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const float v = input.at(b, ch, oy * 2 + dy, ox * 2 + dx);
                            if (v > best) best = v;
                        }
                    }
                    out.at(b, ch, oy, ox) = best;
                }
            }
        }
    }
    return out;
}

Tensor upsample_nearest_2x(const Tensor& input) {
    Tensor out(input.n, input.c, input.h * 2, input.w * 2);
    for (int b = 0; b < input.n; ++b) {
        for (int ch = 0; ch < input.c; ++ch) {
            for (int y = 0; y < out.h; ++y) {
                for (int x = 0; x < out.w; ++x) {
                    out.at(b, ch, y, x) = input.at(b, ch, y / 2, x / 2);
                }
            }
        }
    }
    return out;
}

}  // namespace repkit
