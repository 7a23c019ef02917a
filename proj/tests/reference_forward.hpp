#pragma once

// Plain scalar-loop forward pass used as an independent oracle for the
// library's vectorized implementation. No shared code paths beyond the
// parameter struct itself.

#include <cmath>
#include <optional>
#include <vector>

#include "pllm/model.hpp"
#include "pllm/vocab.hpp"

namespace reference {

using pllm::Mat;
using pllm::ModelParams;

inline double ref_gelu(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline std::vector<double> ref_layernorm(const std::vector<double>& x,
                                         const std::vector<double>& gain,
                                         const std::vector<double>& bias) {
  const size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + 1e-5);
  std::vector<double> y(d);
  for (size_t i = 0; i < d; ++i) y[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  return y;
}

// Logits for one example, position-major.
inline std::vector<std::vector<double>> forward_logits(const ModelParams& p,
                                                       const std::vector<int>& ids,
                                                       const std::optional<Mat>& features) {
  const int S = static_cast<int>(ids.size());
  const int d = p.config.dim;
  const int H = p.config.heads;
  const int dh = d / H;
  const int V = p.config.vocab;
  const int ffn = p.config.ffn;

  // embeddings + sinusoidal positions
  std::vector<std::vector<double>> x(static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(d)));
  int modal = 0;
  for (int t = 0; t < S; ++t) {
    if (ids[static_cast<size_t>(t)] == pllm::Vocab::kModal && features) {
      for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int f = 0; f < p.config.feat_dim; ++f) acc += (*features)(modal, f) * p.w_proj(f, j);
        x[static_cast<size_t>(t)][static_cast<size_t>(j)] = acc;
      }
      ++modal;
    } else {
      for (int j = 0; j < d; ++j)
        x[static_cast<size_t>(t)][static_cast<size_t>(j)] = p.tok_embed(ids[static_cast<size_t>(t)], j);
    }
    for (int i = 0; i < d; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(t) / rate;
      x[static_cast<size_t>(t)][static_cast<size_t>(i)] += std::sin(angle);
      if (i + 1 < d) x[static_cast<size_t>(t)][static_cast<size_t>(i + 1)] += std::cos(angle);
    }
  }

  for (const auto& lp : p.layers) {
    std::vector<double> g1(lp.ln1_gain.data(), lp.ln1_gain.data() + d);
    std::vector<double> b1(lp.ln1_bias.data(), lp.ln1_bias.data() + d);
    std::vector<std::vector<double>> a(static_cast<size_t>(S));
    for (int t = 0; t < S; ++t) a[static_cast<size_t>(t)] = ref_layernorm(x[static_cast<size_t>(t)], g1, b1);

    auto project = [&](const Mat& w, const pllm::Vec& b) {
      std::vector<std::vector<double>> out(static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(d)));
      for (int t = 0; t < S; ++t)
        for (int j = 0; j < d; ++j) {
          double acc = b(j);
          for (int i = 0; i < d; ++i) acc += a[static_cast<size_t>(t)][static_cast<size_t>(i)] * w(i, j);
          out[static_cast<size_t>(t)][static_cast<size_t>(j)] = acc;
        }
      return out;
    };
    const auto q = project(lp.wq, lp.bq);
    const auto k = project(lp.wk, lp.bk);
    const auto v = project(lp.wv, lp.bv);

    std::vector<std::vector<double>> merged(static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(d)));
    for (int h = 0; h < H; ++h) {
      for (int t = 0; t < S; ++t) {
        std::vector<double> scores(static_cast<size_t>(t) + 1);
        double mx = -1e300;
        for (int j = 0; j <= t; ++j) {
          double dot = 0.0;
          for (int e = 0; e < dh; ++e)
            dot += q[static_cast<size_t>(t)][static_cast<size_t>(h * dh + e)] *
                   k[static_cast<size_t>(j)][static_cast<size_t>(h * dh + e)];
          scores[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        double z = 0.0;
        for (int j = 0; j <= t; ++j) z += std::exp(scores[static_cast<size_t>(j)] - mx);
        for (int e = 0; e < dh; ++e) {
          double acc = 0.0;
          for (int j = 0; j <= t; ++j)
            acc += std::exp(scores[static_cast<size_t>(j)] - mx) / z *
                   v[static_cast<size_t>(j)][static_cast<size_t>(h * dh + e)];
          merged[static_cast<size_t>(t)][static_cast<size_t>(h * dh + e)] = acc;
        }
      }
    }

    for (int t = 0; t < S; ++t)
      for (int j = 0; j < d; ++j) {
        double acc = lp.bo(j);
        for (int i = 0; i < d; ++i) acc += merged[static_cast<size_t>(t)][static_cast<size_t>(i)] * lp.wo(i, j);
        x[static_cast<size_t>(t)][static_cast<size_t>(j)] += acc;
      }

    std::vector<double> g2(lp.ln2_gain.data(), lp.ln2_gain.data() + d);
    std::vector<double> b2(lp.ln2_bias.data(), lp.ln2_bias.data() + d);
    for (int t = 0; t < S; ++t) {
      const auto h2 = ref_layernorm(x[static_cast<size_t>(t)], g2, b2);
      std::vector<double> hidden(static_cast<size_t>(ffn));
      for (int j = 0; j < ffn; ++j) {
        double acc = lp.b_ff1(j);
        for (int i = 0; i < d; ++i) acc += h2[static_cast<size_t>(i)] * lp.w_ff1(i, j);
        hidden[static_cast<size_t>(j)] = ref_gelu(acc);
      }
      for (int j = 0; j < d; ++j) {
        double acc = lp.b_ff2(j);
        for (int i = 0; i < ffn; ++i) acc += hidden[static_cast<size_t>(i)] * lp.w_ff2(i, j);
        x[static_cast<size_t>(t)][static_cast<size_t>(j)] += acc;
      }
    }
  }

  std::vector<double> gf(p.lnf_gain.data(), p.lnf_gain.data() + d);
  std::vector<double> bf(p.lnf_bias.data(), p.lnf_bias.data() + d);
  std::vector<std::vector<double>> logits(static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(V)));
  for (int t = 0; t < S; ++t) {
    const auto h = ref_layernorm(x[static_cast<size_t>(t)], gf, bf);
    for (int j = 0; j < V; ++j) {
      double acc = p.b_out(j);
      for (int i = 0; i < d; ++i) acc += h[static_cast<size_t>(i)] * p.w_out(i, j);
      logits[static_cast<size_t>(t)][static_cast<size_t>(j)] = acc;
    }
  }
  return logits;
}

}  // namespace reference
