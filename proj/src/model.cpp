#include "pllm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "pllm/rng.hpp"

namespace pllm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

Mat positional_encoding(int context, int dim) {
  Mat p(context, dim);
  for (int t = 0; t < context; ++t) {
    for (int i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / rate;
      p(t, i) = std::sin(angle);
      if (i + 1 < dim) p(t, i + 1) = std::cos(angle);
    }
  }
  return p;
}

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  const double u = kC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  constexpr double kC = 0.7978845608028654;
  const double u = kC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// y = (x - mean)/sqrt(var+eps) .* gain + bias, row-wise over dim.
void layernorm_forward(const Mat& x, const Vec& gain, const Vec& bias, Mat& y, Vec& mean,
                       Vec& rstd) {
  const i64 rows = x.rows(), cols = x.cols();
  y.resize(rows, cols);
  mean.resize(rows);
  rstd.resize(rows);
  for (i64 r = 0; r < rows; ++r) {
    const double m = x.row(r).mean();
    const double var = (x.row(r).array() - m).square().mean();
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    mean(r) = m;
    rstd(r) = rs;
    y.row(r) = (((x.row(r).array() - m) * rs) * gain.transpose().array()).matrix() +
               bias.transpose();
  }
}

void layernorm_backward(const Mat& x, const Vec& gain, const Vec& mean, const Vec& rstd,
                        const Mat& dy, Mat& dx, Vec& dgain, Vec& dbias) {
  const i64 rows = x.rows(), cols = x.cols();
  dx.resize(rows, cols);
  for (i64 r = 0; r < rows; ++r) {
    const auto xhat = ((x.row(r).array() - mean(r)) * rstd(r)).eval();
    const auto dyr = dy.row(r).array();
    dgain.array() += (dyr * xhat).transpose();
    dbias.array() += dyr.transpose();
    const auto dxhat = (dyr * gain.transpose().array()).eval();
    const double m_dxhat = dxhat.mean();
    const double m_dxhat_xhat = (dxhat * xhat).mean();
    dx.row(r) = (rstd(r) * (dxhat - m_dxhat - xhat * m_dxhat_xhat)).matrix();
  }
  (void)cols;
}

void validate_batch(const ModelParams& params, const Batch& batch) {
  const auto& c = params.config;
  if (batch.ids.empty()) throw std::invalid_argument("forward: empty batch");
  const size_t S = batch.ids[0].size();
  if (static_cast<int>(S) > c.context)
    throw std::invalid_argument("forward: sequence length " + std::to_string(S) +
                                " exceeds context window " + std::to_string(c.context));
  if (!batch.features.empty() && batch.features.size() != batch.ids.size())
    throw std::invalid_argument("forward: features list size mismatch");
  for (size_t b = 0; b < batch.ids.size(); ++b) {
    if (batch.ids[b].size() != S)
      throw std::invalid_argument("forward: ragged batch (unequal sequence lengths)");
    i64 n_modal = 0;
    for (int id : batch.ids[b]) {
      if (id < 0 || id >= c.vocab) throw std::invalid_argument("forward: token id out of range");
      if (id == Vocab::kModal) ++n_modal;
    }
    const bool has_features = !batch.features.empty() && batch.features[b].has_value();
    if (n_modal > 0 && !has_features)
      throw std::invalid_argument("forward: modal tokens present but no features given");
    if (has_features) {
      const Mat& f = *batch.features[b];
      if (f.rows() != n_modal)
        throw std::invalid_argument("forward: feature rows (" + std::to_string(f.rows()) +
                                    ") must match modal token count (" + std::to_string(n_modal) + ")");
      if (f.cols() != c.feat_dim)
        throw std::invalid_argument("forward: feature dim mismatch");
    }
  }
}

}  // namespace

ModelParams zeros_like(const ModelConfig& c) {
  ModelParams p;
  p.config = c;
  p.tok_embed = Mat::Zero(c.vocab, c.dim);
  p.w_proj = Mat::Zero(c.feat_dim, c.dim);
  p.layers.resize(static_cast<size_t>(c.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Vec::Zero(c.dim);
    l.ln1_bias = Vec::Zero(c.dim);
    l.wq = Mat::Zero(c.dim, c.dim);
    l.wk = Mat::Zero(c.dim, c.dim);
    l.wv = Mat::Zero(c.dim, c.dim);
    l.wo = Mat::Zero(c.dim, c.dim);
    l.bq = Vec::Zero(c.dim);
    l.bk = Vec::Zero(c.dim);
    l.bv = Vec::Zero(c.dim);
    l.bo = Vec::Zero(c.dim);
    l.ln2_gain = Vec::Zero(c.dim);
    l.ln2_bias = Vec::Zero(c.dim);
    l.w_ff1 = Mat::Zero(c.dim, c.ffn);
    l.b_ff1 = Vec::Zero(c.ffn);
    l.w_ff2 = Mat::Zero(c.ffn, c.dim);
    l.b_ff2 = Vec::Zero(c.dim);
  }
  p.lnf_gain = Vec::Zero(c.dim);
  p.lnf_bias = Vec::Zero(c.dim);
  p.w_out = Mat::Zero(c.dim, c.vocab);
  p.b_out = Vec::Zero(c.vocab);
  return p;
}

ModelParams init_params(const ModelConfig& c, u64 seed) {
  if (c.vocab < Vocab::kNumReserved) throw std::invalid_argument("init_params: vocab too small");
  if (c.dim < 1 || c.layers < 1 || c.heads < 1 || c.ffn < 1 || c.feat_dim < 1 || c.context < 1)
    throw std::invalid_argument("init_params: all dimensions must be positive");
  if (c.dim % c.heads != 0) throw std::invalid_argument("init_params: dim must divide by heads");

  ModelParams p = zeros_like(c);
  Rng rng(Rng::mix(seed, 0x696e6974ULL));
  auto fill = [&rng](Mat& m) {
    for (i64 r = 0; r < m.rows(); ++r)
      for (i64 cc = 0; cc < m.cols(); ++cc) m(r, cc) = rng.next_gaussian(0.0, kInitStd);
  };
  fill(p.tok_embed);
  fill(p.w_proj);
  for (auto& l : p.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.w_ff1);
    fill(l.w_ff2);
  }
  p.lnf_gain.setOnes();
  fill(p.w_out);
  return p;
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  auto add_mat = [&refs](const std::string& name, Mat& m) {
    refs.push_back({name, m.data(), m.rows(), m.cols()});
  };
  auto add_vec = [&refs](const std::string& name, Vec& v) {
    refs.push_back({name, v.data(), v.size(), 1});
  };
  add_mat("tok_embed", p.tok_embed);
  add_mat("w_proj", p.w_proj);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    auto& l = p.layers[i];
    add_vec(pre + "ln1_gain", l.ln1_gain);
    add_vec(pre + "ln1_bias", l.ln1_bias);
    add_mat(pre + "wq", l.wq);
    add_vec(pre + "bq", l.bq);
    add_mat(pre + "wk", l.wk);
    add_vec(pre + "bk", l.bk);
    add_mat(pre + "wv", l.wv);
    add_vec(pre + "bv", l.bv);
    add_mat(pre + "wo", l.wo);
    add_vec(pre + "bo", l.bo);
    add_vec(pre + "ln2_gain", l.ln2_gain);
    add_vec(pre + "ln2_bias", l.ln2_bias);
    add_mat(pre + "w_ff1", l.w_ff1);
    add_vec(pre + "b_ff1", l.b_ff1);
    add_mat(pre + "w_ff2", l.w_ff2);
    add_vec(pre + "b_ff2", l.b_ff2);
  }
  add_vec("lnf_gain", p.lnf_gain);
  add_vec("lnf_bias", p.lnf_bias);
  add_mat("w_out", p.w_out);
  add_vec("b_out", p.b_out);
  return refs;
}

i64 param_count(const ModelConfig& c) {
  ModelParams p = zeros_like(c);
  i64 total = 0;
  for (auto& r : tensor_refs(p)) total += r.size();
  return total;
}

std::optional<std::string> find_non_finite(ModelParams& p) {
  for (auto& r : tensor_refs(p)) {
    for (i64 i = 0; i < r.size(); ++i)
      if (!std::isfinite(r.data[i])) return r.name;
  }
  return std::nullopt;
}

ForwardResult forward(const ModelParams& params, const Batch& batch) {
  validate_batch(params, batch);
  const auto& c = params.config;
  const int S = static_cast<int>(batch.ids[0].size());
  const int H = c.heads;
  const int dh = c.dim / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  static thread_local Mat pos_cache;
  static thread_local int pos_context = -1, pos_dim = -1;
  if (pos_context != c.context || pos_dim != c.dim) {
    pos_cache = positional_encoding(c.context, c.dim);
    pos_context = c.context;
    pos_dim = c.dim;
  }

  ForwardResult out;
  out.examples.resize(batch.ids.size());

  for (size_t b = 0; b < batch.ids.size(); ++b) {
    ExampleCache& ex = out.examples[b];
    const auto& ids = batch.ids[b];
    const bool has_features = !batch.features.empty() && batch.features[b].has_value();

    ex.embed.resize(S, c.dim);
    i64 modal_row = 0;
    for (int t = 0; t < S; ++t) {
      if (ids[static_cast<size_t>(t)] == Vocab::kModal && has_features) {
        ex.embed.row(t) = batch.features[b]->row(modal_row++) * params.w_proj;
      } else {
        ex.embed.row(t) = params.tok_embed.row(ids[static_cast<size_t>(t)]);
      }
    }
    ex.x0 = ex.embed + pos_cache.topRows(S);

    Mat x = ex.x0;
    ex.layers.resize(static_cast<size_t>(c.layers));
    for (int li = 0; li < c.layers; ++li) {
      LayerCache& lc = ex.layers[static_cast<size_t>(li)];
      const LayerParams& lp = params.layers[static_cast<size_t>(li)];
      lc.x_in = x;
      layernorm_forward(lc.x_in, lp.ln1_gain, lp.ln1_bias, lc.a1, lc.ln1_mean, lc.ln1_rstd);

      lc.q = lc.a1 * lp.wq;
      lc.q.rowwise() += lp.bq.transpose();
      lc.k = lc.a1 * lp.wk;
      lc.k.rowwise() += lp.bk.transpose();
      lc.v = lc.a1 * lp.wv;
      lc.v.rowwise() += lp.bv.transpose();

      lc.att.assign(static_cast<size_t>(H), Mat());
      lc.head_concat.resize(S, c.dim);
      for (int h = 0; h < H; ++h) {
        const auto qh = lc.q.middleCols(h * dh, dh);
        const auto kh = lc.k.middleCols(h * dh, dh);
        const auto vh = lc.v.middleCols(h * dh, dh);
        Mat scores = (qh * kh.transpose()) * scale;
        Mat& att = lc.att[static_cast<size_t>(h)];
        att.resize(S, S);
        for (int i = 0; i < S; ++i) {
          // Causal softmax over j <= i.
          double mx = scores(i, 0);
          for (int j = 1; j <= i; ++j) mx = std::max(mx, scores(i, j));
          double sum = 0.0;
          for (int j = 0; j <= i; ++j) {
            const double e = std::exp(scores(i, j) - mx);
            att(i, j) = e;
            sum += e;
          }
          for (int j = 0; j <= i; ++j) att(i, j) /= sum;
          for (int j = i + 1; j < S; ++j) att(i, j) = 0.0;
        }
        lc.head_concat.middleCols(h * dh, dh) = att * vh;
      }

      Mat attn_out = lc.head_concat * lp.wo;
      attn_out.rowwise() += lp.bo.transpose();
      lc.x_mid = lc.x_in + attn_out;

      layernorm_forward(lc.x_mid, lp.ln2_gain, lp.ln2_bias, lc.a2, lc.ln2_mean, lc.ln2_rstd);
      lc.ff1 = lc.a2 * lp.w_ff1;
      lc.ff1.rowwise() += lp.b_ff1.transpose();
      lc.ff_act.resize(S, c.ffn);
      for (i64 r = 0; r < lc.ff1.rows(); ++r)
        for (i64 cc = 0; cc < lc.ff1.cols(); ++cc) lc.ff_act(r, cc) = gelu(lc.ff1(r, cc));
      Mat ff_out = lc.ff_act * lp.w_ff2;
      ff_out.rowwise() += lp.b_ff2.transpose();
      x = lc.x_mid + ff_out;
    }

    ex.x_final = x;
    ex.hidden = ex.x_final;  // EXPERIMENT no final LN
    ex.logits = ex.hidden * params.w_out;
    ex.logits.rowwise() += params.b_out.transpose();
  }
  return out;
}

BackwardResult loss_and_backward(const ModelParams& params, const Batch& batch,
                                 const ForwardResult& fwd) {
  const auto& c = params.config;
  if (batch.targets.size() != batch.ids.size() || batch.mask.size() != batch.ids.size())
    throw std::invalid_argument("loss_and_backward: targets/mask missing");
  if (fwd.examples.size() != batch.ids.size())
    throw std::invalid_argument("loss_and_backward: forward cache batch size mismatch");

  i64 n_mask = 0;
  for (size_t b = 0; b < batch.mask.size(); ++b) {
    i64 per_example = 0;
    for (auto m : batch.mask[b]) per_example += (m != 0);
    if (per_example == 0)
      throw std::invalid_argument("loss_and_backward: example " + std::to_string(b) +
                                  " has an empty loss mask");
    n_mask += per_example;
  }

  BackwardResult res;
  res.grads = zeros_like(c);
  ModelParams& g = res.grads;
  const int H = c.heads;
  const int dh = c.dim / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double inv_n = 1.0 / static_cast<double>(n_mask);

  for (size_t b = 0; b < batch.ids.size(); ++b) {
    const ExampleCache& ex = fwd.examples[b];
    const auto& ids = batch.ids[b];
    const auto& targets = batch.targets[b];
    const auto& mask = batch.mask[b];
    const int S = static_cast<int>(ids.size());

    // Softmax cross-entropy on masked positions.
    Mat dlogits = Mat::Zero(S, c.vocab);
    for (int t = 0; t < S; ++t) {
      if (!mask[static_cast<size_t>(t)]) continue;
      const int target = targets[static_cast<size_t>(t)];
      if (target < 0 || target >= c.vocab)
        throw std::invalid_argument("loss_and_backward: target id out of range");
      const auto row = ex.logits.row(t);
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      res.loss += (lse - row(target)) * inv_n;
      dlogits.row(t) = ((row.array() - lse).exp() * inv_n).matrix();
      dlogits(t, target) -= inv_n;
    }

    // Output head.
    g.w_out.noalias() += ex.hidden.transpose() * dlogits;
    g.b_out.noalias() += dlogits.colwise().sum().transpose();
    Mat dhidden = dlogits * params.w_out.transpose();

    Mat dx = dhidden;  // EXPERIMENT no final LN

    for (int li = c.layers - 1; li >= 0; --li) {
      const LayerCache& lc = ex.layers[static_cast<size_t>(li)];
      const LayerParams& lp = params.layers[static_cast<size_t>(li)];
      LayerParams& lg = g.layers[static_cast<size_t>(li)];

      // Feed-forward block: x = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2.
      const Mat& dff_out = dx;
      lg.w_ff2.noalias() += lc.ff_act.transpose() * dff_out;
      lg.b_ff2.noalias() += dff_out.colwise().sum().transpose();
      Mat dff_act = dff_out * lp.w_ff2.transpose();
      Mat dff1(dff_act.rows(), dff_act.cols());
      for (i64 r = 0; r < dff1.rows(); ++r)
        for (i64 cc = 0; cc < dff1.cols(); ++cc)
          dff1(r, cc) = dff_act(r, cc) * gelu_grad(lc.ff1(r, cc));
      lg.w_ff1.noalias() += lc.a2.transpose() * dff1;
      lg.b_ff1.noalias() += dff1.colwise().sum().transpose();
      Mat da2 = dff1 * lp.w_ff1.transpose();

      Mat dx_mid;
      layernorm_backward(lc.x_mid, lp.ln2_gain, lc.ln2_mean, lc.ln2_rstd, da2, dx_mid,
                         lg.ln2_gain, lg.ln2_bias);
      dx_mid += dx;  // residual

      // Attention block: x_mid = x_in + (heads(ln1(x_in))) Wo + bo.
      lg.wo.noalias() += lc.head_concat.transpose() * dx_mid;
      lg.bo.noalias() += dx_mid.colwise().sum().transpose();
      Mat dhead = dx_mid * lp.wo.transpose();

      Mat dq = Mat::Zero(S, c.dim);
      Mat dk = Mat::Zero(S, c.dim);
      Mat dv = Mat::Zero(S, c.dim);
      for (int h = 0; h < H; ++h) {
        const auto qh = lc.q.middleCols(h * dh, dh);
        const auto kh = lc.k.middleCols(h * dh, dh);
        const auto vh = lc.v.middleCols(h * dh, dh);
        const Mat& att = lc.att[static_cast<size_t>(h)];
        const auto dout_h = dhead.middleCols(h * dh, dh);

        Mat datt = dout_h * vh.transpose();
        dv.middleCols(h * dh, dh).noalias() += att.transpose() * dout_h;

        // Row-wise softmax backward; masked positions have att == 0.
        Mat dscores(S, S);
        for (int i = 0; i < S; ++i) {
          const double dot = (datt.row(i).array() * att.row(i).array()).sum();
          dscores.row(i) = (att.row(i).array() * (datt.row(i).array() - dot)).matrix();
        }
        dq.middleCols(h * dh, dh).noalias() += (dscores * kh) * scale;
        dk.middleCols(h * dh, dh).noalias() += (dscores.transpose() * qh) * scale;
      }

      lg.wq.noalias() += lc.a1.transpose() * dq;
      lg.bq.noalias() += dq.colwise().sum().transpose();
      lg.wk.noalias() += lc.a1.transpose() * dk;
      lg.bk.noalias() += dk.colwise().sum().transpose();
      lg.wv.noalias() += lc.a1.transpose() * dv;
      lg.bv.noalias() += dv.colwise().sum().transpose();

      Mat da1 = dq * lp.wq.transpose();
      da1.noalias() += dk * lp.wk.transpose();
      da1.noalias() += dv * lp.wv.transpose();

      Mat dx_in;
      layernorm_backward(lc.x_in, lp.ln1_gain, lc.ln1_mean, lc.ln1_rstd, da1, dx_in,
                         lg.ln1_gain, lg.ln1_bias);
      dx_in += dx_mid;  // residual
      dx = std::move(dx_in);
    }

    // Embedding and modality projector.
    const bool has_features = !batch.features.empty() && batch.features[b].has_value();
    i64 modal_row = 0;
    for (int t = 0; t < S; ++t) {
      if (ids[static_cast<size_t>(t)] == Vocab::kModal && has_features) {
        g.w_proj.noalias() +=
            batch.features[b]->row(modal_row).transpose() * dx.row(t);
        ++modal_row;
      } else {
        g.tok_embed.row(ids[static_cast<size_t>(t)]) += dx.row(t);
      }
    }
  }
  return res;
}

double loss_only(const ModelParams& params, const Batch& batch) {
  const ForwardResult fwd = forward(params, batch);
  double loss = 0.0;
  i64 n_mask = 0;
  for (size_t b = 0; b < batch.mask.size(); ++b)
    for (auto m : batch.mask[b]) n_mask += (m != 0);
  if (n_mask == 0) throw std::invalid_argument("loss_only: empty loss mask");
  for (size_t b = 0; b < batch.ids.size(); ++b) {
    const ExampleCache& ex = fwd.examples[b];
    const auto& targets = batch.targets[b];
    const auto& mask = batch.mask[b];
    for (int t = 0; t < static_cast<int>(targets.size()); ++t) {
      if (!mask[static_cast<size_t>(t)]) continue;
      const auto row = ex.logits.row(t);
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      loss += lse - row(targets[static_cast<size_t>(t)]);
    }
  }
  return loss / static_cast<double>(n_mask);
}

std::vector<int> generate(const ModelParams& params, const std::vector<int>& prompt_ids,
                          const std::optional<Mat>& features, int max_new) {
  if (max_new < 0) throw std::invalid_argument("generate: max_new must be >= 0");
  if (prompt_ids.empty()) throw std::invalid_argument("generate: empty prompt");

  std::vector<int> ids = prompt_ids;
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(ids.size()) >= params.config.context) break;
    Batch b;
    b.ids.push_back(ids);
    b.features.push_back(features);
    const ForwardResult fwd = forward(params, b);
    const auto logits = fwd.examples[0].logits.row(static_cast<i64>(ids.size()) - 1);
    i64 best = 0;
    logits.maxCoeff(&best);
    const int next = static_cast<int>(best);
    if (next == Vocab::kEos) break;
    out.push_back(next);
    ids.push_back(next);
  }
  return out;
}

}  // namespace pllm
