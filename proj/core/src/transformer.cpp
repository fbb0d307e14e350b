#include "attnlab/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnlab/errors.hpp"
#include "attnlab/ops.hpp"

namespace attnlab {

NormPlacement parse_norm_placement(std::string_view name) {
  if (name == "post") return NormPlacement::post;
  if (name == "pre") return NormPlacement::pre;
  throw UsageError("unknown norm placement '" + std::string(name) + "'");
}

void TransformerConfig::validate() const {
  if (num_layers < 1) throw ValidationError("transformer: num_layers must be >= 1");
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ValidationError("transformer: num_heads must divide model_dim");
  }
  if (ffn_dim == 0) throw ValidationError("transformer: ffn_dim must be positive");
  if (!(ln_eps > 0.0)) throw ValidationError("transformer: ln_eps must be positive");
}

ParamList TransformerLayerParams::parameters() {
  return {{"wq", &wq},       {"bq", &bq},         {"wk", &wk},
          {"bk", &bk},       {"wv", &wv},         {"bv", &bv},
          {"wo", &wo},       {"bo", &bo},         {"w1", &w1},
          {"b1", &b1},       {"w2", &w2},         {"b2", &b2},
          {"ln1_gain", &ln1_gain}, {"ln1_bias", &ln1_bias}, {"ln2_gain", &ln2_gain},
          {"ln2_bias", &ln2_bias}};
}

ParamList TransformerParams::parameters() {
  ParamList out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    append_params(out, "layer" + std::to_string(l), layers[l].parameters());
  }
  return out;
}

namespace {

Matrix xavier(SeededRng& rng, std::size_t in, std::size_t out) {
  return rng.normal_matrix(in, out, std::sqrt(2.0 / static_cast<double>(in + out)));
}

TransformerLayerParams zero_layer(const TransformerConfig& c) {
  const std::size_t d = c.model_dim, f = c.ffn_dim;
  TransformerLayerParams p;
  p.wq = Matrix(d, d);
  p.wk = Matrix(d, d);
  p.wv = Matrix(d, d);
  p.wo = Matrix(d, d);
  p.bq = Matrix(1, d);
  p.bk = Matrix(1, d);
  p.bv = Matrix(1, d);
  p.bo = Matrix(1, d);
  p.w1 = Matrix(d, f);
  p.b1 = Matrix(1, f);
  p.w2 = Matrix(f, d);
  p.b2 = Matrix(1, d);
  p.ln1_gain = Matrix(1, d);
  p.ln1_bias = Matrix(1, d);
  p.ln2_gain = Matrix(1, d);
  p.ln2_bias = Matrix(1, d);
  return p;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = matmul(x, w);
  add_row_broadcast(out, b);
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                  LayerNormCache& cache) {
  const std::size_t rows = x.rows(), d = x.cols();
  cache.normalized = Matrix(rows, d);
  cache.rstd.assign(rows, 0.0);
  Matrix out(rows, d);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    cache.rstd[i] = rstd;
    auto xh = cache.normalized.row(i);
    auto o = out.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      xh[k] = (r[k] - mean) * rstd;
      o[k] = gain(0, k) * xh[k] + bias(0, k);
    }
  }
  return out;
}

// Returns dx; accumulates into d_gain / d_bias.
Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& dy,
                           Matrix& d_gain, Matrix& d_bias) {
  const std::size_t rows = dy.rows(), d = dy.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Matrix dx(rows, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < rows; ++i) {
    auto g = dy.row(i);
    auto xh = cache.normalized.row(i);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      d_gain(0, k) += g[k] * xh[k];
      d_bias(0, k) += g[k];
      dxhat[k] = g[k] * gain(0, k);
      mean_dxhat += dxhat[k];
      mean_dxhat_xhat += dxhat[k] * xh[k];
    }
    mean_dxhat *= inv_d;
    mean_dxhat_xhat *= inv_d;
    auto out = dx.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      out[k] = cache.rstd[i] * (dxhat[k] - mean_dxhat - xh[k] * mean_dxhat_xhat);
    }
  }
  return dx;
}

// Multi-head attention core: fills cache.attention and returns the
// concatenated per-head contexts (before the output projection).
Matrix multi_head_attention(const TransformerLayerCache& in, const TransformerConfig& cfg,
                            const std::vector<bool>& padded, std::vector<Matrix>& attention) {
  const std::size_t L = in.q.rows();
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix context(L, cfg.model_dim);
  attention.assign(cfg.num_heads, Matrix(L, L));
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const std::size_t off = h * dh;
    Matrix& a = attention[h];
    for (std::size_t i = 0; i < L; ++i) {
      auto qi = in.q.row(i).subspan(off, dh);
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < L; ++j) {
        if (padded[j]) continue;
        auto kj = in.k.row(j).subspan(off, dh);
        double s = 0.0;
        for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
        s *= scale;
        a(i, j) = s;
        peak = std::max(peak, s);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        if (padded[j]) continue;
        a(i, j) = std::exp(a(i, j) - peak);
        total += a(i, j);
      }
      for (std::size_t j = 0; j < L; ++j) a(i, j) /= total;
      auto ci = context.row(i).subspan(off, dh);
      for (std::size_t j = 0; j < L; ++j) {
        const double w = a(i, j);
        if (w == 0.0) continue;
        auto vj = in.v.row(j).subspan(off, dh);
        for (std::size_t t = 0; t < dh; ++t) ci[t] += w * vj[t];
      }
    }
  }
  return context;
}

}  // namespace

TransformerParams TransformerParams::init(const TransformerConfig& config, SeededRng& rng) {
  config.validate();
  TransformerParams p;
  p.config = config;
  const std::size_t d = config.model_dim, f = config.ffn_dim;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    TransformerLayerParams layer = zero_layer(config);
    layer.wq = xavier(rng, d, d);
    layer.wk = xavier(rng, d, d);
    layer.wv = xavier(rng, d, d);
    layer.wo = xavier(rng, d, d);
    layer.w1 = xavier(rng, d, f);
    layer.w2 = xavier(rng, f, d);
    layer.ln1_gain.fill(1.0);
    layer.ln2_gain.fill(1.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

TransformerParams TransformerParams::zeros_like(const TransformerParams& p) {
  TransformerParams z;
  z.config = p.config;
  z.layers.assign(p.layers.size(), zero_layer(p.config));
  return z;
}

TransformerResult transformer_forward(const Matrix& x, const TransformerParams& params,
                                      const std::optional<std::vector<bool>>& padded) {
  const TransformerConfig& cfg = params.config;
  cfg.validate();
  if (params.layers.size() != cfg.num_layers) {
    throw ValidationError("transformer: layer count does not match config");
  }
  if (x.cols() != cfg.model_dim) {
    throw ShapeError("transformer: input width " + std::to_string(x.cols()) +
                     " != model_dim " + std::to_string(cfg.model_dim));
  }
  require_finite(x, "transformer input");
  const std::size_t L = x.rows();

  TransformerResult res;
  TransformerCache& cache = res.cache;
  cache.config = cfg;
  cache.padded = padded.value_or(std::vector<bool>(L, false));
  if (cache.padded.size() != L) throw ShapeError("transformer: pad mask length != sequence length");
  if (L > 0 && std::all_of(cache.padded.begin(), cache.padded.end(), [](bool p) { return p; })) {
    throw DomainError("transformer: every position is padded");
  }
  cache.params = &params;

  Matrix h = x;
  for (const auto& p : params.layers) {
    TransformerLayerCache lc;
    lc.input = h;
    lc.attn_in = cfg.norm == NormPlacement::pre
                     ? layer_norm(h, p.ln1_gain, p.ln1_bias, cfg.ln_eps, lc.ln1)
                     : h;
    lc.q = affine(lc.attn_in, p.wq, p.bq);
    lc.k = affine(lc.attn_in, p.wk, p.bk);
    lc.v = affine(lc.attn_in, p.wv, p.bv);
    lc.context = multi_head_attention(lc, cfg, cache.padded, lc.attention);
    Matrix attn_out = affine(lc.context, p.wo, p.bo);

    Matrix y1;
    if (cfg.norm == NormPlacement::post) {
      lc.residual1 = add(h, attn_out);
      y1 = layer_norm(lc.residual1, p.ln1_gain, p.ln1_bias, cfg.ln_eps, lc.ln1);
      lc.ffn_in = y1;
    } else {
      y1 = add(h, attn_out);
      lc.residual1 = y1;
      lc.ffn_in = layer_norm(y1, p.ln2_gain, p.ln2_bias, cfg.ln_eps, lc.ln2);
    }
    lc.hidden_pre = affine(lc.ffn_in, p.w1, p.b1);
    lc.hidden = lc.hidden_pre;
    for (double& v : lc.hidden.values()) v = relu(v);
    Matrix ffn_out = affine(lc.hidden, p.w2, p.b2);

    if (cfg.norm == NormPlacement::post) {
      h = layer_norm(add(y1, ffn_out), p.ln2_gain, p.ln2_bias, cfg.ln_eps, lc.ln2);
    } else {
      h = add(y1, ffn_out);
    }
    res.traces.push_back(lc.attention);
    cache.layers.push_back(std::move(lc));
  }
  res.output = std::move(h);
  return res;
}

TransformerGrads transformer_backward(const TransformerCache& cache, const Matrix& d_output) {
  if (cache.params == nullptr) throw StateError("transformer backward: cache has no parameters");
  TransformerGrads grads;
  grads.d_params = TransformerParams::zeros_like(*cache.params);
  grads.d_input = transformer_backward_accumulate(cache, d_output, grads.d_params);
  return grads;
}

Matrix transformer_backward_accumulate(const TransformerCache& cache, const Matrix& d_output,
                                       TransformerParams& param_grads) {
  const TransformerConfig& cfg = cache.config;
  if (cache.layers.empty() || cache.params == nullptr ||
      cache.params->layers.size() != cache.layers.size()) {
    throw StateError("transformer backward: empty or inconsistent cache");
  }
  const Matrix& first_in = cache.layers.front().input;
  if (d_output.rows() != first_in.rows() || d_output.cols() != cfg.model_dim) {
    throw StateError("transformer backward: cotangent " + d_output.shape_string() +
                     " does not match forward output");
  }
  const std::size_t L = first_in.rows();
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  if (param_grads.layers.size() != cache.layers.size()) {
    throw StateError("transformer backward: gradient layer count does not match the cache");
  }

  Matrix dh_out = d_output;
  for (std::size_t li = cache.layers.size(); li-- > 0;) {
    const TransformerLayerCache& lc = cache.layers[li];
    const TransformerLayerParams& p = cache.params->layers[li];
    TransformerLayerParams& g = param_grads.layers[li];

    // Output block back to y1 and the FFN output.
    Matrix d_y1, d_ffn_out;
    if (cfg.norm == NormPlacement::post) {
      Matrix d_r2 = layer_norm_backward(lc.ln2, p.ln2_gain, dh_out, g.ln2_gain, g.ln2_bias);
      d_y1 = d_r2;
      d_ffn_out = std::move(d_r2);
    } else {
      d_y1 = dh_out;
      d_ffn_out = dh_out;
    }

    // FFN
    matmul_tn_acc(lc.hidden, d_ffn_out, g.w2);
    g.b2 += column_sums(d_ffn_out);
    Matrix d_hidden = matmul_nt(d_ffn_out, p.w2);
    {
      auto dv = d_hidden.values();
      auto pre = lc.hidden_pre.values();
      for (std::size_t i = 0; i < dv.size(); ++i) {
        if (!(pre[i] > 0.0)) dv[i] = 0.0;
      }
    }
    matmul_tn_acc(lc.ffn_in, d_hidden, g.w1);
    g.b1 += column_sums(d_hidden);
    Matrix d_ffn_in = matmul_nt(d_hidden, p.w1);

    Matrix d_attn_out, d_x;
    if (cfg.norm == NormPlacement::post) {
      d_y1 += d_ffn_in;
      Matrix d_r1 = layer_norm_backward(lc.ln1, p.ln1_gain, d_y1, g.ln1_gain, g.ln1_bias);
      d_x = d_r1;
      d_attn_out = std::move(d_r1);
    } else {
      d_y1 += layer_norm_backward(lc.ln2, p.ln2_gain, d_ffn_in, g.ln2_gain, g.ln2_bias);
      d_x = d_y1;
      d_attn_out = std::move(d_y1);
    }

    // Output projection.
    matmul_tn_acc(lc.context, d_attn_out, g.wo);
    g.bo += column_sums(d_attn_out);
    Matrix d_context = matmul_nt(d_attn_out, p.wo);

    // Per-head attention.
    Matrix dq(L, cfg.model_dim), dk(L, cfg.model_dim), dv(L, cfg.model_dim);
    Matrix d_scores(L, L);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix& a = lc.attention[h];
      for (std::size_t i = 0; i < L; ++i) {
        auto dci = d_context.row(i).subspan(off, dh);
        double weighted = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          if (cache.padded[j]) {
            d_scores(i, j) = 0.0;
            continue;
          }
          auto vj = lc.v.row(j).subspan(off, dh);
          double da = 0.0;
          for (std::size_t t = 0; t < dh; ++t) da += dci[t] * vj[t];
          d_scores(i, j) = da;
          weighted += da * a(i, j);
          auto dvj = dv.row(j).subspan(off, dh);
          const double w = a(i, j);
          for (std::size_t t = 0; t < dh; ++t) dvj[t] += w * dci[t];
        }
        for (std::size_t j = 0; j < L; ++j) {
          if (cache.padded[j]) continue;
          d_scores(i, j) = a(i, j) * (d_scores(i, j) - weighted) * scale;
        }
      }
      for (std::size_t i = 0; i < L; ++i) {
        auto qi = lc.q.row(i).subspan(off, dh);
        auto dqi = dq.row(i).subspan(off, dh);
        for (std::size_t j = 0; j < L; ++j) {
          const double ds = d_scores(i, j);
          if (ds == 0.0) continue;
          auto kj = lc.k.row(j).subspan(off, dh);
          auto dkj = dk.row(j).subspan(off, dh);
          for (std::size_t t = 0; t < dh; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }

    matmul_tn_acc(lc.attn_in, dq, g.wq);
    matmul_tn_acc(lc.attn_in, dk, g.wk);
    matmul_tn_acc(lc.attn_in, dv, g.wv);
    g.bq += column_sums(dq);
    g.bk += column_sums(dk);
    g.bv += column_sums(dv);
    Matrix d_attn_in = matmul_nt(dq, p.wq);
    d_attn_in += matmul_nt(dk, p.wk);
    d_attn_in += matmul_nt(dv, p.wv);

    if (cfg.norm == NormPlacement::post) {
      d_x += d_attn_in;
    } else {
      d_x += layer_norm_backward(lc.ln1, p.ln1_gain, d_attn_in, g.ln1_gain, g.ln1_bias);
    }
    dh_out = std::move(d_x);
  }
  return dh_out;
}

}  // namespace attnlab
