#include "attnlab/graph_attention.hpp"

#include <algorithm>
#include <cmath>

#include "attnlab/entity_graph.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/ops.hpp"

namespace attnlab {

void GraphAttentionParams::validate() const {
  if (proj.empty()) throw ValidationError("graph attention: empty projection");
  if (attn_vec.rows() != 1 || attn_vec.cols() != 2 * proj.cols()) {
    throw ValidationError("graph attention: attn_vec must be 1x" + std::to_string(2 * proj.cols()) +
                          ", got " + attn_vec.shape_string());
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ValidationError("graph attention: leaky_slope must lie in (0, 1)");
  }
}

ParamList GraphAttentionParams::parameters() {
  return {{"proj", &proj}, {"attn_vec", &attn_vec}};
}

GraphAttentionParams GraphAttentionParams::init(std::size_t d_in, std::size_t d_out,
                                                SeededRng& rng, double leaky_slope) {
  GraphAttentionParams p;
  p.proj = rng.normal_matrix(d_in, d_out, std::sqrt(2.0 / static_cast<double>(d_in + d_out)));
  p.attn_vec = rng.normal_matrix(1, 2 * d_out, std::sqrt(1.0 / static_cast<double>(d_out)));
  p.leaky_slope = leaky_slope;
  return p;
}

GraphAttentionParams GraphAttentionParams::zeros_like(const GraphAttentionParams& p) {
  GraphAttentionParams z;
  z.proj = Matrix(p.proj.rows(), p.proj.cols());
  z.attn_vec = Matrix(p.attn_vec.rows(), p.attn_vec.cols());
  z.leaky_slope = p.leaky_slope;
  return z;
}

GraphAttentionResult graph_attention_forward(const Matrix& nodes, const Matrix& adjacency,
                                             const GraphAttentionParams& params) {
  params.validate();
  validate_adjacency(adjacency);
  if (nodes.rows() != adjacency.rows()) {
    throw ShapeError("graph attention: " + std::to_string(nodes.rows()) + " node rows for a " +
                     adjacency.shape_string() + " adjacency");
  }
  if (nodes.cols() != params.in_dim()) {
    throw ShapeError("graph attention: node width " + std::to_string(nodes.cols()) +
                     " != projection input " + std::to_string(params.in_dim()));
  }
  require_finite(nodes, "graph attention input");

  const std::size_t n = nodes.rows();
  const std::size_t d = params.out_dim();
  GraphAttentionResult res;
  GraphAttentionCache& c = res.cache;
  c.input = nodes;
  c.adjacency = adjacency;
  c.params = &params;
  c.projected = matmul(nodes, params.proj);

  auto a_src = params.attn_vec.row(0).subspan(0, d);
  auto a_dst = params.attn_vec.row(0).subspan(d, d);
  std::vector<double> src_score(n), dst_score(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = c.projected.row(i);
    double s = 0.0, t = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      s += a_src[k] * g[k];
      t += a_dst[k] * g[k];
    }
    src_score[i] = s;
    dst_score[i] = t;
  }

  c.logits = Matrix(n, n);
  c.alpha = Matrix(n, n);
  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Masked entries never enter the max or the normaliser.
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency(i, j) == 0.0) continue;
      const double z = src_score[i] + dst_score[j];
      c.logits(i, j) = z;
      beta[j] = leaky_relu(z, params.leaky_slope);
      peak = std::max(peak, beta[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency(i, j) == 0.0) continue;
      const double e = std::exp(beta[j] - peak);
      c.alpha(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) c.alpha(i, j) /= total;
  }

  c.pre_relu = matmul(c.alpha, c.projected);
  res.output = c.pre_relu;
  for (double& v : res.output.values()) v = relu(v);
  res.alpha = c.alpha;
  return res;
}

GraphAttentionResult self_attention_forward(const Matrix& nodes,
                                            const GraphAttentionParams& params) {
  return graph_attention_forward(nodes, Matrix::ones(nodes.rows(), nodes.rows()), params);
}

Matrix dense_additive_attention(const Matrix& nodes, const GraphAttentionParams& params) {
  params.validate();
  if (nodes.cols() != params.in_dim()) {
    throw ShapeError("node width " + std::to_string(nodes.cols()) + " != projection input " +
                     std::to_string(params.in_dim()));
  }
  const std::size_t n = nodes.rows();
  const std::size_t d = params.out_dim();
  const Matrix g = matmul(nodes, params.proj);
  std::vector<double> src(n, 0.0), dst(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      src[i] += params.attn_vec(0, k) * g(i, k);
      dst[i] += params.attn_vec(0, d + k) * g(i, k);
    }
  }
  Matrix out(n, d);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double z = src[i] + dst[j];
      w[j] = z >= 0.0 ? z : params.leaky_slope * z;
    }
    const std::vector<double> a = softmax_row(w);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < d; ++k) out(i, k) += a[j] * g(j, k);
    }
    for (std::size_t k = 0; k < d; ++k) out(i, k) = std::max(0.0, out(i, k));
  }
  return out;
}

Matrix graph_attention_backward_accumulate(const GraphAttentionCache& c, const Matrix& d_output,
                                          GraphAttentionParams& grads) {
  if (c.pre_relu.empty() && c.input.rows() != 0) {
    throw StateError("graph attention backward: empty cache");
  }
  if (d_output.rows() != c.pre_relu.rows() || d_output.cols() != c.pre_relu.cols()) {
    throw StateError("graph attention backward: cotangent " + d_output.shape_string() +
                     " does not match forward output " + c.pre_relu.shape_string());
  }
  const std::size_t n = c.input.rows();
  if (c.params == nullptr) throw StateError("graph attention backward: cache has no parameters");
  const std::size_t d = c.params->out_dim();
  const double slope = c.params->leaky_slope;

  Matrix d_pre = d_output;
  {
    auto dp = d_pre.values();
    auto pre = c.pre_relu.values();
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (!(pre[i] > 0.0)) dp[i] = 0.0;
    }
  }

  // pre = α G  →  dα = dpre Gᵀ,  dG = αᵀ dpre
  Matrix d_alpha = matmul_nt(d_pre, c.projected);
  Matrix d_proj_nodes = matmul_tn(c.alpha, d_pre);

  std::vector<double> d_src(n, 0.0), d_dst(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (c.adjacency(i, j) != 0.0) weighted += c.alpha(i, j) * d_alpha(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (c.adjacency(i, j) == 0.0) continue;
      const double d_beta = c.alpha(i, j) * (d_alpha(i, j) - weighted);
      const double d_z = d_beta * (c.logits(i, j) >= 0.0 ? 1.0 : slope);
      d_src[i] += d_z;
      d_dst[j] += d_z;
    }
  }

  require_same_shape(grads.proj, c.params->proj, "graph attention gradient");
  require_same_shape(grads.attn_vec, c.params->attn_vec, "graph attention gradient");
  auto a_src = c.params->attn_vec.row(0).subspan(0, d);
  auto a_dst = c.params->attn_vec.row(0).subspan(d, d);
  auto da = grads.attn_vec.row(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = c.projected.row(i);
    auto dgi = d_proj_nodes.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      da[k] += d_src[i] * gi[k];
      da[d + k] += d_dst[i] * gi[k];
      dgi[k] += d_src[i] * a_src[k] + d_dst[i] * a_dst[k];
    }
  }

  matmul_tn_acc(c.input, d_proj_nodes, grads.proj);
  return matmul_nt(d_proj_nodes, c.params->proj);
}

GraphAttentionGrads graph_attention_backward(const GraphAttentionCache& c, const Matrix& d_output) {
  if (c.params == nullptr) throw StateError("graph attention backward: cache has no parameters");
  GraphAttentionGrads g;
  g.d_params = GraphAttentionParams::zeros_like(*c.params);
  g.d_input = graph_attention_backward_accumulate(c, d_output, g.d_params);
  return g;
}

}  // namespace attnlab
