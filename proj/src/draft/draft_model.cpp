// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/draft/draft_model.hpp"

#include <algorithm>
#include <cmath>

namespace semispec {
namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Real stddev, SeededRng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = static_cast<Real>(rng.normal()) * stddev;
  return m;
}

std::uint64_t fuse_flops(std::size_t rows, std::size_t d) {
  return static_cast<std::uint64_t>(rows) * 2 * (2 * d) * d;
}

std::vector<model::LayerCache> empty_cache(std::size_t layers) {
  return std::vector<model::LayerCache>(layers);
}

}  // namespace

void DraftConfig::validate() const {
  if (draft_len == 0) throw Error("draft: K must be >= 1");
  if (group_size == 0 || group_size > draft_len) throw Error("draft: k' must satisfy 1 <= k' <= K");
  if (draft_len % group_size != 0) throw Error("draft: K must be a multiple of k'");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw Error("draft: d_model must be a positive multiple of n_heads");
  }
  if (n_layers == 0) throw Error("draft: n_layers must be >= 1");
  if (!(compress_temperature > 0)) throw Error("draft: compress_temperature must be positive");
}

io::ConfigMap DraftConfig::to_map() const {
  return {{"compressed_tokens", std::to_string(compressed_tokens)},
          {"draft_len", std::to_string(draft_len)},
          {"group_size", std::to_string(group_size)},
          {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"n_layers", std::to_string(n_layers)},
          {"d_ff", std::to_string(d_ff)},
          {"compress_temperature", io::format_real(compress_temperature)},
          {"compress", compress ? "1" : "0"},
          {"rng_seed", std::to_string(rng_seed)}};
}

DraftConfig DraftConfig::from_map(const io::ConfigMap& m) {
  DraftConfig c;
  c.compressed_tokens = io::get_or<std::size_t>(m, "compressed_tokens", c.compressed_tokens);
  c.draft_len = io::get_or<std::size_t>(m, "draft_len", c.draft_len);
  c.group_size = io::get_or<std::size_t>(m, "group_size", c.group_size);
  c.d_model = io::get_or<std::size_t>(m, "d_model", c.d_model);
  c.n_heads = io::get_or<std::size_t>(m, "n_heads", c.n_heads);
  c.n_layers = io::get_or<std::size_t>(m, "n_layers", c.n_layers);
  c.d_ff = io::get_or<std::size_t>(m, "d_ff", c.d_ff);
  c.compress_temperature = io::get_or<Real>(m, "compress_temperature", c.compress_temperature);
  c.compress = io::get_or<int>(m, "compress", c.compress ? 1 : 0) != 0;
  c.rng_seed = io::get_or<std::uint64_t>(m, "rng_seed", c.rng_seed);
  c.validate();
  return c;
}

DraftWeights DraftWeights::zeros_like(const DraftWeights& other) {
  DraftWeights w = other;
  w.visit([](const std::string&, Matrix& m) { m.fill(0); });
  return w;
}

std::size_t DraftWeights::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

std::vector<Real> DraftWeights::flatten() const {
  std::vector<Real> flat;
  flat.reserve(parameter_count());
  visit([&](const std::string&, const Matrix& m) {
    flat.insert(flat.end(), m.values().begin(), m.values().end());
  });
  return flat;
}

void DraftWeights::assign(std::span<const Real> flat) {
  if (flat.size() != parameter_count()) throw Error("draft weights: flat size mismatch");
  std::size_t at = 0;
  visit([&](const std::string&, Matrix& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.values().begin());
    at += m.size();
  });
}

DraftModel DraftModel::create(const DraftConfig& cfg) {
  cfg.validate();
  SeededRng rng(cfg.rng_seed);
  const std::size_t d = cfg.d_model;
  const Real in_std = Real{1} / std::sqrt(static_cast<Real>(d));
  DraftModel m;
  m.cfg_ = cfg;
  m.weights_.queries = random_matrix(cfg.compressed_tokens, d, Real{0.1} * in_std, rng);
  // Starts close to passing F_T through; the embedding half starts small.
  m.weights_.fuse_weight = random_matrix(2 * d, d, Real{0.1} * in_std, rng);
  for (std::size_t i = 0; i < d; ++i) m.weights_.fuse_weight(i, i) += Real{1};
  m.weights_.fuse_bias = Matrix(1, d);
  m.weights_.placeholders = random_matrix(cfg.draft_len, d, Real{1}, rng);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    m.weights_.blocks.push_back(model::BlockWeights::random(d, cfg.ff(), cfg.n_layers, rng));
  }
  return m;
}

io::TensorArchive DraftModel::to_archive() const {
  io::TensorArchive a;
  a.kind = "draft";
  a.config = cfg_.to_map();
  weights_.visit([&](const std::string& name, const Matrix& t) { a.tensors.emplace_back(name, t); });
  return a;
}

DraftModel DraftModel::from_archive(const io::TensorArchive& a) {
  if (a.kind != "draft") throw Error("weight archive holds '" + a.kind + "', expected 'draft'");
  DraftModel m = create(DraftConfig::from_map(a.config));
  m.weights_.visit([&](const std::string& name, Matrix& dst) {
    const Matrix& src = a.tensor(name);
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      throw Error("weight archive: tensor '" + name + "' has the wrong shape");
    }
    dst = src;
  });
  return m;
}

void DraftModel::check_compatible(const TargetConfig& target) const {
  if (cfg_.d_model != target.d_model) {
    throw Error("draft d_model " + std::to_string(cfg_.d_model) + " != target d_model " +
                std::to_string(target.d_model));
  }
}

Matrix DraftModel::run_blocks(const Matrix& x, std::vector<model::LayerCache>& cache,
                              std::vector<model::BlockTape>* tapes) const {
  if (cache.size() != weights_.blocks.size()) throw Error("draft cache depth mismatch");
  if (tapes) tapes->assign(weights_.blocks.size(), {});
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    h = model::block_forward(weights_.blocks[l], cfg_.n_heads, h, cache[l],
                             tapes ? &(*tapes)[l] : nullptr);
  }
  return h;
}

Matrix DraftModel::placeholder_rows(std::size_t first, std::size_t count,
                                    std::size_t position) const {
  Matrix rows = weights_.placeholders.slice_rows(first, first + count);
  add_into(rows, model::sinusoidal_positions(position, count, cfg_.d_model));
  return rows;
}

Matrix compress_visual(const Matrix& queries, const Matrix& visual_features, Real temperature,
                       Matrix* attention) {
  if (queries.cols() != visual_features.cols() && queries.rows() > 0 && visual_features.rows() > 0) {
    throw Error("compress_visual: query width " + std::to_string(queries.cols()) +
                " != feature width " + std::to_string(visual_features.cols()));
  }
  if (queries.rows() == 0 || visual_features.rows() == 0) {
    if (attention) *attention = Matrix(queries.rows(), visual_features.rows());
    return Matrix(0, visual_features.cols());
  }
  Matrix weights = softmax_rows(matmul_nt(queries, visual_features), temperature);
  Matrix out = matmul(weights, visual_features);
  if (attention) *attention = std::move(weights);
  return out;
}

Matrix fuse_textual(const Matrix& weight, const Matrix& bias, const Matrix& textual_features,
                    const Matrix& shifted_embeddings) {
  if (textual_features.rows() != shifted_embeddings.rows()) {
    throw Error("fuse_textual: feature rows " + std::to_string(textual_features.rows()) +
                " != embedding rows " + std::to_string(shifted_embeddings.rows()));
  }
  if (textual_features.rows() == 0) return Matrix(0, weight.cols());
  const Matrix joined = hstack(textual_features, shifted_embeddings);
  if (joined.cols() != weight.rows() || bias.cols() != weight.cols()) {
    throw Error("fuse_textual: weight shape does not match inputs");
  }
  Matrix out = matmul(joined, weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias(0, c);
  }
  return out;
}

DraftInputs build_draft_inputs(const DraftModel& draft, const TargetModel& target,
                               const FeatureBundle& bundle, std::span<const Token> text_tokens,
                               Token pending) {
  draft.check_compatible(target.config());
  const DraftConfig& cfg = draft.config();
  if (text_tokens.empty()) throw Error("draft input needs at least one text token");
  if (bundle.features.rows() != bundle.split + text_tokens.size()) {
    throw Error("draft input: feature rows do not match the prompt");
  }
  DraftInputs in;
  const Matrix f_v = bundle.visual();
  in.visual = cfg.compress ? compress_visual(draft.weights().queries, f_v, cfg.compress_temperature)
                           : f_v;
  std::vector<Token> shifted(text_tokens.begin() + 1, text_tokens.end());
  shifted.push_back(pending);
  in.textual = fuse_textual(draft.weights().fuse_weight, draft.weights().fuse_bias, bundle.textual(),
                            target.token_embeddings(shifted));
  in.next_position = bundle.features.rows();
  return in;
}

DraftState::DraftState(const DraftModel& draft, const DraftInputs& inputs)
    : draft_(&draft),
      cache_(empty_cache(draft.config().n_layers)),
      next_position_(inputs.next_position) {
  const Matrix rows = vstack({&inputs.visual, &inputs.textual});
  const auto shape = draft.config().shape(0);
  flops_ += model::forward_flops(shape, 0, rows.rows(), 0).total();
  if (rows.rows() > 0) draft.run_blocks(rows, cache_);
}

void DraftState::append(const Matrix& fused_rows) {
  const auto shape = draft_->config().shape(0);
  flops_ += model::forward_flops(shape, real_rows(), fused_rows.rows(), 0).total() +
            fuse_flops(fused_rows.rows(), draft_->config().d_model);
  draft_->run_blocks(fused_rows, cache_);
  next_position_ += fused_rows.rows();
}

std::size_t DraftState::real_rows() const noexcept {
  return cache_.empty() ? 0 : cache_.front().length();
}

DraftProposal propose(const DraftModel& draft, const DraftState& state, const TargetModel& target,
                      Real temperature, SeededRng& rng) {
  const DraftConfig& cfg = draft.config();
  const auto shape = cfg.shape(target.config().vocab_size);
  const LmHead head = target.lm_head();
  std::vector<model::LayerCache> scratch = state.cache();

  DraftProposal out;
  out.hidden = Matrix(0, cfg.d_model);
  for (std::size_t g = 0; g < cfg.passes(); ++g) {
    const std::size_t first = g * cfg.group_size;
    const std::size_t before = scratch.front().length();
    const Matrix rows =
        draft.placeholder_rows(first, cfg.group_size, state.next_position() + first);
    const Matrix hidden = draft.run_blocks(rows, scratch);
    out.flops += model::forward_flops(shape, before, cfg.group_size, cfg.group_size).total();
    ++out.forward_passes;

    std::vector<ProbVector> dists = head.distributions(hidden, temperature);
    std::vector<Token> group_tokens;
    for (auto& p : dists) {
      group_tokens.push_back(sample_categorical(p, rng));
      out.dists.push_back(std::move(p));
    }
    out.tokens.insert(out.tokens.end(), group_tokens.begin(), group_tokens.end());
    out.hidden.append_rows(hidden);

    if (g + 1 < cfg.passes()) {
      for (auto& layer : scratch) layer.truncate(before);
      const Matrix fed = fuse_textual(draft.weights().fuse_weight, draft.weights().fuse_bias,
                                      hidden, target.token_embeddings(group_tokens));
      draft.run_blocks(fed, scratch);
      out.flops += model::forward_flops(shape, before, cfg.group_size, 0).total() +
                   fuse_flops(cfg.group_size, cfg.d_model);
    }
  }
  return out;
}

DraftProposal propose(const DraftModel& draft, const DraftInputs& inputs, const TargetModel& target,
                      Real temperature, SeededRng& rng) {
  return propose(draft, DraftState(draft, inputs), target, temperature, rng);
}

std::uint64_t draft_flops(const DraftConfig& cfg, std::size_t vocab, std::size_t n_visual,
                          std::size_t text_rows, bool with_compression) {
  DraftConfig effective = cfg;
  effective.compress = with_compression;
  const auto shape = cfg.shape(vocab);
  const std::size_t context = effective.visual_rows(n_visual) + text_rows;
  std::uint64_t total = 0;
  for (std::size_t g = 0; g < cfg.passes(); ++g) {
    const std::size_t before = context + g * cfg.group_size;
    total += model::forward_flops(shape, before, cfg.group_size, cfg.group_size).total();
    if (g + 1 < cfg.passes()) {
      total += model::forward_flops(shape, before, cfg.group_size, 0).total() +
               fuse_flops(cfg.group_size, cfg.d_model);
    }
  }
  return total;
}

DraftForward draft_forward(const DraftModel& draft, const TeacherForcedWindow& window,
                           bool record) {
  const DraftConfig& cfg = draft.config();
  const DraftWeights& w = draft.weights();
  const std::size_t k = cfg.group_size;
  const std::size_t needed = window.context_rows + (cfg.passes() - 1) * k;
  if (window.fuse_inputs.rows() < needed) throw Error("draft_forward: not enough fused rows");

  DraftForward out;
  out.visual = cfg.compress ? compress_visual(w.queries, window.visual_features,
                                              cfg.compress_temperature, &out.compress_attention)
                            : window.visual_features;
  out.fused = Matrix(0, cfg.d_model);
  if (needed > 0) {
    out.fused = matmul(window.fuse_inputs.slice_rows(0, needed), w.fuse_weight);
    for (std::size_t r = 0; r < out.fused.rows(); ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) out.fused(r, c) += w.fuse_bias(0, c);
    }
  }
  out.hidden = Matrix(0, cfg.d_model);
  if (record) out.group_tapes.resize(cfg.passes());
  for (std::size_t g = 0; g < cfg.passes(); ++g) {
    const Matrix context = out.fused.slice_rows(0, window.context_rows + g * k);
    const Matrix holders = draft.placeholder_rows(g * k, k, window.next_position + g * k);
    const Matrix seq = vstack({&out.visual, &context, &holders});
    auto cache = empty_cache(cfg.n_layers);
    const Matrix h = draft.run_blocks(seq, cache, record ? &out.group_tapes[g] : nullptr);
    out.hidden.append_rows(h.slice_rows(h.rows() - k, h.rows()));
  }
  return out;
}

DraftWeights draft_backward(const DraftModel& draft, const TeacherForcedWindow& window,
                            const DraftForward& fwd, const Matrix& d_hidden) {
  const DraftConfig& cfg = draft.config();
  const DraftWeights& w = draft.weights();
  const std::size_t k = cfg.group_size;
  const std::size_t n_vis = fwd.visual.rows();
  if (fwd.group_tapes.size() != cfg.passes()) throw Error("draft_backward: forward was not recorded");

  DraftWeights grads = DraftWeights::zeros_like(w);
  Matrix d_visual(n_vis, cfg.d_model);
  Matrix d_fused(fwd.fused.rows(), cfg.d_model);

  for (std::size_t g = 0; g < cfg.passes(); ++g) {
    const auto& tapes = fwd.group_tapes[g];
    const std::size_t ctx = window.context_rows + g * k;
    const std::size_t rows = n_vis + ctx + k;
    Matrix dy(rows, cfg.d_model);
    for (std::size_t j = 0; j < k; ++j) {
      auto src = d_hidden.row(g * k + j);
      std::copy(src.begin(), src.end(), dy.row(n_vis + ctx + j).begin());
    }
    for (std::size_t l = cfg.n_layers; l-- > 0;) {
      dy = model::block_backward(w.blocks[l], cfg.n_heads, tapes[l], dy, grads.blocks[l]);
    }
    for (std::size_t r = 0; r < n_vis; ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) d_visual(r, c) += dy(r, c);
    }
    for (std::size_t r = 0; r < ctx; ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) d_fused(r, c) += dy(n_vis + r, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) {
        grads.placeholders(g * k + j, c) += dy(n_vis + ctx + j, c);
      }
    }
  }

  if (d_fused.rows() > 0) {
    grads.fuse_weight = matmul_tn(window.fuse_inputs.slice_rows(0, d_fused.rows()), d_fused);
    grads.fuse_bias = column_sums(d_fused);
  }

  if (cfg.compress && n_vis > 0) {
    // Y = A F_V with A = softmax(Q F_V^T / t): dA = dY F_V^T, then softmax backward.
    const Matrix& a = fwd.compress_attention;
    const Matrix d_a = matmul_nt(d_visual, window.visual_features);
    Matrix d_scores(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      Real inner = 0;
      for (std::size_t c = 0; c < a.cols(); ++c) inner += d_a(r, c) * a(r, c);
      for (std::size_t c = 0; c < a.cols(); ++c) {
        d_scores(r, c) = a(r, c) * (d_a(r, c) - inner) / cfg.compress_temperature;
      }
    }
    grads.queries = matmul(d_scores, window.visual_features);
  }
  return grads;
}

}  // namespace semispec
