#include "rqrf/tower.hpp"

#include <cmath>
#include <limits>

#include "rqrf/error.hpp"

namespace rqrf {

namespace {

template <class Real>
void zero_padded_rows(Matrix<Real>& m, std::span<const std::uint8_t> mask) {
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) m.row(t).setZero();
  }
}

template <class Real>
void check_finite(const Matrix<Real>& m, const char* name) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite activation in ") + name);
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw InternalError(std::string("shape mismatch: ") + what);
}

template <class Real>
Matrix<Real> depthwise(const Matrix<Real>& h, const Matrix<Real>& kernel) {
  const Eigen::Index T = h.rows();
  const Eigen::Index half = kernel.rows() / 2;
  Matrix<Real> d = Matrix<Real>::Zero(T, h.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < kernel.rows(); ++j) {
      const Eigen::Index src = t + j - half;
      if (src < 0 || src >= T) continue;
      d.row(t) += kernel.row(j).cwiseProduct(h.row(src));
    }
  }
  return d;
}

// Row softmax of q k^T / sqrt(d) over unmasked keys; padded query rows stay zero.
template <class Real>
Matrix<Real> attention_weights(const Matrix<Real>& q, const Matrix<Real>& k, std::span<const std::uint8_t> mask) {
  const Eigen::Index T = q.rows();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(q.cols()));
  const Matrix<Real> scores = (q * k.transpose()) * scale;
  Matrix<Real> weights = Matrix<Real>::Zero(T, T);
  for (Eigen::Index i = 0; i < T; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    Real row_max = -std::numeric_limits<Real>::infinity();
    for (Eigen::Index j = 0; j < T; ++j) {
      if (mask[static_cast<std::size_t>(j)]) row_max = std::max(row_max, scores(i, j));
    }
    Real sum = 0;
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!mask[static_cast<std::size_t>(j)]) continue;
      weights(i, j) = std::exp(scores(i, j) - row_max);
      sum += weights(i, j);
    }
    weights.row(i) /= sum;
  }
  return weights;
}

}  // namespace

void AblationFlags::validate() const {
  if (!use_cnn && !use_attention && !use_mlp) {
    throw ConfigError("ablation", "at least one of use_cnn, use_attention, use_mlp must be enabled");
  }
}

std::string AblationFlags::label() const {
  int off = (!use_cnn) + (!use_attention) + (!use_mlp);
  if (off == 0) return "RQRF";
  std::string s = "RQRF";
  if (!use_cnn) s += "-CNN";
  if (!use_attention) s += "-Attention";
  if (!use_mlp) s += "-MLP";
  return s;
}

void TowerConfig::validate(const AblationFlags& flags) const {
  flags.validate();
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(name, "must be >= 1");
  };
  positive(t_max, "t_max");
  positive(c_max, "c_max");
  positive(word_dim, "word_dim");
  positive(char_dim, "char_dim");
  positive(hidden_dim, "hidden_dim");
  positive(out_dim, "out_dim");
  positive(n_blocks, "n_blocks");
  if (word_vocab < 2) throw ConfigError("word_vocab", "must hold at least PAD and UNK");
  if (char_vocab < 2) throw ConfigError("char_vocab", "must hold at least PAD and UNK");
  if (!flags.use_mlp && out_dim != hidden_dim) {
    throw ConfigError("out_dim", "must equal hidden_dim when the MLP stage is disabled");
  }
}

template <class Real>
TowerParams<Real> TowerParams<Real>::zeros(const TowerConfig& config, const AblationFlags& flags) {
  config.validate(flags);
  TowerParams p;
  p.config = config;
  p.flags = flags;
  const int dh = config.hidden_dim;
  p.word_emb = Matrix<Real>::Zero(config.word_vocab, config.word_dim);
  p.char_emb = Matrix<Real>::Zero(config.char_vocab, config.char_dim);
  p.in_proj = Matrix<Real>::Zero(config.input_dim(), dh);
  if (flags.use_cnn) {
    for (int b = 0; b < config.n_blocks; ++b) {
      p.blocks.push_back({Matrix<Real>::Zero(TowerConfig::kKernelWidth, dh), Matrix<Real>::Zero(dh, dh),
                          Vector<Real>::Zero(dh)});
    }
  }
  if (flags.use_attention) {
    p.attention.wq = Matrix<Real>::Zero(dh, dh);
    p.attention.wk = Matrix<Real>::Zero(dh, dh);
    p.attention.wv = Matrix<Real>::Zero(dh, dh);
  }
  if (flags.use_mlp) {
    p.fc_weight = Matrix<Real>::Zero(config.t_max * dh, config.out_dim);
    p.fc_bias = Vector<Real>::Zero(config.out_dim);
  }
  return p;
}

template <class Real>
std::size_t TowerParams<Real>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Real*, const std::vector<std::uint32_t>& dims) {
    std::size_t s = 1;
    for (auto d : dims) s *= d;
    n += s;
  });
  return n;
}

template <class Real>
void TowerParams<Real>::set_zero() {
  visit([](const std::string&, Real* data, const std::vector<std::uint32_t>& dims) {
    std::size_t s = 1;
    for (auto d : dims) s *= d;
    std::fill(data, data + s, Real(0));
  });
}

template <class To, class From>
TowerParams<To> cast_params(const TowerParams<From>& p) {
  TowerParams<To> out;
  out.config = p.config;
  out.flags = p.flags;
  out.word_emb = p.word_emb.template cast<To>();
  out.char_emb = p.char_emb.template cast<To>();
  out.in_proj = p.in_proj.template cast<To>();
  for (const auto& b : p.blocks) {
    out.blocks.push_back({b.depthwise.template cast<To>(), b.pointwise.template cast<To>(), b.bias.template cast<To>()});
  }
  out.attention.wq = p.attention.wq.template cast<To>();
  out.attention.wk = p.attention.wk.template cast<To>();
  out.attention.wv = p.attention.wv.template cast<To>();
  out.fc_weight = p.fc_weight.template cast<To>();
  out.fc_bias = p.fc_bias.template cast<To>();
  return out;
}

template <class Real>
Matrix<Real> conv_block(const Matrix<Real>& h, const ConvBlockParams<Real>& block, std::span<const std::uint8_t> mask) {
  check_shape(static_cast<std::size_t>(h.rows()) == mask.size(), "conv_block mask length");
  check_shape(block.depthwise.cols() == h.cols() && block.pointwise.rows() == h.cols() &&
                  block.pointwise.cols() == h.cols() && block.bias.size() == h.cols(),
              "conv_block parameters");
  Matrix<Real> pre = depthwise(h, block.depthwise) * block.pointwise;
  pre.rowwise() += block.bias.transpose();
  Matrix<Real> out = h + pre.cwiseMax(Real(0));
  zero_padded_rows(out, mask);
  return out;
}

template <class Real>
Matrix<Real> self_attention(const Matrix<Real>& h, const AttentionParams<Real>& attn,
                            std::span<const std::uint8_t> mask, Matrix<Real>* weights_out) {
  const Eigen::Index T = h.rows();
  check_shape(static_cast<std::size_t>(T) == mask.size(), "self_attention mask length");
  check_shape(attn.wq.rows() == h.cols() && attn.wk.rows() == h.cols() && attn.wv.rows() == h.cols(),
              "self_attention parameters");
  bool any = false;
  for (auto m : mask) any = any || m;
  if (!any) throw InvalidArgument("self_attention: every position is masked");

  const Matrix<Real> weights = attention_weights<Real>(h * attn.wq, h * attn.wk, mask);
  Matrix<Real> out = weights * (h * attn.wv);
  if (weights_out) *weights_out = weights;
  return out;
}

template <class Real>
Vector<Real> encode(const TokenizedText& tok, const TowerParams<Real>& params) {
  TowerTrace<Real> trace;
  return encode(tok, params, trace);
}

template <class Real>
Vector<Real> encode(const TokenizedText& tok, const TowerParams<Real>& p, TowerTrace<Real>& tr) {
  const TowerConfig& cfg = p.config;
  check_shape(tok.t_max == cfg.t_max && tok.c_max == cfg.c_max, "tokenization does not match tower t_max/c_max");
  const std::span<const std::uint8_t> mask(tok.mask);
  const int n_real = tok.real_tokens();
  if (n_real == 0) throw InvalidArgument("encode: text has no tokens");

  tr.tok = &tok;
  tr.embedded = embed_tokens(tok, p.word_emb, p.char_emb);
  check_finite(tr.embedded, "embedding");
  Matrix<Real> x = tr.embedded * p.in_proj;
  check_finite(x, "in_proj");

  tr.block_inputs.clear();
  tr.block_dw.clear();
  tr.block_pre.clear();
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    tr.block_inputs.push_back(x);
    tr.block_dw.push_back(depthwise(x, blk.depthwise));
    Matrix<Real> pre = tr.block_dw.back() * blk.pointwise;
    pre.rowwise() += blk.bias.transpose();
    tr.block_pre.push_back(pre);
    x = x + pre.cwiseMax(Real(0));
    zero_padded_rows(x, mask);
    check_finite(x, "conv block");
  }

  if (p.flags.use_attention) {
    tr.attn_input = x;
    tr.q = x * p.attention.wq;
    tr.k = x * p.attention.wk;
    tr.v = x * p.attention.wv;
    tr.weights = attention_weights(tr.q, tr.k, mask);
    x = tr.weights * tr.v;
    check_finite(x, "attention");
  }
  tr.sequence = x;

  if (p.flags.use_mlp) {
    const Eigen::Map<const Vector<Real>> flat(tr.sequence.data(), tr.sequence.size());
    tr.pre_norm = p.fc_weight.transpose() * flat + p.fc_bias;
  } else {
    tr.pre_norm = Vector<Real>::Zero(cfg.hidden_dim);
    for (Eigen::Index t = 0; t < tr.sequence.rows(); ++t) {
      if (mask[static_cast<std::size_t>(t)]) tr.pre_norm += tr.sequence.row(t).transpose();
    }
    tr.pre_norm /= static_cast<Real>(n_real);
  }
  if (!tr.pre_norm.allFinite()) throw NumericError("non-finite activation in output");
  tr.norm = tr.pre_norm.norm();
  if (!(tr.norm > Real(0))) throw NumericError("encode: output has zero norm");
  tr.output = tr.pre_norm / tr.norm;
  return tr.output;
}

template <class Real>
void backward(const TowerTrace<Real>& tr, const TowerParams<Real>& p, const Vector<Real>& d_output,
              TowerParams<Real>& g) {
  const TokenizedText& tok = *tr.tok;
  const std::span<const std::uint8_t> mask(tok.mask);
  const TowerConfig& cfg = p.config;
  const Eigen::Index T = cfg.t_max;
  const Eigen::Index dh = cfg.hidden_dim;

  const Vector<Real> d_pre = (d_output - tr.output * tr.output.dot(d_output)) / tr.norm;

  Matrix<Real> dx(T, dh);
  if (p.flags.use_mlp) {
    const Eigen::Map<const Vector<Real>> flat(tr.sequence.data(), tr.sequence.size());
    g.fc_weight.noalias() += flat * d_pre.transpose();
    g.fc_bias += d_pre;
    Eigen::Map<Vector<Real>>(dx.data(), dx.size()).noalias() = p.fc_weight * d_pre;
  } else {
    const Real inv = Real(1) / static_cast<Real>(tok.real_tokens());
    for (Eigen::Index t = 0; t < T; ++t) dx.row(t) = d_pre.transpose() * inv;
  }
  zero_padded_rows(dx, mask);

  if (p.flags.use_attention) {
    const Matrix<Real> d_weights = dx * tr.v.transpose();
    const Matrix<Real> dv = tr.weights.transpose() * dx;
    Matrix<Real> ds = Matrix<Real>::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const Real inner = tr.weights.row(i).dot(d_weights.row(i));
      ds.row(i) = tr.weights.row(i).cwiseProduct((d_weights.row(i).array() - inner).matrix());
    }
    ds *= Real(1) / std::sqrt(static_cast<Real>(dh));
    const Matrix<Real> dq = ds * tr.k;
    const Matrix<Real> dk = ds.transpose() * tr.q;
    g.attention.wq.noalias() += tr.attn_input.transpose() * dq;
    g.attention.wk.noalias() += tr.attn_input.transpose() * dk;
    g.attention.wv.noalias() += tr.attn_input.transpose() * dv;
    dx = dq * p.attention.wq.transpose() + dk * p.attention.wk.transpose() + dv * p.attention.wv.transpose();
    zero_padded_rows(dx, mask);
  }

  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    const auto& blk = p.blocks[b];
    auto& gb = g.blocks[b];
    const Matrix<Real>& h = tr.block_inputs[b];
    zero_padded_rows(dx, mask);
    const Matrix<Real> d_pre_act = dx.cwiseProduct((tr.block_pre[b].array() > Real(0)).template cast<Real>().matrix());
    gb.bias += d_pre_act.colwise().sum().transpose();
    gb.pointwise.noalias() += tr.block_dw[b].transpose() * d_pre_act;
    const Matrix<Real> d_dw = d_pre_act * blk.pointwise.transpose();
    Matrix<Real> dh_in = dx;
    const Eigen::Index half = blk.depthwise.rows() / 2;
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index j = 0; j < blk.depthwise.rows(); ++j) {
        const Eigen::Index src = t + j - half;
        if (src < 0 || src >= T) continue;
        gb.depthwise.row(j) += d_dw.row(t).cwiseProduct(h.row(src));
        dh_in.row(src) += d_dw.row(t).cwiseProduct(blk.depthwise.row(j));
      }
    }
    dx = std::move(dh_in);
  }

  g.in_proj.noalias() += tr.embedded.transpose() * dx;
  const Matrix<Real> de = dx * p.in_proj.transpose();
  const Eigen::Index dw = cfg.word_dim;
  const Eigen::Index dc = cfg.char_dim;
  for (int t = 0; t < tok.t_max; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    const std::int32_t wid = tok.words[static_cast<std::size_t>(t)];
    if (wid != Vocabulary::kPad) g.word_emb.row(wid) += de.row(t).head(dw);
    int n_chars = 0;
    for (int c = 0; c < tok.c_max; ++c) n_chars += tok.char_at(t, c) != Vocabulary::kPad;
    if (n_chars == 0) continue;
    const Real inv = Real(1) / static_cast<Real>(n_chars);
    for (int c = 0; c < tok.c_max; ++c) {
      const std::int32_t cid = tok.char_at(t, c);
      if (cid != Vocabulary::kPad) g.char_emb.row(cid) += de.row(t).tail(dc) * inv;
    }
  }
}

#define RQRF_INSTANTIATE_TOWER(Real)                                                                          \
  template struct TowerParams<Real>;                                                                          \
  template Matrix<Real> conv_block<Real>(const Matrix<Real>&, const ConvBlockParams<Real>&,                   \
                                         std::span<const std::uint8_t>);                                      \
  template Matrix<Real> self_attention<Real>(const Matrix<Real>&, const AttentionParams<Real>&,               \
                                             std::span<const std::uint8_t>, Matrix<Real>*);                    \
  template Vector<Real> encode<Real>(const TokenizedText&, const TowerParams<Real>&);                         \
  template Vector<Real> encode<Real>(const TokenizedText&, const TowerParams<Real>&, TowerTrace<Real>&);      \
  template void backward<Real>(const TowerTrace<Real>&, const TowerParams<Real>&, const Vector<Real>&,        \
                               TowerParams<Real>&);

RQRF_INSTANTIATE_TOWER(float)
RQRF_INSTANTIATE_TOWER(double)

#undef RQRF_INSTANTIATE_TOWER

template TowerParams<double> cast_params<double, float>(const TowerParams<float>&);
template TowerParams<float> cast_params<float, double>(const TowerParams<double>&);
template TowerParams<float> cast_params<float, float>(const TowerParams<float>&);
template TowerParams<double> cast_params<double, double>(const TowerParams<double>&);

}  // namespace rqrf
