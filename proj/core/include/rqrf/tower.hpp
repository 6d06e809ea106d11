#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rqrf/encoder.hpp"
#include "rqrf/tensor.hpp"

namespace rqrf {

/// Which encoder modules are active. Disabling one gives the RQRF-CNN / -Attention / -MLP variants.
struct AblationFlags {
  bool use_cnn = true;
  bool use_attention = true;
  bool use_mlp = true;

  void validate() const;
  std::string label() const;  // "RQRF", "RQRF-CNN", ...

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TowerConfig {
  int t_max = 10;
  int c_max = 12;
  int word_dim = 32;
  int char_dim = 16;
  int hidden_dim = 64;
  int out_dim = 64;
  int n_blocks = 2;
  int word_vocab = 0;
  int char_vocab = 0;

  static constexpr int kKernelWidth = 3;

  int input_dim() const { return word_dim + char_dim; }
  /// Throws ConfigError for non-positive sizes or, without the MLP, out_dim != hidden_dim.
  void validate(const AblationFlags& flags) const;

  friend bool operator==(const TowerConfig&, const TowerConfig&) = default;
};

template <class Real>
struct ConvBlockParams {
  Matrix<Real> depthwise;  // kernel_width x d_h
  Matrix<Real> pointwise;  // d_h x d_h
  Vector<Real> bias;       // d_h
};

template <class Real>
struct AttentionParams {
  Matrix<Real> wq, wk, wv;  // d_h x d_h each
};

/// Learnable tensors of one tower. Disabled modules hold no tensors at all.
template <class Real>
struct TowerParams {
  TowerConfig config;
  AblationFlags flags;

  Matrix<Real> word_emb;  // |Vw| x d_w, row 0 (PAD) pinned to zero
  Matrix<Real> char_emb;  // |Vc| x d_c, row 0 (PAD) pinned to zero
  Matrix<Real> in_proj;   // d_in x d_h
  std::vector<ConvBlockParams<Real>> blocks;
  AttentionParams<Real> attention;
  Matrix<Real> fc_weight;  // (t_max * d_h) x d_out
  Vector<Real> fc_bias;    // d_out

  /// Correctly shaped all-zero tensors.
  static TowerParams zeros(const TowerConfig& config, const AblationFlags& flags);

  std::size_t parameter_count() const;

  /// Visits every tensor as (name, data, dims). Order is fixed and is the checkpoint order.
  template <class Visitor>
  void visit(Visitor&& visit_tensor);
  template <class Visitor>
  void visit(Visitor&& visit_tensor) const;

  void set_zero();
};

template <class To, class From>
TowerParams<To> cast_params(const TowerParams<From>& p);

/// Depthwise conv (width 3, same padding) -> pointwise 1x1 -> bias -> ReLU -> residual.
/// Padded rows of the result are zeroed.
template <class Real>
Matrix<Real> conv_block(const Matrix<Real>& h, const ConvBlockParams<Real>& block, std::span<const std::uint8_t> mask);

/// Single-head scaled dot-product self-attention with padded keys excluded.
/// When `weights` is given it receives the T x T attention matrix (padded query rows zero).
template <class Real>
Matrix<Real> self_attention(const Matrix<Real>& h, const AttentionParams<Real>& attn,
                            std::span<const std::uint8_t> mask, Matrix<Real>* weights = nullptr);

/// Intermediate activations of one forward pass, kept for the backward pass.
template <class Real>
struct TowerTrace {
  const TokenizedText* tok = nullptr;
  Matrix<Real> embedded;                    // T x d_in
  std::vector<Matrix<Real>> block_inputs;   // per block: T x d_h
  std::vector<Matrix<Real>> block_dw;       // depthwise output
  std::vector<Matrix<Real>> block_pre;      // pre-activation
  Matrix<Real> attn_input;                  // T x d_h
  Matrix<Real> q, k, v, weights;            // attention internals
  Matrix<Real> sequence;                    // input to the output stage, T x d_h
  Vector<Real> pre_norm;                    // d_out
  Real norm = 0;
  Vector<Real> output;                      // unit d_out
};

/// Full tower: embed -> projection -> [conv blocks] -> [attention] -> [FC | masked mean] -> L2 norm.
template <class Real>
Vector<Real> encode(const TokenizedText& tok, const TowerParams<Real>& params);

template <class Real>
Vector<Real> encode(const TokenizedText& tok, const TowerParams<Real>& params, TowerTrace<Real>& trace);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output). PAD embedding rows get
/// no gradient.
template <class Real>
void backward(const TowerTrace<Real>& trace, const TowerParams<Real>& params, const Vector<Real>& d_output,
              TowerParams<Real>& grads);

// ---------------------------------------------------------------------------------------------

template <class Real>
template <class Visitor>
void TowerParams<Real>::visit(Visitor&& f) {
  auto mat = [&](const std::string& name, auto& m) {
    if (m.size() == 0) return;
    f(name, m.data(), std::vector<std::uint32_t>{static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())});
  };
  auto vec = [&](const std::string& name, auto& v) {
    if (v.size() == 0) return;
    f(name, v.data(), std::vector<std::uint32_t>{static_cast<std::uint32_t>(v.size())});
  };
  mat("word_emb", word_emb);
  mat("char_emb", char_emb);
  mat("in_proj", in_proj);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "conv" + std::to_string(i) + ".";
    mat(p + "depthwise", blocks[i].depthwise);
    mat(p + "pointwise", blocks[i].pointwise);
    vec(p + "bias", blocks[i].bias);
  }
  mat("attn.wq", attention.wq);
  mat("attn.wk", attention.wk);
  mat("attn.wv", attention.wv);
  mat("fc.weight", fc_weight);
  vec("fc.bias", fc_bias);
}

template <class Real>
template <class Visitor>
void TowerParams<Real>::visit(Visitor&& f) const {
  const_cast<TowerParams*>(this)->visit([&](const std::string& name, Real* data, const std::vector<std::uint32_t>& dims) {
    f(name, static_cast<const Real*>(data), dims);
  });
}

}  // namespace rqrf
