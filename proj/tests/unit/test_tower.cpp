#include <doctest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "rqrf/encoder.hpp"
#include "rqrf/error.hpp"
#include "rqrf/random.hpp"
#include "rqrf/tower.hpp"

using namespace rqrf;

namespace {

TowerConfig small_tower() {
  TowerConfig c = test::tiny_model_config().tower;
  c.word_vocab = 10;
  c.char_vocab = 8;
  return c;
}

template <class Real>
void randomize(TowerParams<Real>& p, std::uint64_t seed) {
  Rng rng(seed);
  p.visit([&](const std::string&, Real* d, const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto x : dims) n *= x;
    for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<Real>(rng.uniform(-0.5, 0.5));
  });
  p.word_emb.row(0).setZero();
  p.char_emb.row(0).setZero();
}

TokenizedText text(std::vector<std::int32_t> words, int t_max = 4, int c_max = 5) {
  TokenizedText t;
  t.t_max = t_max;
  t.c_max = c_max;
  t.words.assign(static_cast<std::size_t>(t_max), 0);
  t.chars.assign(static_cast<std::size_t>(t_max * c_max), 0);
  t.mask.assign(static_cast<std::size_t>(t_max), 0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    t.words[i] = words[i];
    t.mask[i] = 1;
    for (int c = 0; c < 1 + static_cast<int>(i % 3); ++c) {
      t.chars[i * static_cast<std::size_t>(c_max) + static_cast<std::size_t>(c)] = 1 + (words[i] + c) % 7;
    }
  }
  return t;
}

const std::uint8_t kMask1[] = {1, 0, 0, 0};

}  // namespace

TEST_SUITE("tower") {
  TEST_CASE("zero conv block is the identity on real rows") {
    ConvBlockParams<double> b{Matrix<double>::Zero(3, 8), Matrix<double>::Zero(8, 8), Vector<double>::Zero(8)};
    Matrix<double> h = Matrix<double>::Random(10, 8);
    std::vector<std::uint8_t> mask(10, 1);
    const Matrix<double> out = conv_block(h, b, mask);
    CHECK(out.rows() == 10);
    CHECK(out == h);
  }

  TEST_CASE("single real token ignores its padded neighbours") {
    ConvBlockParams<double> b{Matrix<double>::Random(3, 8), Matrix<double>::Random(8, 8), Vector<double>::Random(8)};
    Matrix<double> h = Matrix<double>::Zero(4, 8);
    h.row(0) = Eigen::RowVectorXd::Random(8);
    const Matrix<double> out = conv_block(h, b, kMask1);
    // Only the centre tap sees a non-zero input.
    Eigen::RowVectorXd pre = h.row(0).cwiseProduct(b.depthwise.row(1)) * b.pointwise + b.bias.transpose();
    const Eigen::RowVectorXd expect = h.row(0) + pre.cwiseMax(0.0);
    CHECK((out.row(0) - expect).norm() < 1e-12);
    CHECK(out.bottomRows(3).isZero(0.0));
  }

  TEST_CASE("attention weights") {
    AttentionParams<double> a{Matrix<double>::Random(8, 8), Matrix<double>::Random(8, 8), Matrix<double>::Random(8, 8)};
    Matrix<double> w;
    Matrix<double> h = Matrix<double>::Zero(4, 8);
    h.row(0) = Eigen::RowVectorXd::Random(8);
    self_attention(h, a, kMask1, &w);
    CHECK(w(0, 0) == 1.0);

    Matrix<double> twin = Matrix<double>::Zero(4, 8);
    twin.row(0) = twin.row(1) = Eigen::RowVectorXd::Random(8);
    const std::uint8_t mask2[] = {1, 1, 0, 0};
    self_attention(twin, a, mask2, &w);
    CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w(1, 1) == doctest::Approx(0.5).epsilon(1e-12));

    const Matrix<double> r = Matrix<double>::Random(4, 8);
    const std::uint8_t mask3[] = {1, 1, 1, 0};
    self_attention(r, a, mask3, &w);
    for (int i = 0; i < 3; ++i) CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(w.col(3).isZero(0.0));
    const std::uint8_t none[] = {0, 0, 0, 0};
    CHECK_THROWS_AS(self_attention(r, a, none), InvalidArgument);
  }

  TEST_CASE("encode output is unit norm and deterministic") {
    for (AblationFlags f : {AblationFlags{}, AblationFlags{false, true, true}, AblationFlags{true, false, true},
                            AblationFlags{true, true, false}}) {
      auto p = TowerParams<float>::zeros(small_tower(), f);
      randomize(p, 3);
      const TokenizedText t = text({2, 5, 7});
      const Vector<float> a = encode(t, p);
      const Vector<float> b = encode(t, p);
      CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(a == b);
    }
    auto p = TowerParams<float>::zeros(small_tower(), {});
    CHECK_THROWS_AS(encode(text({}), p), InvalidArgument);
  }

  TEST_CASE("all modules disabled is rejected") {
    CHECK_THROWS_AS(TowerParams<float>::zeros(small_tower(), AblationFlags{false, false, false}), ConfigError);
    TowerConfig c = small_tower();
    c.out_dim = 5;
    CHECK_THROWS_AS(TowerParams<float>::zeros(c, AblationFlags{true, true, false}), ConfigError);
  }

  TEST_CASE("parameter counts per ablation") {
    // |Vw|=10, |Vc|=8, d_w=6, d_c=4, d_h=8, T=4, d_out=8, two blocks:
    // embeddings 60+32, projection 80, blocks 2*(24+64+8), attention 3*64, FC 4*8*8+8.
    const TowerConfig c = small_tower();
    CHECK(TowerParams<double>::zeros(c, {}).parameter_count() == 820);
    CHECK(TowerParams<double>::zeros(c, {false, true, true}).parameter_count() == 628);
    CHECK(TowerParams<double>::zeros(c, {true, false, true}).parameter_count() == 628);
    CHECK(TowerParams<double>::zeros(c, {true, true, false}).parameter_count() == 556);
  }

  TEST_CASE("disabled modules hold no tensors") {
    std::vector<std::string> names;
    TowerParams<float>::zeros(small_tower(), {false, true, false})
        .visit([&](const std::string& n, const float*, const std::vector<std::uint32_t>&) { names.push_back(n); });
    CHECK(names == std::vector<std::string>{"word_emb", "char_emb", "in_proj", "attn.wq", "attn.wk", "attn.wv"});
  }

  TEST_CASE("tower backward matches finite differences for every ablation") {
    for (AblationFlags f : {AblationFlags{}, AblationFlags{false, true, true}, AblationFlags{true, false, true},
                            AblationFlags{true, true, false}}) {
      CAPTURE(f.label());
      auto p = TowerParams<double>::zeros(small_tower(), f);
      randomize(p, 11);
      const TokenizedText t = text({3, 9, 4});
      const Vector<double> r = Vector<double>::Random(p.config.out_dim);
      auto grads = TowerParams<double>::zeros(small_tower(), f);
      TowerTrace<double> trace;
      encode(t, p, trace);
      backward(trace, p, r, grads);
      const auto checks = test::finite_difference_check(p, grads, [&] { return encode(t, p).dot(r); }, 1e-5);
      for (const auto& c : checks) {
        CAPTURE(c.name);
        CHECK(c.rel_error < 1e-6);
      }
      // PAD rows never receive gradient.
      CHECK(grads.word_emb.row(0).isZero(0.0));
      CHECK(grads.char_emb.row(0).isZero(0.0));
    }
  }
}
