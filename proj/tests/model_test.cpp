#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "arft/common.hpp"
#include "arft/model.hpp"
#include "arft/rng.hpp"
#include "testutil.hpp"

using namespace arft;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.p = 3;
  cfg.d_token = 4;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.dropout_rate = 0.0;
  return cfg;
}

std::vector<Tensor> flatten_params(const ModelParams& params) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : const_cast<ModelParams&>(params).named_tensors()) out.push_back(*t);
  return out;
}

}  // namespace

TEST_CASE("config arithmetic: head width and FFN hidden size") {
  ModelConfig cfg;
  cfg.p = 52;
  CHECK(cfg.d_token == 32);
  CHECK(cfg.n_heads == 8);
  CHECK(cfg.d_head() == 4);
  CHECK(cfg.ffn_hidden() == 42);  // floor(32 * 4/3)
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config validation rejects inconsistent settings") {
  ModelConfig cfg = tiny_config();
  cfg.n_heads = 3;  // does not divide 4
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.n_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.p = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.head_classes = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init_params is deterministic per seed") {
  ModelConfig cfg = tiny_config();
  Rng a(5), b(5), c(6);
  ModelParams p1 = init_params(cfg, a);
  ModelParams p2 = init_params(cfg, b);
  ModelParams p3 = init_params(cfg, c);
  const auto f1 = flatten_params(p1), f2 = flatten_params(p2), f3 = flatten_params(p3);
  REQUIRE(f1.size() == f2.size());
  bool all_equal = true, any_diff_seed = false;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    if (f1[i].data != f2[i].data) all_equal = false;
    if (f1[i].data != f3[i].data) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
}

TEST_CASE("init_params respects Kaiming bounds, zero biases, unit gains") {
  ModelConfig cfg;
  cfg.p = 5;
  cfg.d_token = 32;
  cfg.n_heads = 8;
  cfg.n_layers = 2;
  Rng rng(1);
  ModelParams params = init_params(cfg, rng);

  const double tok_bound = std::sqrt(6.0 / 1.0);  // tokenizer fan-in is 1
  for (const double v : params.tokenizer.weight.data) {
    CHECK(v >= -tok_bound);
    CHECK(v <= tok_bound);
  }
  for (const double v : params.tokenizer.bias.data) CHECK(v == 0.0);

  const double attn_bound = std::sqrt(6.0 / static_cast<double>(cfg.d_token));
  for (const auto& layer : params.layers) {
    for (const Tensor* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo})
      for (const double v : w->data) {
        CHECK(v >= -attn_bound);
        CHECK(v <= attn_bound);
      }
    for (const double v : layer.ffn_w1.data) {
      CHECK(v >= -attn_bound);
      CHECK(v <= attn_bound);
    }
    const double w2_bound = std::sqrt(6.0 / static_cast<double>(cfg.ffn_hidden()));
    for (const double v : layer.ffn_w2.data) {
      CHECK(v >= -w2_bound);
      CHECK(v <= w2_bound);
    }
    for (const double v : layer.attn_norm_gain.data) CHECK(v == 1.0);
    for (const double v : layer.attn_norm_bias.data) CHECK(v == 0.0);
    for (const double v : layer.ffn_b1.data) CHECK(v == 0.0);
    for (const double v : layer.ffn_b2.data) CHECK(v == 0.0);
  }
  for (const double v : params.head.norm_gain.data) CHECK(v == 1.0);
  for (const double v : params.head.weight.data) {
    CHECK(v >= -attn_bound);
    CHECK(v <= attn_bound);
  }
  for (const double v : params.head.bias.data) CHECK(v == 0.0);
}

TEST_CASE("tokenize produces bias tokens at x=0 and a shared [CLS] token") {
  ModelConfig cfg = tiny_config();
  Rng rng(2);
  ModelParams params = init_params(cfg, rng);
  // give the biases recognizable values
  for (std::size_t i = 0; i < params.tokenizer.bias.numel(); ++i)
    params.tokenizer.bias.data[i] = static_cast<double>(i) * 0.1;

  Tape t;
  StagedModel staged = stage(t, params, /*trainable=*/false);
  const Tensor x = Tensor::zeros({2, 3});
  const Tensor tokens = t.value(tokenize(t, x, staged.tok_w, staged.tok_b));
  REQUIRE(tokens.shape == Shape{2, 4, 4});

  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 1; j <= 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(tokens.data[(i * 4 + j) * 4 + k] ==
              doctest::Approx(params.tokenizer.bias.at2(j, k)).epsilon(1e-15));
    // [CLS] = 1*W_0 + b_0, identical across samples
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(tokens.data[i * 16 + k] ==
            doctest::Approx(params.tokenizer.weight.at2(0, k) + params.tokenizer.bias.at2(0, k))
                .epsilon(1e-15));
  }
}

TEST_CASE("tokenize maps x=1 through a unit weight row to the unit vector") {
  ModelConfig cfg = tiny_config();
  Rng rng(2);
  ModelParams params = init_params(cfg, rng);
  for (auto& [name, tensor] : params.named_tensors())
    for (auto& v : tensor->data) v = 0.0;
  params.tokenizer.weight.at2(1, 0) = 1.0;  // W_1 = e_1

  Tape t;
  StagedModel staged = stage(t, params, false);
  Tensor x = Tensor::zeros({1, 3});
  x.data[0] = 1.0;
  const Tensor tokens = t.value(tokenize(t, x, staged.tok_w, staged.tok_b));
  CHECK(tokens.data[4] == 1.0);  // token 1, dim 0
  CHECK(tokens.data[5] == 0.0);
  CHECK(tokens.data[6] == 0.0);
  CHECK(tokens.data[7] == 0.0);
}

TEST_CASE("tokenize rejects a feature-count mismatch") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  CHECK_THROWS_AS(tokenize(t, Tensor::zeros({2, 5}), staged.tok_w, staged.tok_b), ShapeError);
}

TEST_CASE("attention weights are row-stochastic for every sample, head, and query") {
  ModelConfig cfg = tiny_config();
  Rng rng(4);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  Tensor x = testutil::random_tensor(rng, {3, 3});
  ForwardResult res = forward(t, staged, cfg, x, /*training=*/false, fwd_rng);
  REQUIRE(res.attention.size() == cfg.n_layers * cfg.n_heads);
  for (const Var& w : res.attention) {
    const Tensor weights = t.value(w);
    REQUIRE(weights.shape == Shape{3, 4, 4});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t q = 0; q < 4; ++q) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          const double v = weights.data[(i * 4 + q) * 4 + k];
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("zero W_v and W^O make the attention layer a residual identity") {
  ModelConfig cfg = tiny_config();
  Rng rng(5);
  ModelParams params = init_params(cfg, rng);
  for (auto& v : params.layers[0].wv.data) v = 0.0;
  for (auto& v : params.layers[0].wo.data) v = 0.0;

  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  const Tensor x_in = testutil::random_tensor(rng, {2, 4, 4});
  Var x = t.constant(x_in);
  Var out = attention_layer(t, x, staged.layers[0], cfg, /*skip_pre_norm=*/false,
                            /*training=*/false, fwd_rng);
  const Tensor out_v = t.value(out);
  REQUIRE(out_v.shape == x_in.shape);
  for (std::size_t i = 0; i < x_in.numel(); ++i)
    CHECK(out_v.data[i] == doctest::Approx(x_in.data[i]).epsilon(1e-15));
}

TEST_CASE("attention and FFN blocks preserve the token tensor shape") {
  ModelConfig cfg = tiny_config();
  Rng rng(6);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  Var x = t.constant(testutil::random_tensor(rng, {5, 4, 4}));
  Var a = attention_layer(t, x, staged.layers[0], cfg, false, false, fwd_rng);
  CHECK(t.value(a).shape == Shape{5, 4, 4});
  Var f = ffn_block(t, a, staged.layers[0], cfg, false, fwd_rng);
  CHECK(t.value(f).shape == Shape{5, 4, 4});
}

TEST_CASE("zero FFN weights make ffn_block an identity") {
  ModelConfig cfg = tiny_config();
  Rng rng(7);
  ModelParams params = init_params(cfg, rng);
  for (auto& v : params.layers[1].ffn_w1.data) v = 0.0;
  for (auto& v : params.layers[1].ffn_b1.data) v = 0.0;
  for (auto& v : params.layers[1].ffn_w2.data) v = 0.0;
  for (auto& v : params.layers[1].ffn_b2.data) v = 0.0;

  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  const Tensor x_in = testutil::random_tensor(rng, {2, 4, 4});
  const Tensor out = t.value(ffn_block(t, t.constant(x_in), staged.layers[1], cfg, false, fwd_rng));
  for (std::size_t i = 0; i < x_in.numel(); ++i)
    CHECK(out.data[i] == doctest::Approx(x_in.data[i]).epsilon(1e-15));
}

TEST_CASE("gradients flow correctly through the full forward pass") {
  ModelConfig cfg = tiny_config();
  Rng rng(8);
  ModelParams params = init_params(cfg, rng);
  const Tensor x = testutil::random_tensor(rng, {2, 3});

  std::vector<Tensor> leaves = flatten_params(params);
  auto build = [&](Tape& t, const std::vector<Var>& vars) {
    StagedModel staged = stage_from_vars(cfg, vars);
    Rng fwd_rng(0);
    ForwardResult res = forward(t, staged, cfg, x, /*training=*/false, fwd_rng);
    return mean_all(mul(res.logits, res.logits));
  };
  const auto check = testutil::check_gradients(leaves, build, 1e-5);
  CHECK(check.checked > 100);
  CHECK(check.max_rel_err < 1e-3);
}

TEST_CASE("identical input rows give identical logits with dropout off") {
  ModelConfig cfg = tiny_config();
  Rng rng(9);
  ModelParams params = init_params(cfg, rng);
  Tensor x = Tensor::zeros({3, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    const double v = 0.3 * static_cast<double>(j) - 0.5;
    x.data[0 * 3 + j] = v;
    x.data[1 * 3 + j] = v;
    x.data[2 * 3 + j] = v + 1.0;  // a different row as control
  }
  const Tensor logits = infer_logits(params, x);
  REQUIRE(logits.shape == Shape{3, 2});
  CHECK(logits.data[0] == logits.data[2]);
  CHECK(logits.data[1] == logits.data[3]);
  CHECK(logits.data[0] != logits.data[4]);
}

TEST_CASE("forward output shapes follow the config") {
  ModelConfig cfg;
  cfg.p = 5;
  cfg.d_token = 32;
  cfg.n_heads = 8;
  cfg.n_layers = 3;
  cfg.dropout_rate = 0.0;
  Rng rng(10);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  ForwardResult res = forward(t, staged, cfg, testutil::random_tensor(rng, {1, 5}), false,
                              fwd_rng);
  CHECK(t.value(res.logits).shape == Shape{1, 2});
  CHECK(t.value(res.cls_repr).shape == Shape{1, 32});
  CHECK(t.value(res.tokens_repr).shape == Shape{1, 6, 32});
}

TEST_CASE("feature permutation with matching tokenizer rows leaves logits unchanged") {
  ModelConfig cfg;
  cfg.p = 5;
  cfg.d_token = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.dropout_rate = 0.0;
  Rng rng(11);
  ModelParams params = init_params(cfg, rng);
  const Tensor x = testutil::random_tensor(rng, {4, 5});

  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  ModelParams permuted = params;
  Tensor xp = Tensor::zeros({4, 5});
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t i = 0; i < 4; ++i) xp.data[i * 5 + j] = x.data[i * 5 + perm[j]];
    for (std::size_t k = 0; k < cfg.d_token; ++k) {
      // tokenizer row j+1 of the permuted model = row perm[j]+1 of the original
      permuted.tokenizer.weight.at2(j + 1, k) = params.tokenizer.weight.at2(perm[j] + 1, k);
      permuted.tokenizer.bias.at2(j + 1, k) = params.tokenizer.bias.at2(perm[j] + 1, k);
    }
  }
  const Tensor base = infer_logits(params, x);
  const Tensor moved = infer_logits(permuted, xp);
  for (std::size_t i = 0; i < base.numel(); ++i)
    CHECK(std::abs(base.data[i] - moved.data[i]) <= 1e-6);
}

TEST_CASE("predict applies the tie rule and threshold") {
  Tensor logits = Tensor::zeros({3, 2});
  logits.data = {0.0, 0.0, -5.0, 5.0, 5.0, -5.0};
  CHECK(predict(logits) == std::vector<int>{0, 1, 0});
  CHECK(predict(logits, 0.0) == std::vector<int>{1, 1, 1});
  Tensor bad = Tensor::zeros({1, 2});
  bad.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(predict(bad), ContractError);
}

TEST_CASE("baseline_forward matches the contract of forward and is attention-free") {
  ModelConfig cfg = tiny_config();
  cfg.with_attention = false;
  Rng rng(12);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  ForwardResult res =
      baseline_forward(t, staged, cfg, testutil::random_tensor(rng, {2, 3}), false, fwd_rng);
  CHECK(t.value(res.logits).shape == Shape{2, 2});
  CHECK(t.value(res.cls_repr).shape == Shape{2, 4});
  CHECK(res.attention.empty());
}

TEST_CASE("baseline with zero FFN weights reduces to head(LayerNorm(cls token))") {
  ModelConfig cfg = tiny_config();
  cfg.with_attention = false;
  Rng rng(13);
  ModelParams params = init_params(cfg, rng);
  for (auto& layer : params.layers)
    for (Tensor* w : {&layer.ffn_w1, &layer.ffn_b1, &layer.ffn_w2, &layer.ffn_b2})
      for (auto& v : w->data) v = 0.0;

  const Tensor logits = infer_logits(params, testutil::random_tensor(rng, {2, 3}));

  // Hand computation: cls = W_0 + b_0; LayerNorm (gain 1, bias 0); head affine.
  const std::size_t d = cfg.d_token;
  std::vector<double> cls(d);
  double mean = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    cls[k] = params.tokenizer.weight.at2(0, k) + params.tokenizer.bias.at2(0, k);
    mean += cls[k];
  }
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t k = 0; k < d; ++k) var += (cls[k] - mean) * (cls[k] - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> expected(2, 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < d; ++k)
      expected[c] += (cls[k] - mean) * inv * params.head.weight.at2(k, c);
    expected[c] += params.head.bias.data[c];
  }
  // every row is input-blind here: all logits equal the hand value
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(logits.at2(i, c) == doctest::Approx(expected[c]).epsilon(1e-12));
}

TEST_CASE("baseline parameter count is strictly smaller than the full model's") {
  ModelConfig full = tiny_config();
  ModelConfig base = tiny_config();
  base.with_attention = false;
  Rng r1(14), r2(14);
  CHECK(init_params(base, r2).count_scalars() < init_params(full, r1).count_scalars());
}

TEST_CASE("forward requires attention; dispatcher routes on the config") {
  ModelConfig cfg = tiny_config();
  cfg.with_attention = false;
  Rng rng(15);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  StagedModel staged = stage(t, params, false);
  Rng fwd_rng(0);
  const Tensor x = testutil::random_tensor(rng, {1, 3});
  CHECK_THROWS_AS(forward(t, staged, cfg, x, false, fwd_rng), ContractError);
  CHECK_NOTHROW(run_forward(t, staged, cfg, x, false, fwd_rng));
}

TEST_CASE("checkpoint round trip is bit-identical") {
  ModelConfig cfg = tiny_config();
  cfg.ffn_hidden_factor = 4.0 / 3.0;
  Rng rng(16);
  ModelParams params = init_params(cfg, rng);
  const std::string path = "tmp_checkpoint.txt";
  save_checkpoint(params, path);
  const ModelParams back = load_checkpoint(path);

  CHECK(back.config.p == cfg.p);
  CHECK(back.config.d_token == cfg.d_token);
  CHECK(back.config.n_heads == cfg.n_heads);
  CHECK(back.config.n_layers == cfg.n_layers);
  CHECK(back.config.ffn_hidden_factor == cfg.ffn_hidden_factor);
  CHECK(back.config.with_attention == cfg.with_attention);

  auto a = flatten_params(params);
  auto b = flatten_params(back);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].shape == b[i].shape);
    for (std::size_t j = 0; j < a[i].numel(); ++j) CHECK(a[i].data[j] == b[i].data[j]);
  }

  // and the forward pass agrees bit-for-bit
  Rng data_rng(17);
  const Tensor x = testutil::random_tensor(data_rng, {3, 3});
  const Tensor l1 = infer_logits(params, x);
  const Tensor l2 = infer_logits(back, x);
  for (std::size_t i = 0; i < l1.numel(); ++i) CHECK(l1.data[i] == l2.data[i]);
  std::remove(path.c_str());
}

TEST_CASE("load_checkpoint rejects malformed files") {
  const std::string path = "tmp_checkpoint_bad.txt";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f);
    std::fputs("not a checkpoint\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  CHECK_THROWS_AS(load_checkpoint("tmp_checkpoint_missing.txt"), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("stage_from_vars validates the var count") {
  ModelConfig cfg = tiny_config();
  Rng rng(18);
  ModelParams params = init_params(cfg, rng);
  Tape t;
  std::vector<Var> vars;
  for (const auto& [name, tensor] : params.named_tensors()) vars.push_back(t.param(*tensor));
  CHECK_NOTHROW(stage_from_vars(cfg, vars));
  std::vector<Var> short_vars(vars.begin(), vars.end() - 1);
  CHECK_THROWS_AS(stage_from_vars(cfg, short_vars), ContractError);
  vars.push_back(t.constant(Tensor::scalar(1.0)));
  CHECK_THROWS_AS(stage_from_vars(cfg, vars), ContractError);
}
