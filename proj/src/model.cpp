#include "arft/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace arft {

void ModelConfig::validate() const {
  if (p < 1) throw ConfigError("model: feature count p must be >= 1");
  if (d_token < 1) throw ConfigError("model: d_token must be >= 1");
  if (n_heads < 1) throw ConfigError("model: n_heads must be >= 1");
  if (d_token % n_heads != 0)
    throw ConfigError("model: d_token " + std::to_string(d_token) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("model: dropout_rate must be in [0,1), got " +
                      std::to_string(dropout_rate));
  if (ffn_hidden_factor <= 0.0) throw ConfigError("model: ffn_hidden_factor must be > 0");
  if (head_classes != 2) throw ConfigError("model: head_classes must be 2");
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tokenizer.weight", &tokenizer.weight);
  out.emplace_back("tokenizer.bias", &tokenizer.bias);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    if (config.with_attention) {
      out.emplace_back(pre + "wq", &lp.wq);
      out.emplace_back(pre + "wk", &lp.wk);
      out.emplace_back(pre + "wv", &lp.wv);
      out.emplace_back(pre + "wo", &lp.wo);
      out.emplace_back(pre + "attn_norm.gain", &lp.attn_norm_gain);
      out.emplace_back(pre + "attn_norm.bias", &lp.attn_norm_bias);
    }
    out.emplace_back(pre + "ffn.w1", &lp.ffn_w1);
    out.emplace_back(pre + "ffn.b1", &lp.ffn_b1);
    out.emplace_back(pre + "ffn.w2", &lp.ffn_w2);
    out.emplace_back(pre + "ffn.b2", &lp.ffn_b2);
    out.emplace_back(pre + "ffn_norm.gain", &lp.ffn_norm_gain);
    out.emplace_back(pre + "ffn_norm.bias", &lp.ffn_norm_bias);
  }
  out.emplace_back("head.norm.gain", &head.norm_gain);
  out.emplace_back("head.norm.bias", &head.norm_bias);
  out.emplace_back("head.weight", &head.weight);
  out.emplace_back("head.bias", &head.bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  auto mut = const_cast<ModelParams*>(this)->named_tensors();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::count_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t->numel();
  return n;
}

namespace {

// Empty-shaped placeholder for parameter tensors a variant does not use.
Tensor absent() { return Tensor::zeros({0}); }

// Allocates every tensor of the right shape, filled with zeros.
ModelParams make_empty(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_token;
  const std::size_t h = cfg.ffn_hidden();
  ModelParams mp;
  mp.config = cfg;
  mp.tokenizer.weight = Tensor::zeros({cfg.p + 1, d});
  mp.tokenizer.bias = Tensor::zeros({cfg.p + 1, d});
  mp.layers.resize(cfg.n_layers);
  for (auto& lp : mp.layers) {
    if (cfg.with_attention) {
      lp.wq = Tensor::zeros({d, d});
      lp.wk = Tensor::zeros({d, d});
      lp.wv = Tensor::zeros({d, d});
      lp.wo = Tensor::zeros({d, d});
      lp.attn_norm_gain = Tensor::zeros({d});
      lp.attn_norm_bias = Tensor::zeros({d});
    } else {
      lp.wq = absent();
      lp.wk = absent();
      lp.wv = absent();
      lp.wo = absent();
      lp.attn_norm_gain = absent();
      lp.attn_norm_bias = absent();
    }
    lp.ffn_w1 = Tensor::zeros({d, 2 * h});
    lp.ffn_b1 = Tensor::zeros({2 * h});
    lp.ffn_w2 = Tensor::zeros({h, d});
    lp.ffn_b2 = Tensor::zeros({d});
    lp.ffn_norm_gain = Tensor::zeros({d});
    lp.ffn_norm_bias = Tensor::zeros({d});
  }
  mp.head.norm_gain = Tensor::zeros({d});
  mp.head.norm_bias = Tensor::zeros({d});
  mp.head.weight = Tensor::zeros({d, 2});
  mp.head.bias = Tensor::zeros({2});
  return mp;
}

void fill_kaiming(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = bound * (2.0 * rng.uniform() - 1.0);
}

void fill_const(Tensor& t, double v) {
  for (auto& x : t.data) x = v;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  ModelParams mp = make_empty(config);
  const std::size_t d = config.d_token;
  const std::size_t h = config.ffn_hidden();

  // Each tokenizer row maps one scalar input, so fan_in = 1.
  fill_kaiming(mp.tokenizer.weight, 1, rng);
  for (auto& lp : mp.layers) {
    if (config.with_attention) {
      fill_kaiming(lp.wq, d, rng);
      fill_kaiming(lp.wk, d, rng);
      fill_kaiming(lp.wv, d, rng);
      fill_kaiming(lp.wo, d, rng);
      fill_const(lp.attn_norm_gain, 1.0);
    }
    fill_kaiming(lp.ffn_w1, d, rng);
    fill_kaiming(lp.ffn_w2, h, rng);
    fill_const(lp.ffn_norm_gain, 1.0);
  }
  fill_const(mp.head.norm_gain, 1.0);
  fill_kaiming(mp.head.weight, d, rng);
  return mp;
}

StagedModel stage(Tape& t, const ModelParams& params, bool trainable) {
  std::vector<Var> vars;
  for (const auto& [name, tensor] : params.named_tensors())
    vars.push_back(trainable ? t.param(*tensor) : t.constant(*tensor));
  return stage_from_vars(params.config, vars);
}

StagedModel stage_from_vars(const ModelConfig& config, const std::vector<Var>& vars) {
  StagedModel m;
  m.all = vars;
  std::size_t i = 0;
  auto next = [&]() {
    if (i >= vars.size()) throw ContractError("stage_from_vars: too few vars for config");
    return vars[i++];
  };
  m.tok_w = next();
  m.tok_b = next();
  m.layers.resize(config.n_layers);
  for (auto& lp : m.layers) {
    if (config.with_attention) {
      lp.wq = next();
      lp.wk = next();
      lp.wv = next();
      lp.wo = next();
      lp.attn_norm_gain = next();
      lp.attn_norm_bias = next();
    }
    lp.ffn_w1 = next();
    lp.ffn_b1 = next();
    lp.ffn_w2 = next();
    lp.ffn_b2 = next();
    lp.ffn_norm_gain = next();
    lp.ffn_norm_bias = next();
  }
  m.head_norm_gain = next();
  m.head_norm_bias = next();
  m.head_w = next();
  m.head_b = next();
  if (i != vars.size()) throw ContractError("stage_from_vars: too many vars for config");
  return m;
}

Var tokenize(Tape& t, const Tensor& x, Var tok_w, Var tok_b) {
  if (x.ndim() != 2) throw ShapeError("tokenize: input must be [N,p], got " + shape_str(x.shape));
  const std::size_t n = x.shape[0];
  const std::size_t p = x.shape[1];
  const Tensor& w = t.value(tok_w);
  if (w.ndim() != 2 || w.shape[0] != p + 1)
    throw ShapeError("tokenize: input has " + std::to_string(p) +
                     " features but tokenizer has " + std::to_string(w.shape[0]) +
                     " rows (expected p+1 = " + std::to_string(p + 1) + ")");
  const std::size_t d = w.shape[1];

  Var xr = reshape(t.constant(x), {n, p, 1});
  Var feat = add(mul(xr, slice(tok_w, 0, 1, p)), slice(tok_b, 0, 1, p));  // [N,p,d]

  // [CLS]: constant-1 input through its own (W_0, b_0), replicated across N.
  Var cls_vec = add(slice(tok_w, 0, 0, 1), slice(tok_b, 0, 0, 1));          // [1,d]
  Var cls = mul(t.constant(Tensor::full({n, 1, 1}, 1.0)), reshape(cls_vec, {1, 1, d}));
  return concat({cls, feat}, 1);  // [N, p+1, d]
}

Var attention_layer(Tape& t, Var x, const StagedModel::StagedLayer& lp, const ModelConfig& cfg,
                    bool skip_pre_norm, bool training, Rng& rng,
                    std::vector<Var>* attn_probe) {
  (void)t;  // ops dispatch on the vars' tape; kept for signature symmetry
  Var h = skip_pre_norm ? x : layer_norm(x, lp.attn_norm_gain, lp.attn_norm_bias, kLayerNormEps);
  Var q = matmul(h, lp.wq);  // [N,T,d]; head m owns columns [m*d_k, (m+1)*d_k)
  Var k = matmul(h, lp.wk);
  Var v = matmul(h, lp.wv);

  const std::size_t dk = cfg.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t m = 0; m < cfg.n_heads; ++m) {
    Var qi = slice(q, 2, m * dk, dk);
    Var ki = slice(k, 2, m * dk, dk);
    Var vi = slice(v, 2, m * dk, dk);
    Var weights = softmax(mul_scalar(matmul(qi, transpose_last2(ki)), scale), -1);  // [N,T,T]
    if (attn_probe) attn_probe->push_back(weights);
    heads.push_back(matmul(weights, vi));  // [N,T,dk]
  }
  Var proj = dropout(matmul(concat(heads, 2), lp.wo), cfg.dropout_rate, training, rng);
  return add(x, proj);
}

Var ffn_block(Tape& t, Var x, const StagedModel::StagedLayer& lp, const ModelConfig& cfg,
              bool training, Rng& rng) {
  (void)t;
  Var h = layer_norm(x, lp.ffn_norm_gain, lp.ffn_norm_bias, kLayerNormEps);
  Var a1 = add(matmul(h, lp.ffn_w1), lp.ffn_b1);  // [N,T,2h]
  Var a2 = add(matmul(reglu(a1), lp.ffn_w2), lp.ffn_b2);  // [N,T,d]
  return add(x, dropout(a2, cfg.dropout_rate, training, rng));
}

namespace {

ForwardResult readout(Tape& t, Var h, const StagedModel& m, const ModelConfig& cfg,
                      std::size_t n) {
  (void)t;
  ForwardResult res;
  res.tokens_repr = h;
  res.cls_repr = reshape(slice(h, 1, 0, 1), {n, cfg.d_token});
  Var normed = layer_norm(res.cls_repr, m.head_norm_gain, m.head_norm_bias, kLayerNormEps);
  res.logits = add(matmul(normed, m.head_w), m.head_b);
  return res;
}

}  // namespace

ForwardResult forward(Tape& t, const StagedModel& m, const ModelConfig& cfg, const Tensor& x,
                      bool training, Rng& rng) {
  if (!cfg.with_attention)
    throw ContractError("forward: config has attention disabled; use baseline_forward");
  std::vector<Var> attention;
  Var h = tokenize(t, x, m.tok_w, m.tok_b);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    h = attention_layer(t, h, m.layers[l], cfg, /*skip_pre_norm=*/l == 0, training, rng,
                        &attention);
    h = ffn_block(t, h, m.layers[l], cfg, training, rng);
  }
  ForwardResult res = readout(t, h, m, cfg, x.shape[0]);
  res.attention = std::move(attention);
  return res;
}

ForwardResult baseline_forward(Tape& t, const StagedModel& m, const ModelConfig& cfg,
                               const Tensor& x, bool training, Rng& rng) {
  Var h = tokenize(t, x, m.tok_w, m.tok_b);
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    h = ffn_block(t, h, m.layers[l], cfg, training, rng);
  return readout(t, h, m, cfg, x.shape[0]);
}

ForwardResult run_forward(Tape& t, const StagedModel& m, const ModelConfig& cfg, const Tensor& x,
                          bool training, Rng& rng) {
  return cfg.with_attention ? forward(t, m, cfg, x, training, rng)
                            : baseline_forward(t, m, cfg, x, training, rng);
}

Tensor infer_logits(const ModelParams& params, const Tensor& x) {
  Tape t;
  StagedModel m = stage(t, params, /*trainable=*/false);
  Rng rng(0);  // never drawn from: dropout is off at inference
  return t.value(run_forward(t, m, params.config, x, /*training=*/false, rng).logits);
}

std::vector<int> predict(const Tensor& logits, double threshold) {
  if (logits.ndim() != 2 || logits.shape[1] != 2)
    throw ShapeError("predict: logits must be [N,2], got " + shape_str(logits.shape));
  std::vector<int> labels(logits.shape[0]);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double l0 = logits.at2(i, 0);
    const double l1 = logits.at2(i, 1);
    if (!std::isfinite(l0) || !std::isfinite(l1))
      throw ContractError("predict: non-finite logit at row " + std::to_string(i));
    const double p1 = 1.0 / (1.0 + std::exp(l0 - l1));
    labels[i] = p1 > threshold ? 1 : 0;
  }
  return labels;
}

// --- checkpoint ---------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ParseError("checkpoint: cannot parse " + what + " from '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  if (v < 0 || v != std::floor(v))
    throw ParseError("checkpoint: " + what + " must be a nonnegative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  const ModelConfig& c = params.config;
  out << "arft-checkpoint v1\n";
  out << "config p " << c.p << " d_token " << c.d_token << " n_heads " << c.n_heads
      << " n_layers " << c.n_layers << " ffn_hidden_factor " << fmt_double(c.ffn_hidden_factor)
      << " dropout_rate " << fmt_double(c.dropout_rate) << " head_classes " << c.head_classes
      << " with_attention " << (c.with_attention ? 1 : 0) << '\n';

  const auto named = params.named_tensors();
  out << "tensors " << named.size() << '\n';
  for (const auto& [name, tensor] : named) {
    out << "tensor " << name << ' ' << tensor->ndim();
    for (auto d : tensor->shape) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < tensor->numel(); ++i) {
      if (i) out << ' ';
      out << fmt_double(tensor->data[i]);
    }
    out << '\n';
  }
  if (!out) throw ParseError("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line) || line != "arft-checkpoint v1")
    throw ParseError(path + ": not an arft checkpoint (bad magic line)");

  if (!std::getline(in, line)) throw ParseError(path + ": missing config line");
  ModelConfig cfg;
  {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag != "config") throw ParseError(path + ": expected config line, got '" + line + "'");
    std::string key, value;
    while (is >> key >> value) {
      if (key == "p") cfg.p = parse_size(value, key);
      else if (key == "d_token") cfg.d_token = parse_size(value, key);
      else if (key == "n_heads") cfg.n_heads = parse_size(value, key);
      else if (key == "n_layers") cfg.n_layers = parse_size(value, key);
      else if (key == "ffn_hidden_factor") cfg.ffn_hidden_factor = parse_double(value, key);
      else if (key == "dropout_rate") cfg.dropout_rate = parse_double(value, key);
      else if (key == "head_classes") cfg.head_classes = parse_size(value, key);
      else if (key == "with_attention") cfg.with_attention = parse_size(value, key) != 0;
      else throw ParseError(path + ": unknown config key '" + key + "'");
    }
  }

  ModelParams mp = make_empty(cfg);
  auto named = mp.named_tensors();

  if (!std::getline(in, line)) throw ParseError(path + ": missing tensors line");
  {
    std::istringstream is(line);
    std::string tag, count;
    is >> tag >> count;
    if (tag != "tensors" || parse_size(count, "tensor count") != named.size())
      throw ParseError(path + ": tensor count does not match config (expected " +
                       std::to_string(named.size()) + ")");
  }

  for (auto& [name, tensor] : named) {
    if (!std::getline(in, line)) throw ParseError(path + ": missing tensor header for " + name);
    std::istringstream is(line);
    std::string tag, got_name;
    is >> tag >> got_name;
    if (tag != "tensor" || got_name != name)
      throw ParseError(path + ": expected tensor '" + name + "', got '" + line + "'");
    std::string tok;
    if (!(is >> tok)) throw ParseError(path + ": missing rank for tensor " + name);
    const std::size_t rank = parse_size(tok, "rank");
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(is >> tok)) throw ParseError(path + ": truncated shape for tensor " + name);
      d = parse_size(tok, "dimension");
    }
    if (shape != tensor->shape)
      throw ParseError(path + ": tensor " + name + " has shape " + shape_str(shape) +
                       ", config implies " + shape_str(tensor->shape));
    if (!std::getline(in, line)) throw ParseError(path + ": missing data for tensor " + name);
    std::istringstream ds(line);
    for (std::size_t i = 0; i < tensor->numel(); ++i) {
      if (!(ds >> tok)) throw ParseError(path + ": truncated data for tensor " + name);
      tensor->data[i] = parse_double(tok, name);
    }
    if (ds >> tok) throw ParseError(path + ": trailing data for tensor " + name);
  }
  return mp;
}

}  // namespace arft
