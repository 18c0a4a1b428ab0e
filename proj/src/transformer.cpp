#include "c2t/transformer.hpp"

#include "c2t/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace c2t::model {

using nn::Index;
using nn::Matrix;
using nn::Tensor;

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw Error(std::string("transformer config: ") + what + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_enc_layers, "n_enc_layers");
  positive(n_dec_layers, "n_dec_layers");
  positive(n_heads, "n_heads");
  positive(d_k, "d_k");
  positive(d_v, "d_v");
  positive(d_ff, "d_ff");
  positive(input_dim, "input_dim");
  positive(max_src_len, "max_src_len");
  positive(max_tgt_len, "max_tgt_len");
  if (vocab_size <= kEos) throw Error("transformer config: vocabulary must hold at least one word");
  if (d_k != d_v) throw Error("transformer config: d_k must equal d_v");
  if (n_heads * d_v != d_model) throw Error("transformer config: n_heads * d_v must equal d_model");
  if (d_model % 2 != 0) throw Error("transformer config: d_model must be even");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("transformer config: dropout must be in [0, 1)");
}

std::string TransformerConfig::to_string() const {
  std::ostringstream os;
  os << "d_model=" << d_model << " enc_layers=" << n_enc_layers << " dec_layers=" << n_dec_layers
     << " heads=" << n_heads << " d_k=" << d_k << " d_v=" << d_v << " d_ff=" << d_ff
     << " input_dim=" << input_dim << " vocab=" << vocab_size;
  return os.str();
}

Matrix positional_encoding(int length, int d_model) {
  if (length < 1 || d_model < 2 || d_model % 2 != 0) {
    throw Error("positional_encoding: need length >= 1 and even d_model");
  }
  Matrix pe(length, d_model);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / d_model);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

nn::Mask causal_mask(int length) {
  nn::Mask m(length, length);
  for (int i = 0; i < length; ++i) {
    for (int j = 0; j < length; ++j) m(i, j) = j <= i;
  }
  return m;
}

nn::Mask key_padding_mask(int rows, int cols, int valid) {
  if (valid < 1 || valid > cols) throw Error("key_padding_mask: valid length out of range");
  nn::Mask m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = j < valid;
  }
  return m;
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, const nn::Mask* mask,
                            const AttentionParams& p, int heads, std::vector<Matrix>* weights) {
  const Tensor q = nn::add_row(nn::matmul(query_in, p.wq), p.bq);
  const Tensor k = nn::add_row(nn::matmul(kv_in, p.wk), p.bk);
  const Tensor v = nn::add_row(nn::matmul(kv_in, p.wv), p.bv);
  const Tensor ctx = nn::attention(q, k, v, heads, mask, weights);
  return nn::add_row(nn::matmul(ctx, p.wo), p.bo);
}

namespace {

Matrix xavier(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Tensor zeros(Index n) { return Tensor::parameter(Matrix::Zero(1, n)); }
Tensor ones(Index n) { return Tensor::parameter(Matrix::Ones(1, n)); }

AttentionParams make_attention(const TransformerConfig& c, Rng& rng) {
  const Index hk = static_cast<Index>(c.n_heads) * c.d_k;
  const Index hv = static_cast<Index>(c.n_heads) * c.d_v;
  AttentionParams p;
  p.wq = Tensor::parameter(xavier(c.d_model, hk, rng));
  p.bq = zeros(hk);
  p.wk = Tensor::parameter(xavier(c.d_model, hk, rng));
  p.bk = zeros(hk);
  p.wv = Tensor::parameter(xavier(c.d_model, hv, rng));
  p.bv = zeros(hv);
  p.wo = Tensor::parameter(xavier(hv, c.d_model, rng));
  p.bo = zeros(c.d_model);
  return p;
}

FeedForwardParams make_ff(const TransformerConfig& c, Rng& rng) {
  FeedForwardParams p;
  p.w1 = Tensor::parameter(xavier(c.d_model, c.d_ff, rng));
  p.b1 = zeros(c.d_ff);
  p.w2 = Tensor::parameter(xavier(c.d_ff, c.d_model, rng));
  p.b2 = zeros(c.d_model);
  return p;
}

NormParams make_norm(const TransformerConfig& c) { return {ones(c.d_model), zeros(c.d_model)}; }

void push_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                    const AttentionParams& p) {
  out.emplace_back(prefix + ".wq", p.wq);
  out.emplace_back(prefix + ".bq", p.bq);
  out.emplace_back(prefix + ".wk", p.wk);
  out.emplace_back(prefix + ".bk", p.bk);
  out.emplace_back(prefix + ".wv", p.wv);
  out.emplace_back(prefix + ".bv", p.bv);
  out.emplace_back(prefix + ".wo", p.wo);
  out.emplace_back(prefix + ".bo", p.bo);
}

void push_ff(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const FeedForwardParams& p) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

void push_norm(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
               const NormParams& p) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p, double dropout, Rng* rng) {
  Tensor h = nn::relu(nn::add_row(nn::matmul(x, p.w1), p.b1));
  if (rng) h = nn::dropout(h, dropout, *rng);
  return nn::add_row(nn::matmul(h, p.w2), p.b2);
}

Tensor maybe_dropout(const Tensor& x, double p, Rng* rng) { return rng ? nn::dropout(x, p, *rng) : x; }

Tensor sublayer(const Tensor& x, const Tensor& out, const NormParams& norm, double eps, double dropout,
                Rng* rng) {
  return nn::layer_norm(nn::add(x, maybe_dropout(out, dropout, rng)), norm.gain, norm.bias, eps);
}

}  // namespace

Transformer::Transformer(const TransformerConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  input_w_ = Tensor::parameter(xavier(c.input_dim, c.d_model, rng));
  input_b_ = zeros(c.d_model);
  for (int l = 0; l < c.n_enc_layers; ++l) {
    EncoderLayerParams p;
    p.self_attn = make_attention(c, rng);
    p.norm1 = make_norm(c);
    p.ff = make_ff(c, rng);
    p.norm2 = make_norm(c);
    enc_layers_.push_back(std::move(p));
  }
  for (int l = 0; l < c.n_dec_layers; ++l) {
    DecoderLayerParams p;
    p.self_attn = make_attention(c, rng);
    p.norm1 = make_norm(c);
    p.cross_attn = make_attention(c, rng);
    p.norm2 = make_norm(c);
    p.ff = make_ff(c, rng);
    p.norm3 = make_norm(c);
    dec_layers_.push_back(std::move(p));
  }
  Matrix emb(c.vocab_size, c.d_model);
  const double sd = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  for (Index i = 0; i < emb.size(); ++i) emb.data()[i] = sd * rng.normal();
  embedding_ = Tensor::parameter(std::move(emb));
  if (!c.tie_output_embedding) {
    output_proj_ = Tensor::parameter(xavier(c.vocab_size, c.d_model, rng));
  }
  output_bias_ = zeros(c.vocab_size);
}

std::vector<std::pair<std::string, Tensor>> Transformer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("input.w", input_w_);
  out.emplace_back("input.b", input_b_);
  for (std::size_t l = 0; l < enc_layers_.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    push_attention(out, p + ".self_attn", enc_layers_[l].self_attn);
    push_norm(out, p + ".norm1", enc_layers_[l].norm1);
    push_ff(out, p + ".ff", enc_layers_[l].ff);
    push_norm(out, p + ".norm2", enc_layers_[l].norm2);
  }
  for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    push_attention(out, p + ".self_attn", dec_layers_[l].self_attn);
    push_norm(out, p + ".norm1", dec_layers_[l].norm1);
    push_attention(out, p + ".cross_attn", dec_layers_[l].cross_attn);
    push_norm(out, p + ".norm2", dec_layers_[l].norm2);
    push_ff(out, p + ".ff", dec_layers_[l].ff);
    push_norm(out, p + ".norm3", dec_layers_[l].norm3);
  }
  out.emplace_back("embedding", embedding_);
  if (!config_.tie_output_embedding) out.emplace_back("output.w", output_proj_);
  out.emplace_back("output.b", output_bias_);
  return out;
}

std::vector<Tensor> Transformer::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Transformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += static_cast<std::size_t>(t.size());
  return n;
}

std::size_t Transformer::expected_parameter_count(const TransformerConfig& c) {
  const std::size_t d = c.d_model, hk = std::size_t(c.n_heads) * c.d_k, hv = std::size_t(c.n_heads) * c.d_v;
  const std::size_t attn = 2 * (d * hk + hk) + (d * hv + hv) + (hv * d + d);
  const std::size_t ff = d * c.d_ff + c.d_ff + std::size_t(c.d_ff) * d + d;
  const std::size_t norm = 2 * d;
  const std::size_t v = c.vocab_size;
  std::size_t n = std::size_t(c.input_dim) * d + d;
  n += std::size_t(c.n_enc_layers) * (attn + ff + 2 * norm);
  n += std::size_t(c.n_dec_layers) * (2 * attn + ff + 3 * norm);
  n += v * d + v;
  if (!c.tie_output_embedding) n += v * d;
  return n;
}

Tensor Transformer::encode(const Matrix& features, ForwardTrace* trace, Rng* dropout_rng, int valid_frames) const {
  const auto& c = config_;
  if (features.cols() != c.input_dim) {
    throw Error("encode: expected " + std::to_string(c.input_dim) + " input features, got " +
                std::to_string(features.cols()));
  }
  const Index t = features.rows();
  if (t < 1) throw Error("encode: empty feature sequence");
  if (t > c.max_src_len) throw Error("encode: sequence length " + std::to_string(t) + " exceeds max_len");
  Tensor x = nn::add_row(nn::matmul(Tensor::constant(features), input_w_), input_b_);
  x = nn::add_constant(x, positional_encoding(static_cast<int>(t), c.d_model));
  x = maybe_dropout(x, c.dropout, dropout_rng);
  std::optional<nn::Mask> padding;
  if (valid_frames >= 0) padding = key_padding_mask(static_cast<int>(t), static_cast<int>(t), valid_frames);
  const nn::Mask* self_mask = padding ? &*padding : nullptr;
  for (const auto& layer : enc_layers_) {
    x = sublayer(x, multi_head_attention(x, x, self_mask, layer.self_attn, c.n_heads), layer.norm1,
                 c.layer_norm_eps, c.dropout, dropout_rng);
    x = sublayer(x, feed_forward(x, layer.ff, c.dropout, dropout_rng), layer.norm2, c.layer_norm_eps,
                 c.dropout, dropout_rng);
    if (trace && trace->record_layers) trace->encoder_layers.push_back(x.value());
  }
  return x;
}

Tensor Transformer::decode(std::span<const int> tokens, const Tensor& memory, ForwardTrace* trace,
                           Rng* dropout_rng, int memory_frames) const {
  const auto& c = config_;
  if (tokens.empty() || tokens[0] != kSos) throw Error("decode: token sequence must start with sos");
  if (static_cast<int>(tokens.size()) > c.max_tgt_len) {
    throw Error("decode: token sequence longer than max_len");
  }
  for (int id : tokens) {
    if (id < 0 || id >= c.vocab_size) throw Error("decode: unknown token id " + std::to_string(id));
  }
  if (memory.cols() != c.d_model) throw Error("decode: memory width mismatch");
  const int s = static_cast<int>(tokens.size());
  Tensor x = nn::scale(nn::gather_rows(embedding_, tokens), std::sqrt(static_cast<double>(c.d_model)));
  x = nn::add_constant(x, positional_encoding(s, c.d_model));
  x = maybe_dropout(x, c.dropout, dropout_rng);
  const nn::Mask mask = causal_mask(s);
  std::optional<nn::Mask> padding;
  if (memory_frames >= 0) padding = key_padding_mask(s, static_cast<int>(memory.rows()), memory_frames);
  const nn::Mask* memory_mask = padding ? &*padding : nullptr;
  for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
    const auto& layer = dec_layers_[l];
    x = sublayer(x, multi_head_attention(x, x, &mask, layer.self_attn, c.n_heads), layer.norm1,
                 c.layer_norm_eps, c.dropout, dropout_rng);
    std::vector<Matrix>* weights =
        (trace && trace->cross_attention_layer == static_cast<int>(l)) ? &trace->cross_attention : nullptr;
    x = sublayer(x, multi_head_attention(x, memory, memory_mask, layer.cross_attn, c.n_heads, weights),
                 layer.norm2, c.layer_norm_eps, c.dropout, dropout_rng);
    x = sublayer(x, feed_forward(x, layer.ff, c.dropout, dropout_rng), layer.norm3, c.layer_norm_eps,
                 c.dropout, dropout_rng);
    if (trace && trace->record_layers) trace->decoder_layers.push_back(x.value());
  }
  return nn::add_row(nn::matmul_nt(x, output_projection()), output_bias_);
}

std::vector<double> Transformer::next_token_logprobs(std::span<const int> prefix, const Tensor& memory) const {
  nn::NoGradGuard guard;
  const Tensor logits = decode(prefix, memory);
  const auto row = logits.value().row(logits.rows() - 1);
  const double m = row.maxCoeff();
  const double lse = m + std::log((row.array() - m).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row(i) - lse;
  return out;
}

Tensor Transformer::loss_sum(const Matrix& features, std::span<const int> targets, std::size_t& tokens,
                             double label_smoothing, Rng* dropout_rng) const {
  std::size_t n = targets.size();
  while (n > 0 && targets[n - 1] == kPad) --n;
  if (n == 0) throw Error("loss: empty transcript");
  std::vector<int> input{kSos};
  std::vector<int> output;
  for (std::size_t i = 0; i < n; ++i) {
    const int id = targets[i];
    if (id <= kEos || id >= config_.vocab_size) {
      throw Error("loss: target id " + std::to_string(id) + " is not a word of the vocabulary");
    }
    input.push_back(id);
    output.push_back(id);
  }
  output.push_back(kEos);
  const Tensor memory = encode(features, nullptr, dropout_rng);
  const Tensor logits = decode(input, memory, nullptr, dropout_rng);
  tokens = output.size();
  return nn::cross_entropy_sum(logits, output, -1, label_smoothing);
}

Tensor Transformer::loss(const Matrix& features, std::span<const int> targets, double label_smoothing) const {
  std::size_t tokens = 0;
  Tensor s = loss_sum(features, targets, tokens, label_smoothing);
  return nn::scale(s, 1.0 / static_cast<double>(tokens));
}

Container Transformer::to_container() const {
  Container out;
  const auto& c = config_;
  out.metadata["kind"] = "transformer";
  out.metadata["d_model"] = std::to_string(c.d_model);
  out.metadata["n_enc_layers"] = std::to_string(c.n_enc_layers);
  out.metadata["n_dec_layers"] = std::to_string(c.n_dec_layers);
  out.metadata["n_heads"] = std::to_string(c.n_heads);
  out.metadata["d_k"] = std::to_string(c.d_k);
  out.metadata["d_v"] = std::to_string(c.d_v);
  out.metadata["d_ff"] = std::to_string(c.d_ff);
  out.metadata["input_dim"] = std::to_string(c.input_dim);
  out.metadata["vocab_size"] = std::to_string(c.vocab_size);
  out.metadata["max_src_len"] = std::to_string(c.max_src_len);
  out.metadata["max_tgt_len"] = std::to_string(c.max_tgt_len);
  out.metadata["tie_output_embedding"] = c.tie_output_embedding ? "1" : "0";
  std::ostringstream os;
  os.precision(17);
  os << c.layer_norm_eps;
  out.metadata["layer_norm_eps"] = os.str();
  for (const auto& [name, t] : named_parameters()) out.add(name, t.value());
  return out;
}

TransformerConfig config_from_metadata(const Container& c) {
  if (c.meta("kind") != "transformer") throw Error("container does not hold a transformer checkpoint");
  TransformerConfig cfg;
  cfg.d_model = std::stoi(c.meta("d_model"));
  cfg.n_enc_layers = std::stoi(c.meta("n_enc_layers"));
  cfg.n_dec_layers = std::stoi(c.meta("n_dec_layers"));
  cfg.n_heads = std::stoi(c.meta("n_heads"));
  cfg.d_k = std::stoi(c.meta("d_k"));
  cfg.d_v = std::stoi(c.meta("d_v"));
  cfg.d_ff = std::stoi(c.meta("d_ff"));
  cfg.input_dim = std::stoi(c.meta("input_dim"));
  cfg.vocab_size = std::stoi(c.meta("vocab_size"));
  cfg.max_src_len = std::stoi(c.meta("max_src_len"));
  cfg.max_tgt_len = std::stoi(c.meta("max_tgt_len"));
  cfg.tie_output_embedding = c.meta("tie_output_embedding") == "1";
  cfg.layer_norm_eps = std::stod(c.meta("layer_norm_eps"));
  return cfg;
}

Transformer Transformer::from_container(const Container& c) {
  Transformer model(config_from_metadata(c), 0);
  for (auto& [name, t] : model.named_parameters()) {
    Matrix m = c.matrix(name);
    if (m.rows() != t.rows() || m.cols() != t.cols()) {
      throw Error("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    Tensor(t).mutable_value() = std::move(m);
  }
  return model;
}

void Transformer::load_values(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw Error("load_values: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].rows() != params[i].rows() || values[i].cols() != params[i].cols()) {
      throw Error("load_values: shape mismatch at parameter " + std::to_string(i));
    }
    params[i].mutable_value() = values[i];
  }
}

std::vector<Matrix> Transformer::snapshot_values() const {
  std::vector<Matrix> out;
  for (const auto& t : parameters()) out.push_back(t.value());
  return out;
}

double evaluate_loss(const Transformer& model, const std::vector<Example>& data) {
  nn::NoGradGuard guard;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    std::size_t n = 0;
    total += model.loss_sum(ex.features, ex.targets, n).item();
    tokens += n;
  }
  return tokens ? total / static_cast<double>(tokens) : std::numeric_limits<double>::quiet_NaN();
}

TrainResult train(Transformer& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train_set.empty()) throw Error("train: empty training set");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw Error("train: epochs and batch size must be positive");
  using clock = std::chrono::steady_clock;

  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  Rng* drop = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
  auto params = model.parameters();
  nn::AdamState adam;
  adam.config.lr = cfg.lr;

  TrainResult result;
  std::vector<Matrix> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = clock::now();
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_tokens = 0;
      for (std::size_t i = b; i < e; ++i) {
        std::size_t n = 0;
        for (int id : train_set[order[i]].targets) n += id != kPad;
        batch_tokens += n + 1;
      }
      for (auto& p : params) p.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        const auto& ex = train_set[order[i]];
        std::size_t n = 0;
        const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
        Tensor l;
        try {
          l = model.loss_sum(ex.features, ex.targets, n, cfg.label_smoothing, drop);
        } catch (const Error& err) {
          if (std::string(err.what()).find("non-finite") == std::string::npos) throw;
          throw Error("training diverged: non-finite loss at " + where + " (" + err.what() + ")");
        }
        const double value = l.item();
        if (!std::isfinite(value)) throw Error("training diverged: non-finite loss at " + where);
        epoch_loss += value;
        epoch_tokens += n;
        nn::scale(l, 1.0 / static_cast<double>(batch_tokens)).backward();
      }
      if (cfg.warmup_steps > 0) {
        const double step = static_cast<double>(adam.step + 1);
        const double w = static_cast<double>(cfg.warmup_steps);
        adam.config.lr = cfg.lr * std::min(step / w, std::sqrt(w / step));
      }
      nn::adam_step(params, adam);
    }
    for (auto& p : params) p.zero_grad();

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    m.val_loss = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_loss(model, val_set);
    m.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    if (val_set.empty()) {
      result.best_epoch = epoch;
    } else if (m.val_loss < best_val) {
      best_val = m.val_loss;
      best = model.snapshot_values();
      result.best_epoch = epoch;
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (!best.empty()) model.load_values(best);
  return result;
}

}  // namespace c2t::model
