#pragma once

#include "c2t/container.hpp"
#include "c2t/optim.hpp"
#include "c2t/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace c2t {
class Rng;
}

namespace c2t::model {

inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;

struct TransformerConfig {
  int d_model = 256;
  int n_enc_layers = 8;
  int n_dec_layers = 8;
  int n_heads = 32;
  int d_k = 8;
  int d_v = 8;
  int d_ff = 1024;
  int input_dim = 90;
  int vocab_size = 0;
  int max_src_len = 2048;
  int max_tgt_len = 32;
  double dropout = 0.0;
  bool tie_output_embedding = true;
  double layer_norm_eps = 1e-5;

  // Throws unless heads * d_v == d_model, d_k == d_v and sizes are positive.
  void validate() const;
  std::string to_string() const;
};

// sin/cos table, T x d_model.
nn::Matrix positional_encoding(int length, int d_model);

// Lower-triangular-plus-diagonal mask.
nn::Mask causal_mask(int length);

// rows x cols mask admitting the first `valid` columns.
nn::Mask key_padding_mask(int rows, int cols, int valid);

struct AttentionParams {
  nn::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  nn::Tensor w1, b1, w2, b2;
};

struct NormParams {
  nn::Tensor gain, bias;
};

struct EncoderLayerParams {
  AttentionParams self_attn;
  NormParams norm1;
  FeedForwardParams ff;
  NormParams norm2;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  NormParams norm1;
  AttentionParams cross_attn;
  NormParams norm2;
  FeedForwardParams ff;
  NormParams norm3;
};

// Projects query/key-value inputs, attends per head, concatenates the heads
// and applies the output projection.
nn::Tensor multi_head_attention(const nn::Tensor& query_in, const nn::Tensor& kv_in,
                                const nn::Mask* mask, const AttentionParams& p, int heads,
                                std::vector<nn::Matrix>* weights = nullptr);

// Optional capture of intermediate values during a forward pass.
struct ForwardTrace {
  bool record_layers = false;
  int cross_attention_layer = -1;  // decoder layer whose cross-attention weights are kept
  std::vector<nn::Matrix> encoder_layers;
  std::vector<nn::Matrix> decoder_layers;
  std::vector<nn::Matrix> cross_attention;  // one Tq x Tk matrix per head
};

class Transformer {
 public:
  Transformer(const TransformerConfig& config, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }

  // Stable order; tied weights appear once.
  std::vector<std::pair<std::string, nn::Tensor>> named_parameters() const;
  std::vector<nn::Tensor> parameters() const;
  std::size_t parameter_count() const;
  static std::size_t expected_parameter_count(const TransformerConfig& config);

  const nn::Tensor& embedding() const { return embedding_; }
  // The embedding itself when tied.
  const nn::Tensor& output_projection() const {
    return config_.tie_output_embedding ? embedding_ : output_proj_;
  }
  nn::Tensor& output_bias() { return output_bias_; }
  const EncoderLayerParams& encoder_layer(int i) const { return enc_layers_.at(static_cast<std::size_t>(i)); }
  const DecoderLayerParams& decoder_layer(int i) const { return dec_layers_.at(static_cast<std::size_t>(i)); }

  // features: T x input_dim -> memory T x d_model. `dropout_rng` enables
  // dropout (when configured); pass nullptr for inference. With
  // valid_frames >= 0 the trailing rows are padding: no position attends to
  // them.
  nn::Tensor encode(const nn::Matrix& features, ForwardTrace* trace = nullptr, Rng* dropout_rng = nullptr,
                    int valid_frames = -1) const;

  // tokens start with sos -> logits S x vocab_size. memory_frames masks
  // padded memory rows as in encode.
  nn::Tensor decode(std::span<const int> tokens, const nn::Tensor& memory, ForwardTrace* trace = nullptr,
                    Rng* dropout_rng = nullptr, int memory_frames = -1) const;

  // Log-probabilities of the token following `prefix`, without recording a graph.
  std::vector<double> next_token_logprobs(std::span<const int> prefix, const nn::Tensor& memory) const;

  // Teacher-forced summed cross-entropy over [w1..wn, eos]; `tokens` receives
  // the number of predicted positions. Trailing pads in `targets` are
  // dropped; an interior pad or empty transcript throws.
  nn::Tensor loss_sum(const nn::Matrix& features, std::span<const int> targets, std::size_t& tokens,
                      double label_smoothing = 0.0, Rng* dropout_rng = nullptr) const;
  // Mean over predicted positions.
  nn::Tensor loss(const nn::Matrix& features, std::span<const int> targets, double label_smoothing = 0.0) const;

  Container to_container() const;
  static Transformer from_container(const Container& c);

  // Copies parameter values (shapes must match).
  void load_values(const std::vector<nn::Matrix>& values);
  std::vector<nn::Matrix> snapshot_values() const;

 private:
  TransformerConfig config_;
  nn::Tensor input_w_, input_b_;
  std::vector<EncoderLayerParams> enc_layers_;
  std::vector<DecoderLayerParams> dec_layers_;
  nn::Tensor embedding_;
  nn::Tensor output_proj_;  // only when untied
  nn::Tensor output_bias_;
};

TransformerConfig config_from_metadata(const Container& c);

struct Example {
  std::string id;
  nn::Matrix features;      // T x input_dim
  std::vector<int> targets;  // word ids, no sos/eos
};

struct TrainConfig {
  int epochs = 120;
  int batch_size = 100;
  double lr = 1e-4;
  int warmup_steps = 0;  // > 0 switches to the inverse-sqrt warmup schedule
  double label_smoothing = 0.0;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation set
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
};

// Adam over seeded shuffled mini-batches. Each batch's loss is the mean over
// all predicted tokens in the batch. On return `model` holds the parameters
// of the epoch with the lowest validation loss (the last epoch when there is
// no validation data). Throws if the loss becomes non-finite.
TrainResult train(Transformer& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = nullptr);

// Mean per-token cross-entropy over a dataset, no graph recorded.
double evaluate_loss(const Transformer& model, const std::vector<Example>& data);

}  // namespace c2t::model
