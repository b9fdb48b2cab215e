// Low-level sequence encoders: map one embedded event sequence
// (channels x steps) to a fixed-size workload vector h.
#pragma once

#include "hipal/ad.hpp"
#include "hipal/layers.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hipal {

enum class Arch { fcn, causalnet, restcn };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

struct EncoderConfig {
  Arch arch = Arch::restcn;
  int input_dim = 200;
  int n_layers = 6;
  std::vector<int> filters{64};  // one entry per layer, or a single entry for all
  std::vector<int> kernels;      // per layer; empty uses `kernel`
  int kernel = 5;
  int dilation_base = 2;
  std::vector<int> dilations;    // explicit per-layer dilations; empty uses the default schedule
  double dropout = 0.3;
  int max_steps = 3000;
  int h_dim = 64;                // causalnet output width; fcn/restcn use the last filter count

  /// Full-size presets.
  static EncoderConfig hierarchical(Arch arch, int input_dim);
  static EncoderConfig single_level(Arch arch, int input_dim);

  int layer_filters(int l) const;
  int layer_kernel(int l) const;
  /// Default schedule: fcn 1; causalnet and restcn base^(l/2), i.e. the two
  /// convolutions of a residual block share a dilation.
  int layer_dilation(int l) const;
  int output_dim() const;
  /// Pooling layers sit between consecutive causalnet convolutions.
  int pooling_layers() const { return arch == Arch::causalnet ? n_layers - 1 : 0; }
  /// Number of time steps after every pooling layer for an input of `steps`.
  int pooled_length(int steps) const;
  /// causalnet: channels x pooled_length(max_steps).
  int flatten_size() const;

  void validate() const;
  /// Line-oriented key=value echo, stable across runs.
  std::string echo() const;
  static EncoderConfig from_echo(const std::string& text);
  bool operator==(const EncoderConfig&) const = default;
};

/// Dilated causal convolution on plain matrices: out_t = sum_i f_i x_{t - d i},
/// with x at negative steps read as zero. f is Cout x (k * Cin), tap-major.
template <typename Derived>
MatrixT<typename Derived::Scalar> dilated_causal_conv(const Eigen::MatrixBase<Derived>& x,
                                                      const MatrixT<typename Derived::Scalar>& f, int kernel,
                                                      int dilation) {
  using S = typename Derived::Scalar;
  const Eigen::Index cin = x.rows(), steps = x.cols();
  if (f.cols() != cin * kernel) throw std::invalid_argument("dilated_causal_conv: filter/input mismatch");
  MatrixT<S> out = MatrixT<S>::Zero(f.rows(), steps);
  for (int i = 0; i < kernel; ++i) {
    const Eigen::Index s = static_cast<Eigen::Index>(dilation) * i;
    if (s >= steps) break;
    out.rightCols(steps - s).noalias() += f.middleCols(i * cin, cin) * x.leftCols(steps - s);
  }
  return out;
}

/// 1 + sum (k_l - 1) d_l J_l, where J_l is the product of pooling strides
/// applied before layer l (each stride-2 pool also widens the field by J).
int receptive_field(const EncoderConfig& config);

/// Keeps the most recent `max_steps` items.
template <typename T>
std::span<const T> most_recent(std::span<const T> items, std::size_t max_steps) {
  return items.size() > max_steps ? items.last(max_steps) : items;
}

class LowLevelEncoder {
 public:
  LowLevelEncoder() = default;
  LowLevelEncoder(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }
  int output_dim() const { return config_.output_dim(); }

  /// x is input_dim x n with 1 <= n; columns beyond max_steps are expected
  /// to be truncated by the caller. rng == nullptr disables dropout.
  ad::Var encode(ad::Tape& tape, ad::Var x, Rng* rng = nullptr) const;
  /// Like encode, but also returns the output of every convolution layer.
  ad::Var encode(ad::Tape& tape, ad::Var x, Rng* rng, std::vector<ad::Var>* trace) const;
  /// Convenience wrapper on plain values (inference).
  Vector encode_value(const Matrix& x) const;

  /// Every residual branch outputs zero (weight-norm gains and biases zeroed).
  void zero_residual_branches();

  void collect(std::vector<NamedParameter>& out, const std::string& prefix = "encoder");
  std::vector<NamedParameter> parameters();

  struct ConvLayer {
    Parameter weight;  // Cout x (k * Cin); the direction v when weight-normalised
    Parameter gain;    // Cout x 1, weight-norm g (restcn only)
    Parameter bias;
    Parameter norm_scale;  // fcn only
    Parameter norm_shift;
    int kernel = 1;
    int dilation = 1;
  };

 private:
  ad::Var conv(ad::Tape& tape, const ConvLayer& layer, ad::Var x) const;

  EncoderConfig config_;
  std::vector<ConvLayer> layers_;
  std::vector<Linear> projections_;  // restcn: per block, empty when widths match
  Linear head_;                      // causalnet flatten -> h
};

/// Zero-padded batch of sequences with a validity mask.
struct PaddedBatch {
  Matrix data;                // dim x (batch * max_len), sequence b occupies block b
  Eigen::Index max_len = 0;
  std::vector<Eigen::Index> lengths;

  Eigen::Index size() const { return static_cast<Eigen::Index>(lengths.size()); }
  Matrix sequence(Eigen::Index b) const;      // unmasked steps only
  Matrix mask(Eigen::Index b) const;          // 1 x max_len, 1 on valid steps
  static PaddedBatch from(std::span<const Matrix> sequences);
};

/// h for every sequence of the batch (h_dim x batch). Padded steps never
/// reach the encoder, which makes the result independent of batch company.
Matrix encode_batch(const LowLevelEncoder& encoder, const PaddedBatch& batch);

void save_encoder(const std::filesystem::path& path, LowLevelEncoder& encoder);
/// Reads an encoder checkpoint; the stored config echo defines the shape.
LowLevelEncoder load_encoder(const std::filesystem::path& path);
/// Loads weights into an existing encoder; throws when the configs differ.
void load_encoder_into(const std::filesystem::path& path, LowLevelEncoder& encoder);

}  // namespace hipal
