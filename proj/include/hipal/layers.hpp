// Dense building blocks shared by the encoders, the hierarchical model and
// the autoencoder heads.
#pragma once

#include "hipal/ad.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hipal {

using Rng = std::mt19937_64;

/// N(0, stddev^2) matrix.
Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// y = W x + b, applied to every column.
struct Linear {
  Parameter weight;  // out x in
  Parameter bias;    // out x 1

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// One hidden layer with rectifier and dropout.
struct MLP {
  Linear hidden;
  Linear output;
  double dropout = 0.0;

  MLP() = default;
  MLP(int in, int hidden_dim, int out, double dropout, Rng& rng);
  ad::Var operator()(ad::Tape& tape, ad::Var x, Rng* rng) const;
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// LSTM with gate order (input, forget, cell, output).
struct LSTM {
  Parameter w_input;      // 4H x I
  Parameter w_recurrent;  // 4H x H
  Parameter bias;         // 4H x 1, forget block starts at 1

  struct State {
    Vector h;
    Vector c;
  };

  LSTM() = default;
  LSTM(int input, int hidden, Rng& rng);
  int hidden_dim() const { return static_cast<int>(w_recurrent.cols()); }
  int input_dim() const { return static_cast<int>(w_input.cols()); }

  /// Runs over the columns of x (I x T); returns every hidden state (H x T).
  ad::Var sequence(ad::Tape& tape, ad::Var x) const;
  /// One step on plain values, for streaming inference.
  State step(const Vector& x, const State& state) const;
  State initial_state() const { return {Vector::Zero(hidden_dim()), Vector::Zero(hidden_dim())}; }
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// Probability of class 1 under a two-unit softmax, per column.
Vector positive_probability(const Matrix& logits);

}  // namespace hipal
