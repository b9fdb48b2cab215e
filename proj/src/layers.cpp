#include "hipal/layers.hpp"

#include <cmath>

namespace hipal {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

Linear::Linear(int in, int out, Rng& rng)
    : weight(gaussian(out, in, std::sqrt(2.0 / (in + out)), rng)), bias(Matrix::Zero(out, 1)) {}

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  return ad::add_bias(ad::matmul(tape.param(weight), x), tape.param(bias));
}

void Linear::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

MLP::MLP(int in, int hidden_dim, int out, double rate, Rng& rng)
    : hidden(in, hidden_dim, rng), output(hidden_dim, out, rng), dropout(rate) {}

ad::Var MLP::operator()(ad::Tape& tape, ad::Var x, Rng* rng) const {
  auto z = ad::dropout(ad::relu(hidden(tape, x)), dropout, rng);
  return output(tape, z);
}

void MLP::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  hidden.collect(out, prefix + ".hidden");
  output.collect(out, prefix + ".output");
}

LSTM::LSTM(int input, int hidden, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u(-s, s);
  Matrix wi(4 * hidden, input), wr(4 * hidden, hidden);
  for (Eigen::Index j = 0; j < wi.cols(); ++j)
    for (Eigen::Index i = 0; i < wi.rows(); ++i) wi(i, j) = u(rng);
  for (Eigen::Index j = 0; j < wr.cols(); ++j)
    for (Eigen::Index i = 0; i < wr.rows(); ++i) wr(i, j) = u(rng);
  Matrix b = Matrix::Zero(4 * hidden, 1);
  b.block(hidden, 0, hidden, 1).setOnes();
  w_input = Parameter(std::move(wi));
  w_recurrent = Parameter(std::move(wr));
  bias = Parameter(std::move(b));
}

ad::Var LSTM::sequence(ad::Tape& tape, ad::Var x) const {
  const Eigen::Index n = hidden_dim();
  auto pre = ad::add_bias(ad::matmul(tape.param(w_input), x), tape.param(bias));
  auto wr = tape.param(w_recurrent);
  std::vector<ad::Var> hs;
  hs.reserve(static_cast<std::size_t>(x.cols()));
  ad::Var h{}, c{};
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    auto z = ad::slice_cols(pre, t, 1);
    if (t > 0) z = ad::add(z, ad::matmul(wr, h));
    auto i = ad::sigmoid(ad::slice_rows(z, 0, n));
    auto f = ad::sigmoid(ad::slice_rows(z, n, n));
    auto g = ad::tanh(ad::slice_rows(z, 2 * n, n));
    auto o = ad::sigmoid(ad::slice_rows(z, 3 * n, n));
    c = t > 0 ? ad::add(ad::mul(f, c), ad::mul(i, g)) : ad::mul(i, g);
    h = ad::mul(o, ad::tanh(c));
    hs.push_back(h);
  }
  return ad::concat_cols<Real>(hs);
}

LSTM::State LSTM::step(const Vector& x, const State& s) const {
  const Eigen::Index n = hidden_dim();
  Vector z = w_input.value * x + w_recurrent.value * s.h + bias.value.col(0);
  auto sig = [](const auto& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix().eval(); };
  const Vector i = sig(z.segment(0, n));
  const Vector f = sig(z.segment(n, n));
  const Vector g = z.segment(2 * n, n).array().tanh().matrix();
  const Vector o = sig(z.segment(3 * n, n));
  State out;
  out.c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
  out.h = o.cwiseProduct(out.c.array().tanh().matrix());
  return out;
}

void LSTM::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".w_input", &w_input});
  out.push_back({prefix + ".w_recurrent", &w_recurrent});
  out.push_back({prefix + ".bias", &bias});
}

Vector positive_probability(const Matrix& logits) {
  return softmax_cols(logits).row(1).transpose();
}

}  // namespace hipal
