#include "hipal/encoders.hpp"
#include "hipal/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace hipal;
using hipal::testing::check_gradients;

namespace {

EncoderConfig tiny(Arch arch, int input_dim = 3) {
  EncoderConfig c;
  c.arch = arch;
  c.input_dim = input_dim;
  c.n_layers = arch == Arch::fcn ? 3 : 4;
  c.filters = {4};
  c.kernel = 3;
  c.dilation_base = 2;
  c.dropout = 0.0;
  c.max_steps = 40;
  c.h_dim = 5;
  return c;
}

// Number of input steps one output column covers after the layer that
// produced `cols` columns from `steps` inputs.
int stride_for(int steps, Eigen::Index cols) {
  int stride = 1, len = steps;
  while (len > cols) {
    len = (len + 1) / 2;
    stride *= 2;
  }
  return stride;
}

}  // namespace

TEST_CASE("dilated_causal_conv: hand-derived fixture and degenerate kernel") {
  Matrix x(1, 4);
  x << 1, 2, 3, 4;
  Matrix f(1, 2);
  f << 1, 1;
  Matrix expected(1, 4);
  expected << 1, 2, 4, 6;
  CHECK(dilated_causal_conv(x, f, 2, 2) == expected);

  Rng rng(1);
  const Matrix xs = gaussian(3, 6, 1.0, rng);
  const Matrix w = gaussian(2, 3, 1.0, rng);
  CHECK((dilated_causal_conv(xs, w, 1, 4) - w * xs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dilated_causal_conv: perturbing step t leaves earlier outputs bit-identical") {
  Rng rng(2);
  const Matrix x = gaussian(2, 12, 1.0, rng);
  const Matrix f = gaussian(3, 2 * 4, 1.0, rng);
  const Matrix base = dilated_causal_conv(x, f, 4, 3);
  for (int t = 0; t < 12; ++t) {
    Matrix xp = x;
    xp.col(t).array() += 1.0;
    const Matrix out = dilated_causal_conv(xp, f, 4, 3);
    CHECK(out.leftCols(t) == base.leftCols(t));
    CHECK(out.col(t) != base.col(t));
  }
}

TEST_CASE("dilated_causal_conv works for float scalars") {
  Eigen::MatrixXf x(1, 4);
  x << 1, 2, 3, 4;
  Eigen::MatrixXf f(1, 2);
  f << 1, 1;
  const Eigen::MatrixXf y = dilated_causal_conv(x, f, 2, 2);
  CHECK(y(0, 3) == 6.0f);
}

TEST_CASE("receptive_field closed forms") {
  EncoderConfig one = tiny(Arch::causalnet);
  one.n_layers = 1;
  one.kernel = 2;
  one.dilations = {1};
  CHECK(receptive_field(one) == 2);

  EncoderConfig six = tiny(Arch::restcn);
  six.n_layers = 6;
  six.kernel = 5;
  six.dilations = {1, 2, 4, 8, 16, 32};
  CHECK(receptive_field(six) == 1 + 4 * 63);
}

TEST_CASE("receptive field perturbation probe: 6 layers, k = 5, dilations 2^l") {
  EncoderConfig c = tiny(Arch::restcn, 2);
  c.n_layers = 6;
  c.kernel = 5;
  c.dilations = {1, 2, 4, 8, 16, 32};
  c.filters = {6};
  c.max_steps = 300;
  const int field = receptive_field(c);
  REQUIRE(field == 253);
  Rng rng(3);
  const LowLevelEncoder enc(c, rng);
  const int n = 300;
  const Matrix x = gaussian(2, n, 1.0, rng);
  const Vector base = enc.encode_value(x);
  int inside_changed = 0, outside_changed = 0;
  for (int t = 0; t < n; ++t) {
    Matrix xp = x;
    xp.col(t).array() += 0.5;
    const bool changed = enc.encode_value(xp) != base;
    if (n - 1 - t < field) inside_changed += changed;
    else outside_changed += changed;
  }
  CHECK(inside_changed == field);
  CHECK(outside_changed == 0);
}

TEST_CASE("causality of every internal layer for causalnet and restcn") {
  for (Arch arch : {Arch::causalnet, Arch::restcn}) {
    CAPTURE(to_string(arch));
    Rng rng(4);
    const EncoderConfig c = tiny(arch);
    const LowLevelEncoder enc(c, rng);
    const int n = 23;
    const Matrix x = gaussian(3, n, 1.0, rng);
    ad::Tape t0;
    std::vector<ad::Var> base_trace;
    enc.encode(t0, t0.constant(x), nullptr, &base_trace);
    REQUIRE(base_trace.size() == static_cast<std::size_t>(c.n_layers));
    std::vector<Matrix> base;
    for (auto v : base_trace) base.push_back(v.value());
    for (int step = 0; step < n; ++step) {
      Matrix xp = x;
      xp.col(step).array() -= 0.75;
      ad::Tape t1;
      std::vector<ad::Var> trace;
      enc.encode(t1, t1.constant(xp), nullptr, &trace);
      for (std::size_t l = 0; l < trace.size(); ++l) {
        const Matrix out = trace[l].value();
        const int stride = stride_for(n, out.cols());
        // Column j summarises input steps [j * stride, (j + 1) * stride).
        const Eigen::Index untouched = step / stride;
        CHECK(out.leftCols(untouched) == base[l].leftCols(untouched));
      }
    }
  }
}

TEST_CASE("encoder gradients match finite differences for every arch") {
  for (Arch arch : {Arch::fcn, Arch::causalnet, Arch::restcn}) {
    CAPTURE(to_string(arch));
    Rng rng(5);
    EncoderConfig c = tiny(arch);
    c.max_steps = 9;
    LowLevelEncoder enc(c, rng);
    auto params = enc.parameters();
    const Matrix x = gaussian(3, 7, 1.0, rng);
    const Matrix w = gaussian(enc.output_dim(), 1, 1.0, rng);
    auto rep = check_gradients(params, [&](ad::Tape& t) {
      return ad::sum(ad::mul(ad::tanh(enc.encode(t, t.constant(x))), t.constant(w)));
    });
    CHECK_MESSAGE(rep.worst_ratio <= 1.0, rep.worst_entry);
    CHECK(rep.kinks * 20 <= rep.entries);
  }
}

TEST_CASE("restcn with zero residual branches passes the last input step through") {
  Rng rng(6);
  EncoderConfig c = tiny(Arch::restcn, 4);
  c.filters = {4};
  LowLevelEncoder enc(c, rng);
  enc.zero_residual_branches();
  Matrix x(4, 10);
  for (int j = 0; j < 10; ++j) x.col(j) << 0.5, -1.0, 2.0, 0.25;
  const Vector h = enc.encode_value(x);
  // Rectified identity path of each residual block.
  CHECK((h - x.col(9).cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("output dimension does not depend on the input length") {
  for (Arch arch : {Arch::fcn, Arch::causalnet, Arch::restcn}) {
    Rng rng(7);
    EncoderConfig c = tiny(arch);
    c.max_steps = 3000;
    const LowLevelEncoder enc(c, rng);
    const Vector a = enc.encode_value(gaussian(3, 1, 1.0, rng));
    const Vector b = enc.encode_value(gaussian(3, 3000, 1.0, rng));
    CHECK(a.size() == enc.output_dim());
    CHECK(b.size() == enc.output_dim());
    CHECK(a.allFinite());
    CHECK(b.allFinite());
  }
}

TEST_CASE("encoder errors: empty input, wrong width, too long") {
  Rng rng(8);
  const LowLevelEncoder enc(tiny(Arch::restcn), rng);
  CHECK_THROWS_AS(enc.encode_value(Matrix(3, 0)), Error);
  CHECK_THROWS_AS(enc.encode_value(Matrix::Zero(4, 5)), Error);
  CHECK_THROWS_AS(enc.encode_value(Matrix::Zero(3, 41)), Error);
}

TEST_CASE("batch invariance and padding masks") {
  for (Arch arch : {Arch::fcn, Arch::causalnet, Arch::restcn}) {
    CAPTURE(to_string(arch));
    Rng rng(9);
    const LowLevelEncoder enc(tiny(arch), rng);
    std::vector<Matrix> seqs{gaussian(3, 5, 1.0, rng), gaussian(3, 17, 1.0, rng), gaussian(3, 1, 1.0, rng)};
    PaddedBatch batch = PaddedBatch::from(seqs);
    CHECK(batch.max_len == 17);
    CHECK(batch.mask(0).sum() == 5);
    CHECK(batch.sequence(1) == seqs[1]);
    const Matrix hb = encode_batch(enc, batch);
    for (int b = 0; b < 3; ++b) CHECK((hb.col(b) - enc.encode_value(seqs[b])).cwiseAbs().maxCoeff() < 1e-5);

    // Garbage in the padded region must not leak into h.
    PaddedBatch dirty = batch;
    dirty.data.middleCols(6, 11).setConstant(42.0);
    dirty.data.rightCols(16).setConstant(-7.0);
    CHECK(encode_batch(enc, dirty) == hb);
  }
}

TEST_CASE("causalnet pooling arithmetic follows the shape oracle") {
  for (int layers : {2, 3, 5, 6}) {
    for (int steps : {1, 2, 7, 64, 100, 3000}) {
      EncoderConfig c = tiny(Arch::causalnet);
      c.n_layers = layers;
      c.max_steps = steps;
      int len = steps;
      for (int p = 0; p < layers - 1; ++p) len = (len + 1) / 2;
      CHECK(c.pooling_layers() == layers - 1);
      CHECK(c.pooled_length(steps) == len);
      CHECK(c.flatten_size() == c.layer_filters(layers - 1) * len);
    }
  }
}

TEST_CASE("default dilation schedules") {
  EncoderConfig r = EncoderConfig::hierarchical(Arch::restcn, 200);
  std::vector<int> d;
  for (int l = 0; l < r.n_layers; ++l) d.push_back(r.layer_dilation(l));
  CHECK(d == std::vector<int>{1, 1, 2, 2, 4, 4});
  EncoderConfig f = EncoderConfig::hierarchical(Arch::fcn, 200);
  CHECK(f.n_layers == 3);
  CHECK(f.layer_filters(1) == 256);
  CHECK(f.layer_kernel(0) == 8);
  CHECK(f.layer_dilation(2) == 1);
}

TEST_CASE("config echo, save and load") {
  Rng rng(10);
  EncoderConfig c = tiny(Arch::causalnet);
  c.kernels = {3, 2, 3, 2};
  CHECK(EncoderConfig::from_echo(c.echo()) == c);
  LowLevelEncoder enc(c, rng);
  const auto dir = hipal::testing::temp_dir("encoders");
  save_encoder(dir / "enc.ck", enc);
  const LowLevelEncoder back = load_encoder(dir / "enc.ck");
  CHECK(back.config() == c);
  const Matrix x = gaussian(3, 11, 1.0, rng);
  CHECK(back.encode_value(x) == enc.encode_value(x));

  EncoderConfig other = c;
  other.kernels = {5, 5, 5, 5};
  LowLevelEncoder mismatched(other, rng);
  CHECK_THROWS_AS(load_encoder_into(dir / "enc.ck", mismatched), ValidationError);
}

TEST_CASE("most_recent keeps the tail") {
  const std::vector<int> v{1, 2, 3, 4, 5};
  const auto tail = most_recent(std::span<const int>(v), 2);
  CHECK(std::vector<int>(tail.begin(), tail.end()) == std::vector<int>{4, 5});
  CHECK(most_recent(std::span<const int>(v), 10).size() == 5);
}
