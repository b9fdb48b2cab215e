#include "hipal/encoders.hpp"

#include "hipal/checkpoint.hpp"
#include "hipal/error.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace hipal {

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::fcn: return "fcn";
    case Arch::causalnet: return "causalnet";
    case Arch::restcn: return "restcn";
  }
  return "?";
}

Arch parse_arch(const std::string& name) {
  if (name == "fcn" || name == "f") return Arch::fcn;
  if (name == "causalnet" || name == "c") return Arch::causalnet;
  if (name == "restcn" || name == "r") return Arch::restcn;
  throw ValidationError("unknown encoder architecture '" + name + "'");
}

EncoderConfig EncoderConfig::hierarchical(Arch arch, int input_dim) {
  EncoderConfig c;
  c.arch = arch;
  c.input_dim = input_dim;
  if (arch == Arch::fcn) {
    c.n_layers = 3;
    c.filters = {128, 256, 128};
    c.kernels = {8, 5, 3};
  }
  return c;
}

EncoderConfig EncoderConfig::single_level(Arch arch, int input_dim) {
  EncoderConfig c;
  c.arch = arch;
  c.input_dim = input_dim;
  c.max_steps = 50000;
  if (arch == Arch::fcn) {
    c.n_layers = 6;
    c.filters = {128, 256, 128, 128, 256, 128};
    c.kernels = {8, 5, 3, 8, 5, 3};
  } else {
    c.n_layers = 12;
    c.kernel = 7;
    c.dilation_base = 3;
  }
  return c;
}

int EncoderConfig::layer_filters(int l) const { return filters.size() == 1 ? filters[0] : filters.at(l); }

int EncoderConfig::layer_kernel(int l) const { return kernels.empty() ? kernel : kernels.at(l); }

int EncoderConfig::layer_dilation(int l) const {
  if (!dilations.empty()) return dilations.at(l);
  if (arch == Arch::fcn) return 1;
  int d = 1;
  for (int i = 0; i < l / 2; ++i) d *= dilation_base;
  return d;
}

int EncoderConfig::output_dim() const {
  return arch == Arch::causalnet ? h_dim : layer_filters(n_layers - 1);
}

int EncoderConfig::pooled_length(int steps) const {
  for (int i = 0; i < pooling_layers(); ++i) steps = (steps + 1) / 2;
  return steps;
}

int EncoderConfig::flatten_size() const { return layer_filters(n_layers - 1) * pooled_length(max_steps); }

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("encoder config: " + what); };
  if (input_dim < 1) fail("input_dim must be >= 1");
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (max_steps < 1) fail("max_steps must be >= 1");
  if (kernel < 1) fail("kernel must be >= 1");
  if (dilation_base < 1) fail("dilation base must be >= 1");
  if (h_dim < 1) fail("h_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (arch == Arch::restcn && n_layers % 2 != 0) fail("restcn needs an even number of layers");
  if (filters.size() != 1 && filters.size() != static_cast<std::size_t>(n_layers))
    fail("filters needs 1 or n_layers entries");
  if (!kernels.empty() && kernels.size() != static_cast<std::size_t>(n_layers)) fail("kernels needs n_layers entries");
  if (!dilations.empty() && dilations.size() != static_cast<std::size_t>(n_layers))
    fail("dilations needs n_layers entries");
  for (int f : filters)
    if (f < 1) fail("filters must be >= 1");
  for (int k : kernels)
    if (k < 1) fail("kernels must be >= 1");
  for (int d : dilations)
    if (d < 1) fail("dilations must be >= 1");
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

std::string EncoderConfig::echo() const {
  char drop[32];
  std::snprintf(drop, sizeof drop, "%.17g", dropout);
  std::ostringstream os;
  os << "arch=" << to_string(arch) << "\ninput_dim=" << input_dim << "\nn_layers=" << n_layers
     << "\nfilters=" << join(filters) << "\nkernels=" << join(kernels) << "\nkernel=" << kernel
     << "\ndilation_base=" << dilation_base << "\ndilations=" << join(dilations) << "\ndropout=" << drop
     << "\nmax_steps=" << max_steps << "\nh_dim=" << h_dim << "\n";
  return os.str();
}

EncoderConfig EncoderConfig::from_echo(const std::string& text) {
  EncoderConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "arch") c.arch = parse_arch(value);
    else if (key == "input_dim") c.input_dim = std::stoi(value);
    else if (key == "n_layers") c.n_layers = std::stoi(value);
    else if (key == "filters") c.filters = split_ints(value);
    else if (key == "kernels") c.kernels = split_ints(value);
    else if (key == "kernel") c.kernel = std::stoi(value);
    else if (key == "dilation_base") c.dilation_base = std::stoi(value);
    else if (key == "dilations") c.dilations = split_ints(value);
    else if (key == "dropout") c.dropout = std::stod(value);
    else if (key == "max_steps") c.max_steps = std::stoi(value);
    else if (key == "h_dim") c.h_dim = std::stoi(value);
  }
  c.validate();
  return c;
}

int receptive_field(const EncoderConfig& c) {
  c.validate();
  long field = 1, jump = 1;
  for (int l = 0; l < c.n_layers; ++l) {
    field += static_cast<long>(c.layer_kernel(l) - 1) * c.layer_dilation(l) * jump;
    if (l < c.pooling_layers()) {
      field += jump;
      jump *= 2;
    }
  }
  return static_cast<int>(field);
}

LowLevelEncoder::LowLevelEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int cin = config_.input_dim;
  for (int l = 0; l < config_.n_layers; ++l) {
    ConvLayer layer;
    layer.kernel = config_.layer_kernel(l);
    layer.dilation = config_.layer_dilation(l);
    const int cout = config_.layer_filters(l);
    layer.weight = Parameter(gaussian(cout, layer.kernel * cin, std::sqrt(2.0 / (layer.kernel * cin)), rng));
    layer.bias = Parameter(Matrix::Zero(cout, 1));
    if (config_.arch == Arch::restcn) layer.gain = Parameter(layer.weight.value.rowwise().norm());
    if (config_.arch == Arch::fcn) {
      layer.norm_scale = Parameter(Matrix::Ones(cout, 1));
      layer.norm_shift = Parameter(Matrix::Zero(cout, 1));
    }
    if (config_.arch == Arch::restcn && l % 2 == 0) {
      const int block_out = config_.layer_filters(l + 1);
      projections_.push_back(cin == block_out ? Linear() : Linear(cin, block_out, rng));
    }
    layers_.push_back(std::move(layer));
    cin = cout;
  }
  if (config_.arch == Arch::causalnet) head_ = Linear(config_.flatten_size(), config_.h_dim, rng);
}

ad::Var LowLevelEncoder::conv(ad::Tape& tape, const ConvLayer& layer, ad::Var x) const {
  auto w = tape.param(layer.weight);
  if (config_.arch == Arch::restcn) w = ad::weight_norm(w, tape.param(layer.gain));
  return ad::conv1d(x, w, tape.param(layer.bias), layer.kernel, layer.dilation, config_.arch == Arch::fcn);
}

ad::Var LowLevelEncoder::encode(ad::Tape& tape, ad::Var x, Rng* rng) const { return encode(tape, x, rng, nullptr); }

ad::Var LowLevelEncoder::encode(ad::Tape& tape, ad::Var x, Rng* rng, std::vector<ad::Var>* trace) const {
  if (x.cols() < 1) throw ContractViolation("encode: empty sequence");
  if (x.rows() != config_.input_dim)
    throw ContractViolation("encode: input has " + std::to_string(x.rows()) + " channels, expected " +
                            std::to_string(config_.input_dim));
  if (x.cols() > config_.max_steps) throw ContractViolation("encode: sequence longer than max_steps");
  const double rate = config_.dropout;
  switch (config_.arch) {
    case Arch::fcn: {
      for (const auto& layer : layers_) {
        x = ad::relu(ad::channel_norm(conv(tape, layer, x), tape.param(layer.norm_scale), tape.param(layer.norm_shift)));
        if (trace) trace->push_back(x);
      }
      return ad::mean_cols(x);
    }
    case Arch::causalnet: {
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        x = ad::dropout(ad::relu(conv(tape, layers_[l], x)), rate, rng);
        if (trace) trace->push_back(x);
        if (l + 1 < layers_.size()) x = ad::max_pool2(x);
      }
      const Eigen::Index flat = x.rows() * x.cols();
      auto w = ad::slice_cols(tape.param(head_.weight), 0, flat);
      return ad::add_bias(ad::matmul(w, ad::reshape(x, flat, 1)), tape.param(head_.bias));
    }
    case Arch::restcn: {
      for (std::size_t b = 0; 2 * b < layers_.size(); ++b) {
        auto y = ad::dropout(ad::relu(conv(tape, layers_[2 * b], x)), rate, rng);
        if (trace) trace->push_back(y);
        y = ad::dropout(ad::relu(conv(tape, layers_[2 * b + 1], y)), rate, rng);
        const auto& proj = projections_[b];
        auto skip = proj.weight.size() == 0 ? x : proj(tape, x);
        x = ad::relu(ad::add(skip, y));
        if (trace) trace->push_back(x);
      }
      return ad::slice_cols(x, x.cols() - 1, 1);
    }
  }
  throw ContractViolation("encode: unknown architecture");
}

Vector LowLevelEncoder::encode_value(const Matrix& x) const {
  ad::Tape tape;
  return encode(tape, tape.constant(x)).value().col(0);
}

void LowLevelEncoder::zero_residual_branches() {
  for (auto& layer : layers_) {
    if (layer.gain.size()) layer.gain.value.setZero();
    layer.bias.value.setZero();
  }
}

void LowLevelEncoder::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".conv" + std::to_string(l);
    auto& layer = layers_[l];
    out.push_back({p + ".weight", &layer.weight});
    out.push_back({p + ".bias", &layer.bias});
    if (layer.gain.size()) out.push_back({p + ".gain", &layer.gain});
    if (layer.norm_scale.size()) {
      out.push_back({p + ".norm_scale", &layer.norm_scale});
      out.push_back({p + ".norm_shift", &layer.norm_shift});
    }
  }
  for (std::size_t b = 0; b < projections_.size(); ++b)
    if (projections_[b].weight.size()) projections_[b].collect(out, prefix + ".proj" + std::to_string(b));
  if (head_.weight.size()) head_.collect(out, prefix + ".head");
}

std::vector<NamedParameter> LowLevelEncoder::parameters() {
  std::vector<NamedParameter> out;
  collect(out);
  return out;
}

PaddedBatch PaddedBatch::from(std::span<const Matrix> sequences) {
  PaddedBatch batch;
  if (sequences.empty()) return batch;
  const Eigen::Index dim = sequences.front().rows();
  for (const auto& s : sequences) {
    if (s.rows() != dim) throw ContractViolation("PaddedBatch: channel mismatch");
    batch.max_len = std::max(batch.max_len, s.cols());
    batch.lengths.push_back(s.cols());
  }
  batch.data = Matrix::Zero(dim, batch.max_len * static_cast<Eigen::Index>(sequences.size()));
  for (std::size_t b = 0; b < sequences.size(); ++b)
    batch.data.middleCols(static_cast<Eigen::Index>(b) * batch.max_len, sequences[b].cols()) = sequences[b];
  return batch;
}

Matrix PaddedBatch::sequence(Eigen::Index b) const { return data.middleCols(b * max_len, lengths.at(b)); }

Matrix PaddedBatch::mask(Eigen::Index b) const {
  Matrix m = Matrix::Zero(1, max_len);
  m.leftCols(lengths.at(b)).setOnes();
  return m;
}

Matrix encode_batch(const LowLevelEncoder& encoder, const PaddedBatch& batch) {
  Matrix out(encoder.output_dim(), batch.size());
  for (Eigen::Index b = 0; b < batch.size(); ++b) out.col(b) = encoder.encode_value(batch.sequence(b));
  return out;
}

void save_encoder(const std::filesystem::path& path, LowLevelEncoder& encoder) {
  Checkpoint ck;
  ck.config = encoder.config().echo();
  ck.put(encoder.parameters());
  ck.save(path);
}

LowLevelEncoder load_encoder(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  Rng rng(0);
  LowLevelEncoder enc(EncoderConfig::from_echo(ck.config), rng);
  ck.get(enc.parameters());
  return enc;
}

void load_encoder_into(const std::filesystem::path& path, LowLevelEncoder& encoder) {
  const Checkpoint ck = Checkpoint::load(path);
  if (EncoderConfig::from_echo(ck.config) != encoder.config())
    throw ValidationError("encoder checkpoint config differs from the target encoder");
  ck.get(encoder.parameters());
}

}  // namespace hipal
