#include "fedcomp/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "fedcomp/error.hpp"

namespace fedcomp {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (in.gcount() != 8) throw Error("truncated input while reading header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

void put_f64(std::ostream& out, double d) {
  std::uint64_t bits = 0;
  static_assert(sizeof bits == sizeof d);
  std::memcpy(&bits, &d, sizeof d);
  put_u64(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double d = 0.0;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

}  // namespace

std::vector<LayerShape> architecture(Eigen::Index input_dim, const LayerSpec& layers) {
  if (input_dim < 1) throw Error("input_dim must be at least 1");
  std::vector<LayerShape> shapes;
  Eigen::Index prev = input_dim;
  for (int width : layers.sizes) {
    if (width < 1) throw Error("layer widths must be at least 1");
    shapes.push_back({width, prev});
    prev = width;
  }
  shapes.push_back({input_dim, prev});
  return shapes;
}

Eigen::Index param_count(Eigen::Index input_dim, const LayerSpec& layers) {
  Eigen::Index n = 0;
  for (const auto& s : architecture(input_dim, layers)) n += s.param_count();
  return n;
}

ParameterVector::ParameterVector(std::vector<LayerShape> shapes) : shapes_(std::move(shapes)) {
  build_offsets();
  flat_ = Vector::Zero(offsets_.back());
}

ParameterVector::ParameterVector(std::vector<LayerShape> shapes, Vector flat)
    : shapes_(std::move(shapes)), flat_(std::move(flat)) {
  build_offsets();
  if (flat_.size() != offsets_.back()) {
    throw DimensionError("flat length " + std::to_string(flat_.size()) + " does not match layer shapes (" +
                         std::to_string(offsets_.back()) + ")");
  }
}

void ParameterVector::build_offsets() {
  offsets_.assign(1, 0);
  for (const auto& s : shapes_) offsets_.push_back(offsets_.back() + s.param_count());
}

Eigen::Map<const Matrix> ParameterVector::weight(std::size_t l) const {
  const auto& s = shapes_.at(l);
  return {flat_.data() + offsets_[l], s.rows, s.cols};
}
Eigen::Map<Matrix> ParameterVector::weight(std::size_t l) {
  const auto& s = shapes_.at(l);
  return {flat_.data() + offsets_[l], s.rows, s.cols};
}
Eigen::Map<const Vector> ParameterVector::bias(std::size_t l) const {
  const auto& s = shapes_.at(l);
  return {flat_.data() + offsets_[l] + s.rows * s.cols, s.rows};
}
Eigen::Map<Vector> ParameterVector::bias(std::size_t l) {
  const auto& s = shapes_.at(l);
  return {flat_.data() + offsets_[l] + s.rows * s.cols, s.rows};
}

bool operator==(const ParameterVector& a, const ParameterVector& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.flat_.data(), b.flat_.data(), static_cast<std::size_t>(a.flat_.size()) * sizeof(double)) == 0;
}

void ParameterVector::write(std::ostream& out) const {
  put_u64(out, shapes_.size());
  for (const auto& s : shapes_) {
    put_u64(out, static_cast<std::uint64_t>(s.rows));
    put_u64(out, static_cast<std::uint64_t>(s.cols));
  }
  for (Eigen::Index i = 0; i < flat_.size(); ++i) put_f64(out, flat_[i]);
}

ParameterVector ParameterVector::read(std::istream& in) {
  const auto n_layers = get_u64(in);
  if (n_layers == 0 || n_layers > 4096) throw Error("implausible layer count " + std::to_string(n_layers));
  std::vector<LayerShape> shapes;
  for (std::uint64_t l = 0; l < n_layers; ++l) {
    const auto rows = get_u64(in);
    const auto cols = get_u64(in);
    if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim) throw Error("implausible layer dimensions");
    shapes.push_back({static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)});
  }
  ParameterVector pv(std::move(shapes));
  for (Eigen::Index i = 0; i < pv.flat_.size(); ++i) pv.flat_[i] = get_f64(in);
  return pv;
}

void ParameterVector::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write(out);
  if (!out) throw Error("I/O failure while writing '" + path.string() + "'");
}

ParameterVector ParameterVector::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  auto pv = read(in);
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in '" + path.string() + "'");
  return pv;
}

void SparsityMask::apply(Vector& v) const {
  if (v.size() != bits_.size()) throw DimensionError("mask length differs from vector length");
  v = bits_.select(v.array(), 0.0).matrix();
}

void SparsityMask::write(std::ostream& out) const {
  put_u64(out, static_cast<std::uint64_t>(bits_.size()));
  for (Eigen::Index i = 0; i < bits_.size(); ++i) out.put(bits_[i] ? '\1' : '\0');
}

SparsityMask SparsityMask::read(std::istream& in) {
  const auto n = get_u64(in);
  if (n > kMaxDim) throw Error("implausible mask length");
  Bits bits(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < bits.size(); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw Error("truncated mask");
    bits[i] = c != 0;
  }
  return SparsityMask(std::move(bits));
}

ParameterVector init_model(Eigen::Index input_dim, const LayerSpec& layers, std::uint64_t seed) {
  ParameterVector pv(architecture(input_dim, layers));
  std::mt19937_64 gen(seed);
  for (std::size_t l = 0; l < pv.layer_count(); ++l) {
    const auto& s = pv.layers()[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = pv.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(gen);
  }
  return pv;
}

Matrix forward_batch(const ParameterVector& model, const Matrix& x) {
  if (x.rows() != model.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, model expects " +
                         std::to_string(model.input_dim()));
  }
  Matrix a = x;
  const auto n = model.layer_count();
  for (std::size_t l = 0; l < n; ++l) {
    Matrix z = model.weight(l) * a;
    z.colwise() += model.bias(l);
    if (l + 1 < n) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Vector forward(const ParameterVector& model, const Vector& x) {
  return forward_batch(model, x);
}

MaskedLoss masked_loss(const Vector& x, const Vector& x_hat, const SparsityMask::Bits& mask) {
  if (x.size() != x_hat.size() || x.size() != mask.size()) throw DimensionError("masked_loss length mismatch");
  MaskedLoss out;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    const double r = x[i] - x_hat[i];
    sum += r * r;
    ++out.observed;
  }
  out.value = out.observed ? sum / static_cast<double>(out.observed) : 0.0;
  return out;
}

namespace {

void check_prox(const ParameterVector& model, const ProximalTerm& prox) {
  if (prox.global_ref && !model.same_shape(*prox.global_ref)) {
    throw DimensionError("global reference model has a different shape");
  }
}

double prox_value(const ParameterVector& model, const ProximalTerm& prox) {
  if (!prox.global_ref || prox.mu == 0.0) return 0.0;
  return 0.5 * prox.factor * prox.mu * (model.flat() - prox.global_ref->flat()).squaredNorm();
}

void check_batch(const ParameterVector& model, const Matrix& x, const BoolMatrix& mask) {
  if (x.rows() != model.input_dim() || mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw DimensionError("batch shape does not match model input");
  }
}

}  // namespace

double objective(const ParameterVector& model, const Matrix& x, const BoolMatrix& mask, const ProximalTerm& prox) {
  check_batch(model, x, mask);
  check_prox(model, prox);
  double data = 0.0;
  if (x.cols() > 0) {
    const Matrix out = forward_batch(model, x);
    for (Eigen::Index q = 0; q < x.cols(); ++q) {
      data += masked_loss(x.col(q), out.col(q), mask.col(q)).value;
    }
    data /= static_cast<double>(x.cols());
  }
  return data + prox_value(model, prox);
}

GradientResult gradient(const ParameterVector& model, const Matrix& x, const BoolMatrix& mask,
                        const ProximalTerm& prox) {
  check_batch(model, x, mask);
  check_prox(model, prox);
  GradientResult res{model.zeros_like(), 0.0};
  const auto n_layers = model.layer_count();
  const auto batch = x.cols();

  if (batch > 0) {
    // Pre-activations z[l] and activations a[l] (a[0] is the input).
    std::vector<Matrix> z(n_layers);
    std::vector<Matrix> a(n_layers + 1);
    a[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
      z[l] = model.weight(l) * a[l];
      z[l].colwise() += model.bias(l);
      a[l + 1] = (l + 1 < n_layers) ? Matrix(z[l].cwiseMax(0.0)) : z[l];
    }

    const Matrix& out = a[n_layers];
    Matrix delta = Matrix::Zero(x.rows(), batch);
    double data = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index q = 0; q < batch; ++q) {
      const auto n_obs = mask.col(q).count();
      if (n_obs == 0) continue;
      const double scale = 1.0 / static_cast<double>(n_obs);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!mask(i, q)) continue;
        const double r = out(i, q) - x(i, q);
        sum += r * r;
        delta(i, q) = 2.0 * r * scale * inv_b;
      }
      data += sum * scale;
    }
    res.loss = data * inv_b;

    for (std::size_t l = n_layers; l-- > 0;) {
      res.grad.weight(l).noalias() = delta * a[l].transpose();
      res.grad.bias(l) = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = model.weight(l).transpose() * delta;
        delta = (z[l - 1].array() > 0.0).select(back, 0.0);
      }
    }
  }

  if (prox.global_ref && prox.mu != 0.0) {
    res.grad.flat() += prox.factor * prox.mu * (model.flat() - prox.global_ref->flat());
    res.loss += prox_value(model, prox);
  }
  return res;
}

TrainResult local_train(const ParameterVector& model, const WindowSet& train, const ParameterVector& global_ref,
                        const ProximalConfig& cfg, const SparsityMask* grad_mask, std::uint64_t seed) {
  if (cfg.epochs < 1) throw Error("epochs must be at least 1");
  if (cfg.batch_size < 1) throw Error("batch_size must be at least 1");
  if (!(cfg.learning_rate >= 0.0)) throw Error("learning_rate must be nonnegative");
  if (!(cfg.mu >= 0.0)) throw Error("mu must be nonnegative");
  if (train.count() == 0) throw Error("empty training set");
  if (!model.same_shape(global_ref)) throw DimensionError("model and global reference differ in shape");
  if (grad_mask && grad_mask->size() != model.size()) throw DimensionError("gradient mask length differs from model");
  if (train.length() != model.input_dim()) throw DimensionError("window length does not match model input");

  TrainResult res{model, 0.0};
  const ProximalTerm prox{&global_ref, cfg.mu, cfg.prox_factor};
  const auto q_count = train.count();
  const auto batch_size = std::min<Eigen::Index>(cfg.batch_size, q_count);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q_count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 gen(seed);

  Matrix xb(train.length(), batch_size);
  BoolMatrix mb(train.length(), batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_loss = 0.0;
    Eigen::Index n_batches = 0;
    for (Eigen::Index start = 0; start < q_count; start += batch_size) {
      const auto len = std::min(batch_size, q_count - start);
      if (xb.cols() != len) {
        xb.resize(Eigen::NoChange, len);
        mb.resize(Eigen::NoChange, len);
      }
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto src = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = train.windows.col(src);
        mb.col(j) = train.masks.col(src);
      }
      auto g = gradient(res.model, xb, mb, prox);
      if (grad_mask) grad_mask->apply(g.grad.flat());
      res.model.flat() -= cfg.learning_rate * g.grad.flat();
      epoch_loss += g.loss;
      ++n_batches;
    }
    res.last_epoch_loss = epoch_loss / static_cast<double>(n_batches);
  }
  return res;
}

TrainResult local_train(const ParameterVector& model, const ClientDataset& data, const ParameterVector& global_ref,
                        const ProximalConfig& cfg, const SparsityMask* grad_mask, std::uint64_t seed) {
  return local_train(model, data.segment(Split::train).windows, global_ref, cfg, grad_mask, seed);
}

}  // namespace fedcomp
