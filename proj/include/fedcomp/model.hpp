#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fedcomp/timeseries.hpp"

namespace fedcomp {

/// Hidden-layer widths of the autoencoder. Input and output width come from the data
/// (M_i * w); the list is used verbatim and need not be symmetric.
struct LayerSpec {
  std::vector<int> sizes;
};

/// One affine layer: `rows` outputs, `cols` inputs, `rows` biases.
struct LayerShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index param_count() const { return rows * cols + rows; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Affine layer shapes for input_dim -> sizes... -> input_dim.
std::vector<LayerShape> architecture(Eigen::Index input_dim, const LayerSpec& layers);

/// Flattened weights and biases of a dense autoencoder. Layer l occupies a contiguous
/// block: its weight matrix (column-major, rows x cols) followed by its bias.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<LayerShape> shapes);
  ParameterVector(std::vector<LayerShape> shapes, Vector flat);

  const Vector& flat() const { return flat_; }
  Vector& flat() { return flat_; }
  Eigen::Index size() const { return flat_.size(); }

  std::span<const LayerShape> layers() const { return shapes_; }
  std::size_t layer_count() const { return shapes_.size(); }
  Eigen::Index input_dim() const { return shapes_.empty() ? 0 : shapes_.front().cols; }

  Eigen::Map<const Matrix> weight(std::size_t l) const;
  Eigen::Map<Matrix> weight(std::size_t l);
  Eigen::Map<const Vector> bias(std::size_t l) const;
  Eigen::Map<Vector> bias(std::size_t l);

  /// Same layer shapes, all zeros.
  ParameterVector zeros_like() const { return ParameterVector(shapes_); }
  ParameterVector with_flat(Vector flat) const { return ParameterVector(shapes_, std::move(flat)); }
  bool same_shape(const ParameterVector& other) const { return shapes_ == other.shapes_; }

  /// Bit-exact comparison of shapes and values.
  friend bool operator==(const ParameterVector& a, const ParameterVector& b);

  /// Little-endian: u64 layer count, per layer u64 rows and u64 cols, then every
  /// coordinate as an IEEE-754 binary64.
  void write(std::ostream& out) const;
  static ParameterVector read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static ParameterVector load(const std::filesystem::path& path);

 private:
  std::vector<LayerShape> shapes_;
  std::vector<Eigen::Index> offsets_;
  Vector flat_;

  void build_offsets();
};

/// Trainable support of a ParameterVector (true = may change).
class SparsityMask {
 public:
  using Bits = Eigen::Array<bool, Eigen::Dynamic, 1>;

  SparsityMask() = default;
  explicit SparsityMask(Bits bits) : bits_(std::move(bits)) {}
  static SparsityMask all(Eigen::Index n, bool value) { return SparsityMask(Bits::Constant(n, value)); }

  const Bits& bits() const { return bits_; }
  Bits& bits() { return bits_; }
  Eigen::Index size() const { return bits_.size(); }
  Eigen::Index count() const { return bits_.count(); }
  bool operator[](Eigen::Index i) const { return bits_[i]; }

  /// Zeroes `v` wherever the mask is false.
  void apply(Vector& v) const;

  friend bool operator==(const SparsityMask& a, const SparsityMask& b) {
    return a.size() == b.size() && (a.bits_ == b.bits_).all();
  }

  void write(std::ostream& out) const;
  static SparsityMask read(std::istream& in);

 private:
  Bits bits_;
};

/// Client optimizer settings for the proximal local objective
///   mean masked loss + (prox_factor / 2) * mu * ||theta - theta_global||^2.
/// prox_factor = 2 is the exact derivative of mu * ||.||^2.
struct ProximalConfig {
  double mu = 0.01;
  int epochs = 1;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double prox_factor = 2.0;
};

Eigen::Index param_count(Eigen::Index input_dim, const LayerSpec& layers);

/// Glorot-uniform weights, zero biases.
ParameterVector init_model(Eigen::Index input_dim, const LayerSpec& layers, std::uint64_t seed);

/// Rectifier on hidden layers, linear output.
Vector forward(const ParameterVector& model, const Vector& x);
/// Column-wise forward pass over a batch (input_dim x B).
Matrix forward_batch(const ParameterVector& model, const Matrix& x);

struct MaskedLoss {
  double value = 0.0;
  Eigen::Index observed = 0;
  bool no_observed() const { return observed == 0; }
};

/// Mean squared error over observed positions; 0 (and no_observed()) when none are.
MaskedLoss masked_loss(const Vector& x, const Vector& x_hat, const SparsityMask::Bits& mask);

struct ProximalTerm {
  const ParameterVector* global_ref = nullptr;  ///< nullptr disables the term
  double mu = 0.0;
  double factor = 2.0;
};

/// Batch objective: mean over columns of masked_loss, plus the proximal term.
double objective(const ParameterVector& model, const Matrix& x, const BoolMatrix& mask, const ProximalTerm& prox);

struct GradientResult {
  ParameterVector grad;
  double loss = 0.0;  ///< objective value at `model`
};

/// Analytic gradient of `objective`. An empty batch (zero columns) contributes
/// nothing to the data term.
GradientResult gradient(const ParameterVector& model, const Matrix& x, const BoolMatrix& mask,
                        const ProximalTerm& prox);

struct TrainResult {
  ParameterVector model;
  double last_epoch_loss = 0.0;  ///< mean minibatch objective over the final epoch
};

/// Mini-batch SGD over the training windows. With a grad_mask, gradient entries at
/// false positions are zeroed before every update.
TrainResult local_train(const ParameterVector& model, const WindowSet& train, const ParameterVector& global_ref,
                        const ProximalConfig& cfg, const SparsityMask* grad_mask, std::uint64_t seed);
/// Trains on the client's training split.
TrainResult local_train(const ParameterVector& model, const ClientDataset& data, const ParameterVector& global_ref,
                        const ProximalConfig& cfg, const SparsityMask* grad_mask, std::uint64_t seed);

}  // namespace fedcomp
