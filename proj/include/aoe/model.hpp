#pragma once

// A small fully connected ReLU network with hand-written backpropagation and
// SGD with momentum, weight decay and a cosine learning-rate schedule.

#include <filesystem>
#include <string>
#include <vector>

#include "aoe/numkernel.hpp"

namespace aoe {

struct MlpParams {
  std::vector<std::size_t> dims;  // input, hidden..., output
  std::vector<Matrix> weights;    // layer l: dims[l+1] x dims[l]
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return dims.front(); }
  std::size_t output_dim() const noexcept { return dims.back(); }
  std::size_t num_parameters() const noexcept;

  // Zero-initialised parameters with the shapes implied by `dims`.
  static MlpParams zeros(std::vector<std::size_t> dims);
  // Throws InvalidArgument on any shape mismatch or non-finite entry.
  void validate() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Gradient arrays with exactly the shapes of an MlpParams. Reuses the same
// layout so that accumulation is elementwise.
struct GradientBundle {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static GradientBundle zeros_like(const MlpParams& params);
  GradientBundle& operator+=(const GradientBundle& other);
  bool all_finite() const noexcept;
};

struct OptimizerState {
  GradientBundle momentum_buffers;
  double lr_base = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epoch = 0;
  std::size_t total_epochs = 100;

  static OptimizerState for_params(const MlpParams& params, double lr_base, double momentum, double weight_decay,
                                   std::size_t total_epochs);
};

Matrix forward(const MlpParams& params, const Matrix& x);

// Reverse-mode gradient of mean_rows(<dL_dlogits_row, f(x_row)>) with respect
// to the parameters: per-row upstream gradients are averaged over the batch.
GradientBundle backward(const MlpParams& params, const Matrix& x, const Matrix& dL_dlogits);

// lr_base * (1 + cos(pi * epoch / total_epochs)) / 2 for 0 <= epoch < total_epochs.
double cosine_lr(const OptimizerState& state);

// buffer <- momentum * buffer + grad + weight_decay * param; param <- param - lr * buffer.
void sgd_step(MlpParams& params, OptimizerState& state, const GradientBundle& grads);

// Glorot-uniform weights, zero biases.
MlpParams init_params(std::vector<std::size_t> dims, SeededRng& rng);

// Checkpoint JSON: {"format":"aoe-mlp","version":1,"layer_dims":[...],
// "layers":[{"weights":[row-major], "biases":[...]}, ...]}.
std::string params_to_json(const MlpParams& params);
MlpParams params_from_json(const std::string& text);
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace aoe
