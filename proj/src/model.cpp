#include "aoe/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "aoe/error.hpp"

namespace aoe {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

// out = x * W^T + b, row by row. x: N x in, W: out x in.
Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  const std::size_t n = x.rows(), in = x.cols(), out_dim = w.rows();
  Matrix out(n, out_dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto xr = x.row(r);
    auto orow = out.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const auto wr = w.row(o);
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      orow[o] = acc;
    }
  }
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

// Activations a_0 = x, a_{l+1} = act(W_l a_l + b_l); the last layer is linear.
std::vector<Matrix> forward_cached(const MlpParams& params, const Matrix& x) {
  std::vector<Matrix> acts;
  acts.reserve(params.num_layers() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix z = affine(acts.back(), params.weights[l], params.biases[l]);
    if (l + 1 < params.num_layers()) relu_inplace(z);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

std::size_t MlpParams::num_parameters() const noexcept {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

MlpParams MlpParams::zeros(std::vector<std::size_t> dims) {
  require(dims.size() >= 2, "MlpParams: need at least input and output dims");
  for (auto d : dims) require(d > 0, "MlpParams: zero-width layer");
  MlpParams p;
  p.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
    p.weights.emplace_back(p.dims[l + 1], p.dims[l]);
    p.biases.emplace_back(p.dims[l + 1], 0.0);
  }
  return p;
}

void MlpParams::validate() const {
  require(dims.size() >= 2, "MlpParams: need at least input and output dims");
  require(weights.size() == dims.size() - 1 && biases.size() == weights.size(), "MlpParams: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(weights[l].rows() == dims[l + 1] && weights[l].cols() == dims[l], "MlpParams: weight shape mismatch");
    require(biases[l].size() == dims[l + 1], "MlpParams: bias length mismatch");
    require(weights[l].all_finite(), "MlpParams: non-finite weight");
    for (double b : biases[l]) require(std::isfinite(b), "MlpParams: non-finite bias");
  }
}

GradientBundle GradientBundle::zeros_like(const MlpParams& params) {
  GradientBundle g;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    g.weights.emplace_back(params.weights[l].rows(), params.weights[l].cols());
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  require(weights.size() == other.weights.size(), "GradientBundle: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(weights[l].size() == other.weights[l].size() && biases[l].size() == other.biases[l].size(),
            "GradientBundle: shape mismatch");
    auto dst = weights[l].data();
    auto src = other.weights[l].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
  return *this;
}

bool GradientBundle::all_finite() const noexcept {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].all_finite()) return false;
    for (double b : biases[l]) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

OptimizerState OptimizerState::for_params(const MlpParams& params, double lr_base, double momentum,
                                          double weight_decay, std::size_t total_epochs) {
  require(lr_base >= 0.0, "OptimizerState: lr_base must be non-negative");
  require(momentum >= 0.0 && momentum < 1.0, "OptimizerState: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "OptimizerState: weight_decay must be non-negative");
  require(total_epochs >= 1, "OptimizerState: total_epochs must be >= 1");
  return OptimizerState{GradientBundle::zeros_like(params), lr_base, momentum, weight_decay, 0, total_epochs};
}

Matrix forward(const MlpParams& params, const Matrix& x) {
  require(x.cols() == params.input_dim(), "forward: input width does not match layer_dims[0]");
  return std::move(forward_cached(params, x).back());
}

GradientBundle backward(const MlpParams& params, const Matrix& x, const Matrix& dL_dlogits) {
  require(x.cols() == params.input_dim(), "backward: input width does not match layer_dims[0]");
  require(dL_dlogits.rows() == x.rows() && dL_dlogits.cols() == params.output_dim(),
          "backward: upstream gradient shape does not match logits");
  auto grads = GradientBundle::zeros_like(params);
  if (x.rows() == 0) return grads;

  const auto acts = forward_cached(params, x);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Matrix delta = dL_dlogits;  // gradient w.r.t. the pre-activation of layer l

  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const Matrix& a_in = acts[l];
    const Matrix& w = params.weights[l];
    auto& gw = grads.weights[l];
    auto& gb = grads.biases[l];
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const auto dr = delta.row(r);
      const auto ar = a_in.row(r);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = dr[o] * inv_n;
        if (d == 0.0) continue;
        gb[o] += d;
        auto gwr = gw.row(o);
        for (std::size_t i = 0; i < w.cols(); ++i) gwr[i] += d * ar[i];
      }
    }
    if (l == 0) break;

    // Propagate through W_l, then through the ReLU of layer l-1 (subgradient 0 at 0).
    Matrix next(delta.rows(), w.cols());
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const auto dr = delta.row(r);
      const auto ar = a_in.row(r);
      auto nr = next.row(r);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        if (dr[o] == 0.0) continue;
        const auto wr = w.row(o);
        for (std::size_t i = 0; i < w.cols(); ++i) nr[i] += dr[o] * wr[i];
      }
      for (std::size_t i = 0; i < w.cols(); ++i) {
        if (!(ar[i] > 0.0)) nr[i] = 0.0;
      }
    }
    delta = std::move(next);
  }
  return grads;
}

double cosine_lr(const OptimizerState& state) {
  if (state.total_epochs == 0 || state.epoch >= state.total_epochs) {
    throw InvalidArgument("cosine_lr: epoch " + std::to_string(state.epoch) + " outside [0, " +
                          std::to_string(state.total_epochs) + ")");
  }
  const double frac = static_cast<double>(state.epoch) / static_cast<double>(state.total_epochs);
  return state.lr_base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step(MlpParams& params, OptimizerState& state, const GradientBundle& grads) {
  require(grads.weights.size() == params.num_layers() && state.momentum_buffers.weights.size() == params.num_layers(),
          "sgd_step: layer count mismatch");
  const double lr = cosine_lr(state);
  auto update = [&](std::span<double> p, std::span<double> buf, std::span<const double> g) {
    require(p.size() == buf.size() && p.size() == g.size(), "sgd_step: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      buf[i] = state.momentum * buf[i] + g[i] + state.weight_decay * p[i];
      p[i] -= lr * buf[i];
    }
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l].data(), state.momentum_buffers.weights[l].data(), grads.weights[l].data());
    update(params.biases[l], state.momentum_buffers.biases[l], grads.biases[l]);
  }
}

MlpParams init_params(std::vector<std::size_t> dims, SeededRng& rng) {
  auto p = MlpParams::zeros(std::move(dims));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(p.dims[l] + p.dims[l + 1]));
    for (double& w : p.weights[l].data()) w = rng.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string params_to_json(const MlpParams& params) {
  params.validate();
  nlohmann::ordered_json j;
  j["format"] = "aoe-mlp";
  j["version"] = 1;
  j["layer_dims"] = params.dims;
  auto layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    nlohmann::ordered_json layer;
    const auto w = params.weights[l].data();
    layer["weights"] = std::vector<double>(w.begin(), w.end());
    layer["biases"] = params.biases[l];
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

MlpParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  try {
    if (j.at("format").get<std::string>() != "aoe-mlp" || j.at("version").get<int>() != 1) {
      throw SchemaError("checkpoint: unsupported format or version", 0);
    }
    auto p = MlpParams::zeros(j.at("layer_dims").get<std::vector<std::size_t>>());
    const auto& layers = j.at("layers");
    if (layers.size() != p.num_layers()) throw SchemaError("checkpoint: layer count does not match layer_dims", 0);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      auto w = layers[l].at("weights").get<std::vector<double>>();
      auto b = layers[l].at("biases").get<std::vector<double>>();
      if (w.size() != p.weights[l].size() || b.size() != p.biases[l].size()) {
        throw SchemaError("checkpoint: parameter array length mismatch in layer " + std::to_string(l), 0);
      }
      p.weights[l] = Matrix(p.dims[l + 1], p.dims[l], std::move(w));
      p.biases[l] = std::move(b);
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what(), 0);
  }
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("save_checkpoint: cannot open " + path.string());
  os << params_to_json(params);
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace aoe
