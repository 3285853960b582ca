#include "sdfssl/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace sdfssl {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  throw ConfigError("invalid activation enum value");
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("network needs at least input and output layers");
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("layer sizes must be >= 1");
  }
  if (activations.size() != static_cast<std::size_t>(num_layers()))
    throw ConfigError("need exactly one activation per affine layer");
}

NetworkSpec make_mlp_spec(std::vector<int> sizes, Activation hidden, Activation output,
                          std::uint64_t seed) {
  NetworkSpec spec;
  spec.layer_sizes = std::move(sizes);
  spec.seed = seed;
  const int n = spec.num_layers();
  spec.activations.assign(static_cast<std::size_t>(std::max(n, 0)), hidden);
  if (n > 0) spec.activations.back() = output;
  spec.validate();
  return spec;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = static_cast<std::size_t>(spec.layer_sizes[l]);
    const std::size_t out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
    total += in * out + out;
  }
  return total;
}

std::string ParamVector::scalar_name(std::size_t idx) const {
  for (const ParamBlock& b : blocks) {
    if (idx >= b.offset && idx < b.offset + b.len)
      return b.name + "[" + std::to_string(idx - b.offset) + "]";
  }
  return "param[" + std::to_string(idx) + "]";
}

ParamVector init_network(const NetworkSpec& spec) {
  spec.validate();
  ParamVector p;
  p.values.reserve(param_count(spec));
  Rng rng(derive_seed(spec.seed, {0x696e6974ULL}));  // "init"
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    ParamBlock w{"layer" + std::to_string(l) + ".weight", p.values.size(),
                 static_cast<std::size_t>(in) * out};
    for (std::size_t i = 0; i < w.len; ++i) p.values.push_back(rng.uniform(-bound, bound));
    p.blocks.push_back(std::move(w));
    ParamBlock b{"layer" + std::to_string(l) + ".bias", p.values.size(),
                 static_cast<std::size_t>(out)};
    p.values.insert(p.values.end(), b.len, 0.0);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

namespace {

double apply_act(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// derivative expressed through pre-activation z and activation value a
double act_deriv(Activation act, double z, double a) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - a * a;
    case Activation::sigmoid: return a * (1.0 - a);
  }
  return 1.0;
}

// Reusable per-row buffers; sized once per forward_backward call.
struct Workspace {
  std::vector<std::vector<double>> act;    // act[0] = input copy, act[l+1] = layer l output
  std::vector<std::vector<double>> pre;    // pre[l] = pre-activation of layer l
  std::vector<std::vector<double>> delta;  // delta[l] = dL/d pre[l]
  std::vector<std::vector<double>> dact;   // dact[l] = dL/d act[l]

  explicit Workspace(const NetworkSpec& spec) {
    const int n = spec.num_layers();
    act.resize(n + 1);
    dact.resize(n + 1);
    pre.resize(n);
    delta.resize(n);
    for (int l = 0; l <= n; ++l) {
      act[l].resize(spec.layer_sizes[l]);
      dact[l].resize(spec.layer_sizes[l]);
    }
    for (int l = 0; l < n; ++l) {
      pre[l].resize(spec.layer_sizes[l + 1]);
      delta[l].resize(spec.layer_sizes[l + 1]);
    }
  }
};

void forward_row(const ParamVector& params, const NetworkSpec& spec, const double* input,
                 Workspace& ws) {
  const int n = spec.num_layers();
  std::copy(input, input + spec.input_dim(), ws.act[0].begin());
  std::size_t off = 0;
  for (int l = 0; l < n; ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double* w = params.values.data() + off;
    const double* b = params.values.data() + off + static_cast<std::size_t>(in) * out;
    const double* x = ws.act[l].data();
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += wrow[i] * x[i];
      ws.pre[l][o] = acc;
      ws.act[l + 1][o] = apply_act(spec.activations[l], acc);
    }
    off += static_cast<std::size_t>(in) * out + out;
  }
}

// Backprop from dL/d(output) already stored in ws.delta.back() as dL/d act;
// accumulates parameter gradients into grad.
void backward_row(const ParamVector& params, const NetworkSpec& spec, Workspace& ws,
                  std::span<const double> dout, std::vector<double>& grad) {
  const int n = spec.num_layers();
  // output layer: dL/dpre = dL/dact * act'
  {
    const int out = spec.layer_sizes[n];
    for (int o = 0; o < out; ++o)
      ws.delta[n - 1][o] = dout[o] * act_deriv(spec.activations[n - 1], ws.pre[n - 1][o],
                                               ws.act[n][o]);
  }
  // walk layers backwards; compute dL/dact[l] on the fly
  std::size_t off_end = params.values.size();
  for (int l = n - 1; l >= 0; --l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const std::size_t wlen = static_cast<std::size_t>(in) * out;
    const std::size_t off = off_end - wlen - out;
    const double* w = params.values.data() + off;
    double* gw = grad.data() + off;
    double* gb = grad.data() + off + wlen;
    const double* x = ws.act[l].data();
    const double* d = ws.delta[l].data();

    std::vector<double>& dx = ws.dact[l];
    std::fill(dx.begin(), dx.end(), 0.0);
    for (int o = 0; o < out; ++o) {
      const double dv = d[o];
      gb[o] += dv;
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      double* gwrow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gwrow[i] += dv * x[i];
        dx[i] += wrow[i] * dv;
      }
    }
    if (l > 0) {
      for (int i = 0; i < in; ++i)
        ws.delta[l - 1][i] =
            dx[i] * act_deriv(spec.activations[l - 1], ws.pre[l - 1][i], ws.act[l][i]);
    }
    off_end = off;
  }
}

void check_batch(const NetworkSpec& spec, const Batch& batch, bool needs_targets) {
  if (batch.input_dim != static_cast<std::size_t>(spec.input_dim()))
    throw ShapeError("batch input_dim does not match network input size");
  if (batch.inputs.size() % batch.input_dim != 0)
    throw ShapeError("batch inputs are not a whole number of rows");
  if (batch.rows() == 0) throw PreconditionError("batch must be nonempty");
  const std::size_t want = batch.rows() * static_cast<std::size_t>(spec.output_dim());
  if (needs_targets && batch.targets.size() != want)
    throw ShapeError("batch targets size does not match rows * output_dim");
  if (!batch.row_weights.empty() && batch.row_weights.size() != batch.rows())
    throw ShapeError("row_weights size does not match rows");
}

}  // namespace

std::vector<double> forward(const ParamVector& params, const NetworkSpec& spec,
                            std::span<const double> input) {
  spec.validate();
  if (params.total_len() != param_count(spec))
    throw ShapeError("parameter vector does not match network spec");
  if (input.size() != static_cast<std::size_t>(spec.input_dim()))
    throw ShapeError("input length does not match network input size");
  Workspace ws(spec);
  forward_row(params, spec, input.data(), ws);
  return ws.act.back();
}

void forward_batch(const ParamVector& params, const NetworkSpec& spec,
                   std::span<const double> inputs, std::size_t rows, std::span<double> outputs) {
  const std::size_t in = static_cast<std::size_t>(spec.input_dim());
  const std::size_t out = static_cast<std::size_t>(spec.output_dim());
  if (inputs.size() != rows * in) throw ShapeError("inputs size does not match rows * input_dim");
  if (outputs.size() != rows * out) throw ShapeError("outputs size does not match rows * output_dim");
  Workspace ws(spec);
  for (std::size_t r = 0; r < rows; ++r) {
    forward_row(params, spec, inputs.data() + r * in, ws);
    std::copy(ws.act.back().begin(), ws.act.back().end(), outputs.begin() + r * out);
  }
}

LossGrad forward_backward(const ParamVector& params, const NetworkSpec& spec, const Batch& batch,
                          const LossSpec& loss) {
  spec.validate();
  if (params.total_len() != param_count(spec))
    throw ShapeError("parameter vector does not match network spec");
  const bool needs_targets = loss.kind == LossKind::l1 || loss.kind == LossKind::l2;
  check_batch(spec, batch, needs_targets);

  const std::size_t rows = batch.rows();
  const std::size_t in = batch.input_dim;
  const int out_dim = spec.output_dim();
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const double inv_out = 1.0 / static_cast<double>(out_dim);

  LossGrad result;
  result.grad.values.assign(params.total_len(), 0.0);
  Workspace ws(spec);
  std::vector<double> dout(static_cast<std::size_t>(out_dim));

  auto row_weight = [&](std::size_t r) {
    return batch.row_weights.empty() ? 1.0 : batch.row_weights[r];
  };

  if (loss.kind == LossKind::grad_penalty) {
    // mean over rows of (|ghat| - 1)^2 where ghat is the central-difference
    // gradient of the scalar output over the trailing point coordinates.
    if (out_dim != 1) throw ShapeError("grad_penalty requires a scalar output");
    const int pd = loss.point_dims;
    if (pd < 1 || static_cast<std::size_t>(pd) > in)
      throw ConfigError("grad_penalty point_dims out of range");
    const double h = loss.fd_step;
    std::vector<double> x(in);
    std::vector<double> ghat(static_cast<std::size_t>(pd));
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = batch.inputs.data() + r * in;
      std::copy(xr, xr + in, x.begin());
      const std::size_t base = in - static_cast<std::size_t>(pd);
      for (int c = 0; c < pd; ++c) {
        const double keep = x[base + c];
        x[base + c] = keep + h;
        forward_row(params, spec, x.data(), ws);
        const double fp = ws.act.back()[0];
        x[base + c] = keep - h;
        forward_row(params, spec, x.data(), ws);
        const double fm = ws.act.back()[0];
        x[base + c] = keep;
        ghat[c] = (fp - fm) / (2.0 * h);
      }
      double gnorm = 0.0;
      for (int c = 0; c < pd; ++c) gnorm += ghat[c] * ghat[c];
      gnorm = std::sqrt(gnorm);
      if (!std::isfinite(gnorm)) throw NumericError("non-finite stencil gradient", r);
      const double w = row_weight(r);
      result.loss += w * (gnorm - 1.0) * (gnorm - 1.0) * inv_rows;
      const double safe = std::max(gnorm, 1e-12);
      const double scale = w * 2.0 * (gnorm - 1.0) * inv_rows / safe;
      for (int c = 0; c < pd; ++c) {
        const double keep = x[base + c];
        for (int sgn : {+1, -1}) {
          x[base + c] = keep + sgn * h;
          forward_row(params, spec, x.data(), ws);
          dout[0] = scale * ghat[c] * sgn / (2.0 * h);
          backward_row(params, spec, ws, dout, result.grad.values);
          x[base + c] = keep;
        }
      }
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      forward_row(params, spec, batch.inputs.data() + r * in, ws);
      const std::vector<double>& out = ws.act.back();
      const double w = row_weight(r);
      for (int j = 0; j < out_dim; ++j) {
        const double o = out[static_cast<std::size_t>(j)];
        if (!std::isfinite(o)) throw NumericError("non-finite network output", r);
        switch (loss.kind) {
          case LossKind::squared_norm:
            result.loss += w * o * o;
            dout[static_cast<std::size_t>(j)] = w * 2.0 * o;
            break;
          case LossKind::l1: {
            const double t = batch.targets[r * out_dim + j];
            const double d = o - t;
            result.loss += w * std::abs(d) * inv_rows * inv_out;
            dout[static_cast<std::size_t>(j)] =
                w * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_rows * inv_out;
            break;
          }
          case LossKind::l2: {
            const double t = batch.targets[r * out_dim + j];
            const double d = o - t;
            result.loss += w * d * d * inv_rows * inv_out;
            dout[static_cast<std::size_t>(j)] = w * 2.0 * d * inv_rows * inv_out;
            break;
          }
          case LossKind::grad_penalty:
            break;  // handled above
        }
      }
      backward_row(params, spec, ws, dout, result.grad.values);
    }
  }

  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss", 0);
  for (double g : result.grad.values)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient", 0);
  return result;
}

ParamVector sgd_step(const ParamVector& params, const Gradient& grad, double lr) {
  if (grad.values.size() != params.total_len())
    throw ShapeError("gradient length does not match parameter vector");
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("learning rate must be finite and >= 0");
  ParamVector next = params;
  for (std::size_t i = 0; i < next.values.size(); ++i) {
    const double v = params.values[i] - lr * grad.values[i];
    if (!std::isfinite(v)) throw NumericError("non-finite parameter after sgd step", i);
    next.values[i] = v;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = "sdfssl-ckpt-v1";
  j["spec"]["layer_sizes"] = ckpt.spec.layer_sizes;
  std::vector<std::string> acts;
  acts.reserve(ckpt.spec.activations.size());
  for (Activation a : ckpt.spec.activations) acts.push_back(to_string(a));
  j["spec"]["activations"] = acts;
  j["spec"]["seed"] = ckpt.spec.seed;
  j["values"] = ckpt.params.values;
  j["meta"]["phase"] = ckpt.meta.phase;
  j["meta"]["epoch"] = ckpt.meta.epoch;
  j["meta"]["seed"] = ckpt.meta.seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "sdfssl-ckpt-v1")
    throw ConfigError("unrecognized checkpoint format in " + path);
  Checkpoint ckpt;
  ckpt.spec.layer_sizes = j["spec"]["layer_sizes"].get<std::vector<int>>();
  for (const auto& s : j["spec"]["activations"])
    ckpt.spec.activations.push_back(activation_from_string(s.get<std::string>()));
  ckpt.spec.seed = j["spec"]["seed"].get<std::uint64_t>();
  ckpt.spec.validate();
  ckpt.params = init_network(ckpt.spec);  // rebuild block naming/layout
  std::vector<double> values = j["values"].get<std::vector<double>>();
  if (values.size() != ckpt.params.total_len())
    throw ConfigError("checkpoint value count does not match its spec");
  ckpt.params.values = std::move(values);
  ckpt.meta.phase = j["meta"]["phase"].get<std::string>();
  ckpt.meta.epoch = j["meta"]["epoch"].get<int>();
  ckpt.meta.seed = j["meta"]["seed"].get<std::uint64_t>();
  return ckpt;
}

}  // namespace sdfssl
