// SPDX-License-Identifier: Apache-2.0

#include "mvl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/layers.hpp"
#include "mvl/model.hpp"
#include "mvl/rng.hpp"

namespace mvl {

namespace {

using Fn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

struct Comparison {
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Analytic and central-difference gradients per input. With max_coords > 0
// only that many (seeded) coordinates of each input are probed.
std::vector<Comparison> compare(const Fn& f, std::vector<Tensor<double>>& inputs, double step,
                                std::size_t max_coords, std::uint64_t seed) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw Error(ErrorKind::kContract, "gradcheck inputs must require grad");
    x.zero_grad();
  }
  backward(f(inputs));

  std::vector<Comparison> out(inputs.size());
  NoGradGuard no_grad;
  Rng rng(seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& x = inputs[i];
    std::vector<std::size_t> coords(x.numel());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (max_coords > 0 && coords.size() > max_coords) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto values = x.mutable_data();
    for (std::size_t k : coords) {
      const double saved = values[k];
      values[k] = saved + step;
      const double up = f(inputs).item();
      values[k] = saved - step;
      const double down = f(inputs).item();
      values[k] = saved;
      out[i].numeric.push_back((up - down) / (2.0 * step));
      out[i].analytic.push_back(x.grad()[k]);
    }
  }
  return out;
}

double error_of(std::span<const Comparison> parts) {
  std::vector<double> a;
  std::vector<double> n;
  for (const auto& p : parts) {
    a.insert(a.end(), p.analytic.begin(), p.analytic.end());
    n.insert(n.end(), p.numeric.begin(), p.numeric.end());
  }
  return gradcheck_error(a, n);
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

// Reduces any output to a scalar through fixed random weights so every
// output element contributes a distinct amount.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.normal();
  return sum(multiply(y, Tensor<double>::from(y.shape(), std::move(w))));
}

// GELU whose backward drops the x * pdf(x) term: the negative control.
Tensor<double> broken_gelu(const Tensor<double>& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return Tensor<double>::make_result(x.shape(), std::move(out), "broken_gelu", {x}, [](Node<double>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& in = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * 0.5 * (1.0 + std::erf(in[i] / std::numbers::sqrt2));
    }
  });
}

struct KernelCase {
  std::string name;
  std::function<std::vector<Tensor<double>>(Rng&)> make_inputs;
  Fn f;
};

std::vector<KernelCase> kernel_cases() {
  std::vector<KernelCase> cases;
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& rng) { return std::vector{random_tensor(a, rng), random_tensor(b, rng)}; };
  };
  auto one = [](Shape a) { return [a](Rng& rng) { return std::vector{random_tensor(a, rng)}; }; };

  cases.push_back({"add", two({3, 4}, {3, 4}), [](auto in) { return project(add(in[0], in[1]), 1); }});
  cases.push_back({"add_broadcast", two({3, 4}, {4}), [](auto in) { return project(add(in[0], in[1]), 2); }});
  cases.push_back({"multiply", two({3, 4}, {3, 4}), [](auto in) { return project(multiply(in[0], in[1]), 3); }});
  cases.push_back({"scale", one({3, 4}), [](auto in) { return project(scale(in[0], -1.7), 4); }});
  cases.push_back({"matmul", two({3, 5}, {5, 4}), [](auto in) { return project(matmul(in[0], in[1]), 5); }});
  cases.push_back({"transpose", one({3, 5}), [](auto in) { return project(transpose(in[0]), 6); }});
  cases.push_back({"concat_rows", two({2, 4}, {3, 4}), [](auto in) {
                     return project(concat_rows<double>(std::vector{in[0], in[1]}), 7);
                   }});
  cases.push_back({"concat_cols", two({3, 2}, {3, 4}), [](auto in) {
                     return project(concat_cols<double>(std::vector{in[0], in[1]}), 8);
                   }});
  cases.push_back({"slice_rows", one({5, 3}), [](auto in) { return project(slice_rows(in[0], 1, 4), 9); }});
  cases.push_back({"slice_cols", one({3, 6}), [](auto in) { return project(slice_cols(in[0], 2, 5), 10); }});
  cases.push_back({"embedding", one({7, 4}), [](auto in) {
                     const std::vector<TokenId> ids = {3, 0, 3, 6, 1};
                     return project(embedding(in[0], std::span<const TokenId>(ids)), 11);
                   }});
  cases.push_back({"layernorm",
                   [](Rng& rng) {
                     return std::vector{random_tensor({4, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)};
                   },
                   [](auto in) { return project(layernorm(in[0], in[1], in[2]), 12); }});
  cases.push_back({"gelu", one({4, 5}), [](auto in) { return project(gelu(in[0]), 13); }});
  cases.push_back({"softmax_rows", one({4, 5}), [](auto in) { return project(softmax_rows(in[0], false), 14); }});
  cases.push_back({"softmax_rows_causal", one({5, 5}), [](auto in) { return project(softmax_rows(in[0], true), 15); }});
  cases.push_back({"cross_entropy_masked", one({5, 7}), [](auto in) {
                     const std::vector<TokenId> targets = {1, 6, 0, 3, 3};
                     const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0};
                     return cross_entropy_masked(in[0], std::span<const TokenId>(targets),
                                                 std::span<const std::uint8_t>(mask));
                   }});
  cases.push_back({"sum", one({3, 4}), [](auto in) { return sum(multiply(in[0], in[0])); }});
  cases.push_back({"mean", one({3, 4}), [](auto in) { return mean(multiply(in[0], in[0])); }});
  cases.push_back({"attention_causal", one({5, 12}), [](auto in) {
                     return project(multi_head_attention(in[0], 2, true), 16);
                   }});
  return cases;
}

std::vector<KernelCase> bug_cases() {
  return {{"gelu", [](Rng& rng) { return std::vector{random_tensor({4, 5}, rng)}; },
           [](auto in) { return project(broken_gelu(in[0]), 13); }}};
}

ModelConfig end_to_end_config(std::uint64_t seed) {
  ModelConfig c;
  c.encoder.variant_name = "gradcheck";
  c.encoder.image_size = 16;
  c.encoder.patch_size = 8;
  c.encoder.d_vision = 8;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.mlp_ratio = 2;
  c.projector = ProjectorVariant::kMlp2;
  c.lm.d_model = 8;
  c.lm.n_layers = 1;
  c.lm.n_heads = 2;
  c.lm.mlp_ratio = 2;
  c.lm.context_length = 128;
  c.seed = seed;
  return c;
}

}  // namespace

double gradcheck_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw Error(ErrorKind::kContract, "gradcheck vectors differ in length");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / std::max(scale, 1e-8);
}

double check_gradient(const Fn& f, std::vector<Tensor<double>> inputs, double step) {
  return error_of(compare(f, inputs, step, 0, 0));
}

std::vector<std::string> gradcheck_kernel_names() {
  std::vector<std::string> names;
  for (const auto& c : kernel_cases()) names.push_back(c.name);
  return names;
}

std::vector<std::string> injectable_bugs() {
  std::vector<std::string> names;
  for (const auto& c : bug_cases()) names.push_back(c.name);
  return names;
}

std::vector<GradcheckResult> run_gradcheck(const GradcheckConfig& config) {
  if (!(config.step > 0.0)) throw Error(ErrorKind::kConfig, "finite-difference step must be positive");
  std::vector<GradcheckResult> results;
  Rng rng(config.seed);
  for (const auto& c : kernel_cases()) {
    auto inputs = c.make_inputs(rng);
    const double err = error_of(compare(c.f, inputs, config.step, 0, 0));
    results.push_back({c.name, err, config.kernel_threshold, err < config.kernel_threshold});
  }

  if (!config.inject_bug.empty()) {
    const auto bugs = bug_cases();
    const auto it = std::find_if(bugs.begin(), bugs.end(), [&](const auto& c) { return c.name == config.inject_bug; });
    if (it == bugs.end()) {
      throw Error(ErrorKind::kConfig, fmt::format("no injectable bug named '{}'", config.inject_bug));
    }
    auto inputs = it->make_inputs(rng);
    const double err = error_of(compare(it->f, inputs, config.step, 0, 0));
    results.push_back({it->name + "[injected-bug]", err, config.kernel_threshold, err < config.kernel_threshold});
  }

  // End to end: every parameter of a tiny model, loss over a one-image dialog.
  auto model = MultimodalModel<double>::init(end_to_end_config(config.seed));
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kProjector, ParamGroup::kLm}) model.set_requires_grad(g, true);
  const auto items = synth_corpus(1, config.seed, "gradcheck");
  const auto dialog =
      caption_to_single_turn("gradcheck", ImageRef::from_spec(items[0].spec), items[0].caption, "en");
  PreparedSample sample;
  sample.id = dialog.id;
  sample.rendered = render_conversation(dialog, true);
  sample.image = std::make_shared<const ImageInput>(
      preprocess(render_procedural(items[0].spec), model.config().encoder.image_size));
  const std::vector<PreparedSample> batch = {sample};
  const Fn f = [&](std::span<const Tensor<double>>) {
    return compute_loss<double>(model, batch);
  };

  std::map<ParamGroup, std::pair<std::size_t, std::size_t>> ranges;
  std::vector<Tensor<double>> inputs;
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kProjector, ParamGroup::kLm}) {
    const std::size_t begin = inputs.size();
    for (auto& p : model.parameters(g)) inputs.push_back(p.tensor);
    ranges[g] = {begin, inputs.size()};
  }
  const auto parts = compare(f, inputs, config.step, config.max_coordinates, config.seed);
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kProjector, ParamGroup::kLm}) {
    const auto [begin, end] = ranges[g];
    const double err = error_of(std::span<const Comparison>(parts).subspan(begin, end - begin));
    results.push_back({fmt::format("end_to_end.{}", to_string(g)), err, config.end_to_end_threshold,
                       err < config.end_to_end_threshold});
  }
  return results;
}

}  // namespace mvl
