#include "dmt/grad_suite.hpp"

#include "dmt/fusion.hpp"
#include "dmt/ops.hpp"
#include "dmt/rng.hpp"
#include "dmt/vit.hpp"

namespace dmt {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, double mean = 0.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.normal(mean, sd);
  return t;
}

Tensor random_image(std::size_t size, Rng& rng) {
  Tensor t({3, size, size});
  for (auto& x : t.data()) x = rng.uniform();
  return t;
}

// Pushes parameters off the near-zero init so attention, GELU and LN all
// operate in their curved regions.
void scramble(ParameterSet& params, Rng& rng, double sd) {
  for (auto& p : params.items()) {
    for (auto& x : p.value.data()) x += rng.normal(0.0, sd);
  }
}

std::vector<Parameter*> pointers(std::initializer_list<ParameterSet*> sets) {
  std::vector<Parameter*> out;
  for (auto* s : sets) {
    for (auto& p : s->items()) out.push_back(&p);
  }
  return out;
}

// Contracts a tensor-valued op with fixed random weights to get a scalar.
Var weigh(Tape& t, Var x, const Tensor& weights) { return ops::sum(t, ops::mul(t, x, t.constant_ref(weights))); }

ViTConfig tiny_student() {
  ViTConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.depth = 2;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.mlp_ratio = 4;
  return c;
}

ViTConfig tiny_teacher() {
  ViTConfig c = tiny_student();
  c.embed_dim = 16;
  return c;
}

}  // namespace

GradSuiteResult run_end_to_end_grad_check(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(mix_seed(seed));
  ViTEncoder student(tiny_student(), mix_seed(seed + 1));
  scramble(student.params(), rng, 0.3);
  Adapter adapter(8, 16, mix_seed(seed + 2));
  scramble(adapter.params(), rng, 0.3);
  const Tensor image = random_image(16, rng);

  std::vector<Tensor> teacher_tokens;
  for (std::uint64_t m = 0; m < 2; ++m) {
    ViTEncoder teacher(tiny_teacher(), mix_seed(seed + 10 + m));
    scramble(teacher.params(), rng, 0.3);
    teacher.freeze();
    teacher_tokens.push_back(teacher.encode(image).tokens);
  }
  const FusedTarget target = make_fused_target(teacher_tokens, 4, 4);

  auto build = [&](Tape& tape) {
    const Var tokens = student.forward(tape, image);
    return distill_loss(tape, adapter_project(tape, tokens, adapter), target, LossMode::kTfdSfd).total;
  };
  return {"end-to-end tfd+sfd (encoder + adapter)",
          run_grad_check(build, pointers({&student.params(), &adapter.params()}), options)};
}

std::vector<GradSuiteResult> run_gradient_suites(std::uint64_t seed) {
  const GradCheckOptions& options = kComponentGradCheck;
  std::vector<GradSuiteResult> out;
  Rng rng(mix_seed(seed ^ 0x7375697465ULL));

  {
    std::vector<Tensor> xs{random_tensor({5, 4}, rng), random_tensor({4, 3}, rng)};
    const Tensor w = random_tensor({5, 3}, rng);
    out.push_back({"matmul", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::matmul(t, v[0], v[1]), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({5, 4}, rng), random_tensor({3, 4}, rng)};
    const Tensor w = random_tensor({5, 3}, rng);
    out.push_back({"matmul_nt", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::matmul_nt(t, v[0], v[1]), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({5, 4}, rng), random_tensor({4, 3}, rng), random_tensor({3}, rng)};
    const Tensor w = random_tensor({5, 3}, rng);
    out.push_back({"linear", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::linear(t, v[0], v[1], v[2]), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({4, 6}, rng)};
    const Tensor w = random_tensor({4, 6}, rng);
    out.push_back({"gelu", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::gelu(t, v[0]), w);
                   }, xs, options)});
    out.push_back({"softmax_rows", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::softmax_rows(t, v[0]), w);
                   }, xs, options)});
    out.push_back({"log_softmax_rows", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::log_softmax_rows(t, v[0]), w);
                   }, xs, options)});
    out.push_back({"l2_normalize_rows", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::l2_normalize_rows(t, v[0]), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({4, 6}, rng), random_tensor({6}, rng, 0.5, 1.0), random_tensor({6}, rng)};
    const Tensor w = random_tensor({4, 6}, rng);
    out.push_back({"layer_norm_rows", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return weigh(t, ops::layer_norm_rows(t, v[0], v[1], v[2]), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({4, 6}, rng), random_tensor({2, 6}, rng)};
    const Tensor w = random_tensor({6, 4}, rng);
    out.push_back({"slice/concat/transpose/reshape", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     const Var a = ops::concat_rows(t, {ops::slice_rows(t, v[0], 1, 2), v[1]});
                     const Var b = ops::concat_cols(t, {ops::slice_cols(t, a, 0, 2), ops::slice_cols(t, a, 2, 4)});
                     return weigh(t, ops::reshape(t, ops::transpose(t, b), {6, 4}), w);
                   }, xs, options)});
  }
  {
    std::vector<Tensor> xs{random_tensor({4, 6}, rng)};
    const Tensor target = random_tensor({4, 6}, rng, 2.0);
    out.push_back({"kl_softmax_rows", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return ops::kl_softmax_rows(t, v[0], target);
                   }, xs, options)});
  }

  // Losses on raw (N+1) x D token matrices.
  {
    const Tensor fused = random_tensor({17, 16}, rng, 2.0);
    std::vector<Tensor> xs{random_tensor({17, 16}, rng)};
    out.push_back({"tfd", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return tfd_loss(t, v[0], fused);
                   }, xs, options)});
    const Tensor fused_channels = tokens_to_feature_map(fused, 4, 4).channel_matrix();
    out.push_back({"sfd", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return sfd_loss(t, tokens_to_channels(t, v[0]), fused_channels);
                   }, xs, options)});
    out.push_back({"mse", run_grad_check([&](Tape& t, const std::vector<Var>& v) {
                     return ops::add(t, mse_token_term(t, v[0], fused),
                                     mse_spatial_term(t, tokens_to_channels(t, v[0]), fused_channels));
                   }, xs, options)});
  }

  {
    ViTEncoder enc(tiny_student(), mix_seed(seed + 100));
    scramble(enc.params(), rng, 0.3);
    const Tensor image = random_image(16, rng);
    const Tensor w = random_tensor({17, 8}, rng);
    out.push_back({"vit encoder", run_grad_check([&](Tape& t) { return weigh(t, enc.forward(t, image), w); },
                                                 pointers({&enc.params()}), options)});
  }
  {
    Adapter adapter(8, 16, mix_seed(seed + 200));
    scramble(adapter.params(), rng, 0.3);
    const Tensor x = random_tensor({17, 8}, rng);
    const Tensor w = random_tensor({17, 16}, rng);
    out.push_back({"adapter", run_grad_check([&](Tape& t) {
                     return weigh(t, adapter_project(t, t.constant_ref(x), adapter), w);
                   }, pointers({&adapter.params()}), options)});
  }

  out.push_back(run_end_to_end_grad_check(seed));
  return out;
}

}  // namespace dmt
