#include "bharnet/gradcheck_targets.hpp"

#include <cmath>

#include "bharnet/attention.hpp"
#include "bharnet/graph_layers.hpp"
#include "bharnet/models.hpp"

namespace bharnet {

namespace {

using ad::Var;

// ---- generic harnesses ----

// Pure tensor-to-scalar graph: leaves in a fixed order, no parameter store.
struct GraphProblem {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    std::function<Var(std::vector<Var>&)> build;
};

GradCheckReport check_graph(GraphProblem& problem, const GradCheckOptions& opts) {
    std::vector<std::pair<std::string, Tensor*>> views;
    for (size_t i = 0; i < problem.tensors.size(); ++i) views.emplace_back(problem.names[i], &problem.tensors[i]);
    const auto objective = [&]() {
        std::vector<Var> leaves;
        for (const Tensor& t : problem.tensors) leaves.push_back(ad::constant(t));
        return problem.build(leaves)->value[0];
    };
    const auto analytic = [&]() {
        std::vector<Var> leaves;
        for (const Tensor& t : problem.tensors) leaves.push_back(ad::leaf(t));
        Var root = problem.build(leaves);
        ad::backward(root);
        std::vector<Tensor> grads;
        for (const Var& leaf : leaves) {
            grads.push_back(leaf->grad.numel() == leaf->value.numel() ? leaf->grad
                                                                      : Tensor::zeros(leaf->value.shape()));
        }
        return grads;
    };
    return check_gradients(views, objective, analytic, opts);
}

// Module with a parameter store plus named input tensors; exercises the
// production GraphCtx leaf path. The store is external so whole models can
// expose their own parameters to the harness.
struct ModuleProblem {
    std::shared_ptr<ParamStore> owned = std::make_shared<ParamStore>();
    ParamStore* store = nullptr;  // defaults to `owned`
    std::vector<std::string> input_names;
    std::vector<Tensor> inputs;
    std::function<Var(GraphCtx&, std::vector<Var>&)> build;
    bool training = true;

    ParamStore& params() { return store ? *store : *owned; }
};

GradCheckReport check_module(ModuleProblem& problem, const GradCheckOptions& opts) {
    ParamStore& store = problem.params();
    std::vector<std::pair<std::string, Tensor*>> views;
    for (const std::string& name : store.names()) {
        Param& p = store.at(name);
        if (p.trainable) views.emplace_back(name, &p.value);
    }
    for (size_t i = 0; i < problem.inputs.size(); ++i) views.emplace_back(problem.input_names[i], &problem.inputs[i]);

    const auto objective = [&]() {
        GraphCtx ctx;
        ctx.store = &store;
        ctx.training = problem.training;
        std::vector<Var> leaves;
        for (const Tensor& t : problem.inputs) leaves.push_back(ad::constant(t));
        return problem.build(ctx, leaves)->value[0];
    };
    const auto analytic = [&]() {
        GraphCtx ctx;
        ctx.store = &store;
        ctx.training = problem.training;
        std::vector<Var> leaves;
        for (const Tensor& t : problem.inputs) leaves.push_back(ad::leaf(t));
        Var root = problem.build(ctx, leaves);
        store.zero_grads();
        ad::backward(root);
        ctx.write_back_grads();
        std::vector<Tensor> grads;
        for (const std::string& name : store.names()) {
            Param& p = store.at(name);
            if (p.trainable) grads.push_back(p.grad);
        }
        for (const Var& leaf : leaves) {
            grads.push_back(leaf->grad.numel() == leaf->value.numel() ? leaf->grad
                                                                      : Tensor::zeros(leaf->value.shape()));
        }
        return grads;
    };
    return check_gradients(views, objective, analytic, opts);
}

// Scalarizes a tensor output against a fixed random probe so every element
// contributes to the objective.
Var probe_sum(const Var& out, uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x70726f6265ULL));
    Tensor probe = Tensor::uniform(out->value.shape(), rng, -1.0, 1.0);
    Var weighted = ad::mul(out, ad::constant(std::move(probe)));
    std::vector<int> axes;
    for (int i = 0; i < out->value.rank(); ++i) axes.push_back(i);
    return ad::reduce_sum(weighted, axes, false);
}

GradCheckOptions options_with(double step = 1e-4) {
    GradCheckOptions opts;
    opts.step = step;
    return opts;
}

// A five-node path graph (no dummies) for tiny-layer checks.
GraphTopology path5_topology() {
    GraphTopology t;
    t.node_count = 5;
    t.parent = {0, 0, 1, 2, 3};
    t.dummy.assign(5, false);
    for (int v = 1; v < 5; ++v) t.edges.emplace_back(v, v - 1);
    t.validate();
    return t;
}

ModelConfig tiny_model_config(Variant variant) {
    ModelConfig config;
    config.variant = variant;
    config.num_classes = 3;
    config.frames = 4;
    config.backbone.channels = {3, 4, 4};
    config.backbone.strides = {1, 2};
    config.backbone.temporal_kernel = 3;
    config.backbone.partition = Partition::distance;
    config.proj_dim = 4;
    config.feature_count = 8;
    return config;
}

std::vector<int> tiny_labels(int n, int k, uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x6c61626cULL));
    std::vector<int> labels(static_cast<size_t>(n));
    for (int& l : labels) l = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
    return labels;
}

// ---- individual targets ----

GradCheckReport check_square(uint64_t) {
    GraphProblem p;
    p.names = {"x"};
    p.tensors = {Tensor::scalar(3.0).reshaped({1})};
    p.build = [](std::vector<Var>& leaves) { return ad::reduce_sum(ad::mul(leaves[0], leaves[0]), {0}, false); };
    return check_graph(p, options_with());
}

GradCheckReport check_relu(uint64_t seed) {
    Rng rng(seed);
    Tensor x({9});
    for (int64_t i = 0; i < 8; ++i) {
        const double magnitude = rng.uniform(0.2, 1.5);
        x[i] = (i % 2 == 0) ? magnitude : -magnitude;
    }
    x[8] = 0.0;  // deliberate kink probe
    GraphProblem p;
    p.names = {"x"};
    p.tensors = {std::move(x)};
    p.build = [seed](std::vector<Var>& leaves) { return probe_sum(ad::relu(leaves[0]), seed); };
    GradCheckOptions opts = options_with();
    const Tensor& probe = p.tensors[0];
    std::vector<int64_t> kinks;
    for (int64_t i = 0; i < probe.numel(); ++i) {
        if (std::fabs(probe[i]) <= 2.0 * opts.step) kinks.push_back(i);
    }
    opts.exclude = [kinks](size_t, int64_t i) {
        return std::find(kinks.begin(), kinks.end(), i) != kinks.end();
    };
    GradCheckReport report = check_graph(p, opts);
    for (int64_t i : kinks) {
        report.warnings.push_back("rectifier probed at 0 (index " + std::to_string(i) +
                                  "): kink excluded from the check");
    }
    return report;
}

GradCheckReport check_exp(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"x"};
    p.tensors = {Tensor::uniform({3, 4}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) { return probe_sum(ad::exp(leaves[0]), seed); };
    return check_graph(p, options_with());
}

GradCheckReport check_elementwise_mix(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"a", "b"};
    p.tensors = {Tensor::uniform({2, 5}, rng, -1.0, 1.0), Tensor::uniform({2, 5}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        Var mixed = ad::add(ad::mul(leaves[0], leaves[1]), ad::scale(ad::sub(leaves[0], leaves[1]), 0.75));
        return probe_sum(mixed, seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_softmax(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"x"};
    p.tensors = {Tensor::uniform({4, 5}, rng, -2.0, 2.0)};
    p.build = [seed](std::vector<Var>& leaves) { return probe_sum(ad::softmax_lastdim(leaves[0]), seed); };
    return check_graph(p, options_with());
}

GradCheckReport check_lastdim_broadcasts(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"a", "z", "bias"};
    p.tensors = {Tensor::uniform({3, 4}, rng, -1.0, 1.0), Tensor::uniform({3, 1}, rng, 0.5, 1.5),
                 Tensor::uniform({4}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        Var shifted = ad::sub_lastdim(leaves[0], leaves[1]);
        Var scaled = ad::div_lastdim(shifted, leaves[1]);
        return probe_sum(ad::add_rowvec(scaled, leaves[2]), seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_matmul(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"a", "b"};
    p.tensors = {Tensor::uniform({3, 4}, rng, -1.0, 1.0), Tensor::uniform({4, 5}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) { return probe_sum(ad::matmul(leaves[0], leaves[1]), seed); };
    return check_graph(p, options_with());
}

GradCheckReport check_bmm_family(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"a", "b", "c", "d", "e", "f"};
    p.tensors = {Tensor::uniform({2, 3, 4}, rng, -1.0, 1.0), Tensor::uniform({2, 4, 5}, rng, -1.0, 1.0),
                 Tensor::uniform({2, 3, 4}, rng, -1.0, 1.0), Tensor::uniform({2, 5, 4}, rng, -1.0, 1.0),
                 Tensor::uniform({2, 4, 3}, rng, -1.0, 1.0), Tensor::uniform({2, 4, 5}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        Var nn = probe_sum(ad::bmm(leaves[0], leaves[1]), seed);
        Var nt = probe_sum(ad::bmm_nt(leaves[2], leaves[3]), Rng::mix(seed, 1));
        Var tn = probe_sum(ad::bmm_tn(leaves[4], leaves[5]), Rng::mix(seed, 2));
        return ad::add(nn, ad::add(nt, tn));
    };
    return check_graph(p, options_with());
}

GradCheckReport check_reductions(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"x"};
    p.tensors = {Tensor::uniform({2, 3, 4}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        Var sums = probe_sum(ad::reduce_sum(leaves[0], {1}, true), seed);
        Var means = probe_sum(ad::reduce_mean(leaves[0], {0, 2}, false), Rng::mix(seed, 1));
        Var moved = probe_sum(ad::reshape(ad::permute(leaves[0], {2, 0, 1}), {4, 6}), Rng::mix(seed, 2));
        return ad::add(sums, ad::add(means, moved));
    };
    return check_graph(p, options_with());
}

GradCheckReport check_cross_entropy(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"logits"};
    p.tensors = {Tensor::uniform({4, 3}, rng, -2.0, 2.0)};
    const std::vector<int> labels = tiny_labels(4, 3, seed);
    p.build = [labels](std::vector<Var>& leaves) { return ad::cross_entropy_mean(leaves[0], labels); };
    return check_graph(p, options_with());
}

GradCheckReport check_spatial_conv(uint64_t seed) {
    Rng rng(seed);
    const AdjacencyStack adj = normalize_adjacency(path5_topology(), Partition::distance);
    GraphProblem p;
    p.names = {"x", "W"};
    p.tensors = {Tensor::uniform({2, 3, 4, 2, 5}, rng, -1.0, 1.0), Tensor::uniform({3, 3, 4}, rng, -0.5, 0.5)};
    p.build = [adj, seed](std::vector<Var>& leaves) {
        return probe_sum(spatial_graph_conv(leaves[0], adj, leaves[1]), seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_temporal_conv(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"x", "k"};
    p.tensors = {Tensor::uniform({2, 3, 5, 2, 4}, rng, -1.0, 1.0), Tensor::uniform({3, 3, 3}, rng, -0.5, 0.5)};
    p.build = [seed](std::vector<Var>& leaves) {
        Var unit = probe_sum(temporal_conv(leaves[0], leaves[1], 1), seed);
        Var strided = probe_sum(temporal_conv(leaves[0], leaves[1], 2), Rng::mix(seed, 1));
        return ad::add(unit, strided);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_batch_norm(uint64_t seed, bool training) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"x", "gamma", "beta"};
    p.tensors = {Tensor::uniform({2, 3, 3, 2, 2}, rng, -1.0, 1.0), Tensor::uniform({3}, rng, 0.5, 1.5),
                 Tensor::uniform({3}, rng, -0.5, 0.5)};
    // Shared running statistics; in training mode they are written but the
    // output depends only on batch statistics, so the objective stays pure.
    auto running_mean = std::make_shared<Tensor>(Tensor::zeros({3}));
    auto running_var = std::make_shared<Tensor>(Tensor::full({3}, 1.0));
    p.build = [seed, training, running_mean, running_var](std::vector<Var>& leaves) {
        Var normalized =
            batch_norm(leaves[0], leaves[1], leaves[2], *running_mean, *running_var, training);
        return probe_sum(normalized, seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_softmax_attention(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"q", "k", "v"};
    p.tensors = {Tensor::uniform({2, 4, 3}, rng, -1.0, 1.0), Tensor::uniform({2, 5, 3}, rng, -1.0, 1.0),
                 Tensor::uniform({2, 5, 4}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        return probe_sum(softmax_attention_batched(leaves[0], leaves[1], leaves[2]), seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_fast_attention(uint64_t seed) {
    Rng rng(seed);
    const Tensor features = draw_random_features(3, 16, seed);
    GraphProblem p;
    p.names = {"q", "k", "v"};
    p.tensors = {Tensor::uniform({2, 4, 3}, rng, -1.0, 1.0), Tensor::uniform({2, 5, 3}, rng, -1.0, 1.0),
                 Tensor::uniform({2, 5, 4}, rng, -1.0, 1.0)};
    p.build = [seed, features](std::vector<Var>& leaves) {
        return probe_sum(fast_attention_batched(leaves[0], leaves[1], leaves[2], features), seed);
    };
    return check_graph(p, options_with());
}

GradCheckReport check_cross_attend(uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x78615f70ULL));
    ModuleProblem p;
    init_cross_attention_params(p.params(), "xattn.", 4, 4, 8, AttentionKind::fast, rng);
    p.input_names = {"body_tokens", "hand_tokens"};
    p.inputs = {Tensor::uniform({2, 3, 4}, rng, -1.0, 1.0), Tensor::uniform({2, 5, 4}, rng, -1.0, 1.0)};
    p.build = [seed](GraphCtx& ctx, std::vector<Var>& leaves) {
        CrossAttended attended = cross_attend(ctx, "xattn.", leaves[0], leaves[1], AttentionKind::fast);
        return ad::add(probe_sum(attended.body, seed), probe_sum(attended.hand, Rng::mix(seed, 1)));
    };
    return check_module(p, options_with());
}

GradCheckReport check_pooled_axis_views(uint64_t seed) {
    Rng rng(seed);
    GraphProblem p;
    p.names = {"f"};
    p.tensors = {Tensor::uniform({2, 3, 4, 2, 5}, rng, -1.0, 1.0)};
    p.build = [seed](std::vector<Var>& leaves) {
        AxisViews views = pooled_axis_views(leaves[0]);
        return ad::add(probe_sum(views.time, seed),
                       ad::add(probe_sum(views.node, Rng::mix(seed, 1)), probe_sum(views.instance, Rng::mix(seed, 2))));
    };
    return check_graph(p, options_with());
}

GradCheckReport check_pam(uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x70616dULL));
    ModuleProblem p;
    init_pam_params(p.params(), "pam.", 4, 4, 8, rng);
    init_linear_params(p.params(), "body.head.", 4, 3, rng);
    init_linear_params(p.params(), "hand.head.", 4, 3, rng);
    p.input_names = {"f_body", "f_hand"};
    p.inputs = {Tensor::uniform({2, 4, 3, 2, 5}, rng, -1.0, 1.0), Tensor::uniform({2, 4, 3, 2, 5}, rng, -1.0, 1.0)};
    const std::vector<int> labels = tiny_labels(2, 3, seed);
    p.build = [labels](GraphCtx& ctx, std::vector<Var>& leaves) {
        PamOutputs out = pam_forward(ctx, "pam.", "body.head.", "hand.head.", leaves[0], leaves[1]);
        return dual_stream_loss(out.body_logits, out.hand_logits, labels, LossWeights{1.0, 0.7, 1.3});
    };
    return check_module(p, options_with());
}

GradCheckReport check_backbone(uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x6262ULL));
    const BackboneConfig config{{3, 4, 4}, {1, 2}, 3, Partition::distance};
    const AdjacencyStack adj = normalize_adjacency(path5_topology(), config.partition);
    ModuleProblem p;
    {
        Rng init_rng(Rng::mix(seed, 0x696e6974ULL));
        init_backbone_params(p.params(), "body.", config, init_rng);
    }
    p.input_names = {"x"};
    p.inputs = {Tensor::uniform({2, 3, 4, 2, 5}, rng, -1.0, 1.0)};
    p.build = [config, adj, seed](GraphCtx& ctx, std::vector<Var>& leaves) {
        return probe_sum(backbone_forward(ctx, "body.", config, adj, leaves[0]), seed);
    };
    return check_module(p, options_with());
}

GradCheckReport check_variant(Variant variant, uint64_t seed) {
    const ModelConfig config = tiny_model_config(variant);
    auto model = std::make_shared<BharnetModel>(config, path5_topology(), path5_topology(),
                                                Rng::mix(seed, 0x76617269ULL));
    Rng rng(Rng::mix(seed, 0x696e70ULL));
    const std::vector<int> labels = tiny_labels(2, config.num_classes, seed);

    ModuleProblem p;
    p.store = &model->params();  // perturb the model's own parameters
    p.input_names = {"x_body", "x_hand"};
    p.inputs = {Tensor::uniform({2, 3, config.frames, 2, 5}, rng, -1.0, 1.0),
                Tensor::uniform({2, 3, config.frames, 2, 5}, rng, -1.0, 1.0)};
    p.build = [model, labels](GraphCtx& ctx, std::vector<Var>& leaves) {
        ModelOutputs out = model->forward(ctx, leaves[0], leaves[1]);
        return model->loss(out, labels, LossWeights{1.0, 0.7, 1.3});
    };
    return check_module(p, options_with());
}

}  // namespace

const std::vector<GradCheckTarget>& gradcheck_targets() {
    static const std::vector<GradCheckTarget> targets = [] {
        std::vector<GradCheckTarget> t;
        t.push_back({"square", 1e-8, check_square});
        t.push_back({"relu", 1e-6, check_relu});
        t.push_back({"exp", 1e-6, check_exp});
        t.push_back({"elementwise", 1e-6, check_elementwise_mix});
        t.push_back({"softmax", 1e-6, check_softmax});
        t.push_back({"lastdim_broadcasts", 1e-6, check_lastdim_broadcasts});
        t.push_back({"matmul", 1e-6, check_matmul});
        t.push_back({"bmm", 1e-6, check_bmm_family});
        t.push_back({"reductions", 1e-6, check_reductions});
        t.push_back({"cross_entropy", 1e-6, check_cross_entropy});
        t.push_back({"spatial_graph_conv", 1e-4, check_spatial_conv});
        t.push_back({"temporal_conv", 1e-4, check_temporal_conv});
        t.push_back({"batch_norm", 1e-4, [](uint64_t s) { return check_batch_norm(s, true); }});
        t.push_back({"batch_norm_eval", 1e-4, [](uint64_t s) { return check_batch_norm(s, false); }});
        t.push_back({"softmax_attention", 1e-4, check_softmax_attention});
        t.push_back({"fast_attention", 1e-4, check_fast_attention});
        t.push_back({"cross_attend", 1e-4, check_cross_attend});
        t.push_back({"pooled_axis_views", 1e-6, check_pooled_axis_views});
        t.push_back({"pam", 1e-4, check_pam});
        t.push_back({"backbone", 1e-4, check_backbone});
        t.push_back({"variant:score_fusion", 1e-4, [](uint64_t s) { return check_variant(Variant::score_fusion, s); }});
        t.push_back(
            {"variant:standard_xattn", 1e-4, [](uint64_t s) { return check_variant(Variant::standard_xattn, s); }});
        t.push_back({"variant:fast_xattn", 1e-4, [](uint64_t s) { return check_variant(Variant::fast_xattn, s); }});
        t.push_back({"variant:pam", 1e-4, [](uint64_t s) { return check_variant(Variant::pam, s); }});
        t.push_back({"variant:expertized", 1e-4, [](uint64_t s) { return check_variant(Variant::expertized, s); }});
        return t;
    }();
    return targets;
}

const GradCheckTarget* find_gradcheck_target(const std::string& name) {
    for (const GradCheckTarget& target : gradcheck_targets()) {
        if (target.name == name) return &target;
    }
    return nullptr;
}

std::vector<GradCheckRun> run_gradchecks(const std::string& target, uint64_t seed, double tolerance_override) {
    std::vector<GradCheckRun> runs;
    if (target == "all") {
        for (const GradCheckTarget& t : gradcheck_targets()) {
            GradCheckRun run;
            run.name = t.name;
            run.tolerance = tolerance_override > 0.0 ? tolerance_override : t.tolerance;
            run.report = t.run(seed);
            run.passed = run.report.pass(run.tolerance);
            runs.push_back(std::move(run));
        }
        return runs;
    }
    const GradCheckTarget* t = find_gradcheck_target(target);
    if (!t) throw ValidationError("gradcheck: unknown target '" + target + "'");
    GradCheckRun run;
    run.name = t->name;
    run.tolerance = tolerance_override > 0.0 ? tolerance_override : t->tolerance;
    run.report = t->run(seed);
    run.passed = run.report.pass(run.tolerance);
    runs.push_back(std::move(run));
    return runs;
}

}  // namespace bharnet
