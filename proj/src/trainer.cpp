#include "bharnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace bharnet {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
    if (epochs < 0 || pretrain_epochs < 0) throw ConfigError("run config: epoch counts must be nonnegative");
    if (batch_size < 1) throw ConfigError("run config: batch size must be positive");
    if (!(lr > 0.0)) throw ConfigError("run config: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("run config: momentum must be in [0, 1)");
    weights.validate();
    if (streams.empty()) throw ConfigError("run config: at least one stream required");
    for (const std::string& s : streams) {
        if (s != "joint" && s != "bone") throw ConfigError("run config: unknown stream '" + s + "'");
    }
    if (data.use_synth) data.synth.validate();
}

std::pair<Dataset, Dataset> prepare_datasets(const DataConfig& data) {
    if (data.use_synth) {
        return {synth_generate(data.synth, data.synth_seed, SynthRole::train),
                synth_generate(data.synth, data.synth_seed, SynthRole::test)};
    }
    Dataset train = load_dataset(data.train_path);
    Dataset test = load_dataset(data.test_path);
    if (train.num_classes != test.num_classes) {
        throw ValidationError("train/test datasets disagree on num_classes");
    }
    return {std::move(train), std::move(test)};
}

Tensor ensemble_streams(const std::vector<Tensor>& logits) { return fuse_logits_avg(logits); }

namespace {

struct StreamData {
    Tensor x_body;  // [N, 3, T, 2, 25]
    Tensor x_hand;
    std::vector<int> labels;
    int64_t count() const { return x_body.dim(0); }
};

StreamData make_stream_data(const Dataset& dataset, const std::string& modality, int64_t frames) {
    const GraphTopology body_topology = build_topology(TopologyKind::body25);
    const GraphTopology hand_topology = build_topology(TopologyKind::hand21_padded25);
    const bool bone = modality == "bone";
    StreamBatch body = to_stream_tensor(dataset, bone ? StreamKind::body_bone : StreamKind::body_joint, frames,
                                        body_topology);
    StreamBatch hand = to_stream_tensor(dataset, bone ? StreamKind::hand_bone : StreamKind::hand_joint, frames,
                                        hand_topology);
    StreamData out;
    out.x_body = std::move(body.stream.data);
    out.x_hand = std::move(hand.stream.data);
    out.labels = std::move(body.labels);
    return out;
}

// Gathers whole-sample slabs along axis 0.
Tensor gather_samples(const Tensor& x, const std::vector<int>& order, int64_t from, int64_t to) {
    const int64_t slab = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = to - from;
    Tensor out(shape);
    for (int64_t i = from; i < to; ++i) {
        const int64_t src = order[static_cast<size_t>(i)];
        std::copy(x.data() + src * slab, x.data() + (src + 1) * slab, out.data() + (i - from) * slab);
    }
    return out;
}

Tensor slice_samples(const Tensor& x, int64_t from, int64_t to) {
    const int64_t slab = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = to - from;
    Tensor out(shape);
    std::copy(x.data() + from * slab, x.data() + to * slab, out.data());
    return out;
}

void sgd_step(ParamStore& store, double lr, double momentum) {
    for (const std::string& name : store.names()) {
        Param& p = store.at(name);
        if (!p.trainable) continue;
        if (p.velocity.numel() != p.value.numel()) p.velocity = Tensor::zeros(p.value.shape());
        double* v = p.velocity.data();
        double* w = p.value.data();
        const double* g = p.grad.data();
        const int64_t n = p.value.numel();
        for (int64_t i = 0; i < n; ++i) {
            v[i] = momentum * v[i] + g[i];
            w[i] -= lr * v[i];
        }
    }
}

// Per-variant logits of one evaluation pass.
struct EvalLogits {
    Tensor body;
    Tensor hand;
    Tensor fused;
    Tensor expert_only;  // expertized variant only
    bool has_expert_only = false;
};

EvalLogits eval_logits(BharnetModel& model, const StreamData& data, int64_t chunk = 64) {
    const int64_t n = data.count();
    const int64_t k = model.config().num_classes;
    EvalLogits out;
    out.body = Tensor({n, k});
    out.hand = Tensor({n, k});
    out.fused = Tensor({n, k});
    const bool expertized = model.config().variant == Variant::expertized;
    if (expertized) {
        out.expert_only = Tensor({n, k});
        out.has_expert_only = true;
    }
    for (int64_t at = 0; at < n; at += chunk) {
        const int64_t to = std::min(n, at + chunk);
        GraphCtx ctx = model.make_ctx(/*training=*/false);
        ModelOutputs outputs = model.forward(ctx, ad::constant(slice_samples(data.x_body, at, to)),
                                             ad::constant(slice_samples(data.x_hand, at, to)));
        const Tensor fused = outputs.fused()->value;
        const int64_t rows = to - at;
        std::copy(outputs.body_logits->value.data(), outputs.body_logits->value.data() + rows * k,
                  out.body.data() + at * k);
        std::copy(outputs.hand_logits->value.data(), outputs.hand_logits->value.data() + rows * k,
                  out.hand.data() + at * k);
        std::copy(fused.data(), fused.data() + rows * k, out.fused.data() + at * k);
        if (expertized) {
            BranchOutputs branches{outputs.branches.y1->value, outputs.branches.y2->value,
                                   outputs.branches.y3->value, outputs.branches.y4->value,
                                   outputs.branches.fused->value};
            const Tensor expert = expert_only_logits(branches);
            std::copy(expert.data(), expert.data() + rows * k, out.expert_only.data() + at * k);
        }
    }
    return out;
}

double subset_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    const std::vector<int> pred = predict_classes(logits);
    int64_t hit = 0;
    for (size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
    return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

struct PhaseRunArgs {
    BharnetModel* model;
    const StreamData* train_data;
    const StreamData* test_data;
    int epochs;
    int batch_size;
    double lr;
    double momentum;
    LossWeights weights;
    uint64_t shuffle_seed;
    std::string name;
};

PhaseHistory run_phase(const PhaseRunArgs& args, std::ostream* progress) {
    PhaseHistory history;
    history.name = args.name;
    BharnetModel& model = *args.model;
    const StreamData& data = *args.train_data;
    const int64_t n = data.count();
    std::vector<int> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);

    const int decay1 = static_cast<int>(0.6 * args.epochs);
    const int decay2 = static_cast<int>(0.8 * args.epochs);

    for (int epoch = 0; epoch < args.epochs; ++epoch) {
        double lr = args.lr;
        if (epoch >= decay2) {
            lr *= 0.01;
        } else if (epoch >= decay1) {
            lr *= 0.1;
        }

        // Fixed shuffle permutation per epoch derived from the seed.
        Rng shuffle_rng(Rng::mix(args.shuffle_seed, static_cast<uint64_t>(epoch)));
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(shuffle_rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t at = 0; at < n; at += args.batch_size) {
            const int64_t to = std::min(n, at + args.batch_size);
            std::vector<int> labels;
            labels.reserve(static_cast<size_t>(to - at));
            for (int64_t i = at; i < to; ++i) labels.push_back(data.labels[static_cast<size_t>(order[static_cast<size_t>(i)])]);

            GraphCtx ctx = model.make_ctx(/*training=*/true);
            ModelOutputs outputs = model.forward(ctx, ad::constant(gather_samples(data.x_body, order, at, to)),
                                                 ad::constant(gather_samples(data.x_hand, order, at, to)));
            ad::Var loss = model.loss(outputs, labels, args.weights);
            const double loss_value = loss->value[0];
            if (!std::isfinite(loss_value)) {
                throw NumericError("train: non-finite loss " + std::to_string(loss_value) + " in phase '" +
                                   args.name + "' epoch " + std::to_string(epoch + 1) + " batch " +
                                   std::to_string(batches));
            }
            model.params().zero_grads();
            ad::backward(loss);
            ctx.write_back_grads();
            sgd_step(model.params(), lr, args.momentum);
            loss_sum += loss_value;
            ++batches;
        }

        EpochRecord record;
        record.epoch = epoch + 1;
        record.train_loss = loss_sum / static_cast<double>(batches);
        const EvalLogits logits = eval_logits(model, *args.test_data);
        record.eval_accuracy = subset_accuracy(logits.fused, args.test_data->labels);
        history.epochs.push_back(record);
        if (progress) {
            (*progress) << "[" << args.name << "] epoch " << record.epoch << "/" << args.epochs << " loss "
                        << record.train_loss << " acc " << record.eval_accuracy << "\n";
        }
    }
    return history;
}

json loss_weights_to_json(const LossWeights& w) {
    return json{{"body", w.body}, {"hand", w.hand}, {"cpl", w.cpl}};
}

LossWeights loss_weights_from_json(const json& j) {
    LossWeights w;
    w.body = j.at("body").get<double>();
    w.hand = j.at("hand").get<double>();
    w.cpl = j.at("cpl").get<double>();
    return w;
}

json model_config_to_json(const ModelConfig& config) {
    json backbone{{"channels", config.backbone.channels},
                  {"strides", config.backbone.strides},
                  {"temporal_kernel", config.backbone.temporal_kernel},
                  {"partition", config.backbone.partition == Partition::uniform ? "uniform" : "distance"}};
    return json{{"variant", variant_name(config.variant)}, {"num_classes", config.num_classes},
                {"frames", config.frames},                 {"backbone", std::move(backbone)},
                {"proj_dim", config.proj_dim},             {"feature_count", config.feature_count}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig config;
    config.variant = variant_from_name(j.at("variant").get<std::string>());
    config.num_classes = j.at("num_classes").get<int>();
    config.frames = j.at("frames").get<int64_t>();
    const json& backbone = j.at("backbone");
    config.backbone.channels = backbone.at("channels").get<std::vector<int>>();
    config.backbone.strides = backbone.at("strides").get<std::vector<int>>();
    config.backbone.temporal_kernel = backbone.at("temporal_kernel").get<int>();
    const std::string partition = backbone.at("partition").get<std::string>();
    if (partition != "uniform" && partition != "distance") {
        throw ConfigError("model config: unknown partition '" + partition + "'");
    }
    config.backbone.partition = partition == "uniform" ? Partition::uniform : Partition::distance;
    config.proj_dim = j.at("proj_dim").get<int64_t>();
    config.feature_count = j.at("feature_count").get<int64_t>();
    return config;
}

BharnetModel build_model(const ModelConfig& config, uint64_t seed) {
    return BharnetModel(config, build_topology(TopologyKind::body25), build_topology(TopologyKind::hand21_padded25),
                        seed);
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    json doc;
    doc["format_version"] = checkpoint.format_version;
    doc["variant"] = variant_name(checkpoint.variant);
    doc["loss_weights"] = loss_weights_to_json(checkpoint.weights);
    doc["model"] = model_config_to_json(checkpoint.model);
    doc["streams"] = checkpoint.streams;
    json params = json::object();
    for (const auto& [stream, payload] : checkpoint.stream_params) params[stream] = json::parse(payload);
    doc["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << doc.dump();
    if (!out) throw IoError("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("cannot parse checkpoint '" + path + "': " + e.what());
    }
    Checkpoint checkpoint;
    checkpoint.format_version = doc.at("format_version").get<int>();
    if (checkpoint.format_version != 1) {
        throw ValidationError("checkpoint: unsupported version " + std::to_string(checkpoint.format_version));
    }
    checkpoint.variant = variant_from_name(doc.at("variant").get<std::string>());
    checkpoint.weights = loss_weights_from_json(doc.at("loss_weights"));
    checkpoint.model = model_config_from_json(doc.at("model"));
    checkpoint.streams = doc.at("streams").get<std::vector<std::string>>();
    for (const auto& [stream, payload] : doc.at("params").items()) {
        checkpoint.stream_params[stream] = payload.dump();
    }
    return checkpoint;
}

TrainResult train(const RunConfig& config, std::ostream* progress, const Checkpoint* warm_start) {
    config.validate();
    auto [train_ds, test_ds] = prepare_datasets(config.data);

    ModelConfig mc = config.model;
    mc.variant = config.variant;
    mc.num_classes = train_ds.num_classes;
    mc.validate();

    Checkpoint init;
    bool have_init = warm_start != nullptr;
    if (have_init) {
        init = *warm_start;
    } else if (!config.init_checkpoint_path.empty()) {
        init = load_checkpoint(config.init_checkpoint_path);
        have_init = true;
    }

    TrainResult result;
    result.checkpoint.variant = config.variant;
    result.checkpoint.weights = config.weights;
    result.checkpoint.model = mc;
    result.checkpoint.streams = config.streams;

    for (size_t si = 0; si < config.streams.size(); ++si) {
        const std::string& stream = config.streams[si];
        const StreamData train_sd = make_stream_data(train_ds, stream, mc.frames);
        const StreamData test_sd = make_stream_data(test_ds, stream, mc.frames);
        const uint64_t model_seed = Rng::mix(config.seed, 0x100 + si);

        BharnetModel target = build_model(mc, model_seed);
        if (have_init) {
            auto it = init.stream_params.find(stream);
            if (it == init.stream_params.end()) {
                throw ValidationError("warm start checkpoint has no parameters for stream '" + stream + "'");
            }
            params_warm_start_from_json(it->second, target.params());
        } else if (!config.cold_start && config.pretrain_epochs > 0) {
            ModelConfig pre_mc = mc;
            pre_mc.variant = Variant::score_fusion;
            BharnetModel pretrained = build_model(pre_mc, model_seed);
            LossWeights pre_weights = config.weights;
            pre_weights.cpl = 0.0;  // streams learn independently in phase 1
            PhaseRunArgs args{&pretrained, &train_sd,     &test_sd,        config.pretrain_epochs,
                              config.batch_size, config.lr, config.momentum, pre_weights,
                              Rng::mix(config.seed, 0x200 + si), "pretrain:" + stream};
            result.history.push_back(run_phase(args, progress));
            target.params().copy_matching_from(pretrained.params());
        }
        if (config.epochs > 0) {
            PhaseRunArgs args{&target,           &train_sd, &test_sd,        config.epochs,
                              config.batch_size, config.lr, config.momentum, config.weights,
                              Rng::mix(config.seed, 0x300 + si), "joint:" + stream};
            result.history.push_back(run_phase(args, progress));
        }
        result.checkpoint.stream_params[stream] = params_to_json(target.params());
    }

    result.metrics = evaluate(result.checkpoint, test_ds, config.streams);
    for (const PhaseHistory& phase : result.history) {
        for (const EpochRecord& record : phase.epochs) result.metrics.loss_history.push_back(record.train_loss);
    }

    // Deterministic machine-readable report.
    json report;
    report["config"] = {{"variant", variant_name(config.variant)},
                        {"seed", config.seed},
                        {"epochs", config.epochs},
                        {"pretrain_epochs", config.pretrain_epochs},
                        {"batch_size", config.batch_size},
                        {"lr", config.lr},
                        {"momentum", config.momentum},
                        {"loss_weights", loss_weights_to_json(config.weights)},
                        {"streams", config.streams},
                        {"cold_start", config.cold_start}};
    json history = json::array();
    for (const PhaseHistory& phase : result.history) {
        json epochs = json::array();
        for (const EpochRecord& record : phase.epochs) {
            epochs.push_back(
                {{"epoch", record.epoch}, {"train_loss", record.train_loss}, {"eval_accuracy", record.eval_accuracy}});
        }
        history.push_back({{"phase", phase.name}, {"epochs", std::move(epochs)}});
    }
    report["history"] = std::move(history);
    json per_stream = json::object();
    for (const auto& [name, acc] : result.metrics.per_stream) per_stream[name] = acc;
    report["final"] = {{"overall_accuracy", result.metrics.overall_accuracy},
                       {"per_class", result.metrics.per_class},
                       {"per_stream", std::move(per_stream)}};
    json confusion = json::array();
    const int64_t k = result.metrics.confusion.dim(0);
    for (int64_t i = 0; i < k; ++i) {
        json row = json::array();
        for (int64_t j = 0; j < k; ++j) {
            row.push_back(static_cast<int64_t>(result.metrics.confusion[i * k + j]));
        }
        confusion.push_back(std::move(row));
    }
    report["confusion"] = std::move(confusion);
    result.report_json = report.dump(2);
    return result;
}

Metrics evaluate(const Checkpoint& checkpoint, const Dataset& dataset, const std::vector<std::string>& streams) {
    if (streams.empty()) throw ValidationError("evaluate: at least one stream required");
    for (const std::string& stream : streams) {
        if (std::find(checkpoint.streams.begin(), checkpoint.streams.end(), stream) == checkpoint.streams.end()) {
            throw ValidationError("evaluate: stream '" + stream + "' not present in checkpoint");
        }
    }
    dataset.validate();
    if (dataset.num_classes != checkpoint.model.num_classes) {
        throw ValidationError("evaluate: dataset has " + std::to_string(dataset.num_classes) +
                              " classes but checkpoint expects " + std::to_string(checkpoint.model.num_classes));
    }

    Metrics metrics;
    std::vector<Tensor> fused_per_stream;
    std::vector<int> labels;
    for (const std::string& stream : streams) {
        const StreamData data = make_stream_data(dataset, stream, checkpoint.model.frames);
        labels = data.labels;
        BharnetModel model = build_model(checkpoint.model, /*seed=*/0);
        params_from_json_into(checkpoint.stream_params.at(stream), model.params());
        const EvalLogits logits = eval_logits(model, data);
        metrics.per_stream.emplace_back(stream + ".body", subset_accuracy(logits.body, labels));
        metrics.per_stream.emplace_back(stream + ".hand", subset_accuracy(logits.hand, labels));
        if (logits.has_expert_only) {
            metrics.per_stream.emplace_back(stream + ".expert_only", subset_accuracy(logits.expert_only, labels));
        }
        metrics.per_stream.emplace_back(stream + ".fused", subset_accuracy(logits.fused, labels));
        fused_per_stream.push_back(logits.fused);
    }

    const Tensor ensembled = ensemble_streams(fused_per_stream);
    const std::vector<int> predictions = predict_classes(ensembled);
    metrics.per_stream.emplace_back("ensemble", subset_accuracy(ensembled, labels));
    metrics.confusion = confusion_matrix(predictions, labels, checkpoint.model.num_classes);
    metrics.overall_accuracy = accuracy_from_confusion(metrics.confusion);
    metrics.per_class = per_class_accuracy(metrics.confusion);

    // trace/total must reproduce the direct count exactly.
    const double direct = subset_accuracy(ensembled, labels);
    if (metrics.overall_accuracy != direct) {
        throw NumericError("evaluate: confusion trace/total disagrees with direct accuracy");
    }
    return metrics;
}

}  // namespace bharnet
