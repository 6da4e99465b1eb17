#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bharnet/dataset_io.hpp"
#include "bharnet/metrics.hpp"
#include "bharnet/models.hpp"
#include "bharnet/synth.hpp"

namespace bharnet {

struct DataConfig {
    bool use_synth = true;
    SynthSpec synth;
    uint64_t synth_seed = 7;
    std::string train_path;
    std::string test_path;
};

struct RunConfig {
    Variant variant = Variant::score_fusion;
    DataConfig data;
    uint64_t seed = 7;
    int epochs = 30;           // joint (phase 2) epochs
    int pretrain_epochs = 10;  // per-stream expert pre-training (phase 1)
    int batch_size = 16;
    double lr = 0.1;
    double momentum = 0.9;
    LossWeights weights;
    ModelConfig model;  // num_classes is overwritten from the data
    std::vector<std::string> streams = {"joint"};  // subset of {joint, bone}
    bool cold_start = false;                       // skip phase 1, random init
    std::string init_checkpoint_path;              // optional warm start

    void validate() const;
};

// Serialized run artifact: metadata + one flat parameter payload per
// modality stream.
struct Checkpoint {
    int format_version = 1;
    Variant variant = Variant::score_fusion;
    LossWeights weights;
    ModelConfig model;
    std::vector<std::string> streams;
    std::map<std::string, std::string> stream_params;  // stream name -> params JSON
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Elementwise mean across modality streams (score-level ensemble).
Tensor ensemble_streams(const std::vector<Tensor>& logits);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double eval_accuracy = 0.0;
};

struct PhaseHistory {
    std::string name;
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    Checkpoint checkpoint;
    Metrics metrics;
    std::vector<PhaseHistory> history;
    std::string report_json;
};

// Mini-batch SGD with momentum and a fixed step schedule (decay x0.1 at 60%
// and 80% of each phase). Two-phase protocol: phase 1 trains the two streams
// independently (complementary weight zero, score-fusion shape), phase 2
// fine-tunes the requested variant from the phase-1 parameters. Deterministic
// given the config seed. `progress` may be null.
TrainResult train(const RunConfig& config, std::ostream* progress = nullptr,
                  const Checkpoint* warm_start = nullptr);

// Rebuilds the models of a checkpoint and scores a dataset. Requested streams
// must be present in the checkpoint. Reports per-stream and ensembled
// accuracies; the confusion matrix is computed over the ensemble prediction.
Metrics evaluate(const Checkpoint& checkpoint, const Dataset& dataset, const std::vector<std::string>& streams);

// Loads or synthesizes the configured train/test datasets.
std::pair<Dataset, Dataset> prepare_datasets(const DataConfig& data);

}  // namespace bharnet
