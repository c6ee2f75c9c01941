#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grela/common.hpp"
#include "grela/encoders.hpp"
#include "grela/metrics.hpp"
#include "grela/objective.hpp"
#include "grela/params.hpp"
#include "grela/rela.hpp"

namespace grela {

// Full run configuration. File format: one `key = value` per line, '#'
// comments allowed, unknown keys rejected.
struct Config {
    // geometry and model width
    int canvas = 48;
    int channels = 32;
    int p = 4;      // region grid side
    int patch = 4;  // image patch side
    int max_tokens = 16;

    // optimization
    double lr = 1e-3;
    bool warmup_cosine = false;  // ramp lr over the first tenth of the steps,
                                 // then cosine-decay it toward zero
    int epochs = 30;
    int batch = 8;
    double lambda_mask = 1.0;
    double lambda_minimap = 1.0;
    double lambda_nt = 1.0;

    // behavior modes
    AggregationMode aggregation = AggregationMode::normalized;
    DecisionMode decision = DecisionMode::classifier;

    // variant switches
    bool hard_split_pooling = false;
    bool disable_minimap = false;
    bool disable_region_att = false;
    bool disable_language_att = false;
    bool baseline_fusion = false;

    // run identity and locations
    std::uint64_t seed = 1;
    std::string data_dir;
    std::string out_dir;

    void validate() const;
    LossWeights loss_weights() const;  // disable_minimap zeroes the minimap weight
    EncoderConfig encoder_config() const;
    RelaConfig rela_config() const;
};

Config parse_config_text(const std::string& text);
Config read_config_file(const std::string& path);
std::string serialize_config(const Config& cfg);
void write_config_file(const std::string& path, const Config& cfg);

// Named variant presets: hard_split, no_minimap, no_region_att,
// no_language_att, baseline_fusion.
void apply_preset(Config& cfg, const std::string& preset);

// Loads "<split>.tsv" plus its image/mask files from a dataset directory.
std::vector<GresSample> load_split(const std::string& data_dir, const std::string& split);

// The assembled network: encoders plus the region-attention block over one
// shared parameter store. Not copyable (sub-models hold references).
class Model {
public:
    Model(const Config& cfg, int vocab_total_ids);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    RelaOutput run(const GresSample& sample, const Vocabulary& vocab) const;
    Prediction predict_sample(const GresSample& sample, const Vocabulary& vocab,
                              DecisionMode mode) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    ParamStore store_;
    std::optional<Encoders> encoders_;
    std::optional<RelaModel> rela_;
};

// Adaptive-moment gradient descent (beta 0.9/0.999, eps 1e-8).
class Adam {
public:
    explicit Adam(double lr);
    void step(ParamStore& params);
    long steps_taken() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    double lr_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct EpochLog {
    int epoch = 0;
    double mean_total = 0.0;
    double mean_mask = 0.0;
    double mean_minimap = 0.0;
    double mean_nt = 0.0;
    double val_giou = 0.0;
};

struct TrainOutcome {
    std::vector<EpochLog> epochs;
    std::map<std::string, std::vector<double>> best_values;  // best-by-val-giou snapshot
    double best_val_giou = -1.0;
    int best_epoch = -1;  // -1 means initialization was never beaten (0 epochs)
};

// Shuffled mini-batch training with per-sample gradient accumulation,
// appending into `progress` (pass a fresh TrainOutcome for a new run, or one
// restored by load_train_state to resume from `start_epoch`). Non-finite loss
// terms abort with an error naming the term.
void train_loop(const Config& cfg, Model& model, const Vocabulary& vocab,
                const std::vector<GresSample>& train_set,
                const std::vector<GresSample>& val_set, Adam& adam,
                Rng& shuffle_rng, TrainOutcome& progress, int start_epoch = 0,
                std::ostream* log = nullptr);

// Mean per-sample overlap score on a split (the quantity used for model
// selection during training).
double validation_giou(const Model& model, const Vocabulary& vocab,
                       const std::vector<GresSample>& samples, DecisionMode mode);

// Full evaluation protocol over a split.
EvalReport evaluate_model(const Model& model, const Vocabulary& vocab,
                          const std::vector<GresSample>& samples, DecisionMode mode);

// Aggregates records from already-made predictions (lets tests replay ground
// truth or degenerate predictors through the same bookkeeping).
EvalReport evaluate_predictions(const std::vector<GresSample>& samples,
                                const std::vector<Prediction>& predictions);

// Training-state file: everything needed to continue a run bit-identically
// (completed epochs, optimizer moments and step count, shuffle RNG state,
// parameter values, best-so-far snapshot).
void save_train_state(const std::string& path, const Model& model, const Adam& adam,
                      const Rng& shuffle_rng, int completed_epochs,
                      const TrainOutcome& progress);
int load_train_state(const std::string& path, Model& model, Adam& adam,
                     Rng& shuffle_rng, TrainOutcome& progress);

// Finite-difference sweep over every parameter of a full pipeline
// (image 32x32 -> 8x8 feature grid, C=16, region grid side 4, 4 tokens).
struct GradcheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t entries_checked = 0;
    double seconds = 0.0;
};
GradcheckResult run_gradcheck(std::uint64_t seed);

}  // namespace grela
