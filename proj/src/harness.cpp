#include "grela/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "grela/synthdata.hpp"

namespace grela {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(out);
    } catch (const std::exception&) {
        throw ConfigError("bad unsigned integer for " + key + ": " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + v + " (use true/false)");
}

}  // namespace

void Config::validate() const {
    if (channels < 1) throw ConfigError("channels must be positive");
    if (p < 1) throw ConfigError("region grid side must be positive");
    if (patch < 1) throw ConfigError("patch size must be positive");
    if (canvas < patch || canvas % patch != 0)
        throw ConfigError("canvas must be a positive multiple of the patch size");
    if (p > canvas / patch)
        throw ConfigError("region grid side exceeds the feature grid");
    if (max_tokens < 1) throw ConfigError("max_tokens must be positive");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch < 1) throw ConfigError("batch size must be positive");
    if (lambda_mask < 0.0 || lambda_minimap < 0.0 || lambda_nt < 0.0)
        throw ConfigError("loss weights must be non-negative");
    if (disable_region_att && disable_language_att && !baseline_fusion)
        throw ConfigError(
            "both attention terms are disabled and no baseline fusion is selected");
}

LossWeights Config::loss_weights() const {
    LossWeights w;
    w.mask = lambda_mask;
    w.minimap = disable_minimap ? 0.0 : lambda_minimap;
    w.nt = lambda_nt;
    return w;
}

EncoderConfig Config::encoder_config() const {
    EncoderConfig e;
    e.channels = channels;
    e.patch = patch;
    e.image_h = canvas;
    e.image_w = canvas;
    e.max_tokens = max_tokens;
    return e;
}

RelaConfig Config::rela_config() const {
    RelaConfig r;
    r.channels = channels;
    r.p = p;
    r.aggregation = aggregation;
    r.hard_split_pooling = hard_split_pooling;
    r.disable_region_att = disable_region_att;
    r.disable_language_att = disable_language_att;
    r.baseline_fusion = baseline_fusion;
    return r;
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) +
                              " is not a key = value pair: " + stripped);
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key on line " + std::to_string(line_no));

        if (key == "canvas") cfg.canvas = parse_int(key, value);
        else if (key == "channels") cfg.channels = parse_int(key, value);
        else if (key == "p") cfg.p = parse_int(key, value);
        else if (key == "patch") cfg.patch = parse_int(key, value);
        else if (key == "max_tokens") cfg.max_tokens = parse_int(key, value);
        else if (key == "lr") cfg.lr = parse_double(key, value);
        else if (key == "warmup_cosine") cfg.warmup_cosine = parse_bool(key, value);
        else if (key == "epochs") cfg.epochs = parse_int(key, value);
        else if (key == "batch") cfg.batch = parse_int(key, value);
        else if (key == "lambda_mask") cfg.lambda_mask = parse_double(key, value);
        else if (key == "lambda_minimap") cfg.lambda_minimap = parse_double(key, value);
        else if (key == "lambda_nt") cfg.lambda_nt = parse_double(key, value);
        else if (key == "aggregation") cfg.aggregation = parse_aggregation_mode(value);
        else if (key == "decision") cfg.decision = parse_decision_mode(value);
        else if (key == "hard_split_pooling") cfg.hard_split_pooling = parse_bool(key, value);
        else if (key == "disable_minimap") cfg.disable_minimap = parse_bool(key, value);
        else if (key == "disable_region_att") cfg.disable_region_att = parse_bool(key, value);
        else if (key == "disable_language_att") cfg.disable_language_att = parse_bool(key, value);
        else if (key == "baseline_fusion") cfg.baseline_fusion = parse_bool(key, value);
        else if (key == "seed") cfg.seed = parse_u64(key, value);
        else if (key == "data_dir") cfg.data_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else throw ConfigError("unknown configuration key: " + key);
    }
    return cfg;
}

Config read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const Config& cfg) {
    std::ostringstream out;
    out << "canvas = " << cfg.canvas << '\n';
    out << "channels = " << cfg.channels << '\n';
    out << "p = " << cfg.p << '\n';
    out << "patch = " << cfg.patch << '\n';
    out << "max_tokens = " << cfg.max_tokens << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.lr);
    out << "lr = " << buf << '\n';
    out << "warmup_cosine = " << (cfg.warmup_cosine ? "true" : "false") << '\n';
    out << "epochs = " << cfg.epochs << '\n';
    out << "batch = " << cfg.batch << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.lambda_mask);
    out << "lambda_mask = " << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.lambda_minimap);
    out << "lambda_minimap = " << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.lambda_nt);
    out << "lambda_nt = " << buf << '\n';
    out << "aggregation = " << to_string(cfg.aggregation) << '\n';
    out << "decision = " << to_string(cfg.decision) << '\n';
    out << "hard_split_pooling = " << (cfg.hard_split_pooling ? "true" : "false") << '\n';
    out << "disable_minimap = " << (cfg.disable_minimap ? "true" : "false") << '\n';
    out << "disable_region_att = " << (cfg.disable_region_att ? "true" : "false") << '\n';
    out << "disable_language_att = " << (cfg.disable_language_att ? "true" : "false") << '\n';
    out << "baseline_fusion = " << (cfg.baseline_fusion ? "true" : "false") << '\n';
    out << "seed = " << cfg.seed << '\n';
    return out.str();
}

void write_config_file(const std::string& path, const Config& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config file: " + path);
    out << serialize_config(cfg);
    if (!out) throw IoError("failed writing config file: " + path);
}

void apply_preset(Config& cfg, const std::string& preset) {
    if (preset == "hard_split") cfg.hard_split_pooling = true;
    else if (preset == "no_minimap") cfg.disable_minimap = true;
    else if (preset == "no_region_att") cfg.disable_region_att = true;
    else if (preset == "no_language_att") cfg.disable_language_att = true;
    else if (preset == "baseline_fusion") {
        cfg.baseline_fusion = true;
        cfg.disable_region_att = true;
        cfg.disable_language_att = true;
    } else {
        throw ConfigError("unknown variant preset: " + preset);
    }
}

std::vector<GresSample> load_split(const std::string& data_dir, const std::string& split) {
    std::vector<ManifestRow> rows = read_manifest(data_dir + "/" + split + ".tsv");
    std::vector<GresSample> samples;
    samples.reserve(rows.size());
    for (const ManifestRow& row : rows) {
        GresSample s;
        s.image = read_ppm(data_dir + "/" + row.image_path);
        s.m_gt = read_pgm(data_dir + "/" + row.mask_path);
        s.e_gt = row.no_target;
        s.expression = row.expression;
        validate_sample(s);
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

// Point each region query at its own grid cell before training starts. The
// per-region supervision indexes cells in row-major order, so giving the
// attention that correspondence up front removes a cold-start symmetry; the
// queries stay fully trainable. All inputs are freshly initialized
// parameters, so the result is a pure function of the model seed.
void prime_region_queries(ParamStore& store, const Config& cfg) {
    NoGradGuard ng;
    const int gh = cfg.canvas / cfg.patch, gw = gh;
    const int p = cfg.p, c = cfg.channels;
    if (gh < p || gw < p) return;
    Tensor keys = gelu(matmul(store.at("img.pos"), store.at("ria.w_ik")));
    std::vector<int> rb = grid_cell_bounds(gh, p), cb = grid_cell_bounds(gw, p);
    Tensor& q = store.at("queries.q_r");
    std::vector<std::vector<double>> centroid(static_cast<std::size_t>(p * p),
                                              std::vector<double>(static_cast<std::size_t>(c)));
    for (int ry = 0; ry < p; ++ry)
        for (int rx = 0; rx < p; ++rx) {
            auto& m = centroid[static_cast<std::size_t>(ry * p + rx)];
            int cnt = 0;
            for (int y = rb[ry]; y < rb[ry + 1]; ++y)
                for (int x = cb[rx]; x < cb[rx + 1]; ++x, ++cnt)
                    for (int ch = 0; ch < c; ++ch)
                        m[static_cast<std::size_t>(ch)] +=
                            keys.at(static_cast<std::size_t>(y * gw + x) * c + ch);
            double norm = 0;
            for (double& v : m) v /= cnt;
            for (double v : m) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 1e-12)
                for (double& v : m) v /= norm;
        }
    // Scale so own-cell logits beat cross-cell logits by a fixed gap.
    double own = 0, cross = 0;
    long n_own = 0, n_cross = 0;
    for (int ry = 0; ry < p; ++ry)
        for (int rx = 0; rx < p; ++rx) {
            const auto& m = centroid[static_cast<std::size_t>(ry * p + rx)];
            for (int y = 0; y < gh; ++y)
                for (int x = 0; x < gw; ++x) {
                    double dot = 0;
                    for (int ch = 0; ch < c; ++ch)
                        dot += m[static_cast<std::size_t>(ch)] *
                               keys.at(static_cast<std::size_t>(y * gw + x) * c + ch);
                    const bool inside = y >= rb[ry] && y < rb[ry + 1] &&
                                        x >= cb[rx] && x < cb[rx + 1];
                    if (inside) { own += dot; ++n_own; }
                    else { cross += dot; ++n_cross; }
                }
        }
    const double gap = own / n_own - cross / n_cross;
    if (gap <= 1e-9) return;  // positional keys carry no cell structure; skip
    const double scale = 3.0 / gap;
    for (int r = 0; r < p * p; ++r)
        for (int ch = 0; ch < c; ++ch)
            q.at(static_cast<std::size_t>(r) * c + ch) =
                scale * centroid[static_cast<std::size_t>(r)][static_cast<std::size_t>(ch)];
}

}  // namespace

Model::Model(const Config& cfg, int vocab_total_ids) : cfg_(cfg) {
    cfg_.validate();
    Rng init_rng(mix_seed(cfg.seed, 401));
    encoders_.emplace(store_, cfg.encoder_config(), vocab_total_ids, init_rng);
    rela_.emplace(store_, cfg.rela_config(), init_rng);
    if (!cfg_.hard_split_pooling) prime_region_queries(store_, cfg_);
}

RelaOutput Model::run(const GresSample& sample, const Vocabulary& vocab) const {
    ImageFeature f_i = encoders_->encode_image(sample.image);
    TextFeature f_t = encoders_->encode_text(sample.expression, vocab);
    MaskFeature f_m = encoders_->pixel_decode(f_i);
    return rela_->forward(f_i, f_t, f_m);
}

Prediction Model::predict_sample(const GresSample& sample, const Vocabulary& vocab,
                                 DecisionMode mode) const {
    NoGradGuard ng;
    RelaOutput out = run(sample, vocab);
    return predict(out, sample.image.h, sample.image.w, mode);
}

Adam::Adam(double lr) : lr_(lr) {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
}

void Adam::step(ParamStore& params) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (auto& [name, t] : params) {
        std::vector<double>& m = m_[name];
        std::vector<double>& v = v_[name];
        if (m.empty()) {
            m.assign(t.size(), 0.0);
            v.assign(t.size(), 0.0);
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = (*t.grad)[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            (*t.data)[i] -= lr_ * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Adam::save(std::ostream& out) const {
    out << "adam " << t_ << ' ' << m_.size() << '\n';
    for (const auto& [name, m] : m_) {
        out << name << ' ' << m.size() << '\n';
        write_doubles_le(out, m);
        write_doubles_le(out, v_.at(name));
    }
}

void Adam::load(std::istream& in) {
    std::string tag;
    std::size_t entries = 0;
    if (!(in >> tag >> t_ >> entries) || tag != "adam")
        throw IoError("malformed optimizer state");
    in.ignore(1);  // newline
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < entries; ++i) {
        std::string name;
        std::size_t count = 0;
        if (!(in >> name >> count)) throw IoError("malformed optimizer entry");
        in.ignore(1);
        std::vector<double> m(count), v(count);
        read_doubles_le(in, m);
        read_doubles_le(in, v);
        m_[name] = std::move(m);
        v_[name] = std::move(v);
    }
}

namespace {

std::map<std::string, std::vector<double>> snapshot_params(const ParamStore& store) {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, t] : store) snap[name] = *t.data;
    return snap;
}

void check_finite(const LossBreakdown& lb, int epoch, std::size_t sample_index) {
    struct Term {
        const char* name;
        double value;
    };
    const Term terms[] = {{"mask", lb.l_mask},
                          {"minimap", lb.l_minimap},
                          {"no-target", lb.l_nt}};
    for (const Term& t : terms) {
        if (!std::isfinite(t.value)) {
            throw NumericalError("non-finite " + std::string(t.name) +
                                 " loss term at epoch " + std::to_string(epoch + 1) +
                                 ", sample " + std::to_string(sample_index));
        }
    }
}

}  // namespace

void train_loop(const Config& cfg, Model& model, const Vocabulary& vocab,
                const std::vector<GresSample>& train_set,
                const std::vector<GresSample>& val_set, Adam& adam,
                Rng& shuffle_rng, TrainOutcome& progress, int start_epoch,
                std::ostream* log) {
    cfg.validate();
    if (train_set.empty()) throw InputError("training split is empty");
    if (cfg.epochs > start_epoch && val_set.empty())
        throw InputError("validation split is empty");

    const LossWeights weights = cfg.loss_weights();
    if (progress.best_values.empty()) {
        progress.best_values = snapshot_params(model.params());
        progress.best_val_giou = -1.0;
        progress.best_epoch = -1;
    }

    std::vector<std::size_t> order(train_set.size());

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        // Restart from the identity ordering so each epoch's permutation is a
        // pure function of the generator state, which the state file carries.
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);
        double sum_total = 0.0, sum_mask = 0.0, sum_minimap = 0.0, sum_nt = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
            const double inv = 1.0 / static_cast<double>(end - begin);
            model.params().zero_grads();
            for (std::size_t i = begin; i < end; ++i) {
                const GresSample& sample = train_set[order[i]];
                RelaOutput out = model.run(sample, vocab);
                LossBreakdown lb = compute_loss(out, sample, cfg.p, weights);
                check_finite(lb, epoch, order[i]);
                sum_total += lb.total;
                sum_mask += lb.l_mask;
                sum_minimap += lb.l_minimap;
                sum_nt += lb.l_nt;
                backward(scale(lb.graph, inv));
            }
            if (cfg.warmup_cosine) {
                // Piecewise schedule over the whole run, derived from the
                // serialized step counter so resumed runs stay bit-identical.
                const double steps_per_epoch =
                    std::ceil(static_cast<double>(order.size()) / cfg.batch);
                const double total = steps_per_epoch * cfg.epochs;
                const double warm = std::max(1.0, 0.1 * total);
                const double t = static_cast<double>(adam.steps_taken());
                double f = (t < warm) ? (t + 1.0) / warm
                                      : 0.5 * (1.0 + std::cos(M_PI * (t - warm) /
                                                              std::max(1.0, total - warm)));
                adam.set_lr(cfg.lr * f);
            }
            adam.step(model.params());
        }

        EpochLog el;
        el.epoch = epoch + 1;
        const double n = static_cast<double>(train_set.size());
        el.mean_total = sum_total / n;
        el.mean_mask = sum_mask / n;
        el.mean_minimap = sum_minimap / n;
        el.mean_nt = sum_nt / n;
        el.val_giou = validation_giou(model, vocab, val_set, cfg.decision);
        progress.epochs.push_back(el);
        if (log) {
            char line[256];
            std::snprintf(line, sizeof(line),
                          "epoch %d/%d loss=%.6f mask=%.6f minimap=%.6f nt=%.6f "
                          "val_giou=%.4f\n",
                          el.epoch, cfg.epochs, el.mean_total, el.mean_mask,
                          el.mean_minimap, el.mean_nt, el.val_giou);
            (*log) << line;
            log->flush();
        }
        if (el.val_giou > progress.best_val_giou) {
            progress.best_val_giou = el.val_giou;
            progress.best_epoch = epoch + 1;
            progress.best_values = snapshot_params(model.params());
        }
    }
}

double validation_giou(const Model& model, const Vocabulary& vocab,
                       const std::vector<GresSample>& samples, DecisionMode mode) {
    std::vector<EvalRecord> records;
    records.reserve(samples.size());
    for (const GresSample& s : samples) {
        Prediction p = model.predict_sample(s, vocab, mode);
        records.push_back(eval_record(p.mask, s.m_gt, s.e_gt));
    }
    return giou(records);
}

EvalReport evaluate_model(const Model& model, const Vocabulary& vocab,
                          const std::vector<GresSample>& samples, DecisionMode mode) {
    std::vector<Prediction> predictions;
    predictions.reserve(samples.size());
    for (const GresSample& s : samples)
        predictions.push_back(model.predict_sample(s, vocab, mode));
    return evaluate_predictions(samples, predictions);
}

EvalReport evaluate_predictions(const std::vector<GresSample>& samples,
                                const std::vector<Prediction>& predictions) {
    if (samples.size() != predictions.size())
        throw ContractError("sample and prediction counts differ");
    std::vector<EvalRecord> records;
    records.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        records.push_back(eval_record(predictions[i].mask, samples[i].m_gt,
                                      samples[i].e_gt));
    return aggregate_report(records);
}

namespace {
constexpr char kTrainMagic[] = "GRELATRAIN1\n";
}

void save_train_state(const std::string& path, const Model& model, const Adam& adam,
                      const Rng& shuffle_rng, int completed_epochs,
                      const TrainOutcome& progress) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write training state: " + path);
    out.write(kTrainMagic, sizeof(kTrainMagic) - 1);
    out << "epoch " << completed_epochs << " best_epoch " << progress.best_epoch << '\n';
    write_doubles_le(out, {progress.best_val_giou});
    out << "rng " << shuffle_rng.engine() << '\n';

    const ParamStore& store = model.params();
    out << "params " << store.size() << '\n';
    for (const auto& [name, t] : store) {
        out << name << ' ' << t.ndim();
        for (int d : t.shape) out << ' ' << d;
        out << '\n';
        write_doubles_le(out, *t.data);
    }
    out << "best " << progress.best_values.size() << '\n';
    for (const auto& [name, values] : progress.best_values) {
        out << name << ' ' << values.size() << '\n';
        write_doubles_le(out, values);
    }
    adam.save(out);
    out << "logs " << progress.epochs.size() << '\n';
    for (const EpochLog& el : progress.epochs) {
        out << el.epoch << '\n';
        write_doubles_le(out, {el.mean_total, el.mean_mask, el.mean_minimap,
                               el.mean_nt, el.val_giou});
    }
    if (!out) throw IoError("write failed for training state: " + path);
}

int load_train_state(const std::string& path, Model& model, Adam& adam,
                     Rng& shuffle_rng, TrainOutcome& progress) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open training state: " + path);
    char magic[sizeof(kTrainMagic) - 1];
    if (!in.read(magic, sizeof(magic)) ||
        std::string(magic, sizeof(magic)) != std::string(kTrainMagic, sizeof(magic)))
        throw IoError("bad training-state magic in " + path);

    std::string tag;
    int completed = 0;
    if (!(in >> tag >> completed) || tag != "epoch")
        throw IoError("malformed training state (epoch)");
    if (!(in >> tag >> progress.best_epoch) || tag != "best_epoch")
        throw IoError("malformed training state (best epoch)");
    in.ignore(1);
    std::vector<double> one(1);
    read_doubles_le(in, one);
    progress.best_val_giou = one[0];

    if (!(in >> tag) || tag != "rng") throw IoError("malformed training state (rng)");
    if (!(in >> shuffle_rng.engine())) throw IoError("malformed training state (rng data)");
    in.ignore(1);

    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "params")
        throw IoError("malformed training state (params)");
    in.ignore(1);
    ParamStore& store = model.params();
    if (count != store.size())
        throw IoError("training state has " + std::to_string(count) +
                      " parameters, model expects " + std::to_string(store.size()));
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        int ndim = 0;
        if (!(in >> name >> ndim) || ndim < 1)
            throw IoError("malformed training-state parameter header");
        std::vector<int> shape(static_cast<std::size_t>(ndim));
        for (int& d : shape)
            if (!(in >> d)) throw IoError("malformed training-state shape");
        in.ignore(1);
        if (!store.contains(name)) throw IoError("unexpected parameter: " + name);
        Tensor& t = store.at(name);
        if (t.shape != shape) throw IoError("shape mismatch for " + name);
        read_doubles_le(in, *t.data);
    }

    if (!(in >> tag >> count) || tag != "best")
        throw IoError("malformed training state (best)");
    in.ignore(1);
    progress.best_values.clear();
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t n = 0;
        if (!(in >> name >> n)) throw IoError("malformed best-snapshot entry");
        in.ignore(1);
        std::vector<double> values(n);
        read_doubles_le(in, values);
        progress.best_values[name] = std::move(values);
    }

    adam.load(in);

    if (!(in >> tag >> count) || tag != "logs")
        throw IoError("malformed training state (logs)");
    in.ignore(1);
    progress.epochs.clear();
    for (std::size_t i = 0; i < count; ++i) {
        EpochLog el;
        if (!(in >> el.epoch)) throw IoError("malformed epoch log");
        in.ignore(1);
        std::vector<double> vals(5);
        read_doubles_le(in, vals);
        el.mean_total = vals[0];
        el.mean_mask = vals[1];
        el.mean_minimap = vals[2];
        el.mean_nt = vals[3];
        el.val_giou = vals[4];
        progress.epochs.push_back(el);
    }
    return completed;
}

GradcheckResult run_gradcheck(std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();

    Config cfg;
    cfg.canvas = 32;  // 8x8 feature grid at patch 4
    cfg.channels = 16;
    cfg.p = 4;
    cfg.seed = seed;

    Vocabulary vocab = Vocabulary::build(
        {"the red circle left", "two blue squares right", "everything except triangles"});
    Model model(cfg, vocab.total_ids());

    Rng rng(mix_seed(seed, 901));
    GresSample sample;
    sample.image = Image::filled(cfg.canvas, cfg.canvas, 0, 0, 0);
    for (auto& b : sample.image.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(256));
    sample.expression = "the red circle left";  // four tokens
    sample.m_gt = BinaryMask::zeros(cfg.canvas, cfg.canvas);
    for (int y = 6; y < 20; ++y)
        for (int x = 9; x < 23; ++x) sample.m_gt.at(y, x) = 1;
    sample.e_gt = false;

    const LossWeights weights;
    auto loss_value = [&] {
        RelaOutput out = model.run(sample, vocab);
        return compute_loss(out, sample, cfg.p, weights).graph;
    };

    ParamStore& store = model.params();
    store.zero_grads();
    backward(loss_value());
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& [name, t] : store) analytic[name] = *t.grad;

    GradcheckResult result;
    const double h = 1e-5;
    NoGradGuard ng;
    for (auto& [name, t] : store) {
        const std::vector<double>& a = analytic[name];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = (*t.data)[i];
            (*t.data)[i] = orig + h;
            const double fp = loss_value().item();
            (*t.data)[i] = orig - h;
            const double fm = loss_value().item();
            (*t.data)[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double rel = std::abs(a[i] - numeric) /
                               std::max({std::abs(a[i]), std::abs(numeric), 1e-4});
            ++result.entries_checked;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = name;
            }
        }
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace grela
