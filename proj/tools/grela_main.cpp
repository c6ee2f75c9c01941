// Command-line front end: dataset generation, training, evaluation, variant
// training, and the full-model gradient check.
//
// Exit codes: 0 success, 2 input/config/file problems, 3 numerical failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grela/harness.hpp"
#include "grela/synthdata.hpp"

namespace fs = std::filesystem;
using namespace grela;

namespace {

// Writes every byte to two underlying buffers (console + log file).
class TeeBuf : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

protected:
    int overflow(int c) override {
        if (c == traits_type::eof()) return traits_type::not_eof(c);
        if (a_->sputc(static_cast<char>(c)) == traits_type::eof()) return traits_type::eof();
        if (b_->sputc(static_cast<char>(c)) == traits_type::eof()) return traits_type::eof();
        return c;
    }
    int sync() override {
        const int ra = a_->pubsync();
        const int rb = b_->pubsync();
        return (ra == 0 && rb == 0) ? 0 : -1;
    }

private:
    std::streambuf* a_;
    std::streambuf* b_;
};

double parse_fraction(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid " + what + " value '" + text + "'");
    }
}

// "single=0.4,multi=0.3,notarget=0.3"; omitted components keep their defaults.
MixConfig parse_mix(const std::string& text) {
    MixConfig mix;
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        const std::size_t eq = piece.find('=');
        if (eq == std::string::npos)
            throw ConfigError("mix component '" + piece + "' is not name=value");
        const std::string key = piece.substr(0, eq);
        const double value = parse_fraction(piece.substr(eq + 1), "mix fraction");
        if (key == "single") {
            mix.single = value;
        } else if (key == "multi") {
            mix.multi = value;
        } else if (key == "notarget") {
            mix.no_target = value;
        } else {
            throw ConfigError("unknown mix component '" + key +
                              "' (expected single, multi, notarget)");
        }
    }
    return mix;
}

struct GenerateArgs {
    std::string out;
    std::uint64_t seed = 0;
    int train_count = 0;
    int val_count = 0;
    int canvas = 48;
    std::string mix = "single=0.4,multi=0.3,notarget=0.3";
};

int cmd_generate(const GenerateArgs& a) {
    DatasetConfig cfg;
    cfg.out_dir = a.out;
    cfg.train_count = a.train_count;
    cfg.val_count = a.val_count;
    cfg.scene.canvas = a.canvas;
    cfg.mix = parse_mix(a.mix);
    build_dataset(cfg, a.seed);
    std::printf("wrote %d train / %d val samples (canvas %d, seed %llu) to %s\n",
                cfg.train_count, cfg.val_count, cfg.scene.canvas,
                static_cast<unsigned long long>(a.seed), cfg.out_dir.c_str());
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string preset;  // empty = full model
};

int cmd_train(const TrainArgs& a) {
    Config cfg = read_config_file(a.config);
    if (a.seed_given) cfg.seed = a.seed;
    if (!a.preset.empty()) apply_preset(cfg, a.preset);
    cfg.data_dir = a.data;
    cfg.out_dir = a.out;
    cfg.validate();

    const std::vector<GresSample> train_set = load_split(a.data, "train");
    const std::vector<GresSample> val_set = load_split(a.data, "val");
    std::vector<std::string> corpus;
    corpus.reserve(train_set.size());
    for (const GresSample& s : train_set) corpus.push_back(s.expression);
    const Vocabulary vocab = Vocabulary::build(corpus);

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create output directory " + a.out + ": " + ec.message());
    vocab.save((fs::path(a.out) / "vocab.txt").string());
    write_config_file((fs::path(a.out) / "model.cfg").string(), cfg);

    Model model(cfg, vocab.total_ids());
    Adam adam(cfg.lr);
    Rng shuffle_rng(mix_seed(cfg.seed, 402));
    TrainOutcome progress;

    const std::string log_path = (fs::path(a.out) / "train.log").string();
    std::ofstream log_file(log_path);
    if (!log_file) throw IoError("cannot open log file for writing: " + log_path);
    TeeBuf tee_buf(std::cout.rdbuf(), log_file.rdbuf());
    std::ostream tee(&tee_buf);

    if (!a.preset.empty()) tee << "variant preset: " << a.preset << '\n';
    train_loop(cfg, model, vocab, train_set, val_set, adam, shuffle_rng, progress, 0, &tee);

    for (auto& [name, t] : model.params()) *t.data = progress.best_values.at(name);
    const std::string ckpt_path = (fs::path(a.out) / "checkpoint.bin").string();
    save_checkpoint(model.params(), ckpt_path);

    if (progress.best_epoch >= 1) {
        char giou[32];
        std::snprintf(giou, sizeof giou, "%.4f", progress.best_val_giou);
        tee << "best epoch " << progress.best_epoch << " val_giou=" << giou << '\n';
    } else {
        tee << "no epoch improved on the initialization; checkpoint keeps initial weights\n";
    }
    tee.flush();
    // console only: absolute paths would make otherwise-identical logs differ
    std::cout << "checkpoint: " << ckpt_path << '\n';
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "val";
    std::string mode;  // empty = use the trained default
    std::string report;
};

int cmd_eval(const EvalArgs& a) {
    const fs::path ckpt(a.checkpoint);
    const fs::path side = ckpt.parent_path();
    Config cfg = read_config_file((side / "model.cfg").string());
    const Vocabulary vocab = Vocabulary::load((side / "vocab.txt").string());

    const std::map<std::string, Tensor> stored = read_checkpoint(a.checkpoint);
    const auto emb = stored.find("txt.tok_emb");
    if (emb == stored.end())
        throw IoError("checkpoint lacks the token embedding table: " + a.checkpoint);
    if (emb->second.dim(0) != vocab.total_ids()) {
        throw ConfigError(
            "compatibility error: checkpoint embeds " + std::to_string(emb->second.dim(0)) +
            " token ids but the side-by-side vocabulary defines " +
            std::to_string(vocab.total_ids()));
    }

    const DecisionMode mode =
        a.mode.empty() ? cfg.decision : parse_decision_mode(a.mode);

    Model model(cfg, vocab.total_ids());
    load_checkpoint(model.params(), a.checkpoint);
    const std::vector<GresSample> samples = load_split(a.data, a.split);
    const EvalReport report = evaluate_model(model, vocab, samples, mode);
    write_report(report, a.report);
    std::cout << format_report(report);
    std::printf("report: %s\n", a.report.c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const GradcheckResult r = run_gradcheck(seed);
    std::printf("checked %zu parameter entries in %.1f s\n", r.entries_checked, r.seconds);
    std::printf("max relative error %.3e (parameter %s)\n", r.max_rel_err,
                r.worst_param.c_str());
    if (!(r.max_rel_err < 1e-3)) {
        throw NumericalError("gradient check exceeded the 1e-3 tolerance on " +
                             r.worst_param);
    }
    std::printf("gradient check passed (tolerance 1e-3)\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Referring-expression segmentation workbench"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "Build a synthetic dataset");
    generate->add_option("--out", gen.out, "Output directory")->required();
    generate->add_option("--seed", gen.seed, "Dataset seed")->required();
    generate->add_option("--train", gen.train_count, "Training sample count")->required();
    generate->add_option("--val", gen.val_count, "Validation sample count")->required();
    generate->add_option("--canvas", gen.canvas, "Canvas side in pixels")->capture_default_str();
    generate->add_option("--mix", gen.mix, "Expression kind mixture")->capture_default_str();

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "Train the full model");
    CLI::App* ablate = app.add_subcommand("ablate", "Train a named model variant");
    for (CLI::App* sub : {train, ablate}) {
        sub->add_option("--data", tr.data, "Dataset directory")->required();
        sub->add_option("--out", tr.out, "Run output directory")->required();
        sub->add_option("--config", tr.config, "Config file (key = value lines)")->required();
        sub->add_option("--seed", tr.seed, "Overrides the config seed");
    }
    ablate->add_option("--preset", tr.preset,
                       "hard_split | no_minimap | no_region_att | no_language_att | "
                       "baseline_fusion")
        ->required();

    EvalArgs ev;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", ev.checkpoint,
                     "Checkpoint file (model.cfg and vocab.txt must sit beside it)")
        ->required();
    eval->add_option("--data", ev.data, "Dataset directory")->required();
    eval->add_option("--split", ev.split, "Split name")->capture_default_str();
    eval->add_option("--mode", ev.mode, "classifier | 50pix (default: trained setting)");
    eval->add_option("--report", ev.report, "Report output file")->required();

    std::uint64_t gc_seed = 1;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference sweep over all parameters");
    gradcheck->add_option("--seed", gc_seed, "Instance seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(generate)) return cmd_generate(gen);
        if (app.got_subcommand(train)) {
            tr.seed_given = train->count("--seed") > 0;
            return cmd_train(tr);
        }
        if (app.got_subcommand(ablate)) {
            tr.seed_given = ablate->count("--seed") > 0;
            return cmd_train(tr);
        }
        if (app.got_subcommand(eval)) return cmd_eval(ev);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_seed);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
