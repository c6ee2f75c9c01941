#include "grela/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace grela {

std::vector<std::string> tokenize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cleaned.push_back(static_cast<char>(std::tolower(ch)));
        } else if (std::isspace(ch)) {
            cleaned.push_back(' ');
        }
        // other punctuation is dropped
    }
    std::vector<std::string> out;
    std::istringstream iss(cleaned);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
    std::set<std::string> uniq;
    for (const auto& line : corpus) {
        for (auto& tok : tokenize(line)) uniq.insert(tok);
    }
    Vocabulary v;
    v.tokens_.assign(uniq.begin(), uniq.end());
    for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
        v.ids_[v.tokens_[i]] = i + 2;
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw IoError("empty line in vocabulary file: " + path);
        if (v.ids_.count(line)) throw IoError("duplicate token in vocabulary file: " + line);
        v.ids_[line] = static_cast<int>(v.tokens_.size()) + 2;
        v.tokens_.push_back(line);
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (const auto& tok : tokens_) out << tok << '\n';
    if (!out) throw IoError("failed writing vocabulary file: " + path);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? 1 : it->second;
}

namespace {

void create_linear(ParamStore& store, const std::string& prefix, int in_dim,
                   int out_dim, Rng& rng) {
    store.create(prefix + ".w", {in_dim, out_dim}, in_dim, out_dim, rng);
    store.create_zeros(prefix + ".b", {out_dim});
}

Tensor residual_mlp_block(const ParamStore& store, const std::string& prefix,
                          const Tensor& x) {
    Tensor h = linear(x, store.at(prefix + "1.w"), store.at(prefix + "1.b"));
    Tensor y = linear(gelu(h), store.at(prefix + "2.w"), store.at(prefix + "2.b"));
    return add(x, y);
}

}  // namespace

Encoders::Encoders(ParamStore& store, const EncoderConfig& cfg,
                   int vocab_total_ids, Rng& rng)
    : store_(store), cfg_(cfg) {
    if (cfg.channels < 1 || cfg.patch < 1 || cfg.image_h < cfg.patch ||
        cfg.image_w < cfg.patch || cfg.max_tokens < 1) {
        throw ConfigError("invalid encoder configuration");
    }
    if (cfg.image_h % cfg.patch != 0 || cfg.image_w % cfg.patch != 0) {
        throw ConfigError("image resolution must be divisible by the patch size");
    }
    if (vocab_total_ids < 2) throw ConfigError("vocabulary must include the reserved ids");
    const int c = cfg.channels;
    const int patch_dim = cfg.patch * cfg.patch * 3;
    const int positions = grid_h() * grid_w();

    create_linear(store, "img.proj", patch_dim, c, rng);
    store.create("img.pos", {positions, c}, positions, c, rng);
    create_linear(store, "img.block1_l1", c, c, rng);
    create_linear(store, "img.block1_l2", c, c, rng);
    create_linear(store, "img.mix1", c, c, rng);
    create_linear(store, "img.block2_l1", c, c, rng);
    create_linear(store, "img.block2_l2", c, c, rng);
    create_linear(store, "img.mix2", c, c, rng);

    // Constant row-stochastic 3x3 neighborhood averaging over the patch grid.
    const int gh = grid_h(), gw = grid_w();
    std::vector<double> avg(static_cast<std::size_t>(positions) * positions, 0.0);
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            const int row = y * gw + x;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && ny < gh && nx >= 0 && nx < gw) ++cnt;
                }
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && ny < gh && nx >= 0 && nx < gw)
                        avg[static_cast<std::size_t>(row) * positions + ny * gw + nx] =
                            1.0 / cnt;
                }
        }
    }
    neighbor_avg_ = Tensor::from_data({positions, positions}, std::move(avg));

    // Unit-scale fan arguments: lookup rows act as standalone word vectors, not
    // as a fan-in layer, and the attention logits downstream need the word
    // variance to be visible above the positional signal from the first step.
    store.create("txt.tok_emb", {vocab_total_ids, c}, 3, 3, rng);
    store.create("txt.pos", {cfg.max_tokens, c}, cfg.max_tokens, c, rng);
    store.create("txt.attn_q", {c, c}, c, c, rng);
    store.create("txt.attn_k", {c, c}, c, c, rng);
    store.create("txt.attn_v", {c, c}, c, c, rng);

    create_linear(store, "pix.l1", c, c, rng);
    create_linear(store, "pix.l2", c, c, rng);
}

Tensor Encoders::patch_embed(const Image& img) const {
    const int p = cfg_.patch;
    if (img.h % p != 0 || img.w % p != 0) {
        throw InputError("image resolution " + std::to_string(img.h) + "x" +
                         std::to_string(img.w) + " is not divisible by the patch size " +
                         std::to_string(p));
    }
    if (img.h != cfg_.image_h || img.w != cfg_.image_w) {
        throw InputError("image resolution " + std::to_string(img.h) + "x" +
                         std::to_string(img.w) + " does not match the encoder (" +
                         std::to_string(cfg_.image_h) + "x" +
                         std::to_string(cfg_.image_w) + ")");
    }
    const int gh = grid_h(), gw = grid_w();
    const int patch_dim = p * p * 3;
    Tensor x = Tensor::zeros({gh * gw, patch_dim});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            const int row = py * gw + px;
            for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                    const unsigned char* rgb = img.px(py * p + dy, px * p + dx);
                    for (int ch = 0; ch < 3; ++ch) {
                        x.at(row, (dy * p + dx) * 3 + ch) = rgb[ch] / 255.0;
                    }
                }
            }
        }
    }
    Tensor proj = linear(x, store_.at("img.proj.w"), store_.at("img.proj.b"));
    return add(proj, store_.at("img.pos"));
}

Tensor Encoders::neighbor_mix(const Tensor& x, const std::string& prefix) const {
    Tensor pooled = matmul(neighbor_avg_, x);
    Tensor y = gelu(linear(pooled, store_.at(prefix + ".w"), store_.at(prefix + ".b")));
    return add(x, y);
}

ImageFeature Encoders::encode_image(const Image& img) const {
    Tensor x = patch_embed(img);
    x = residual_mlp_block(store_, "img.block1_l", x);
    x = neighbor_mix(x, "img.mix1");
    x = residual_mlp_block(store_, "img.block2_l", x);
    x = neighbor_mix(x, "img.mix2");
    return ImageFeature{x, grid_h(), grid_w(), cfg_.channels};
}

TextFeature Encoders::encode_text(const std::string& expression,
                                  const Vocabulary& vocab) const {
    std::vector<std::string> toks = tokenize(expression);
    if (toks.empty()) throw InputError("expression has no tokens: \"" + expression + "\"");
    if (static_cast<int>(toks.size()) > cfg_.max_tokens) {
        throw InputError("expression has " + std::to_string(toks.size()) +
                         " tokens; the encoder supports at most " +
                         std::to_string(cfg_.max_tokens));
    }
    std::vector<int> ids, positions;
    for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
        ids.push_back(vocab.id_of(toks[i]));
        positions.push_back(i);
    }
    Tensor e = add(gather_rows(store_.at("txt.tok_emb"), ids),
                   gather_rows(store_.at("txt.pos"), positions));
    Tensor q = matmul(e, store_.at("txt.attn_q"));
    Tensor k = matmul(e, store_.at("txt.attn_k"));
    Tensor v = matmul(e, store_.at("txt.attn_v"));
    Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(cfg_.channels)));
    Tensor out = add(e, matmul(softmax_rows(logits), v));
    return TextFeature{out, ids};
}

MaskFeature Encoders::pixel_decode(const ImageFeature& f) const {
    Tensor h = gelu(linear(f.t, store_.at("pix.l1.w"), store_.at("pix.l1.b")));
    Tensor y = gelu(linear(h, store_.at("pix.l2.w"), store_.at("pix.l2.b")));
    return MaskFeature{add(f.t, y), f.h, f.w};
}

}  // namespace grela
