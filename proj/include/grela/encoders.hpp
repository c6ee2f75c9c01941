#pragma once

#include <map>
#include <string>
#include <vector>

#include "grela/common.hpp"
#include "grela/image_io.hpp"
#include "grela/params.hpp"
#include "grela/tensor.hpp"

namespace grela {

// lowercase, strip punctuation, split on whitespace
std::vector<std::string> tokenize(const std::string& text);

// Token table with two reserved ids: 0 padding, 1 unknown. File format is
// one token per line; id = line number + 2.
class Vocabulary {
public:
    static Vocabulary build(const std::vector<std::string>& corpus);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int id_of(const std::string& token) const;
    int total_ids() const { return static_cast<int>(tokens_.size()) + 2; }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;  // sorted
    std::map<std::string, int> ids_;
};

struct EncoderConfig {
    int channels = 32;  // C
    int patch = 4;
    int image_h = 48;  // expected input resolution; fixes the position table
    int image_w = 48;
    int max_tokens = 16;
};

struct ImageFeature {
    Tensor t;  // (H*W) x C
    int h = 0, w = 0, c = 0;
};

struct TextFeature {
    Tensor t;  // N_t x C
    std::vector<int> token_ids;
};

struct MaskFeature {
    Tensor t;  // (H*W) x C
    int h = 0, w = 0;
};

// Image encoder, text encoder, and pixel decoder over a shared parameter
// store. Parameters are created at construction under the "img.", "txt.",
// and "pix." prefixes; loading a checkpoint afterwards replaces the values.
class Encoders {
public:
    Encoders(ParamStore& store, const EncoderConfig& cfg, int vocab_total_ids,
             Rng& rng);

    // patch projection + positional embedding, before the residual blocks
    Tensor patch_embed(const Image& img) const;
    ImageFeature encode_image(const Image& img) const;
    TextFeature encode_text(const std::string& expression, const Vocabulary& vocab) const;
    MaskFeature pixel_decode(const ImageFeature& f) const;

    const EncoderConfig& config() const { return cfg_; }
    int grid_h() const { return cfg_.image_h / cfg_.patch; }
    int grid_w() const { return cfg_.image_w / cfg_.patch; }

private:
    // Residual channel projection of the 3x3 neighborhood average. Patch
    // features alone cannot tell shapes apart (every 4x4 fragment of a large
    // object looks alike); mixing widens the receptive field enough for
    // shape-dependent signatures to form.
    Tensor neighbor_mix(const Tensor& x, const std::string& prefix) const;

    ParamStore& store_;
    EncoderConfig cfg_;
    Tensor neighbor_avg_;  // [HW, HW] constant row-stochastic 3x3 averaging
};

}  // namespace grela
