#pragma once

#include <string>
#include <utility>

#include "grela/common.hpp"
#include "grela/encoders.hpp"
#include "grela/image_io.hpp"
#include "grela/params.hpp"
#include "grela/tensor.hpp"

namespace grela {

// How per-region masks are combined into the final soft mask.
enum class AggregationMode {
    normalized,  // convex combination: weights divided by their sum
    literal      // plain weighted sum, clamped at 1
};

// How the final binary mask and the no-target verdict are produced.
enum class DecisionMode {
    classifier,  // trust the no-target score at 0.5
    fifty_pix    // ignore the score; clear masks with fewer than 50 positive pixels
};

AggregationMode parse_aggregation_mode(const std::string& s);
DecisionMode parse_decision_mode(const std::string& s);
std::string to_string(AggregationMode m);
std::string to_string(DecisionMode m);

struct RelaConfig {
    int channels = 32;  // C
    int p = 4;          // region grid side; p*p learned region queries
    AggregationMode aggregation = AggregationMode::normalized;

    // Variant switches. All parameters exist in every variant so checkpoints
    // stay interchangeable; switches only reroute the forward pass.
    bool hard_split_pooling = false;    // fixed grid average pooling instead of learned region attention
    bool disable_region_att = false;    // drop the region-region self-attention term
    bool disable_language_att = false;  // drop the word-region cross-attention term
    bool baseline_fusion = false;       // pointwise product with the mean word feature instead of attention fusion
};

struct RelaOutput {
    Tensor m;     // [H*W] soft mask in [0,1]
    Tensor x_r;   // [p²] per-region target probabilities
    Tensor e;     // [1] no-target probability
    Tensor m_r;   // [p² x H*W] per-region soft masks
    Tensor a_ri;  // [p² x H*W] region-over-position attention (row-stochastic)
    Tensor a_l;   // [p² x N_t] region-over-word attention; undefined when that path is off
    int h = 0, w = 0;  // feature-grid resolution of m and m_r columns
};

struct Prediction {
    BinaryMask mask;  // at full image resolution
    bool is_no_target = false;
};

// Region-query attention model: learned queries attend over image positions
// to collect region features, a language-conditioned fusion refines them, and
// per-region filters dotted with pixel features emit region masks that are
// aggregated under per-region target probabilities.
class RelaModel {
public:
    RelaModel(ParamStore& store, const RelaConfig& cfg, Rng& rng);

    RelaOutput forward(const ImageFeature& f_i, const TextFeature& f_t,
                       const MaskFeature& f_m) const;

    // Pipeline stages, exposed so each can be validated in isolation.
    Tensor region_attention(const ImageFeature& f_i) const;         // [p² x H*W]
    Tensor pooling_matrix(int h, int w) const;                      // fixed row-stochastic grid pooling
    Tensor collect_regions(const Tensor& a_ri, const ImageFeature& f_i) const;  // [p² x C]
    Tensor region_filter(const Tensor& f_r_prime) const;            // [p² x C]
    Tensor region_self_attention(const Tensor& f_r_prime) const;    // [p² x C]
    std::pair<Tensor, Tensor> language_attention(const Tensor& f_r_prime,
                                                 const TextFeature& f_t) const;  // (a_l, f_r2)
    Tensor fuse(const Tensor& base, const Tensor& from_regions,
                const Tensor& from_words) const;                    // sum then 2-layer MLP
    Tensor baseline_fuse(const Tensor& f_r_prime, const TextFeature& f_t) const;
    Tensor region_masks(const Tensor& f_f, const MaskFeature& f_m) const;  // [p² x H*W]
    Tensor minimap_scores(const Tensor& f_r) const;                 // [p²]
    Tensor no_target_score(const Tensor& f_r) const;                // [1]
    Tensor aggregate(const Tensor& x_r, const Tensor& m_r) const;   // [H*W]

    const RelaConfig& config() const { return cfg_; }
    int region_count() const { return cfg_.p * cfg_.p; }

private:
    ParamStore& store_;
    RelaConfig cfg_;
};

// Final decision: binarize at 0.5, nearest-neighbor upsample to the image
// resolution, and resolve the no-target verdict per the decision mode.
Prediction predict(const RelaOutput& out, int image_h, int image_w, DecisionMode mode);

}  // namespace grela
