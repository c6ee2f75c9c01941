#pragma once

#include <string>

#include "grela/image_io.hpp"
#include "grela/rela.hpp"
#include "grela/tensor.hpp"

namespace grela {

// One training/evaluation example: image, expression, full-resolution target
// mask, and the empty-target flag.
struct GresSample {
    Image image;
    std::string expression;
    BinaryMask m_gt;
    bool e_gt = false;
};

// Throws when the flag and the mask disagree (empty flag requires an all-zero
// mask; otherwise at least one foreground pixel).
void validate_sample(const GresSample& sample);

struct LossWeights {
    double mask = 1.0;
    double minimap = 1.0;
    double nt = 1.0;
};

struct LossBreakdown {
    double l_mask = 0.0;
    double l_minimap = 0.0;
    double l_nt = 0.0;
    double total = 0.0;
    LossWeights weights;
    Tensor graph;  // differentiable weighted total; terms with zero weight are absent
};

// Foreground fraction of each cell of a p×p grid over the mask, row-major.
// Cells are near-equal; remainder pixels go to the last row/column.
Tensor minimap_downsample(const BinaryMask& m_gt, int p);

// Binary target at a coarser grid: foreground fraction per cell, then
// thresholded at one half (fraction >= 0.5 -> 1).
Tensor mask_target_grid(const BinaryMask& m_gt, int h, int w);

// Three binary cross-entropy terms: the aggregated mask against the
// grid-downsampled target, the region probabilities against the soft
// minimap, and the no-target score against the flag. A zero weight removes
// its term from both the value and the gradient graph.
LossBreakdown compute_loss(const RelaOutput& out, const GresSample& sample,
                           int p, const LossWeights& weights);

}  // namespace grela
