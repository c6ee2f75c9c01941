#include "grela/objective.hpp"

#include <vector>

namespace grela {

void validate_sample(const GresSample& sample) {
    const bool empty = sample.m_gt.empty_mask();
    if (sample.e_gt && !empty) {
        throw InputError("sample flagged as empty-target but its mask has foreground");
    }
    if (!sample.e_gt && empty) {
        throw InputError("sample flagged as having targets but its mask is all zero");
    }
    if (sample.image.h != sample.m_gt.h || sample.image.w != sample.m_gt.w) {
        throw InputError("image and mask resolutions differ");
    }
}

Tensor minimap_downsample(const BinaryMask& m_gt, int p) {
    if (p < 1) throw InputError("minimap grid side must be positive");
    std::vector<double> fractions = grid_foreground_fractions(m_gt, p, p);
    return Tensor::from_data({p * p}, std::move(fractions));
}

Tensor mask_target_grid(const BinaryMask& m_gt, int h, int w) {
    std::vector<double> fractions = grid_foreground_fractions(m_gt, h, w);
    for (double& f : fractions) f = f >= 0.5 ? 1.0 : 0.0;
    return Tensor::from_data({h * w}, std::move(fractions));
}

LossBreakdown compute_loss(const RelaOutput& out, const GresSample& sample,
                           int p, const LossWeights& weights) {
    validate_sample(sample);
    if (out.h < 1 || out.w < 1) throw DimError("output carries no feature-grid resolution");
    if (out.m.ndim() != 1 || out.m.shape[0] != out.h * out.w) {
        throw DimError("soft mask " + out.m.shape_str() + " does not match the " +
                       std::to_string(out.h) + "x" + std::to_string(out.w) + " grid");
    }
    if (out.x_r.ndim() != 1 || out.x_r.shape[0] != p * p) {
        throw DimError("region probabilities " + out.x_r.shape_str() +
                       " do not match a " + std::to_string(p) + "x" +
                       std::to_string(p) + " minimap");
    }

    LossBreakdown lb;
    lb.weights = weights;
    Tensor total;
    auto accumulate = [&total](const Tensor& term, double weight) {
        Tensor scaled = weight == 1.0 ? term : scale(term, weight);
        total = total.defined() ? add(total, scaled) : scaled;
    };

    if (weights.mask != 0.0) {
        Tensor term = bce(out.m, mask_target_grid(sample.m_gt, out.h, out.w));
        lb.l_mask = term.item();
        accumulate(term, weights.mask);
    }
    if (weights.minimap != 0.0) {
        Tensor term = bce(out.x_r, minimap_downsample(sample.m_gt, p));
        lb.l_minimap = term.item();
        accumulate(term, weights.minimap);
    }
    if (weights.nt != 0.0) {
        Tensor target = Tensor::from_data({1}, {sample.e_gt ? 1.0 : 0.0});
        Tensor term = bce(out.e, target);
        lb.l_nt = term.item();
        accumulate(term, weights.nt);
    }
    lb.graph = total.defined() ? total : Tensor::from_data({1}, {0.0});
    lb.total = lb.graph.item();
    return lb;
}

}  // namespace grela
