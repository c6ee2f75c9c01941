#include "grela/rela.hpp"

#include <cmath>

namespace grela {

AggregationMode parse_aggregation_mode(const std::string& s) {
    if (s == "normalized") return AggregationMode::normalized;
    if (s == "literal") return AggregationMode::literal;
    throw ConfigError("unknown aggregation mode: " + s);
}

DecisionMode parse_decision_mode(const std::string& s) {
    if (s == "classifier") return DecisionMode::classifier;
    if (s == "50pix") return DecisionMode::fifty_pix;
    throw ConfigError("unknown decision mode: " + s);
}

std::string to_string(AggregationMode m) {
    return m == AggregationMode::normalized ? "normalized" : "literal";
}

std::string to_string(DecisionMode m) {
    return m == DecisionMode::classifier ? "classifier" : "50pix";
}

RelaModel::RelaModel(ParamStore& store, const RelaConfig& cfg, Rng& rng)
    : store_(store), cfg_(cfg) {
    if (cfg.channels < 1) throw ConfigError("channel count must be positive");
    if (cfg.p < 1) throw ConfigError("region grid side must be positive");
    if (cfg.disable_region_att && cfg.disable_language_att && !cfg.baseline_fusion) {
        throw ConfigError(
            "both attention terms are disabled and no baseline fusion is "
            "selected; the fusion stage would reduce to a plain MLP");
    }
    const int c = cfg.channels;
    const int p2 = cfg.p * cfg.p;

    store.create("queries.q_r", {p2, c}, p2, c, rng);

    store.create("ria.w_ik", {c, c}, c, c, rng);
    store.create("ria.w_iv", {c, c}, c, c, rng);
    store.create("ria.filter.w", {c, c}, c, c, rng);
    store.create_zeros("ria.filter.b", {c});

    store.create("rla.self_q", {c, c}, c, c, rng);
    store.create("rla.self_k", {c, c}, c, c, rng);
    store.create("rla.self_v", {c, c}, c, c, rng);
    store.create("rla.w_lq", {c, c}, c, c, rng);
    store.create("rla.w_lk", {c, c}, c, c, rng);
    store.create("rla.fuse_l1.w", {c, c}, c, c, rng);
    store.create_zeros("rla.fuse_l1.b", {c});
    store.create("rla.fuse_l2.w", {c, c}, c, c, rng);
    store.create_zeros("rla.fuse_l2.b", {c});

    store.create("heads.minimap.l1.w", {c, c}, c, c, rng);
    store.create_zeros("heads.minimap.l1.b", {c});
    store.create("heads.minimap.l2.w", {c, 1}, c, 1, rng);
    store.create_zeros("heads.minimap.l2.b", {1});
    store.create("heads.nt.l1.w", {c, c}, c, c, rng);
    store.create_zeros("heads.nt.l1.b", {c});
    store.create("heads.nt.l2.w", {c, 1}, c, 1, rng);
    store.create_zeros("heads.nt.l2.b", {1});
}

Tensor RelaModel::region_attention(const ImageFeature& f_i) const {
    if (f_i.t.ndim() != 2 || f_i.t.shape[1] != cfg_.channels) {
        throw DimError("image feature " + f_i.t.shape_str() + " does not have " +
                       std::to_string(cfg_.channels) + " channels");
    }
    Tensor keys = gelu(matmul(f_i.t, store_.at("ria.w_ik")));
    Tensor logits = matmul(store_.at("queries.q_r"), transpose(keys));
    return softmax_rows(logits);  // deliberately unscaled logits
}

Tensor RelaModel::pooling_matrix(int h, int w) const {
    const int p = cfg_.p;
    std::vector<int> row_b = grid_cell_bounds(h, p);
    std::vector<int> col_b = grid_cell_bounds(w, p);
    Tensor m = Tensor::zeros({p * p, h * w});
    for (int ry = 0; ry < p; ++ry) {
        for (int rx = 0; rx < p; ++rx) {
            const int region = ry * p + rx;
            const long cell =
                static_cast<long>(row_b[ry + 1] - row_b[ry]) * (col_b[rx + 1] - col_b[rx]);
            const double weight = 1.0 / static_cast<double>(cell);
            for (int y = row_b[ry]; y < row_b[ry + 1]; ++y)
                for (int x = col_b[rx]; x < col_b[rx + 1]; ++x)
                    m.at(region, y * w + x) = weight;
        }
    }
    return m;
}

Tensor RelaModel::collect_regions(const Tensor& a_ri, const ImageFeature& f_i) const {
    return matmul(a_ri, gelu(matmul(f_i.t, store_.at("ria.w_iv"))));
}

Tensor RelaModel::region_filter(const Tensor& f_r_prime) const {
    return linear(f_r_prime, store_.at("ria.filter.w"), store_.at("ria.filter.b"));
}

Tensor RelaModel::region_self_attention(const Tensor& f_r_prime) const {
    Tensor q = matmul(f_r_prime, store_.at("rla.self_q"));
    Tensor k = matmul(f_r_prime, store_.at("rla.self_k"));
    Tensor v = matmul(f_r_prime, store_.at("rla.self_v"));
    Tensor logits = scale(matmul(q, transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(cfg_.channels)));
    return matmul(softmax_rows(logits), v);
}

std::pair<Tensor, Tensor> RelaModel::language_attention(const Tensor& f_r_prime,
                                                        const TextFeature& f_t) const {
    if (f_t.t.ndim() != 2 || f_t.t.shape[1] != cfg_.channels) {
        throw DimError("text feature " + f_t.t.shape_str() + " does not have " +
                       std::to_string(cfg_.channels) + " channels");
    }
    Tensor q = gelu(matmul(f_r_prime, store_.at("rla.w_lq")));
    Tensor k = gelu(matmul(f_t.t, store_.at("rla.w_lk")));
    Tensor a_l = softmax_rows(matmul(q, transpose(k)));  // unscaled logits
    Tensor f_r2 = matmul(a_l, f_t.t);  // word features enter unprojected
    return {a_l, f_r2};
}

Tensor RelaModel::fuse(const Tensor& base, const Tensor& from_regions,
                       const Tensor& from_words) const {
    Tensor s = add(add(base, from_regions), from_words);
    Tensor h = gelu(linear(s, store_.at("rla.fuse_l1.w"), store_.at("rla.fuse_l1.b")));
    return linear(h, store_.at("rla.fuse_l2.w"), store_.at("rla.fuse_l2.b"));
}

Tensor RelaModel::baseline_fuse(const Tensor& f_r_prime, const TextFeature& f_t) const {
    Tensor mean_words = reshape(mean_rows(f_t.t), {cfg_.channels});
    Tensor s = mul_row_broadcast(f_r_prime, mean_words);
    Tensor h = gelu(linear(s, store_.at("rla.fuse_l1.w"), store_.at("rla.fuse_l1.b")));
    return linear(h, store_.at("rla.fuse_l2.w"), store_.at("rla.fuse_l2.b"));
}

Tensor RelaModel::region_masks(const Tensor& f_f, const MaskFeature& f_m) const {
    if (f_m.t.ndim() != 2 || f_m.t.shape[1] != cfg_.channels) {
        throw DimError("mask feature " + f_m.t.shape_str() + " does not have " +
                       std::to_string(cfg_.channels) + " channels");
    }
    return sigmoid(matmul(f_f, transpose(f_m.t)));
}

// Both heads use a hidden layer: the fused features carry attention-blended
// word content, and a purely linear readout of a convex blend cannot score
// conjunctions of several word cues (its score is always the average of the
// single-cue scores).
Tensor RelaModel::minimap_scores(const Tensor& f_r) const {
    Tensor h = gelu(linear(f_r, store_.at("heads.minimap.l1.w"), store_.at("heads.minimap.l1.b")));
    Tensor s = linear(h, store_.at("heads.minimap.l2.w"), store_.at("heads.minimap.l2.b"));
    return reshape(sigmoid(s), {region_count()});
}

Tensor RelaModel::no_target_score(const Tensor& f_r) const {
    Tensor pooled = mean_rows(f_r);  // order-independent column means
    Tensor h = gelu(linear(pooled, store_.at("heads.nt.l1.w"), store_.at("heads.nt.l1.b")));
    Tensor s = linear(h, store_.at("heads.nt.l2.w"), store_.at("heads.nt.l2.b"));
    return reshape(sigmoid(s), {1});
}

Tensor RelaModel::aggregate(const Tensor& x_r, const Tensor& m_r) const {
    const int p2 = region_count();
    if (x_r.ndim() != 1 || x_r.shape[0] != p2) {
        throw DimError("region weights " + x_r.shape_str() + " do not match " +
                       std::to_string(p2) + " regions");
    }
    if (m_r.ndim() != 2 || m_r.shape[0] != p2) {
        throw DimError("region masks " + m_r.shape_str() + " do not match " +
                       std::to_string(p2) + " regions");
    }
    for (std::size_t i = 0; i < x_r.size(); ++i) {
        if (x_r.at(i) < 0.0) throw ContractError("negative region weight in aggregation");
    }
    const int hw = m_r.shape[1];
    if (cfg_.aggregation == AggregationMode::normalized) {
        Tensor weights = reshape(normalize_sum(x_r, 1e-8), {1, p2});
        return reshape(matmul(weights, m_r), {hw});
    }
    Tensor summed = matmul(reshape(x_r, {1, p2}), m_r);
    return reshape(clamp_max(summed, 1.0), {hw});
}

RelaOutput RelaModel::forward(const ImageFeature& f_i, const TextFeature& f_t,
                              const MaskFeature& f_m) const {
    RelaOutput out;
    out.h = f_m.h;
    out.w = f_m.w;

    out.a_ri = cfg_.hard_split_pooling ? pooling_matrix(f_i.h, f_i.w)
                                       : region_attention(f_i);
    Tensor f_r_prime = collect_regions(out.a_ri, f_i);
    Tensor f_f = region_filter(f_r_prime);

    Tensor f_r;
    if (cfg_.baseline_fusion) {
        f_r = baseline_fuse(f_r_prime, f_t);
    } else {
        Tensor zero = Tensor::zeros({region_count(), cfg_.channels});
        Tensor from_regions = cfg_.disable_region_att ? zero : region_self_attention(f_r_prime);
        Tensor from_words = zero;
        if (!cfg_.disable_language_att) {
            auto [a_l, f_r2] = language_attention(f_r_prime, f_t);
            out.a_l = a_l;
            from_words = f_r2;
        }
        f_r = fuse(f_r_prime, from_regions, from_words);
    }

    out.x_r = minimap_scores(f_r);
    out.e = no_target_score(f_r);
    out.m_r = region_masks(f_f, f_m);
    out.m = aggregate(out.x_r, out.m_r);
    return out;
}

Prediction predict(const RelaOutput& out, int image_h, int image_w, DecisionMode mode) {
    const int hw = out.h * out.w;
    if (out.m.ndim() != 1 || out.m.shape[0] != hw) {
        throw ContractError("soft mask shape does not match the stated feature grid");
    }
    auto binarized = [&] {
        BinaryMask feat = BinaryMask::zeros(out.h, out.w);
        for (int i = 0; i < hw; ++i)
            feat.fg[static_cast<std::size_t>(i)] = out.m.at(static_cast<std::size_t>(i)) >= 0.5 ? 1 : 0;
        return nn_resize(feat, image_h, image_w);
    };

    if (mode == DecisionMode::classifier) {
        if (out.e.item() >= 0.5) {
            return Prediction{BinaryMask::zeros(image_h, image_w), true};
        }
        return Prediction{binarized(), false};
    }
    BinaryMask up = binarized();
    if (up.count() < 50) {
        return Prediction{BinaryMask::zeros(image_h, image_w), true};
    }
    return Prediction{up, false};
}

}  // namespace grela
