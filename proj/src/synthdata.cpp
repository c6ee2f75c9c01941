#include "grela/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace grela {

namespace {

constexpr Color kColors[] = {Color::red,    Color::green, Color::blue,
                             Color::yellow, Color::white, Color::black};
constexpr Shape kShapes[] = {Shape::circle, Shape::square, Shape::triangle};
constexpr Spatial kSides[] = {Spatial::left, Spatial::right, Spatial::top,
                              Spatial::bottom};
constexpr Spatial kFars[] = {Spatial::far_left, Spatial::far_right};
constexpr Rel kRels[] = {Rel::left_of, Rel::right_of, Rel::above, Rel::below};

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb color_rgb(Color c) {
    switch (c) {
        case Color::red: return {255, 0, 0};
        case Color::green: return {0, 255, 0};
        case Color::blue: return {0, 0, 255};
        case Color::yellow: return {255, 255, 0};
        case Color::white: return {255, 255, 255};
        case Color::black: return {0, 0, 0};
    }
    throw ContractError("unknown color");
}

std::uint32_t bits_of(const std::vector<int>& ids) {
    std::uint32_t b = 0;
    for (int id : ids) b |= 1u << id;
    return b;
}

std::string spatial_phrase(Spatial s) {
    switch (s) {
        case Spatial::none: return "";
        case Spatial::left: return " on the left";
        case Spatial::right: return " on the right";
        case Spatial::top: return " at the top";
        case Spatial::bottom: return " at the bottom";
        case Spatial::far_left: return " on the far left";
        case Spatial::far_right: return " on the far right";
    }
    throw ContractError("unknown spatial");
}

std::string descriptor_phrase(const Descriptor& d, bool plural = false) {
    std::string out = "the ";
    if (d.color) out += color_word(*d.color) + " ";
    if (d.shape)
        out += shape_word(*d.shape, plural);
    else
        out += plural ? "objects" : "object";
    out += spatial_phrase(d.spatial);
    return out;
}

std::string count_word(int k) {
    switch (k) {
        case 2: return "two";
        case 3: return "three";
        case 4: return "four";
        case 5: return "five";
        case 6: return "six";
    }
    throw ContractError("count word out of range: " + std::to_string(k));
}

std::string rel_word(Rel r) {
    switch (r) {
        case Rel::left_of: return "left of";
        case Rel::right_of: return "right of";
        case Rel::above: return "above";
        case Rel::below: return "below";
        case Rel::none: break;
    }
    throw ContractError("unknown relation");
}

std::string text_of(const ExprSem& sem) {
    switch (sem.kind) {
        case ExprKind::single:
        case ExprKind::no_target_absent:
        case ExprKind::no_target_deceptive:
            return descriptor_phrase(sem.head);
        case ExprKind::counting: {
            std::string out = "the " + count_word(sem.count) + " ";
            if (sem.head.color) out += color_word(*sem.head.color) + " ";
            out += sem.head.shape ? shape_word(*sem.head.shape, true) : "objects";
            out += spatial_phrase(sem.head.spatial);
            return out;
        }
        case ExprKind::shared_attr:
            return descriptor_phrase(sem.head, /*plural=*/true);
        case ExprKind::compound_and:
            return descriptor_phrase(sem.head) + " and " + descriptor_phrase(sem.second);
        case ExprKind::compound_except:
            return "everything except " + descriptor_phrase(sem.head);
        case ExprKind::relational:
            return descriptor_phrase(sem.head) + " " + rel_word(sem.rel) + " " +
                   descriptor_phrase(sem.second);
    }
    throw ContractError("unknown expression kind");
}

}  // namespace

std::string shape_word(Shape s, bool plural) {
    std::string w;
    switch (s) {
        case Shape::circle: w = "circle"; break;
        case Shape::square: w = "square"; break;
        case Shape::triangle: w = "triangle"; break;
    }
    if (plural) w += "s";
    return w;
}

std::string color_word(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::yellow: return "yellow";
        case Color::white: return "white";
        case Color::black: return "black";
    }
    throw ContractError("unknown color");
}

std::string kind_name(ExprKind k) {
    switch (k) {
        case ExprKind::single: return "single";
        case ExprKind::counting: return "counting";
        case ExprKind::compound_and: return "compound_and";
        case ExprKind::compound_except: return "compound_except";
        case ExprKind::shared_attr: return "shared_attr";
        case ExprKind::relational: return "relational";
        case ExprKind::no_target_absent: return "no_target_absent";
        case ExprKind::no_target_deceptive: return "no_target_deceptive";
    }
    throw ContractError("unknown expression kind");
}

bool object_contains(const ObjectSpec& o, int x, int y) {
    int dx = x - o.cx;
    int dy = y - o.cy;
    switch (o.shape) {
        case Shape::circle:
            return dx * dx + dy * dy <= o.size * o.size;
        case Shape::square:
            return std::abs(dx) <= o.size && std::abs(dy) <= o.size;
        case Shape::triangle: {
            // Apex at (cx, cy-size), base along y = cy+size.
            int down = y - (o.cy - o.size);
            return down >= 2 * std::abs(dx) && y <= o.cy + o.size;
        }
    }
    throw ContractError("unknown shape");
}

BinaryMask object_mask(const Scene& scene, const ObjectSpec& o) {
    BinaryMask m = BinaryMask::zeros(scene.h, scene.w);
    for (int y = std::max(0, o.cy - o.size); y <= std::min(scene.h - 1, o.cy + o.size); ++y)
        for (int x = std::max(0, o.cx - o.size); x <= std::min(scene.w - 1, o.cx + o.size); ++x)
            if (object_contains(o, x, y)) m.at(y, x) = 1;
    return m;
}

BinaryMask rasterize_mask(const Scene& scene, const std::vector<int>& target_ids) {
    BinaryMask m = BinaryMask::zeros(scene.h, scene.w);
    for (int id : target_ids) {
        if (id < 0 || id >= static_cast<int>(scene.objects.size()))
            throw InputError("rasterize_mask: unknown object id " + std::to_string(id));
        BinaryMask om = object_mask(scene, scene.objects[static_cast<std::size_t>(id)]);
        for (std::size_t i = 0; i < m.fg.size(); ++i) m.fg[i] |= om.fg[i];
    }
    return m;
}

Image render(const Scene& scene) {
    Image img = Image::filled(scene.h, scene.w, 128, 128, 128);
    for (const ObjectSpec& o : scene.objects) {
        Rgb c = color_rgb(o.color);
        for (int y = std::max(0, o.cy - o.size); y <= std::min(scene.h - 1, o.cy + o.size); ++y)
            for (int x = std::max(0, o.cx - o.size); x <= std::min(scene.w - 1, o.cx + o.size); ++x)
                if (object_contains(o, x, y)) {
                    std::uint8_t* p = img.px(y, x);
                    p[0] = c.r;
                    p[1] = c.g;
                    p[2] = c.b;
                }
    }
    return img;
}

std::vector<int> match_descriptor(const Scene& scene, const Descriptor& d) {
    std::vector<int> base;
    for (const ObjectSpec& o : scene.objects) {
        if (d.color && o.color != *d.color) continue;
        if (d.shape && o.shape != *d.shape) continue;
        base.push_back(o.id);
    }
    auto center = [&](int id) -> const ObjectSpec& {
        return scene.objects[static_cast<std::size_t>(id)];
    };
    switch (d.spatial) {
        case Spatial::none:
            return base;
        case Spatial::left: {
            std::vector<int> out;
            for (int id : base)
                if (2 * center(id).cx < scene.w) out.push_back(id);
            return out;
        }
        case Spatial::right: {
            std::vector<int> out;
            for (int id : base)
                if (2 * center(id).cx >= scene.w) out.push_back(id);
            return out;
        }
        case Spatial::top: {
            std::vector<int> out;
            for (int id : base)
                if (2 * center(id).cy < scene.h) out.push_back(id);
            return out;
        }
        case Spatial::bottom: {
            std::vector<int> out;
            for (int id : base)
                if (2 * center(id).cy >= scene.h) out.push_back(id);
            return out;
        }
        case Spatial::far_left: {
            if (base.empty()) return {};
            int best = base[0];
            for (int id : base)
                if (center(id).cx < center(best).cx) best = id;
            return {best};
        }
        case Spatial::far_right: {
            if (base.empty()) return {};
            int best = base[0];
            for (int id : base)
                if (center(id).cx > center(best).cx) best = id;
            return {best};
        }
    }
    throw ContractError("unknown spatial");
}

bool rel_holds(const ObjectSpec& o, Rel rel, const ObjectSpec& anchor) {
    switch (rel) {
        case Rel::left_of: return o.cx < anchor.cx;
        case Rel::right_of: return o.cx > anchor.cx;
        case Rel::above: return o.cy < anchor.cy;
        case Rel::below: return o.cy > anchor.cy;
        case Rel::none: break;
    }
    throw ContractError("relation unset");
}

bool satisfies(const Scene& scene, const ExprSem& sem, std::uint32_t subset_bits) {
    int n = static_cast<int>(scene.objects.size());
    std::uint32_t all = n >= 32 ? ~0u : (1u << n) - 1u;
    if (subset_bits & ~all)
        throw ContractError("subset references objects beyond the scene");
    switch (sem.kind) {
        case ExprKind::single:
        case ExprKind::no_target_absent:
        case ExprKind::no_target_deceptive: {
            std::uint32_t m = bits_of(match_descriptor(scene, sem.head));
            return std::popcount(subset_bits) == 1 && subset_bits == m;
        }
        case ExprKind::counting: {
            std::uint32_t m = bits_of(match_descriptor(scene, sem.head));
            return sem.count >= 2 && std::popcount(subset_bits) == sem.count &&
                   subset_bits == m;
        }
        case ExprKind::shared_attr: {
            std::uint32_t m = bits_of(match_descriptor(scene, sem.head));
            return std::popcount(subset_bits) >= 2 && subset_bits == m;
        }
        case ExprKind::compound_and: {
            std::uint32_t m1 = bits_of(match_descriptor(scene, sem.head));
            std::uint32_t m2 = bits_of(match_descriptor(scene, sem.second));
            return std::popcount(m1) == 1 && std::popcount(m2) == 1 && m1 != m2 &&
                   subset_bits == (m1 | m2);
        }
        case ExprKind::compound_except: {
            std::uint32_t m1 = bits_of(match_descriptor(scene, sem.head));
            return n >= 2 && std::popcount(m1) == 1 && subset_bits == (all ^ m1);
        }
        case ExprKind::relational: {
            std::uint32_t m2 = bits_of(match_descriptor(scene, sem.second));
            if (std::popcount(m2) != 1) return false;
            const ObjectSpec& anchor =
                scene.objects[static_cast<std::size_t>(std::countr_zero(m2))];
            std::uint32_t sel = 0;
            for (int id : match_descriptor(scene, sem.head))
                if (rel_holds(scene.objects[static_cast<std::size_t>(id)], sem.rel, anchor))
                    sel |= 1u << id;
            return std::popcount(sel) == 1 && subset_bits == sel;
        }
    }
    throw ContractError("unknown expression kind");
}

std::vector<std::uint32_t> satisfying_subsets(const Scene& scene, const ExprSem& sem) {
    int n = static_cast<int>(scene.objects.size());
    if (n > 20) throw ContractError("subset enumeration over too many objects");
    std::vector<std::uint32_t> out;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits)
        if (satisfies(scene, sem, bits)) out.push_back(bits);
    return out;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    if (cfg.min_objects < 2 || cfg.max_objects > 6 || cfg.min_objects > cfg.max_objects)
        throw ConfigError("object count range must lie within [2, 6]");
    if (cfg.min_size < 2 || cfg.min_size > cfg.max_size)
        throw ConfigError("object size range invalid");
    if (cfg.canvas < 2 * cfg.max_size + 2)
        throw ConfigError("canvas too small for the largest object");

    Rng rng(seed);
    int n = cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
    Scene scene;
    scene.h = scene.w = cfg.canvas;
    scene.seed = seed;

    int attempts = 0;
    while (static_cast<int>(scene.objects.size()) < n) {
        if (++attempts > 1000)
            throw GenerationError("placement failed after 1000 attempts (seed " +
                                  std::to_string(seed) + ")");
        ObjectSpec o;
        o.id = static_cast<int>(scene.objects.size());
        o.shape = kShapes[rng.uniform_int(3)];
        o.color = kColors[rng.uniform_int(6)];
        o.size = cfg.min_size + rng.uniform_int(cfg.max_size - cfg.min_size + 1);
        int lo = o.size, hi = cfg.canvas - 1 - o.size;
        o.cx = lo + rng.uniform_int(hi - lo + 1);
        o.cy = lo + rng.uniform_int(hi - lo + 1);
        bool clear = true;
        for (const ObjectSpec& p : scene.objects) {
            int reach = o.size + p.size + 1;
            if (std::abs(o.cx - p.cx) <= reach && std::abs(o.cy - p.cy) <= reach) {
                clear = false;
                break;
            }
        }
        if (clear) scene.objects.push_back(o);
    }

    std::set<std::pair<int, int>> categories;
    for (const ObjectSpec& o : scene.objects)
        categories.insert({static_cast<int>(o.shape), static_cast<int>(o.color)});
    if (categories.size() < 2)
        throw GenerationError("scene lacks category diversity (seed " +
                              std::to_string(seed) + ")");
    return scene;
}

namespace {

struct Candidate {
    ExprSem sem;
    std::vector<int> targets;
    std::string text_override;  // deceptive donors reuse their text verbatim
};

// True iff exhaustive subset evaluation agrees with the candidate's targets:
// exactly the target subset for referring kinds, no subset at all for
// no-target kinds.
bool verified(const Scene& scene, const Candidate& c) {
    std::vector<std::uint32_t> sats = satisfying_subsets(scene, c.sem);
    if (c.sem.kind == ExprKind::no_target_absent ||
        c.sem.kind == ExprKind::no_target_deceptive)
        return c.targets.empty() && sats.empty();
    return sats.size() == 1 && sats[0] == bits_of(c.targets) && !c.targets.empty();
}

using Tier = std::vector<Candidate>;

void add_single_style(const Scene& scene, ExprKind kind, std::vector<Tier>& tiers) {
    Tier t1, t2, t3, t4, t5, t6, t7;
    for (Color c : kColors)
        for (Shape s : kShapes) {
            Descriptor d{c, s, Spatial::none};
            std::vector<int> m = match_descriptor(scene, d);
            if (m.size() == 1) t1.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
            if (m.size() >= 2) {
                for (Spatial sp : kSides) {
                    Descriptor ds{c, s, sp};
                    std::vector<int> ms = match_descriptor(scene, ds);
                    if (ms.size() == 1)
                        t4.push_back({{kind, ds, {}, Rel::none, 0}, ms, ""});
                }
                for (Spatial sp : kFars) {
                    Descriptor ds{c, s, sp};
                    std::vector<int> ms = match_descriptor(scene, ds);
                    if (ms.size() == 1)
                        t6.push_back({{kind, ds, {}, Rel::none, 0}, ms, ""});
                }
            }
        }
    for (Shape s : kShapes) {
        Descriptor d{std::nullopt, s, Spatial::none};
        std::vector<int> m = match_descriptor(scene, d);
        if (m.size() == 1) t2.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
        if (m.size() >= 2) {
            for (Spatial sp : kSides) {
                Descriptor ds{std::nullopt, s, sp};
                std::vector<int> ms = match_descriptor(scene, ds);
                if (ms.size() == 1)
                    t5.push_back({{kind, ds, {}, Rel::none, 0}, ms, ""});
            }
            for (Spatial sp : kFars) {
                Descriptor ds{std::nullopt, s, sp};
                std::vector<int> ms = match_descriptor(scene, ds);
                if (ms.size() == 1)
                    t7.push_back({{kind, ds, {}, Rel::none, 0}, ms, ""});
            }
        }
    }
    for (Color c : kColors) {
        Descriptor d{c, std::nullopt, Spatial::none};
        std::vector<int> m = match_descriptor(scene, d);
        if (m.size() == 1) t3.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
    }
    tiers.insert(tiers.end(), {t1, t2, t3, t4, t5, t6, t7});
}

// Descriptors matching exactly one object, most specific first; building
// block for compounds, complements, and relational anchors.
std::vector<Candidate> unique_descriptors(const Scene& scene, ExprKind kind) {
    std::vector<Candidate> out;
    for (Color c : kColors)
        for (Shape s : kShapes) {
            Descriptor d{c, s, Spatial::none};
            std::vector<int> m = match_descriptor(scene, d);
            if (m.size() == 1) out.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
        }
    for (Shape s : kShapes) {
        Descriptor d{std::nullopt, s, Spatial::none};
        std::vector<int> m = match_descriptor(scene, d);
        if (m.size() == 1) out.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
    }
    for (Color c : kColors) {
        Descriptor d{c, std::nullopt, Spatial::none};
        std::vector<int> m = match_descriptor(scene, d);
        if (m.size() == 1) out.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
    }
    return out;
}

std::vector<Tier> collect_candidates(const Scene& scene, ExprKind kind,
                                     const std::vector<DonorExpression>& donors) {
    std::vector<Tier> tiers;
    switch (kind) {
        case ExprKind::single:
            add_single_style(scene, kind, tiers);
            break;
        case ExprKind::counting: {
            Tier t1, t2;
            for (Color c : kColors)
                for (Shape s : kShapes) {
                    Descriptor d{c, s, Spatial::none};
                    std::vector<int> m = match_descriptor(scene, d);
                    if (m.size() >= 2 && m.size() <= 6)
                        t1.push_back({{kind, d, {}, Rel::none, static_cast<int>(m.size())}, m, ""});
                }
            for (Shape s : kShapes) {
                Descriptor d{std::nullopt, s, Spatial::none};
                std::vector<int> m = match_descriptor(scene, d);
                if (m.size() >= 2 && m.size() <= 6)
                    t2.push_back({{kind, d, {}, Rel::none, static_cast<int>(m.size())}, m, ""});
            }
            tiers.insert(tiers.end(), {t1, t2});
            break;
        }
        case ExprKind::shared_attr: {
            Tier t1, t2;
            for (Color c : kColors) {
                Descriptor d{c, std::nullopt, Spatial::none};
                std::vector<int> m = match_descriptor(scene, d);
                if (m.size() >= 2) t1.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
            }
            for (Shape s : kShapes) {
                Descriptor d{std::nullopt, s, Spatial::none};
                std::vector<int> m = match_descriptor(scene, d);
                if (m.size() >= 2) t2.push_back({{kind, d, {}, Rel::none, 0}, m, ""});
            }
            tiers.insert(tiers.end(), {t1, t2});
            break;
        }
        case ExprKind::compound_and: {
            std::vector<Candidate> pool = unique_descriptors(scene, kind);
            Tier t;
            for (std::size_t i = 0; i < pool.size(); ++i)
                for (std::size_t j = i + 1; j < pool.size(); ++j) {
                    if (pool[i].targets[0] == pool[j].targets[0]) continue;
                    std::vector<int> ids = {pool[i].targets[0], pool[j].targets[0]};
                    std::sort(ids.begin(), ids.end());
                    t.push_back({{kind, pool[i].sem.head, pool[j].sem.head,
                                  Rel::none, 0},
                                 ids,
                                 ""});
                }
            tiers.push_back(t);
            break;
        }
        case ExprKind::compound_except: {
            if (scene.objects.size() < 2) break;
            Tier t;
            for (const Candidate& u : unique_descriptors(scene, kind)) {
                std::vector<int> rest;
                for (const ObjectSpec& o : scene.objects)
                    if (o.id != u.targets[0]) rest.push_back(o.id);
                t.push_back({{kind, u.sem.head, {}, Rel::none, 0}, rest, ""});
            }
            tiers.push_back(t);
            break;
        }
        case ExprKind::relational: {
            std::vector<Candidate> anchors = unique_descriptors(scene, kind);
            Tier interesting, degenerate;
            std::vector<Descriptor> heads;
            for (Shape s : kShapes) heads.push_back({std::nullopt, s, Spatial::none});
            for (Color c : kColors)
                for (Shape s : kShapes) heads.push_back({c, s, Spatial::none});
            for (const Descriptor& head : heads) {
                std::vector<int> m = match_descriptor(scene, head);
                if (m.empty()) continue;
                for (Rel rel : kRels)
                    for (const Candidate& a : anchors) {
                        const ObjectSpec& anchor =
                            scene.objects[static_cast<std::size_t>(a.targets[0])];
                        std::vector<int> sel;
                        for (int id : m)
                            if (rel_holds(scene.objects[static_cast<std::size_t>(id)], rel, anchor))
                                sel.push_back(id);
                        if (sel.size() != 1) continue;
                        Candidate c{{kind, head, a.sem.head, rel, 0}, sel, ""};
                        (m.size() >= 2 ? interesting : degenerate).push_back(c);
                    }
            }
            tiers.insert(tiers.end(), {interesting, degenerate});
            break;
        }
        case ExprKind::no_target_absent: {
            std::set<int> colors_present, shapes_present;
            for (const ObjectSpec& o : scene.objects) {
                colors_present.insert(static_cast<int>(o.color));
                shapes_present.insert(static_cast<int>(o.shape));
            }
            Tier t1, t2;
            for (Color c : kColors)
                for (Shape s : kShapes) {
                    Descriptor d{c, s, Spatial::none};
                    if (!match_descriptor(scene, d).empty()) continue;
                    bool cp = colors_present.count(static_cast<int>(c)) > 0;
                    bool sp = shapes_present.count(static_cast<int>(s)) > 0;
                    Candidate cand{{kind, d, {}, Rel::none, 0}, {}, ""};
                    if (cp && sp)
                        t1.push_back(cand);
                    else if (cp || sp)
                        t2.push_back(cand);
                }
            tiers.insert(tiers.end(), {t1, t2});
            break;
        }
        case ExprKind::no_target_deceptive: {
            Tier t;
            for (const DonorExpression& d : donors)
                if (match_descriptor(scene, d.desc).empty())
                    t.push_back({{kind, d.desc, {}, Rel::none, 0}, {}, d.text});
            tiers.push_back(t);
            break;
        }
    }
    return tiers;
}

}  // namespace

std::optional<ExpressionSpec> realize_expression(const Scene& scene, ExprKind kind,
                                                 Rng& rng,
                                                 const std::vector<DonorExpression>& donors) {
    for (Tier& tier : collect_candidates(scene, kind, donors)) {
        Tier ok;
        for (Candidate& c : tier)
            if (verified(scene, c)) ok.push_back(std::move(c));
        if (ok.empty()) continue;
        Candidate& pick = ok[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(ok.size())))];
        ExpressionSpec spec;
        spec.text = pick.text_override.empty() ? text_of(pick.sem) : pick.text_override;
        spec.target_ids = pick.targets;
        spec.kind = kind;
        spec.sem = pick.sem;
        return spec;
    }
    return std::nullopt;
}

namespace {

std::string sample_name(const std::string& prefix, int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%04d.", index);
    return prefix + buf + ext;
}

// Largest-remainder split of `total` into shares proportional to weights.
std::vector<int> apportion(int total, const std::vector<double>& weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("mixture fractions must be non-negative");
        sum += w;
    }
    if (sum <= 0.0) throw ConfigError("mixture fractions sum to zero");
    std::vector<int> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> rem;
    int assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double quota = static_cast<double>(total) * weights[i] / sum;
        counts[i] = static_cast<int>(quota);
        assigned += counts[i];
        rem.push_back({quota - static_cast<double>(counts[i]), i});
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < total - assigned; ++i)
        counts[rem[static_cast<std::size_t>(i) % rem.size()].second] += 1;
    return counts;
}

std::vector<ExprKind> plan_kinds(int total, const MixConfig& mix, Rng& rng) {
    std::vector<int> top = apportion(total, {mix.single, mix.multi, mix.no_target});
    const ExprKind multi_kinds[] = {ExprKind::counting, ExprKind::compound_and,
                                    ExprKind::compound_except, ExprKind::shared_attr,
                                    ExprKind::relational};
    std::vector<ExprKind> kinds;
    for (int i = 0; i < top[0]; ++i) kinds.push_back(ExprKind::single);
    for (int i = 0; i < top[1]; ++i) kinds.push_back(multi_kinds[i % 5]);
    for (int i = 0; i < top[2]; ++i)
        kinds.push_back(i % 2 == 0 ? ExprKind::no_target_absent
                                   : ExprKind::no_target_deceptive);
    rng.shuffle(kinds);
    return kinds;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::vector<ManifestRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos)
                throw InputError("manifest line " + std::to_string(lineno) +
                                 " has fewer than 4 fields in " + path);
            fields.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        fields.push_back(line.substr(start));
        ManifestRow row;
        row.image_path = fields[0];
        row.mask_path = fields[1];
        if (fields[2] == "0")
            row.no_target = false;
        else if (fields[2] == "1")
            row.no_target = true;
        else
            throw InputError("manifest line " + std::to_string(lineno) +
                             ": no_target flag must be 0 or 1, got '" + fields[2] + "'");
        row.expression = fields[3];
        rows.push_back(row);
    }
    return rows;
}

void build_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                   std::vector<SampleAudit>* audit) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " +
                          ec.message());

    for (int split = 0; split < 2; ++split) {
        const std::string prefix = split == 0 ? "train" : "val";
        const int count = split == 0 ? cfg.train_count : cfg.val_count;
        if (count <= 0) throw ConfigError("sample counts must be positive");

        Rng plan_rng(mix_seed(seed, 101 + static_cast<std::uint64_t>(split)));
        std::vector<ExprKind> kinds = plan_kinds(count, cfg.mix, plan_rng);

        std::vector<ManifestRow> rows(static_cast<std::size_t>(count));
        std::vector<SampleAudit> audits(static_cast<std::size_t>(count));
        std::vector<DonorExpression> donors;

        auto make_sample = [&](int index, ExprKind kind) {
            std::uint64_t sample_seed =
                mix_seed(mix_seed(seed, 11 + static_cast<std::uint64_t>(split)),
                         static_cast<std::uint64_t>(index));
            for (int attempt = 0; attempt < 300; ++attempt) {
                Scene scene;
                try {
                    scene = generate_scene(
                        mix_seed(sample_seed, 300 + static_cast<std::uint64_t>(attempt)),
                        cfg.scene);
                } catch (const GenerationError&) {
                    continue;
                }
                Rng erng(mix_seed(sample_seed, 7000 + static_cast<std::uint64_t>(attempt)));
                std::optional<ExpressionSpec> expr =
                    realize_expression(scene, kind, erng, donors);
                // A deceptive sample needs a donor expression that matches
                // nothing here; when the donor pool cannot provide one, fall
                // back to an attribute-absent expression (same no-target
                // contract, and the manifest records only the flag).
                if (!expr && kind == ExprKind::no_target_deceptive && attempt >= 50)
                    expr = realize_expression(scene, ExprKind::no_target_absent, erng,
                                              donors);
                if (!expr) continue;

                std::string img_name = sample_name(prefix, index, "ppm");
                std::string mask_name = sample_name(prefix, index, "pgm");
                write_ppm(cfg.out_dir + "/" + img_name, render(scene));
                write_pgm(cfg.out_dir + "/" + mask_name,
                          rasterize_mask(scene, expr->target_ids));
                rows[static_cast<std::size_t>(index)] = {
                    img_name, mask_name, expr->target_ids.empty(), expr->text};
                audits[static_cast<std::size_t>(index)] = {
                    prefix, index, scene, expr->sem, expr->target_ids,
                    expr->target_ids.empty()};
                if (kind == ExprKind::single)
                    donors.push_back({expr->text, expr->sem.head});
                return;
            }
            throw InputError("could not generate a " + kind_name(kind) +
                             " sample after 300 scene attempts (split " + prefix +
                             ", index " + std::to_string(index) + ")");
        };

        // Deceptive samples draw donors from this split's single-target
        // expressions, so those are produced first.
        for (int i = 0; i < count; ++i)
            if (kinds[static_cast<std::size_t>(i)] != ExprKind::no_target_deceptive)
                make_sample(i, kinds[static_cast<std::size_t>(i)]);
        for (int i = 0; i < count; ++i)
            if (kinds[static_cast<std::size_t>(i)] == ExprKind::no_target_deceptive)
                make_sample(i, kinds[static_cast<std::size_t>(i)]);

        std::ofstream mf(cfg.out_dir + "/" + prefix + ".tsv");
        if (!mf) throw IoError("cannot write manifest in " + cfg.out_dir);
        for (const ManifestRow& r : rows)
            mf << r.image_path << '\t' << r.mask_path << '\t' << (r.no_target ? 1 : 0)
               << '\t' << r.expression << '\n';
        if (!mf) throw IoError("manifest write failed in " + cfg.out_dir);
        if (audit)
            audit->insert(audit->end(), audits.begin(), audits.end());
    }
}

}  // namespace grela
