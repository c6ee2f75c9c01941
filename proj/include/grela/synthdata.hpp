#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grela/common.hpp"
#include "grela/image_io.hpp"

namespace grela {

enum class Shape { circle, square, triangle };
enum class Color { red, green, blue, yellow, white, black };

// Spatial qualifier attached to a descriptor. Plain sides test the object
// center against the canvas midline; far_* picks the extreme object among
// those matching the rest of the descriptor (ties go to the lowest id).
enum class Spatial { none, left, right, top, bottom, far_left, far_right };

// Relation between an object and an anchor object, on centers, strict.
enum class Rel { none, left_of, right_of, above, below };

std::string shape_word(Shape s, bool plural);
std::string color_word(Color c);

struct ObjectSpec {
    int id = 0;
    Shape shape = Shape::circle;
    Color color = Color::red;
    int cx = 0, cy = 0;  // center, pixel coordinates
    int size = 0;        // radius (circle) or half-extent (square/triangle)
};

struct Scene {
    int h = 0, w = 0;
    std::vector<ObjectSpec> objects;
    std::uint64_t seed = 0;
};

// "the [color] [shape] [spatial]" noun phrase; omitted fields are wildcards.
struct Descriptor {
    std::optional<Color> color;
    std::optional<Shape> shape;
    Spatial spatial = Spatial::none;
};

enum class ExprKind {
    single,
    counting,
    compound_and,
    compound_except,
    shared_attr,
    relational,
    no_target_absent,
    no_target_deceptive,
};

std::string kind_name(ExprKind k);

// Machine-checkable meaning of an expression; drives both text generation
// and exhaustive verification over object subsets.
struct ExprSem {
    ExprKind kind = ExprKind::single;
    Descriptor head;
    Descriptor second;  // compound partner or relational anchor
    Rel rel = Rel::none;
    int count = 0;  // counting kind only
};

struct ExpressionSpec {
    std::string text;
    std::vector<int> target_ids;  // sorted ascending; empty for no-target
    ExprKind kind = ExprKind::single;
    ExprSem sem;
};

// Thrown when rejection sampling exhausts its budget; dataset building
// catches it and retries with the next derived seed.
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Default sizes favor few large objects: predicted masks live on the coarse
// feature grid, and small shapes hit a harsh quantization ceiling there.
struct SceneConfig {
    int canvas = 48;
    int min_objects = 2;
    int max_objects = 4;
    int min_size = 9;
    int max_size = 12;
};

struct MixConfig {
    double single = 0.4;
    double multi = 0.3;
    double no_target = 0.3;
};

struct DatasetConfig {
    std::string out_dir;
    int train_count = 400;
    int val_count = 100;
    SceneConfig scene;
    MixConfig mix;
};

// Exact rasterization at integer pixel coordinates.
bool object_contains(const ObjectSpec& o, int x, int y);
BinaryMask object_mask(const Scene& scene, const ObjectSpec& o);
BinaryMask rasterize_mask(const Scene& scene, const std::vector<int>& target_ids);
Image render(const Scene& scene);

// All object ids matching the descriptor, ascending.
std::vector<int> match_descriptor(const Scene& scene, const Descriptor& d);
bool rel_holds(const ObjectSpec& o, Rel rel, const ObjectSpec& anchor);

// Subset semantics: does the subset (bit i = object id i) satisfy the
// expression in this scene?
bool satisfies(const Scene& scene, const ExprSem& sem, std::uint32_t subset_bits);
// Every satisfying subset, ascending by bit pattern. Unambiguity means
// exactly one element (zero for no-target kinds).
std::vector<std::uint32_t> satisfying_subsets(const Scene& scene, const ExprSem& sem);

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Source expression reused verbatim for deceptive no-target samples.
struct DonorExpression {
    std::string text;
    Descriptor desc;
};

// Instantiates one expression of the requested kind, or nullopt if the scene
// does not support it. The result is verified by exhaustive subset
// evaluation before being returned.
std::optional<ExpressionSpec> realize_expression(const Scene& scene, ExprKind kind,
                                                 Rng& rng,
                                                 const std::vector<DonorExpression>& donors);

struct ManifestRow {
    std::string image_path;  // relative to the manifest's directory
    std::string mask_path;
    bool no_target = false;
    std::string expression;
};

std::vector<ManifestRow> read_manifest(const std::string& path);

// Machine-checkable record of one written sample, for after-the-fact
// verification (exhaustive subset checks need the scene and semantics, which
// the manifest does not carry).
struct SampleAudit {
    std::string split;
    int index = 0;
    Scene scene;
    ExprSem sem;
    std::vector<int> target_ids;
    bool no_target = false;
};

// Writes train.tsv / val.tsv plus P6 images and P5 masks into out_dir.
// Deterministic: a given (config, seed) produces byte-identical files.
// When `audit` is given, it receives one record per sample in manifest order.
void build_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                   std::vector<SampleAudit>* audit = nullptr);

}  // namespace grela
