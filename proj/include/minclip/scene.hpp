#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "minclip/lexicon.hpp"
#include "minclip/rng.hpp"

namespace minclip {

struct LayoutOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SceneObject {
  int noun = 0;
  // Sorted by kind; at most one value per kind.
  std::vector<std::pair<AttrKind, int>> attrs;

  bool has_attr(AttrKind k) const;
  int attr(AttrKind k) const;  // -1 when absent
};

struct SceneRelation {
  int subject = 0;
  int predicate = 0;
  int object = 0;
};

struct Scene {
  std::vector<SceneObject> objects;      // 1..4, distinct nouns
  std::vector<SceneRelation> relations;  // at most one per ordered pair
  int background = 0;
};

bool operator==(const SceneObject& a, const SceneObject& b);
bool operator==(const SceneRelation& a, const SceneRelation& b);
bool operator==(const Scene& a, const Scene& b);

// Scene type invariants; throws std::invalid_argument on violation.
void validate_scene(const Scene& scene);

// Deterministic sampling; always returns a renderable scene.
Scene generate_scene(Rng& rng);

// Cell assignment on the 4x4 layout grid. pos is (-1,-1) for objects nested
// via "in"; nested_host holds their container index (-1 otherwise).
struct SceneLayout {
  std::vector<std::pair<int, int>> pos;
  std::vector<int> nested_host;
};

SceneLayout layout_scene(const Scene& scene);  // throws LayoutOverflow

// 32x32 RGB canvas with all values from a fixed u8 palette.
struct Canvas {
  int side = 32;
  std::vector<std::uint8_t> rgb;  // side*side*3, row-major, channel-last
};

Canvas render_scene_canvas(const Scene& scene);

// P x P grid of flattened patches with values in [0,1].
struct PatchGrid {
  int grid = 0;       // grid side P
  int patch_dim = 0;  // per-patch values (pixels * channels)
  std::vector<float> values;
};

PatchGrid canvas_to_patches(const Canvas& canvas, int patch_grid);
PatchGrid render_scene_image(const Scene& scene, int patch_grid = 4);

}  // namespace minclip
