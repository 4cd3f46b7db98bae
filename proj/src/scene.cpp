#include "minclip/scene.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace minclip {

bool SceneObject::has_attr(AttrKind k) const { return attr(k) >= 0; }

int SceneObject::attr(AttrKind k) const {
  for (const auto& [kind, value] : attrs) {
    if (kind == k) return value;
  }
  return -1;
}

bool operator==(const SceneObject& a, const SceneObject& b) {
  return a.noun == b.noun && a.attrs == b.attrs;
}

bool operator==(const SceneRelation& a, const SceneRelation& b) {
  return a.subject == b.subject && a.predicate == b.predicate && a.object == b.object;
}

bool operator==(const Scene& a, const Scene& b) {
  return a.objects == b.objects && a.relations == b.relations && a.background == b.background;
}

void validate_scene(const Scene& scene) {
  const int n = static_cast<int>(scene.objects.size());
  if (n < 1 || n > 4) throw std::invalid_argument("scene: must have 1..4 objects");
  std::set<int> seen_nouns;
  for (const auto& obj : scene.objects) {
    if (obj.noun < 0 || obj.noun >= static_cast<int>(nouns().size())) {
      throw std::invalid_argument("scene: bad noun index");
    }
    if (!seen_nouns.insert(obj.noun).second) {
      throw std::invalid_argument("scene: duplicate noun");
    }
    int last_kind = -1;
    for (const auto& [kind, value] : obj.attrs) {
      if (static_cast<int>(kind) <= last_kind) {
        throw std::invalid_argument("scene: attrs must be sorted by kind, one per kind");
      }
      last_kind = static_cast<int>(kind);
      if (value < 0 || value >= attr_value_count(kind)) {
        throw std::invalid_argument("scene: bad attribute value");
      }
    }
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& rel : scene.relations) {
    if (rel.subject < 0 || rel.subject >= n || rel.object < 0 || rel.object >= n ||
        rel.subject == rel.object) {
      throw std::invalid_argument("scene: bad relation indices");
    }
    if (rel.predicate < 0 || rel.predicate >= kNumPredicates) {
      throw std::invalid_argument("scene: bad predicate");
    }
    if (!pairs.insert({rel.subject, rel.object}).second) {
      throw std::invalid_argument("scene: more than one relation per ordered pair");
    }
  }
  if (scene.background < 0 || scene.background >= static_cast<int>(backgrounds().size())) {
    throw std::invalid_argument("scene: bad background");
  }
}

namespace {

NounClass noun_class(int noun) { return nouns()[static_cast<size_t>(noun)].cls; }

int sample_noun_of_class(Rng& rng, NounClass cls, const std::set<int>& used) {
  std::vector<int> pool;
  for (size_t i = 0; i < nouns().size(); ++i) {
    if (nouns()[i].cls == cls && !used.count(static_cast<int>(i))) {
      pool.push_back(static_cast<int>(i));
    }
  }
  if (pool.empty()) return -1;
  return pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

int sample_noun_allowed_object(Rng& rng, int predicate, const std::set<int>& used) {
  const int mask = predicates()[static_cast<size_t>(predicate)].object_classes;
  std::vector<int> pool;
  for (size_t i = 0; i < nouns().size(); ++i) {
    if (used.count(static_cast<int>(i))) continue;
    if (mask == 0 || (mask & (1 << static_cast<int>(nouns()[i].cls)))) {
      pool.push_back(static_cast<int>(i));
    }
  }
  if (pool.empty()) return -1;
  return pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

void sample_attrs(Rng& rng, SceneObject& obj) {
  // Ordered by AttrKind: size, color, material. Color is always present.
  if (rng.bernoulli(0.5)) {
    obj.attrs.emplace_back(AttrKind::kSize,
                           rng.uniform_int(0, attr_value_count(AttrKind::kSize) - 1));
  }
  obj.attrs.emplace_back(AttrKind::kColor,
                         rng.uniform_int(0, attr_value_count(AttrKind::kColor) - 1));
  if (noun_class(obj.noun) == NounClass::kThing && rng.bernoulli(0.5)) {
    obj.attrs.emplace_back(AttrKind::kMaterial,
                           rng.uniform_int(0, attr_value_count(AttrKind::kMaterial) - 1));
  }
}

bool try_layout(const Scene& scene, SceneLayout* out);

Scene sample_candidate(Rng& rng, bool allow_relations) {
  Scene scene;
  const int roll = rng.uniform_int(0, 99);
  int n = roll < 10 ? 1 : roll < 45 ? 2 : roll < 80 ? 3 : 4;
  std::set<int> used;

  int n_rel = 0;
  if (allow_relations && n >= 2) {
    n_rel = (n >= 3 && rng.bernoulli(0.45)) ? 2 : 1;
  }

  if (n_rel >= 1) {
    // Predicate-first sampling keeps every predicate well represented.
    const int pred = rng.uniform_int(0, kNumPredicates - 1);
    const auto& entry = predicates()[static_cast<size_t>(pred)];
    int subj_noun;
    if (entry.subject_animate) {
      subj_noun = sample_noun_of_class(rng, NounClass::kAnimate, used);
    } else {
      subj_noun = rng.uniform_int(0, static_cast<int>(nouns().size()) - 1);
    }
    used.insert(subj_noun);
    int obj_noun = -1;
    if (entry.object_classes == 0) {
      do {
        obj_noun = rng.uniform_int(0, static_cast<int>(nouns().size()) - 1);
      } while (used.count(obj_noun));
    } else {
      obj_noun = sample_noun_allowed_object(rng, pred, used);
    }
    used.insert(obj_noun);
    scene.objects.push_back({subj_noun, {}});
    scene.objects.push_back({obj_noun, {}});
    scene.relations.push_back({0, pred, 1});
  }
  while (static_cast<int>(scene.objects.size()) < n) {
    int noun;
    do {
      noun = rng.uniform_int(0, static_cast<int>(nouns().size()) - 1);
    } while (used.count(noun));
    used.insert(noun);
    scene.objects.push_back({noun, {}});
  }

  if (n_rel == 2) {
    // A second relation over a fresh ordered pair, predicate drawn uniformly
    // from those the pair's classes admit.
    for (int attempt = 0; attempt < 8; ++attempt) {
      const int s = rng.uniform_int(0, n - 1);
      int o = rng.uniform_int(0, n - 2);
      if (o >= s) ++o;
      bool dup = false;
      for (const auto& r : scene.relations) {
        if (r.subject == s && r.object == o) dup = true;
      }
      if (dup) continue;
      std::vector<int> preds;
      for (int p = 0; p < kNumPredicates; ++p) {
        if (predicate_allows(p, noun_class(scene.objects[static_cast<size_t>(s)].noun),
                             noun_class(scene.objects[static_cast<size_t>(o)].noun))) {
          preds.push_back(p);
        }
      }
      const int pred = preds[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int>(preds.size()) - 1))];
      scene.relations.push_back({s, pred, o});
      break;
    }
  }

  for (auto& obj : scene.objects) sample_attrs(rng, obj);

  // Objects nested via "in" keep a minimal look: no size or material, so the
  // reduced nested footprint stays unambiguous.
  for (const auto& rel : scene.relations) {
    if (rel.predicate == kIn) {
      auto& subj = scene.objects[static_cast<size_t>(rel.subject)];
      std::vector<std::pair<AttrKind, int>> kept;
      for (const auto& a : subj.attrs) {
        if (a.first == AttrKind::kColor) kept.push_back(a);
      }
      subj.attrs = kept;
      // Hosts need a roomy body: drop tiny/small size attributes.
      auto& host = scene.objects[static_cast<size_t>(rel.object)];
      std::vector<std::pair<AttrKind, int>> host_kept;
      for (const auto& a : host.attrs) {
        if (a.first == AttrKind::kSize && sizes()[static_cast<size_t>(a.second)].extent < 6) {
          continue;
        }
        host_kept.push_back(a);
      }
      host.attrs = host_kept;
    }
  }

  scene.background = rng.uniform_int(0, static_cast<int>(backgrounds().size()) - 1);
  return scene;
}

}  // namespace

Scene generate_scene(Rng& rng) {
  for (int attempt = 0; attempt < 50; ++attempt) {
    Scene scene = sample_candidate(rng, /*allow_relations=*/true);
    SceneLayout layout;
    if (try_layout(scene, &layout)) {
      validate_scene(scene);
      return scene;
    }
  }
  // Relation-free scenes always lay out.
  Scene scene = sample_candidate(rng, /*allow_relations=*/false);
  validate_scene(scene);
  return scene;
}

namespace {

struct Cell {
  int r, c;
  bool operator<(const Cell& o) const { return r != o.r ? r < o.r : c < o.c; }
  bool operator==(const Cell& o) const { return r == o.r && c == o.c; }
};

// Offsets the subject may take relative to the object, per predicate.
std::vector<Cell> subject_offsets(int predicate) {
  switch (predicate) {
    case kLeftOf: return {{0, -1}};
    case kRightOf: return {{0, 1}};
    case kAbove: return {{-1, 0}};
    case kBelow: return {{1, 0}};
    case kOn: return {{-1, 0}};
    case kHolding:
    case kEating:
    case kWatching:
    case kWearing: return {{0, -1}, {0, 1}};
    default: return {};
  }
}

bool try_layout(const Scene& scene, SceneLayout* out) {
  const int n = static_cast<int>(scene.objects.size());
  std::vector<int> nested_host(static_cast<size_t>(n), -1);
  for (const auto& rel : scene.relations) {
    if (rel.predicate != kIn) continue;
    // Nested objects may not participate in any other relation, and a host
    // holds at most one nested object.
    for (const auto& other : scene.relations) {
      if (&other == &rel) continue;
      if (other.subject == rel.subject || other.object == rel.subject) return false;
      if (other.predicate == kIn && other.object == rel.object) return false;
    }
    if (nested_host[static_cast<size_t>(rel.subject)] != -1) return false;
    nested_host[static_cast<size_t>(rel.subject)] = rel.object;
  }

  // Local integer coordinates per component; components are numbered by the
  // first object placed in them.
  std::vector<Cell> local(static_cast<size_t>(n), {-1000, -1000});
  std::vector<int> comp(static_cast<size_t>(n), -1);
  std::map<int, std::set<Cell>> occupied;  // comp -> cells
  int next_comp = 0;

  auto place = [&](int idx, Cell at, int c) -> bool {
    if (occupied[c].count(at)) return false;
    local[static_cast<size_t>(idx)] = at;
    comp[static_cast<size_t>(idx)] = c;
    occupied[c].insert(at);
    return true;
  };

  for (const auto& rel : scene.relations) {
    if (rel.predicate == kIn) continue;
    const auto offs = subject_offsets(rel.predicate);
    const int s = rel.subject, o = rel.object;
    const bool sp = comp[static_cast<size_t>(s)] >= 0;
    const bool op = comp[static_cast<size_t>(o)] >= 0;
    if (!sp && !op) {
      const int c = next_comp++;
      if (!place(o, {0, 0}, c)) return false;
      bool done = false;
      for (const auto& off : offs) {
        if (place(s, {off.r, off.c}, c)) {
          done = true;
          break;
        }
      }
      if (!done) return false;
    } else if (op && !sp) {
      const Cell base = local[static_cast<size_t>(o)];
      const int c = comp[static_cast<size_t>(o)];
      bool done = false;
      for (const auto& off : offs) {
        if (place(s, {base.r + off.r, base.c + off.c}, c)) {
          done = true;
          break;
        }
      }
      if (!done) return false;
    } else if (sp && !op) {
      const Cell base = local[static_cast<size_t>(s)];
      const int c = comp[static_cast<size_t>(s)];
      bool done = false;
      for (const auto& off : offs) {
        if (place(o, {base.r - off.r, base.c - off.c}, c)) {
          done = true;
          break;
        }
      }
      if (!done) return false;
    } else {
      if (comp[static_cast<size_t>(s)] != comp[static_cast<size_t>(o)]) return false;
      const Cell d = {local[static_cast<size_t>(s)].r - local[static_cast<size_t>(o)].r,
                      local[static_cast<size_t>(s)].c - local[static_cast<size_t>(o)].c};
      bool ok = false;
      for (const auto& off : offs) {
        if (off == d) ok = true;
      }
      if (!ok) return false;
    }
  }

  // Free-standing, non-nested objects become singleton components.
  for (int i = 0; i < n; ++i) {
    if (comp[static_cast<size_t>(i)] < 0 && nested_host[static_cast<size_t>(i)] < 0) {
      const int c = next_comp++;
      place(i, {0, 0}, c);
    }
  }

  // Pack components onto the 4x4 grid. Cells of different components must not
  // be orthogonally adjacent, so unrelated objects never mimic a spatial
  // relation.
  constexpr int kGrid = 4;
  std::vector<std::vector<int>> grid(kGrid, std::vector<int>(kGrid, -1));
  std::vector<Cell> final_pos(static_cast<size_t>(n), {-1, -1});

  for (int c = 0; c < next_comp; ++c) {
    const auto& cells = occupied[c];
    if (cells.empty()) continue;
    int min_r = 1000, min_c = 1000, max_r = -1000, max_c = -1000;
    for (const auto& cell : cells) {
      min_r = std::min(min_r, cell.r);
      min_c = std::min(min_c, cell.c);
      max_r = std::max(max_r, cell.r);
      max_c = std::max(max_c, cell.c);
    }
    const int h = max_r - min_r + 1, w = max_c - min_c + 1;
    if (h > kGrid || w > kGrid) return false;
    bool placed = false;
    for (int br = 0; br + h <= kGrid && !placed; ++br) {
      for (int bc = 0; bc + w <= kGrid && !placed; ++bc) {
        bool ok = true;
        for (const auto& cell : cells) {
          const int r = br + cell.r - min_r, cc = bc + cell.c - min_c;
          if (grid[static_cast<size_t>(r)][static_cast<size_t>(cc)] != -1) ok = false;
          static const int dr[4] = {-1, 1, 0, 0};
          static const int dc[4] = {0, 0, -1, 1};
          for (int d = 0; d < 4 && ok; ++d) {
            const int nr = r + dr[d], nc = cc + dc[d];
            if (nr < 0 || nr >= kGrid || nc < 0 || nc >= kGrid) continue;
            const int other = grid[static_cast<size_t>(nr)][static_cast<size_t>(nc)];
            if (other != -1 && other != c) ok = false;
          }
          if (!ok) break;
        }
        if (!ok) continue;
        for (const auto& cell : cells) {
          const int r = br + cell.r - min_r, cc = bc + cell.c - min_c;
          grid[static_cast<size_t>(r)][static_cast<size_t>(cc)] = c;
        }
        for (int i = 0; i < n; ++i) {
          if (comp[static_cast<size_t>(i)] == c) {
            final_pos[static_cast<size_t>(i)] = {br + local[static_cast<size_t>(i)].r - min_r,
                                                 bc + local[static_cast<size_t>(i)].c - min_c};
          }
        }
        placed = true;
      }
    }
    if (!placed) return false;
  }

  if (out) {
    out->pos.assign(static_cast<size_t>(n), {-1, -1});
    out->nested_host = nested_host;
    for (int i = 0; i < n; ++i) {
      if (nested_host[static_cast<size_t>(i)] < 0) {
        out->pos[static_cast<size_t>(i)] = {final_pos[static_cast<size_t>(i)].r,
                                            final_pos[static_cast<size_t>(i)].c};
      }
    }
  }
  return true;
}

}  // namespace

SceneLayout layout_scene(const Scene& scene) {
  SceneLayout layout;
  if (!try_layout(scene, &layout)) {
    throw LayoutOverflow("layout_scene: relations cannot be placed on the grid");
  }
  return layout;
}

namespace {

constexpr int kCellPx = 8;

void put_px(Canvas& canvas, int y, int x, std::array<std::uint8_t, 3> rgb) {
  const size_t base = (static_cast<size_t>(y) * canvas.side + x) * 3;
  canvas.rgb[base] = rgb[0];
  canvas.rgb[base + 1] = rgb[1];
  canvas.rgb[base + 2] = rgb[2];
}

std::array<std::uint8_t, 3> gray(std::uint8_t v) { return {v, v, v}; }

std::uint8_t id_level(int v) { return static_cast<std::uint8_t>(40 + 25 * v); }

std::array<std::uint8_t, 3> body_color(std::array<std::uint8_t, 3> rgb) {
  return {static_cast<std::uint8_t>(rgb[0] * 3 / 4), static_cast<std::uint8_t>(rgb[1] * 3 / 4),
          static_cast<std::uint8_t>(rgb[2] * 3 / 4)};
}

void draw_object_cell(Canvas& canvas, int cell_r, int cell_c, const SceneObject& obj) {
  const int oy = cell_r * kCellPx, ox = cell_c * kCellPx;
  const int color = obj.attr(AttrKind::kColor);
  const auto rgb = colors()[static_cast<size_t>(color < 0 ? 0 : color)].rgb;
  // Header row: color anchor + noun id pixels.
  put_px(canvas, oy, ox, rgb);
  put_px(canvas, oy, ox + 1, gray(id_level((obj.noun + 1) / 8)));
  put_px(canvas, oy, ox + 2, gray(id_level((obj.noun + 1) % 8)));
  const int material = obj.attr(AttrKind::kMaterial);
  if (material >= 0) {
    put_px(canvas, oy, ox + 4, gray(230));
    put_px(canvas, oy, ox + 5, gray(materials()[static_cast<size_t>(material)].level));
  }
  const int size = obj.attr(AttrKind::kSize);
  const int extent = size < 0 ? 6 : sizes()[static_cast<size_t>(size)].extent;
  const auto body = body_color(rgb);
  for (int y = 1; y < extent; ++y) {
    for (int x = 0; x < extent; ++x) put_px(canvas, oy + y, ox + x, body);
  }
}

void draw_nested_object(Canvas& canvas, int cell_r, int cell_c, const SceneObject& obj) {
  const int oy = cell_r * kCellPx + 2, ox = cell_c * kCellPx + 2;
  const int color = obj.attr(AttrKind::kColor);
  const auto rgb = colors()[static_cast<size_t>(color < 0 ? 0 : color)].rgb;
  put_px(canvas, oy, ox, rgb);
  put_px(canvas, oy, ox + 1, gray(id_level((obj.noun + 1) / 8)));
  put_px(canvas, oy, ox + 2, gray(id_level((obj.noun + 1) % 8)));
  const auto body = body_color(rgb);
  for (int y = 1; y < 4; ++y) {
    for (int x = 0; x < 3; ++x) put_px(canvas, oy + y, ox + x, body);
  }
}

}  // namespace

Canvas render_scene_canvas(const Scene& scene) {
  validate_scene(scene);
  const SceneLayout layout = layout_scene(scene);
  Canvas canvas;
  canvas.rgb.assign(static_cast<size_t>(canvas.side) * canvas.side * 3, 0);
  const auto bg = backgrounds()[static_cast<size_t>(scene.background)].rgb;
  for (int y = 0; y < canvas.side; ++y) {
    for (int x = 0; x < canvas.side; ++x) put_px(canvas, y, x, bg);
  }

  for (size_t i = 0; i < scene.objects.size(); ++i) {
    if (layout.nested_host[i] >= 0) continue;
    draw_object_cell(canvas, layout.pos[i].first, layout.pos[i].second, scene.objects[i]);
  }
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const int host = layout.nested_host[i];
    if (host < 0) continue;
    const auto [hr, hc] = layout.pos[static_cast<size_t>(host)];
    draw_nested_object(canvas, hr, hc, scene.objects[i]);
  }

  for (const auto& rel : scene.relations) {
    const auto& entry = predicates()[static_cast<size_t>(rel.predicate)];
    const auto [sr, sc] = layout.pos[static_cast<size_t>(rel.subject)];
    if (rel.predicate == kOn) {
      // Contact strip on the subject's bottom edge.
      const int y = sr * kCellPx + kCellPx - 1, x0 = sc * kCellPx;
      for (int x = 2; x <= 5; ++x) put_px(canvas, y, x0 + x, gray(250));
    } else if (!entry.spatial && rel.predicate != kIn) {
      // Junction glyph on the subject's edge column facing the object; the
      // asymmetry encodes which side is the subject.
      const auto [orr, oc] = layout.pos[static_cast<size_t>(rel.object)];
      const int facing = (oc > sc) ? kCellPx - 1 : 0;
      const int x = sc * kCellPx + facing, y0 = sr * kCellPx;
      const int code = rel.predicate - kHolding + 1;  // 1..4
      for (int bit = 0; bit < 4; ++bit) {
        if (code & (1 << bit)) put_px(canvas, y0 + 1 + 2 * bit, x, gray(255));
      }
      put_px(canvas, y0 + 6, x, {255, 0, 255});
      (void)orr;
    }
  }
  return canvas;
}

PatchGrid canvas_to_patches(const Canvas& canvas, int patch_grid) {
  if (canvas.side % patch_grid != 0) {
    throw std::invalid_argument("canvas_to_patches: grid does not divide canvas side");
  }
  const int px = canvas.side / patch_grid;
  PatchGrid pg;
  pg.grid = patch_grid;
  pg.patch_dim = px * px * 3;
  pg.values.resize(static_cast<size_t>(patch_grid) * patch_grid * pg.patch_dim);
  size_t out = 0;
  for (int pr = 0; pr < patch_grid; ++pr) {
    for (int pc = 0; pc < patch_grid; ++pc) {
      for (int y = 0; y < px; ++y) {
        for (int x = 0; x < px; ++x) {
          const size_t base =
              ((static_cast<size_t>(pr) * px + y) * canvas.side + (static_cast<size_t>(pc) * px + x)) * 3;
          pg.values[out++] = canvas.rgb[base] / 255.0f;
          pg.values[out++] = canvas.rgb[base + 1] / 255.0f;
          pg.values[out++] = canvas.rgb[base + 2] / 255.0f;
        }
      }
    }
  }
  return pg;
}

PatchGrid render_scene_image(const Scene& scene, int patch_grid) {
  return canvas_to_patches(render_scene_canvas(scene), patch_grid);
}

}  // namespace minclip
