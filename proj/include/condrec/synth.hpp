#pragma once

// Seeded synthetic data: a 100-condition yield benchmark, demonstration videos
// with planted dwells and screen changes, and a complete all-mock closed-loop
// fixture (space, knowledge base, instrument, demo video, config).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/instrument.hpp"
#include "condrec/recommend.hpp"
#include "condrec/rng.hpp"
#include "condrec/video.hpp"

namespace condrec::synth {

// ---------------------------------------------------------------------------
// Candidate lists (Suzuki-Miyaura flavoured)

/// Quinoline partners 1a-1e: halides 1a-1c, boron reagents 1d-1e.
inline const std::vector<std::string>& electrophiles() {
  static const std::vector<std::string> v = {"Clc1ccc2ncccc2c1", "Brc1ccc2ncccc2c1", "Ic1ccc2ncccc2c1",
                                             "OB(O)c1ccc2ncccc2c1", "CC1(C)OB(c2ccc3ncccc3c2)OC1(C)C"};
  return v;
}

/// Indazole partners 2a-2d: halides 2a-2b, boron reagents 2c-2d.
inline const std::vector<std::string>& nucleophiles() {
  static const std::vector<std::string> v = {"Cn1ncc2c(Br)cccc21", "Cn1ncc2c(I)cccc21", "Cn1ncc2c(B(O)O)cccc21",
                                             "Cn1ncc2c(B3OC(C)(C)C(C)(C)O3)cccc21"};
  return v;
}

inline const std::vector<std::string>& ligands() {
  static const std::vector<std::string> v = {"Amphos", "SPhos",    "Xphos", "PPh3",        "dppp",
                                             "dppe",   "Xantphos", "dppf",  "cataCXium A", "JohnPhos"};
  return v;
}

inline const std::vector<std::string>& bases() {
  static const std::vector<std::string> v = {"K2CO3", "Cs2CO3", "Na2CO3", "K3PO4", "NaOH",
                                             "KOH",   "LiOtBu", "NaOtBu", "Et3N",  "KF"};
  return v;
}

inline const std::vector<std::string>& solvents() {
  static const std::vector<std::string> v = {
      "Dioxane: H2O = 9:1", "MeCN: H2O = 9:1", "DMSO: H2O = 9:1", "DME: H2O = 9:1", "Toluene: H2O = 9:1",
      "THF: H2O = 9:1",     "DMF: H2O = 9:1",  "EtOH: H2O = 9:1", "MeOH: H2O = 9:1", "NMP: H2O = 9:1"};
  return v;
}

inline constexpr std::string_view kCatalyst = "Pd(OAc)2";
inline constexpr std::string_view kTargetSmiles = "Cn1ncc2c(-c3ccc4ncccc4c3)cccc21";

/// Halides pair with boron reagents: 1a-1c with 2c-2d, 1d-1e with 2a-2b.
inline std::vector<ReactantPair> reactant_pairs() {
  const auto& e = electrophiles();
  const auto& n = nucleophiles();
  std::vector<ReactantPair> pairs;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 2; k < 4; ++k) pairs.push_back({Molecule(e[i]), Molecule(n[k])});
  for (std::size_t i = 3; i < 5; ++i)
    for (std::size_t k = 0; k < 2; ++k) pairs.push_back({Molecule(e[i]), Molecule(n[k])});
  return pairs;
}

/// 10 pairs x 10 ligands x 10 bases x 10 solvents, one catalyst.
inline ReactionSpace full_space() {
  return {reactant_pairs(), {std::string(kCatalyst)}, ligands(), bases(), solvents()};
}

// ---------------------------------------------------------------------------
// Hidden yield model

/// Random linear model over reaction encodings, shifted and scaled so that
/// over `calibration` the noiseless yield has mean 0.5 and spread `spread`.
inline LinearYield calibrate_linear_yield(const std::vector<ReactionCondition>& calibration, std::uint64_t seed,
                                          double spread = 0.25, double noise_sigma = 0.05) {
  if (calibration.empty()) fail(Errc::EmptyInput, "calibration set is empty");
  const TokenCountEncoder encoder;
  std::vector<std::vector<double>> xs;
  for (const auto& c : calibration) xs.push_back(encode_reaction(c, encoder).values);
  Rng rng(seed);
  std::vector<double> w(xs.front().size());
  for (auto& v : w) v = rng.normal();
  double mean = 0.0, sq = 0.0;
  std::vector<double> raw;
  for (const auto& x : xs) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
    raw.push_back(s);
    mean += s;
  }
  mean /= static_cast<double>(raw.size());
  for (double s : raw) sq += (s - mean) * (s - mean);
  const double sd = std::sqrt(sq / static_cast<double>(raw.size()));
  const double scale = sd > 0.0 ? spread / sd : 0.0;
  LinearYield model;
  model.weights.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) model.weights[k] = w[k] * scale;
  model.bias = 0.5 - mean * scale;
  model.noise_sigma = noise_sigma;
  model.seed = seed;
  return model;
}

// ---------------------------------------------------------------------------
// 100-condition benchmark

struct Benchmark {
  ReactionSpace space;
  LinearYield model;
  GroundTruth truth;
  std::vector<ReactionCondition> conditions;
};

/// 10 reactant pairs x 10 ligands with base, solvent and catalyst fixed.
inline Benchmark make_benchmark(std::uint64_t seed = 2024) {
  Benchmark b;
  b.space = {reactant_pairs(), {std::string(kCatalyst)}, ligands(), {bases().front()}, {solvents().front()}};
  b.conditions = enumerate_space(b.space);
  b.model = calibrate_linear_yield(b.conditions, seed);
  for (const auto& c : b.conditions) b.truth[c] = evaluate_hidden_yield(b.model, c);
  return b;
}

/// n distinct records drawn from the benchmark with their true yields.
inline std::vector<ReactionRecord> sample_records(const std::vector<ReactionCondition>& pool,
                                                  const HiddenYield& model, std::size_t n, std::uint64_t seed) {
  if (n > pool.size()) fail(Errc::InvalidArgument, "cannot draw more records than conditions");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  std::vector<ReactionRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({pool[idx[i]], evaluate_hidden_yield(model, pool[idx[i]])});
  return out;
}

// ---------------------------------------------------------------------------
// Demonstration videos

/// 7x7 arrow made only of 0 and 255 pixels; rendered scenes avoid both values,
/// so the template occurs verbatim only where the cursor is drawn.
inline GrayImage cursor_template() {
  static constexpr const char* rows[7] = {"#......", "##.....", "#*#....", "#**#...", "#***#..", "#*##...", "##....."};
  GrayImage t(7, 7, 0);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) t.at(x, y) = rows[y][x] == '*' ? 255 : 0;
  return t;
}

inline void draw_cursor(GrayImage& img, Point hotspot) {
  const auto t = cursor_template();
  img.blit(t, hotspot.x - t.width / 2, hotspot.y - t.height / 2);
}

/// Straight-line positions strictly between a and b, at least 8 px apart.
inline std::vector<Point> motion_path(Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  const int steps = std::max(2, static_cast<int>(len / 8.0));
  std::vector<Point> path;
  for (int s = 1; s < steps; ++s) {
    const double f = static_cast<double>(s) / steps;
    path.push_back({static_cast<int>(std::lround(a.x + f * dx)), static_cast<int>(std::lround(a.y + f * dy))});
  }
  return path;
}

struct PlantedVideo {
  VideoDemo video;
  std::vector<std::size_t> change_frames;  // planted key frames
  std::vector<Point> dwell_targets;        // planted click positions
  std::vector<std::size_t> dwell_starts;
};

/// Cursor dwells (8-10 frames, optional 1 px jitter) separated by motion; the
/// frame after each dwell repaints a background block.
inline PlantedVideo make_click_video(std::uint64_t seed, std::size_t n_dwells = 4, int width = 160,
                                     int height = 120) {
  Rng rng(seed);
  PlantedVideo out;
  out.video.cursor_template = cursor_template();
  GrayImage scene(width, height, static_cast<std::uint8_t>(40 + rng.index(161)));
  const int margin = 10;
  auto random_point = [&] {
    return Point{margin + static_cast<int>(rng.index(static_cast<std::size_t>(width - 2 * margin))),
                 margin + static_cast<int>(rng.index(static_cast<std::size_t>(height - 2 * margin)))};
  };
  auto push = [&](Point cursor) {
    GrayImage f = scene;
    draw_cursor(f, cursor);
    out.video.frames.push_back({std::move(f), static_cast<std::int64_t>(out.video.frames.size()) * 100});
  };
  auto repaint = [&] {
    const int w = 60 + static_cast<int>(rng.index(40)), h = 40 + static_cast<int>(rng.index(30));
    const int x = static_cast<int>(rng.index(static_cast<std::size_t>(width - w)));
    const int y = static_cast<int>(rng.index(static_cast<std::size_t>(height - h)));
    const int old = scene.at(x + w / 2, y + h / 2);
    const int level = old >= 120 ? old - 60 - static_cast<int>(rng.index(21)) : old + 60 + static_cast<int>(rng.index(21));
    scene.fill_rect(x, y, w, h, static_cast<std::uint8_t>(std::clamp(level, 20, 230)));
  };

  Point cursor = random_point();
  push(cursor);
  for (std::size_t d = 0; d < n_dwells; ++d) {
    Point target;
    do target = random_point();
    while (std::hypot(target.x - cursor.x, target.y - cursor.y) < 30.0);
    for (auto p : motion_path(cursor, target)) push(p);
    const bool jitter = rng.index(2) == 1;
    const std::size_t dwell = 8 + rng.index(3);
    out.dwell_targets.push_back(target);
    out.dwell_starts.push_back(out.video.frames.size());
    for (std::size_t k = 0; k < dwell; ++k) {
      Point p = target;
      if (jitter && k % 2 == 1) p.x += 1;
      push(p);
    }
    repaint();
    out.change_frames.push_back(out.video.frames.size());
    cursor = target;
    // leave the dwell before the next segment starts
    const Point away{target.x + (target.x < width / 2 ? 9 : -9), target.y};
    push(away);
    cursor = away;
  }
  for (auto p : motion_path(cursor, random_point())) push(p);
  return out;
}

// ---------------------------------------------------------------------------
// Closed-loop instrument

inline constexpr int kScreenWidth = 240;
inline constexpr int kScreenHeight = 160;

/// Screens: launcher -> modules -> configure (five dropdown columns) ->
/// review (commit) -> done. The catalyst is fixed by the hardware preset.
inline InstrumentDefinition make_instrument(const ReactionSpace& space, HiddenYield hidden) {
  InstrumentDefinition d;
  d.width = kScreenWidth;
  d.height = kScreenHeight;
  d.start_screen = "launcher";
  d.screens.push_back({"launcher", {{"launch", "Launch", {90, 70, 60, 20}, WidgetKind::Button, {}, false}}});
  d.screens.push_back({"modules",
                       {{"load", "Load modules", {70, 70, 100, 20}, WidgetKind::Button, {}, false},
                        {"notes", "Notes", {70, 110, 100, 14}, WidgetKind::Field, {}, false}}});

  Screen configure{"configure", {}};
  auto unique = [](std::vector<std::string> v) {
    std::vector<std::string> out;
    for (auto& s : v)
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    return out;
  };
  std::vector<std::string> es, ns;
  for (const auto& p : space.reactant_pairs) {
    es.push_back(p.electrophile.smiles());
    ns.push_back(p.nucleophile.smiles());
  }
  const std::vector<std::pair<Role, std::vector<std::string>>> columns = {
      {Role::Electrophile, unique(es)}, {Role::Nucleophile, unique(ns)}, {Role::Ligand, space.ligands},
      {Role::Base, space.bases},        {Role::Solvent, space.solvents}};
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& [role, items] = columns[c];
    if (items.size() > 10) fail(Errc::ConfigError, "at most 10 items fit in a dropdown column");
    for (std::size_t i = 0; i < items.size(); ++i)
      configure.widgets.push_back({std::string(role_name(role)) + "-" + std::to_string(i), items[i],
                                   Rect{4 + static_cast<int>(c) * 47, 12 + static_cast<int>(i) * 12, 44, 10},
                                   WidgetKind::DropdownItem, role, false});
  }
  configure.widgets.push_back({"confirm", "Confirm", {90, 138, 60, 16}, WidgetKind::Button, {}, false});
  d.screens.push_back(std::move(configure));
  d.screens.push_back({"review",
                       {{"start", "Start", {90, 70, 60, 20}, WidgetKind::Button, {}, true},
                        {"back", "Back", {90, 110, 60, 16}, WidgetKind::Button, {}, false}}});
  d.screens.push_back({"done", {{"finish", "Finish", {90, 70, 60, 20}, WidgetKind::Button, {}, false}}});
  d.transitions[{"launcher", "launch"}] = "modules";
  d.transitions[{"modules", "load"}] = "configure";
  d.transitions[{"configure", "confirm"}] = "review";
  d.transitions[{"review", "start"}] = "done";
  d.transitions[{"review", "back"}] = "configure";
  d.transitions[{"done", "finish"}] = "configure";
  d.preset.get(Role::Catalyst) = space.catalysts.front();
  d.path = {{"configure",
             {Role::Electrophile, Role::Nucleophile, Role::Ligand, Role::Base, Role::Solvent},
             std::nullopt}};
  d.hidden_yield = std::move(hidden);
  d.validate();
  return d;
}

/// Widgets as flat blocks (no text); selected dropdown items are brighter.
inline GrayImage render_screen(const InstrumentDefinition& def, const std::string& screen_id,
                               const PartialCondition& selection) {
  GrayImage img(def.width, def.height, 36);
  for (const auto& w : def.screen(screen_id).widgets) {
    std::uint8_t level = static_cast<std::uint8_t>(90 + fnv1a64(w.id) % 90);
    if (w.kind == WidgetKind::DropdownItem && selection.get(*w.role) == w.label) level = 228;
    img.fill_rect(w.bounds.x, w.bounds.y, w.bounds.w, w.bounds.h, level);
  }
  return img;
}

struct DemoVideo {
  VideoDemo video;
  std::vector<std::pair<std::string, std::string>> clicked;  // (screen, widget)
};

/// Operator demonstration: launch, load modules, pick a condition, confirm,
/// start. Initialization covers the first two clicks, execution the last two.
inline DemoVideo make_demo_video(const InstrumentDefinition& def, const ReactionCondition& demonstrated) {
  DemoVideo out;
  out.video.cursor_template = cursor_template();
  std::vector<std::pair<std::string, std::string>> plan = {{"launcher", "launch"}, {"modules", "load"}};
  for (const auto& w : def.screen("configure").widgets)
    if (w.kind == WidgetKind::DropdownItem && demonstrated.value(*w.role) == w.label)
      plan.push_back({"configure", w.id});
  plan.push_back({"configure", "confirm"});
  plan.push_back({"review", "start"});

  std::string screen = def.start_screen;
  PartialCondition selection = def.preset;
  Point cursor{8, 8};
  auto push = [&](Point p) {
    GrayImage f = render_screen(def, screen, selection);
    draw_cursor(f, p);
    out.video.frames.push_back({std::move(f), static_cast<std::int64_t>(out.video.frames.size()) * 100});
  };
  std::vector<std::int64_t> dwell_start_ms;
  push(cursor);
  for (const auto& [scr, wid] : plan) {
    if (scr != screen) fail(Errc::ConfigError, "demo plan expects screen '" + scr + "'");
    const Widget* widget = nullptr;
    for (const auto& w : def.screen(scr).widgets)
      if (w.id == wid) widget = &w;
    if (!widget) fail(Errc::ConfigError, "demo plan names unknown widget '" + wid + "'");
    const Point target = widget->bounds.center();
    if (std::abs(cursor.x - target.x) <= 3 && std::abs(cursor.y - target.y) <= 3) {
      // Same spot as the previous click: step away so the dwells stay separate.
      const Point aside{target.x, target.y > 40 ? target.y - 30 : target.y + 30};
      for (auto p : motion_path(cursor, aside)) push(p);
      cursor = aside;
    }
    for (auto p : motion_path(cursor, target)) push(p);
    dwell_start_ms.push_back(static_cast<std::int64_t>(out.video.frames.size()) * 100);
    for (int k = 0; k < 8; ++k) push(target);
    if (widget->kind == WidgetKind::DropdownItem) selection.get(*widget->role) = widget->label;
    if (auto it = def.transitions.find({scr, wid}); it != def.transitions.end()) screen = it->second;
    cursor = target;
    out.clicked.push_back({scr, wid});
  }
  const Point rest{cursor.x, std::max(8, cursor.y - 40)};
  for (auto p : motion_path(cursor, rest)) push(p);
  push(rest);
  out.video.initialization = StageWindow{0, dwell_start_ms[1]};
  out.video.execution = StageWindow{dwell_start_ms[dwell_start_ms.size() - 2],
                                    out.video.frames.back().timestamp_ms};
  return out;
}

/// Frames as PGM files plus a manifest next to them.
inline void write_video(const std::filesystem::path& dir, const VideoDemo& video) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["frames"] = nlohmann::json::array();
  manifest["timestamps_ms"] = video.timestamps();
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", i);
    write_pgm((dir / name).string(), video.frames[i].image);
    manifest["frames"].push_back(name);
  }
  write_pgm((dir / "cursor.pgm").string(), video.cursor_template);
  manifest["cursor_template"] = "cursor.pgm";
  nlohmann::json stages;
  if (video.initialization)
    stages["initialization"] = {video.initialization->begin_ms, video.initialization->end_ms};
  if (video.execution) stages["execution"] = {video.execution->begin_ms, video.execution->end_ms};
  manifest["stages"] = stages;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Closed-loop fixture

inline constexpr std::string_view kSimilarMiss = "Cn1ncc2c(-c3ccc4ccccc4c3)cccc21";
inline constexpr std::string_view kSimilarHit = "Cn1ncc2c(-c3ccc4ncccc4c3)ccc(F)c21";

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write '" + path.string() + "'");
  out << text;
}

/// Writes space, training data, knowledge base, similarity table, instrument,
/// demo video and config.json into `dir`. The knowledge base knows only the
/// second most similar molecule, whose reported conditions fix base and
/// solvent (10,000 -> 100 conditions) and name a catalyst outside the space.
inline void write_closed_loop_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7) {
  std::filesystem::create_directories(dir);
  const auto space = full_space();
  PartialCondition retrieved;
  retrieved.get(Role::Base) = "K2CO3";
  retrieved.get(Role::Solvent) = "Dioxane: H2O = 9:1";
  const auto narrowed = restrict_space(space, retrieved);
  const auto narrowed_conditions = enumerate_space(narrowed);
  const auto model = calibrate_linear_yield(narrowed_conditions, seed, 0.2, 0.03);

  auto all = enumerate_space(space);
  auto train = sample_records(all, model, 40, seed + 1);
  auto local = sample_records(narrowed_conditions, model, 20, seed + 2);
  for (auto& r : local)
    if (std::none_of(train.begin(), train.end(), [&](const auto& t) { return t.condition == r.condition; }))
      train.push_back(r);
  std::ofstream csv(dir / "train.csv", std::ios::binary);
  write_dataset(csv, train);
  csv.close();

  write_text(dir / "space.json", nlohmann::json(space).dump(2) + "\n");
  PartialCondition alternative;
  alternative.get(Role::Base) = "Cs2CO3";
  alternative.get(Role::Solvent) = "Toluene: H2O = 9:1";
  PartialCondition with_catalyst = retrieved;
  with_catalyst.get(Role::Catalyst) = "Pd(dppf)Cl2";
  nlohmann::json kb = {{std::string(kSimilarHit), {with_catalyst, alternative}}};
  write_text(dir / "knowledge_base.json", kb.dump(2) + "\n");
  nlohmann::json similar = {
      {std::string(kTargetSmiles), {std::string(kSimilarMiss), std::string(kSimilarHit)}}};
  write_text(dir / "similar_molecules.json", similar.dump(2) + "\n");

  const auto instrument = make_instrument(space, model);
  write_text(dir / "instrument.json", nlohmann::json(instrument).dump(2) + "\n");
  const auto demo = make_demo_video(instrument, train.front().condition);
  write_video(dir / "video", demo.video);

  nlohmann::json config = {
      {"target_smiles", std::string(kTargetSmiles)},
      {"space", "space.json"},
      {"train", "train.csv"},
      {"knowledge_base", "knowledge_base.json"},
      {"similar_molecules", "similar_molecules.json"},
      {"retrieval", {{"max_candidates", 10}}},
      {"model", "knn"},
      {"batch_size", 5},
      {"seeds", {1, 2, 3}},
      {"exclude_training", true},
      {"scl", {{"epochs", 150}, {"seed", 0}}},
      {"phase3", {{"instrument", "instrument.json"}, {"video", "video/manifest.json"}, {"planner", "deterministic"}}},
      {"random_baseline", {{"enabled", true}, {"seed", 11}}},
      {"output", {{"json", "report.json"}, {"markdown", "report.md"}}}};
  write_text(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace condrec::synth
