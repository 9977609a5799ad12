#pragma once

// Demonstration-video analysis: grayscale frames, PGM I/O, key-frame
// detection, cursor localization, dwell-based click detection and replay of
// the fixed (initialization / execution) stages as action scripts.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "condrec/error.hpp"

namespace condrec {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width * height

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w <= 0 || h <= 0) fail(Errc::InvalidArgument, "image dimensions must be positive");
  }

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  void fill_rect(int x, int y, int w, int h, std::uint8_t value) {
    for (int yy = std::max(0, y); yy < std::min(height, y + h); ++yy)
      for (int xx = std::max(0, x); xx < std::min(width, x + w); ++xx) at(xx, yy) = value;
  }

  /// Copies `patch` with its top-left corner at (x, y), clipped to the image.
  void blit(const GrayImage& patch, int x, int y) {
    for (int py = 0; py < patch.height; ++py)
      for (int px = 0; px < patch.width; ++px) {
        const int xx = x + px, yy = y + py;
        if (xx >= 0 && yy >= 0 && xx < width && yy < height) at(xx, yy) = patch.at(px, py);
      }
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct Frame {
  GrayImage image;
  std::int64_t timestamp_ms = 0;
};

struct StageWindow {
  std::int64_t begin_ms = 0;
  std::int64_t end_ms = 0;  // inclusive
  bool contains(std::int64_t t) const { return t >= begin_ms && t <= end_ms; }
};

struct VideoDemo {
  std::vector<Frame> frames;
  GrayImage cursor_template;
  std::optional<StageWindow> initialization;
  std::optional<StageWindow> execution;

  std::vector<std::int64_t> timestamps() const {
    std::vector<std::int64_t> t;
    for (const auto& f : frames) t.push_back(f.timestamp_ms);
    return t;
  }

  void validate() const {
    if (frames.empty()) fail(Errc::InvalidArgument, "video has no frames");
    for (std::size_t i = 1; i < frames.size(); ++i)
      if (frames[i].timestamp_ms <= frames[i - 1].timestamp_ms)
        fail(Errc::InvalidArgument, "frame timestamps must be strictly increasing");
  }
};

// ---------------------------------------------------------------------------
// PGM (binary P5, 8-bit)

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write '" + path + "'");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(Errc::IoError, "short write to '" + path + "'");
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok += c;
    }
    return tok;
  };
  if (next_token() != "P5") fail(Errc::SchemaError, "'" + path + "' is not a binary PGM (P5)");
  const int w = std::atoi(next_token().c_str());
  const int h = std::atoi(next_token().c_str());
  const int maxval = std::atoi(next_token().c_str());
  if (w <= 0 || h <= 0 || maxval != 255) fail(Errc::SchemaError, "'" + path + "': unsupported PGM header");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    fail(Errc::SchemaError, "'" + path + "': truncated pixel data");
  return img;
}

/// Manifest: {"fps", "frames": [paths], "timestamps_ms": [...], "cursor_template": path,
/// optional "stages": {"initialization": [begin, end], "execution": [begin, end]}}.
/// Relative paths resolve against the manifest's directory.
inline VideoDemo load_video_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(Errc::IoError, "cannot open video manifest '" + manifest_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, "video manifest: " + std::string(e.what()));
  }
  const auto base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) { return (base / p).string(); };
  VideoDemo v;
  try {
    const auto paths = j.at("frames").get<std::vector<std::string>>();
    std::vector<std::int64_t> ts;
    if (j.contains("timestamps_ms")) {
      ts = j.at("timestamps_ms").get<std::vector<std::int64_t>>();
    } else {
      const double fps = j.at("fps").get<double>();
      for (std::size_t i = 0; i < paths.size(); ++i)
        ts.push_back(static_cast<std::int64_t>(std::llround(1000.0 * static_cast<double>(i) / fps)));
    }
    if (ts.size() != paths.size()) fail(Errc::SchemaError, "timestamps_ms and frames differ in length");
    for (std::size_t i = 0; i < paths.size(); ++i) v.frames.push_back({read_pgm(resolve(paths[i])), ts[i]});
    v.cursor_template = read_pgm(resolve(j.at("cursor_template").get<std::string>()));
    if (auto s = j.find("stages"); s != j.end()) {
      if (s->contains("initialization"))
        v.initialization = StageWindow{s->at("initialization").at(0).get<std::int64_t>(),
                                        s->at("initialization").at(1).get<std::int64_t>()};
      if (s->contains("execution"))
        v.execution = StageWindow{s->at("execution").at(0).get<std::int64_t>(),
                                   s->at("execution").at(1).get<std::int64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, "video manifest: " + std::string(e.what()));
  }
  v.validate();
  return v;
}

// ---------------------------------------------------------------------------
// Key frames

inline double mean_absolute_difference(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height)
    fail(Errc::InvalidArgument, "frames differ in size");
  std::uint64_t sum = 0;
  for (std::size_t k = 0; k < a.pixels.size(); ++k)
    sum += static_cast<std::uint64_t>(std::abs(int(a.pixels[k]) - int(b.pixels[k])));
  return static_cast<double>(sum) / static_cast<double>(a.pixels.size());
}

struct KeyFrameParams {
  double threshold = 2.0;    // mean absolute difference, intensity units
  std::size_t min_gap = 3;   // frames since the previous key frame
};

/// Frame i is a key frame when its mean absolute difference to frame i-1
/// exceeds the threshold and it lies at least min_gap frames after the
/// previous key frame.
inline std::vector<std::size_t> detect_key_frames(const std::vector<Frame>& frames,
                                                  const KeyFrameParams& params = {}) {
  if (params.threshold < 0.0) fail(Errc::InvalidArgument, "key-frame threshold must be >= 0");
  std::vector<std::size_t> keys;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (mean_absolute_difference(frames[i].image, frames[i - 1].image) <= params.threshold) continue;
    if (!keys.empty() && i - keys.back() < params.min_gap) continue;
    keys.push_back(i);
  }
  return keys;
}

// ---------------------------------------------------------------------------
// Cursor and clicks

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Cursor hotspot (template center) via exact template match, falling back to
/// the minimum sum of absolute differences. The fallback is accepted only when
/// the per-pixel mean difference is at most max_mean_sad.
inline std::optional<Point> locate_cursor(const GrayImage& frame, const GrayImage& tmpl,
                                          double max_mean_sad = 8.0) {
  if (tmpl.width > frame.width || tmpl.height > frame.height || tmpl.pixels.empty())
    fail(Errc::InvalidTemplate, "cursor template must be non-empty and no larger than the frame");
  const int tw = tmpl.width, th = tmpl.height;
  const Point hotspot{tw / 2, th / 2};
  for (int y = 0; y + th <= frame.height; ++y)
    for (int x = 0; x + tw <= frame.width; ++x) {
      bool same = true;
      for (int py = 0; py < th && same; ++py) {
        const std::uint8_t* f = &frame.pixels[static_cast<std::size_t>(y + py) * frame.width + x];
        const std::uint8_t* t = &tmpl.pixels[static_cast<std::size_t>(py) * tw];
        for (int px = 0; px < tw; ++px)
          if (f[px] != t[px]) {
            same = false;
            break;
          }
      }
      if (same) return Point{x + hotspot.x, y + hotspot.y};
    }

  const auto area = static_cast<std::uint64_t>(tw) * static_cast<std::uint64_t>(th);
  const auto limit = static_cast<std::uint64_t>(std::floor(max_mean_sad * static_cast<double>(area)));
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  std::optional<Point> best_at;
  for (int y = 0; y + th <= frame.height; ++y)
    for (int x = 0; x + tw <= frame.width; ++x) {
      std::uint64_t sad = 0;
      for (int py = 0; py < th && sad < best; ++py)
        for (int px = 0; px < tw; ++px)
          sad += static_cast<std::uint64_t>(std::abs(int(frame.at(x + px, y + py)) - int(tmpl.at(px, py))));
      if (sad < best) {
        best = sad;
        best_at = Point{x + hotspot.x, y + hotspot.y};
      }
    }
  if (best > limit) return std::nullopt;
  return best_at;
}

struct ClickEvent {
  int x = 0;
  int y = 0;
  std::size_t frame_index = 0;  // first frame of the dwell
};

struct ClickParams {
  double dwell_radius = 3.0;  // px; all positions of a dwell are pairwise within this
  std::size_t min_dwell = 5;  // frames
  double max_mean_sad = 8.0;
  /// When set, a dwell counts as a click only if the interface reacts: some
  /// key frame falls after the dwell's first frame and at most
  /// response_frames after its last.
  bool require_response = false;
  std::size_t response_frames = 2;
};

/// Cursor track -> dwell runs -> clicks at the rounded run centroid. Runs are
/// built greedily left to right and broken by frames without a cursor.
inline std::vector<ClickEvent> detect_clicks(const VideoDemo& video, const std::vector<std::size_t>& key_frames,
                                             const ClickParams& params = {}) {
  if (!(params.dwell_radius > 0.0)) fail(Errc::InvalidArgument, "dwell radius must be > 0");
  if (params.min_dwell < 1) fail(Errc::InvalidArgument, "min_dwell must be >= 1");
  if (video.frames.empty()) return {};
  const auto& tmpl = video.cursor_template;
  if (tmpl.width > video.frames.front().image.width || tmpl.height > video.frames.front().image.height ||
      tmpl.pixels.empty())
    fail(Errc::InvalidTemplate, "cursor template must be non-empty and no larger than the frame");

  std::vector<std::optional<Point>> track;
  track.reserve(video.frames.size());
  for (const auto& f : video.frames) track.push_back(locate_cursor(f.image, tmpl, params.max_mean_sad));

  const double r2 = params.dwell_radius * params.dwell_radius;
  auto near = [&](const Point& a, const Point& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy <= r2;
  };

  std::vector<ClickEvent> clicks;
  auto close_run = [&](std::size_t start, std::size_t end) {  // [start, end)
    if (end - start < params.min_dwell) return;
    if (params.require_response) {
      const bool reacted = std::any_of(key_frames.begin(), key_frames.end(), [&](std::size_t k) {
        return k > start && k <= end - 1 + params.response_frames;
      });
      if (!reacted) return;
    }
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      sx += track[i]->x;
      sy += track[i]->y;
    }
    const double n = static_cast<double>(end - start);
    clicks.push_back({static_cast<int>(std::lround(sx / n)), static_cast<int>(std::lround(sy / n)), start});
  };

  std::size_t start = 0;
  bool open = false;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (!track[i]) {
      if (open) close_run(start, i);
      open = false;
      continue;
    }
    if (open) {
      bool fits = true;
      for (std::size_t k = start; k < i && fits; ++k) fits = near(*track[k], *track[i]);
      if (fits) continue;
      close_run(start, i);
    }
    start = i;
    open = true;
  }
  if (open) close_run(start, track.size());
  return clicks;
}

// ---------------------------------------------------------------------------
// Action scripts

struct ClickAction {
  int x = 0;
  int y = 0;
  friend bool operator==(const ClickAction&, const ClickAction&) = default;
};
struct TypeAction {
  std::string text;
  friend bool operator==(const TypeAction&, const TypeAction&) = default;
};
struct WaitAction {
  std::int64_t ms = 0;
  friend bool operator==(const WaitAction&, const WaitAction&) = default;
};

using ScriptEvent = std::variant<ClickAction, TypeAction, WaitAction>;

struct ActionScript {
  std::vector<ScriptEvent> events;

  void append(const ActionScript& other) { events.insert(events.end(), other.events.begin(), other.events.end()); }
  std::size_t click_count() const {
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const ScriptEvent& e) {
      return std::holds_alternative<ClickAction>(e);
    }));
  }
  friend bool operator==(const ActionScript&, const ActionScript&) = default;
};

inline void to_json(nlohmann::json& j, const ActionScript& s) {
  j = nlohmann::json::array();
  for (const auto& e : s.events) {
    if (const auto* c = std::get_if<ClickAction>(&e))
      j.push_back({{"type", "click"}, {"x", c->x}, {"y", c->y}});
    else if (const auto* t = std::get_if<TypeAction>(&e))
      j.push_back({{"type", "type"}, {"text", t->text}});
    else
      j.push_back({{"type", "wait"}, {"ms", std::get<WaitAction>(e).ms}});
  }
}

inline void from_json(const nlohmann::json& j, ActionScript& s) {
  s.events.clear();
  if (!j.is_array()) fail(Errc::SchemaError, "action script must be a JSON array");
  for (const auto& e : j) {
    const std::string type = e.at("type").get<std::string>();
    if (type == "click")
      s.events.emplace_back(ClickAction{e.at("x").get<int>(), e.at("y").get<int>()});
    else if (type == "type")
      s.events.emplace_back(TypeAction{e.at("text").get<std::string>()});
    else if (type == "wait")
      s.events.emplace_back(WaitAction{e.at("ms").get<std::int64_t>()});
    else
      fail(Errc::SchemaError, "unknown script event type '" + type + "'");
  }
}

/// One Click per detected click; consecutive clicks are separated by a Wait of
/// the elapsed video time, capped at max_wait_ms.
inline ActionScript replay_fixed_stages(const std::vector<ClickEvent>& clicks,
                                        const std::vector<std::int64_t>& timestamps,
                                        std::int64_t max_wait_ms = 1000) {
  ActionScript script;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    if (clicks[i].frame_index >= timestamps.size())
      fail(Errc::InvalidArgument, "click frame index outside the timestamp list");
    if (i > 0) {
      const auto elapsed = timestamps[clicks[i].frame_index] - timestamps[clicks[i - 1].frame_index];
      script.events.emplace_back(WaitAction{std::clamp<std::int64_t>(elapsed, 0, max_wait_ms)});
    }
    script.events.emplace_back(ClickAction{clicks[i].x, clicks[i].y});
  }
  return script;
}

/// Clicks whose dwell starts inside the window.
inline std::vector<ClickEvent> clicks_in_window(const std::vector<ClickEvent>& clicks, const VideoDemo& video,
                                                const StageWindow& window) {
  std::vector<ClickEvent> out;
  for (const auto& c : clicks)
    if (window.contains(video.frames.at(c.frame_index).timestamp_ms)) out.push_back(c);
  return out;
}

}  // namespace condrec
