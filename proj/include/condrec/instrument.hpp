#pragma once

// Virtual stand-in for the instrument control software: a screen/widget
// state machine driven by action scripts, OCR over its screens, condition
// planning against OCR readings, and the simulated chromatogram it emits.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "condrec/analytics.hpp"
#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/gateways.hpp"
#include "condrec/rng.hpp"
#include "condrec/video.hpp"

namespace condrec {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const { return px >= x && py >= y && px < x + w && py < y + h; }
  bool overlaps(const Rect& o) const { return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h; }
  Point center() const { return {x + w / 2, y + h / 2}; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class WidgetKind { Button, Field, DropdownItem };

struct Widget {
  std::string id;
  std::string label;
  Rect bounds;
  WidgetKind kind = WidgetKind::Button;
  std::optional<Role> role;  // dropdown items: the role the item selects
  bool commit = false;       // buttons: starts the run
};

struct Screen {
  std::string id;
  std::vector<Widget> widgets;

  const Widget* hit(int x, int y) const {
    for (const auto& w : widgets)
      if (w.bounds.contains(x, y)) return &w;
    return nullptr;
  }
};

/// One configuration screen the planner walks: the roles selected there and
/// the label of the button that moves on (if any).
struct PathStep {
  std::string screen;
  std::vector<Role> roles;
  std::optional<std::string> advance_label;
};

/// Known concentrations and areas used to synthesize chromatograms.
struct AnalysisSetup {
  double conc_is = 0.5;
  double conc_reference = 1.0;
  double conc_substrate = 0.1;
  double area_is = 1200.0;              // IS peak in every sample run
  double calibration_area_is = 1000.0;  // IS peak in the calibration run
  double calibration_area_reference = 800.0;
};

struct LookupYield {
  std::map<std::string, double> by_key;  // ReactionCondition::key()
  std::optional<double> fallback;
};

/// clip(bias + weights . encode_reaction(c) + noise_sigma * N(0,1)), where the
/// normal draw is seeded by (seed, condition key).
struct LinearYield {
  double bias = 0.5;
  std::vector<double> weights;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

using HiddenYield = std::variant<LookupYield, LinearYield>;

inline double evaluate_hidden_yield(const HiddenYield& model, const ReactionCondition& c) {
  if (const auto* lut = std::get_if<LookupYield>(&model)) {
    auto it = lut->by_key.find(c.key());
    if (it != lut->by_key.end()) return it->second;
    if (lut->fallback) return *lut->fallback;
    fail(Errc::MissingObservation, "hidden yield table has no entry for " + c.key());
  }
  const auto& lin = std::get<LinearYield>(model);
  const TokenCountEncoder encoder;
  const auto x = encode_reaction(c, encoder).values;
  if (lin.weights.size() != x.size())
    fail(Errc::DimMismatch, "linear yield model expects " + std::to_string(lin.weights.size()) +
                                " features, encoding has " + std::to_string(x.size()));
  double y = lin.bias;
  for (std::size_t k = 0; k < x.size(); ++k) y += lin.weights[k] * x[k];
  if (lin.noise_sigma > 0.0) {
    Rng rng(lin.seed ^ fnv1a64(c.key()));
    y += lin.noise_sigma * rng.normal();
  }
  return std::clamp(y, 0.0, 1.0);
}

struct InstrumentDefinition {
  int width = 320;
  int height = 240;
  std::string start_screen;
  std::vector<Screen> screens;
  std::map<std::pair<std::string, std::string>, std::string> transitions;  // (screen, widget) -> screen
  PartialCondition preset;  // roles fixed by the hardware setup, e.g. the catalyst
  std::vector<PathStep> path;
  AnalysisSetup analysis;
  HiddenYield hidden_yield = LookupYield{};

  const Screen& screen(const std::string& id) const {
    for (const auto& s : screens)
      if (s.id == id) return s;
    fail(Errc::ConfigError, "instrument has no screen '" + id + "'");
  }

  void validate() const {
    screen(start_screen);
    for (const auto& s : screens) {
      for (std::size_t a = 0; a < s.widgets.size(); ++a) {
        const auto& wa = s.widgets[a];
        if (wa.bounds.x < 0 || wa.bounds.y < 0 || wa.bounds.x + wa.bounds.w > width ||
            wa.bounds.y + wa.bounds.h > height || wa.bounds.w <= 0 || wa.bounds.h <= 0)
          fail(Errc::ConfigError, "widget '" + wa.id + "' lies outside the screen");
        if (wa.kind == WidgetKind::DropdownItem && !wa.role)
          fail(Errc::ConfigError, "dropdown item '" + wa.id + "' has no role");
        for (std::size_t b = a + 1; b < s.widgets.size(); ++b)
          if (wa.bounds.overlaps(s.widgets[b].bounds))
            fail(Errc::ConfigError, "widgets '" + wa.id + "' and '" + s.widgets[b].id + "' overlap on screen '" +
                                        s.id + "'");
      }
    }
    for (const auto& [from, to] : transitions) {
      screen(from.first);
      screen(to);
    }
    for (const auto& step : path) screen(step.screen);
  }
};

// ---------------------------------------------------------------------------
// Instrument JSON

inline std::string_view widget_kind_name(WidgetKind k) {
  switch (k) {
    case WidgetKind::Button: return "button";
    case WidgetKind::Field: return "field";
    case WidgetKind::DropdownItem: return "dropdown-item";
  }
  return "?";
}

inline WidgetKind parse_widget_kind(const std::string& s) {
  if (s == "button") return WidgetKind::Button;
  if (s == "field") return WidgetKind::Field;
  if (s == "dropdown-item") return WidgetKind::DropdownItem;
  fail(Errc::ConfigError, "unknown widget kind '" + s + "'");
}

inline void to_json(nlohmann::json& j, const InstrumentDefinition& d) {
  auto screens = nlohmann::json::array();
  for (const auto& s : d.screens) {
    auto widgets = nlohmann::json::array();
    for (const auto& w : s.widgets) {
      nlohmann::json jw = {{"id", w.id},
                           {"label", w.label},
                           {"kind", widget_kind_name(w.kind)},
                           {"bounds", {w.bounds.x, w.bounds.y, w.bounds.w, w.bounds.h}}};
      if (w.role) jw["role"] = role_name(*w.role);
      if (w.commit) jw["action"] = "commit";
      widgets.push_back(std::move(jw));
    }
    screens.push_back({{"id", s.id}, {"widgets", widgets}});
  }
  auto transitions = nlohmann::json::array();
  for (const auto& [from, to] : d.transitions)
    transitions.push_back({{"screen", from.first}, {"widget", from.second}, {"to", to}});
  auto path = nlohmann::json::array();
  for (const auto& step : d.path) {
    nlohmann::json js = {{"screen", step.screen}, {"roles", nlohmann::json::array()}};
    for (Role r : step.roles) js["roles"].push_back(role_name(r));
    if (step.advance_label) js["advance"] = *step.advance_label;
    path.push_back(std::move(js));
  }
  const auto& a = d.analysis;
  nlohmann::json hidden;
  if (const auto* lut = std::get_if<LookupYield>(&d.hidden_yield)) {
    hidden = {{"type", "lookup"}, {"table", lut->by_key}};
    if (lut->fallback) hidden["default"] = *lut->fallback;
  } else {
    const auto& lin = std::get<LinearYield>(d.hidden_yield);
    hidden = {{"type", "linear"},
              {"bias", lin.bias},
              {"weights", lin.weights},
              {"noise_sigma", lin.noise_sigma},
              {"seed", lin.seed}};
  }
  j = {{"width", d.width},
       {"height", d.height},
       {"start_screen", d.start_screen},
       {"screens", screens},
       {"transitions", transitions},
       {"preset", d.preset},
       {"path", path},
       {"analysis",
        {{"c_is", a.conc_is},
         {"c_reference", a.conc_reference},
         {"c_substrate", a.conc_substrate},
         {"area_is", a.area_is},
         {"calibration_area_is", a.calibration_area_is},
         {"calibration_area_reference", a.calibration_area_reference}}},
       {"hidden_yield", hidden}};
}

inline InstrumentDefinition instrument_from_json(const nlohmann::json& j) {
  InstrumentDefinition d;
  try {
    d.width = j.value("width", 320);
    d.height = j.value("height", 240);
    d.start_screen = j.at("start_screen").get<std::string>();
    for (const auto& js : j.at("screens")) {
      Screen s{js.at("id").get<std::string>(), {}};
      for (const auto& jw : js.at("widgets")) {
        Widget w;
        w.id = jw.at("id").get<std::string>();
        w.label = jw.value("label", std::string{});
        w.kind = parse_widget_kind(jw.value("kind", std::string("button")));
        const auto b = jw.at("bounds").get<std::vector<int>>();
        if (b.size() != 4) fail(Errc::ConfigError, "widget bounds must be [x, y, w, h]");
        w.bounds = {b[0], b[1], b[2], b[3]};
        if (jw.contains("role")) w.role = parse_role(jw.at("role").get<std::string>());
        w.commit = jw.value("action", std::string{}) == "commit";
        s.widgets.push_back(std::move(w));
      }
      d.screens.push_back(std::move(s));
    }
    if (j.contains("transitions"))
      for (const auto& t : j.at("transitions"))
        d.transitions[{t.at("screen").get<std::string>(), t.at("widget").get<std::string>()}] =
            t.at("to").get<std::string>();
    if (j.contains("preset")) d.preset = j.at("preset").get<PartialCondition>();
    if (j.contains("path"))
      for (const auto& js : j.at("path")) {
        PathStep step{js.at("screen").get<std::string>(), {}, std::nullopt};
        for (const auto& r : js.at("roles")) step.roles.push_back(parse_role(r.get<std::string>()));
        if (js.contains("advance") && !js.at("advance").is_null())
          step.advance_label = js.at("advance").get<std::string>();
        d.path.push_back(std::move(step));
      }
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      const AnalysisSetup def;
      d.analysis = {a.value("c_is", def.conc_is),
                    a.value("c_reference", def.conc_reference),
                    a.value("c_substrate", def.conc_substrate),
                    a.value("area_is", def.area_is),
                    a.value("calibration_area_is", def.calibration_area_is),
                    a.value("calibration_area_reference", def.calibration_area_reference)};
    }
    if (j.contains("hidden_yield")) {
      const auto& h = j.at("hidden_yield");
      const std::string type = h.at("type").get<std::string>();
      if (type == "lookup") {
        LookupYield lut;
        lut.by_key = h.value("table", std::map<std::string, double>{});
        if (h.contains("default") && !h.at("default").is_null()) lut.fallback = h.at("default").get<double>();
        d.hidden_yield = std::move(lut);
      } else if (type == "linear") {
        LinearYield lin;
        lin.bias = h.value("bias", 0.5);
        lin.weights = h.at("weights").get<std::vector<double>>();
        lin.noise_sigma = h.value("noise_sigma", 0.0);
        lin.seed = h.value("seed", std::uint64_t{0});
        d.hidden_yield = std::move(lin);
      } else {
        fail(Errc::ConfigError, "hidden_yield type must be 'lookup' or 'linear'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, std::string("instrument definition: ") + e.what());
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Chromatograms

enum class PeakRole { InternalStandard, Product, Reference, Other };

inline std::string_view peak_role_name(PeakRole r) {
  switch (r) {
    case PeakRole::InternalStandard: return "IS";
    case PeakRole::Product: return "product";
    case PeakRole::Reference: return "reference";
    case PeakRole::Other: return "other";
  }
  return "?";
}

struct Peak {
  double retention_min = 0.0;
  double area = 0.0;
  PeakRole role = PeakRole::Other;
};

/// Sample run plus the calibration run that fixes the RRF.
struct ChromatogramReport {
  std::vector<Peak> sample;
  std::vector<Peak> calibration;
  double conc_is = 0.0;
  double conc_reference = 0.0;
  double conc_substrate = 0.0;
};

inline double peak_area(const std::vector<Peak>& peaks, PeakRole role) {
  for (const auto& p : peaks)
    if (p.role == role) return p.area;
  fail(Errc::SchemaError, "chromatogram has no " + std::string(peak_role_name(role)) + " peak");
}

struct AnalysisResult {
  double rrf = 0.0;
  double conc_product = 0.0;
  YieldValue yield;
};

inline AnalysisResult analyze_chromatogram(const ChromatogramReport& r) {
  AnalysisResult out;
  out.rrf = compute_rrf(peak_area(r.calibration, PeakRole::InternalStandard), r.conc_reference,
                        peak_area(r.calibration, PeakRole::Reference), r.conc_is);
  out.conc_product = compute_product_concentration(peak_area(r.sample, PeakRole::Product), r.conc_is, out.rrf,
                                                   peak_area(r.sample, PeakRole::InternalStandard));
  out.yield = compute_yield(out.conc_product, r.conc_substrate);
  return out;
}

/// Peak areas for a planted yield y: A_product = y * C_substrate * A_IS / (RRF * C_IS).
inline ChromatogramReport synthesize_chromatogram(double planted_yield, const AnalysisSetup& a) {
  ChromatogramReport r;
  r.conc_is = a.conc_is;
  r.conc_reference = a.conc_reference;
  r.conc_substrate = a.conc_substrate;
  const double rrf = compute_rrf(a.calibration_area_is, a.conc_reference, a.calibration_area_reference, a.conc_is);
  const double area_product = planted_yield * a.conc_substrate * a.area_is / (rrf * a.conc_is);
  r.calibration = {{3.42, a.calibration_area_is, PeakRole::InternalStandard},
                   {5.17, a.calibration_area_reference, PeakRole::Reference}};
  r.sample = {{1.08, 350.0, PeakRole::Other},
              {3.42, a.area_is, PeakRole::InternalStandard},
              {5.17, area_product, PeakRole::Product}};
  return r;
}

inline void to_json(nlohmann::json& j, const ChromatogramReport& r) {
  auto peaks = [](const std::vector<Peak>& ps) {
    auto arr = nlohmann::json::array();
    for (const auto& p : ps)
      arr.push_back({{"retention_min", p.retention_min}, {"area", p.area}, {"annotation", peak_role_name(p.role)}});
    return arr;
  };
  j = {{"sample", peaks(r.sample)},
       {"calibration", peaks(r.calibration)},
       {"c_is", r.conc_is},
       {"c_reference", r.conc_reference},
       {"c_substrate", r.conc_substrate}};
}

// ---------------------------------------------------------------------------
// Instrument state machine

struct InstrumentState {
  std::string screen;
  PartialCondition selection;
  std::optional<std::string> focused_field;
  std::map<std::string, std::string> fields;
  std::int64_t clock_ms = 0;
  bool committed = false;
  std::optional<ReactionCondition> executed;
  std::optional<ChromatogramReport> report;
  std::optional<double> hidden_yield;
  std::vector<std::string> log;
};

class VirtualInstrument {
 public:
  explicit VirtualInstrument(InstrumentDefinition definition, bool strict = true)
      : def_(std::move(definition)), strict_(strict) {
    def_.validate();
    reset();
  }

  void reset() {
    state_ = InstrumentState{};
    state_.screen = def_.start_screen;
    state_.selection = def_.preset;
  }

  const InstrumentDefinition& definition() const { return def_; }
  const InstrumentState& state() const { return state_; }

  void dispatch(const ScriptEvent& event) {
    if (const auto* c = std::get_if<ClickAction>(&event)) {
      click(c->x, c->y);
    } else if (const auto* t = std::get_if<TypeAction>(&event)) {
      if (state_.focused_field) {
        state_.fields[*state_.focused_field] = t->text;
        state_.log.push_back("type " + *state_.focused_field);
      } else {
        state_.log.push_back("type ignored (no focused field)");
      }
    } else {
      state_.clock_ms += std::get<WaitAction>(event).ms;
    }
  }

 private:
  void click(int x, int y) {
    if (x < 0 || y < 0 || x >= def_.width || y >= def_.height)
      fail(Errc::ClickOutsideWidget, "click (" + std::to_string(x) + "," + std::to_string(y) + ") is off screen");
    const Screen& screen = def_.screen(state_.screen);
    const Widget* w = screen.hit(x, y);
    if (!w) {
      if (strict_)
        fail(Errc::ClickOutsideWidget, "click (" + std::to_string(x) + "," + std::to_string(y) +
                                           ") hits no widget on screen '" + screen.id + "'");
      state_.log.push_back("click missed");
      return;
    }
    state_.log.push_back("click " + screen.id + "/" + w->id);
    switch (w->kind) {
      case WidgetKind::DropdownItem: state_.selection.get(*w->role) = w->label; break;
      case WidgetKind::Field: state_.focused_field = w->id; break;
      case WidgetKind::Button:
        if (w->commit) commit();
        break;
    }
    if (auto it = def_.transitions.find({screen.id, w->id}); it != def_.transitions.end()) {
      state_.screen = it->second;
      state_.focused_field.reset();
    }
  }

  void commit() {
    for (Role r : kAllRoles)
      if (!state_.selection.get(r))
        fail(Errc::IncompleteSelection, std::string(role_name(r)) + " was not selected before the run started");
    const auto condition = state_.selection.to_condition();
    const double y = evaluate_hidden_yield(def_.hidden_yield, condition);
    state_.committed = true;
    state_.executed = condition;
    state_.hidden_yield = y;
    state_.report = synthesize_chromatogram(y, def_.analysis);
  }

  InstrumentDefinition def_;
  bool strict_;
  InstrumentState state_;
};

struct ExecutionResult {
  InstrumentState final_state;
  std::optional<ChromatogramReport> report;
};

inline ExecutionResult execute_script(VirtualInstrument& instrument, const ActionScript& script) {
  for (const auto& e : script.events) instrument.dispatch(e);
  return {instrument.state(), instrument.state().report};
}

// ---------------------------------------------------------------------------
// OCR

struct OcrReading {
  std::string text;
  Rect region;
};

struct ScreenReading {
  std::string screen_id;
  std::vector<OcrReading> entries;
};

class OcrProvider {
 public:
  virtual ~OcrProvider() = default;
  virtual std::vector<OcrReading> read(const Screen& screen) = 0;
};

/// Returns each widget's label verbatim, except labels listed in `corruptions`
/// which are replaced by the mapped text.
class MockOcr final : public OcrProvider {
 public:
  MockOcr() = default;
  explicit MockOcr(std::map<std::string, std::string> corruptions) : corruptions_(std::move(corruptions)) {}

  std::vector<OcrReading> read(const Screen& screen) override {
    std::vector<OcrReading> out;
    for (const auto& w : screen.widgets) {
      auto it = corruptions_.find(w.label);
      out.push_back({it == corruptions_.end() ? w.label : it->second, w.bounds});
    }
    return out;
  }

 private:
  std::map<std::string, std::string> corruptions_;
};

inline ScreenReading read_screen(const Screen& screen, OcrProvider& ocr) { return {screen.id, ocr.read(screen)}; }

// ---------------------------------------------------------------------------
// Planning

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline const OcrReading* find_label(const ScreenReading& reading, std::string_view label) {
  const auto want = lower(label);
  for (const auto& e : reading.entries)
    if (lower(e.text) == want) return &e;
  return nullptr;
}

inline const ScreenReading& reading_for(const std::vector<ScreenReading>& readings, const std::string& screen) {
  for (const auto& r : readings)
    if (r.screen_id == screen) return r;
  fail(Errc::InvalidArgument, "no OCR reading for path screen '" + screen + "'");
}

}  // namespace detail

enum class PlannerKind { Deterministic, LlmAssisted };

/// Prompt for the configuration step: OCR readings, the target condition and
/// the expected reply format.
inline std::string build_configuration_prompt(const PartialCondition& target,
                                              const std::vector<ScreenReading>& readings,
                                              const std::vector<PathStep>& path) {
  std::ostringstream p;
  p << "You are operating the reaction-configuration software of an automated lab.\n"
    << "Text recognized on each screen (label @ x,y,w,h):\n";
  for (const auto& step : path) {
    const auto& reading = detail::reading_for(readings, step.screen);
    p << "[screen " << step.screen << "]\n";
    for (const auto& e : reading.entries)
      p << "  \"" << e.text << "\" @ " << e.region.x << ',' << e.region.y << ',' << e.region.w << ','
        << e.region.h << '\n';
  }
  p << "Desired reaction condition:\n";
  for (const auto& step : path)
    for (Role r : step.roles)
      p << "  " << role_name(r) << ": " << target.get(r).value_or("<unset>") << '\n';
  p << "Match each desired value to the recognized text and reply with a JSON array of events, in order, "
       "using {\"type\":\"click\",\"label\":...}, {\"type\":\"type\",\"text\":...} or {\"type\":\"wait\",\"ms\":...}. "
       "Include each screen's advance button after its selections.\n";
  return p.str();
}

inline ActionScript plan_deterministic(const PartialCondition& target, const std::vector<ScreenReading>& readings,
                                       const std::vector<PathStep>& path) {
  ActionScript script;
  for (const auto& step : path) {
    const auto& reading = detail::reading_for(readings, step.screen);
    for (Role r : step.roles) {
      const auto& value = target.get(r);
      if (!value) fail(Errc::InvalidArgument, "target leaves " + std::string(role_name(r)) + " unset");
      const auto* hit = detail::find_label(reading, *value);
      if (!hit) fail(Errc::UnmatchedLabel, std::string(role_name(r)) + ": '" + *value + "'");
      const auto c = hit->region.center();
      script.events.emplace_back(ClickAction{c.x, c.y});
    }
    if (step.advance_label) {
      const auto* hit = detail::find_label(reading, *step.advance_label);
      if (!hit) fail(Errc::UnmatchedLabel, "advance: '" + *step.advance_label + "'");
      const auto c = hit->region.center();
      script.events.emplace_back(ClickAction{c.x, c.y});
    }
  }
  return script;
}

/// Parses the LLM's event list and checks every event against the readings:
/// label clicks must name recognized text, coordinate clicks must land inside
/// a recognized region. Anything else rejects the whole plan.
inline ActionScript parse_llm_plan(const std::string& response, const std::vector<ScreenReading>& readings,
                                   const std::vector<PathStep>& path) {
  const auto open = response.find('[');
  const auto close = response.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open)
    fail(Errc::PlanRejected, "response contains no JSON event list");
  nlohmann::json events;
  try {
    events = nlohmann::json::parse(response.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::PlanRejected, std::string("malformed event list: ") + e.what());
  }
  std::vector<const ScreenReading*> scope;
  for (const auto& step : path) scope.push_back(&detail::reading_for(readings, step.screen));

  ActionScript script;
  for (const auto& e : events) {
    const std::string type = e.is_object() ? e.value("type", std::string{}) : std::string{};
    if (type == "click" && e.contains("label")) {
      const std::string label = e.at("label").is_string() ? e.at("label").get<std::string>() : std::string{};
      const OcrReading* hit = nullptr;
      for (const auto* r : scope)
        if ((hit = detail::find_label(*r, label))) break;
      if (!hit) fail(Errc::PlanRejected, "event references unknown widget '" + label + "'");
      const auto c = hit->region.center();
      script.events.emplace_back(ClickAction{c.x, c.y});
    } else if (type == "click" && e.contains("x") && e.contains("y")) {
      const int x = e.at("x").get<int>(), y = e.at("y").get<int>();
      bool inside = false;
      for (const auto* r : scope)
        for (const auto& entry : r->entries) inside = inside || entry.region.contains(x, y);
      if (!inside)
        fail(Errc::PlanRejected, "click (" + std::to_string(x) + "," + std::to_string(y) + ") hits no recognized widget");
      script.events.emplace_back(ClickAction{x, y});
    } else if (type == "type" && e.contains("text")) {
      script.events.emplace_back(TypeAction{e.at("text").get<std::string>()});
    } else if (type == "wait" && e.contains("ms")) {
      script.events.emplace_back(WaitAction{e.at("ms").get<std::int64_t>()});
    } else {
      fail(Errc::PlanRejected, "unrecognized event " + e.dump());
    }
  }
  return script;
}

/// Configuration-stage script followed by the fixed commit clicks.
inline ActionScript plan_actions(const PartialCondition& target, const std::vector<ScreenReading>& readings,
                                 const std::vector<PathStep>& path, const ActionScript& commit,
                                 PlannerKind planner = PlannerKind::Deterministic, LLMClient* llm = nullptr) {
  if (target.empty()) fail(Errc::InvalidArgument, "target condition is empty");
  ActionScript script;
  if (planner == PlannerKind::Deterministic) {
    script = plan_deterministic(target, readings, path);
  } else {
    if (!llm) fail(Errc::InvalidArgument, "LLM-assisted planning needs an LLM client");
    const auto response = llm->complete(build_configuration_prompt(target, readings, path));
    script = parse_llm_plan(response.text, readings, path);
  }
  script.append(commit);
  return script;
}

}  // namespace condrec
