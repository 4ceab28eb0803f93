#include "roomloc/scenario.hpp"

#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "roomloc/errors.hpp"

namespace roomloc {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects unknown ones.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown scenario key: " + where(key));
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError("bad value for " + where(key));
      }
    }
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vec3 to_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected numbers");
  }
}

json from_vec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

template <typename Enum>
Enum parse_enum(const std::string& value, std::initializer_list<std::pair<const char*, Enum>> options,
                const std::string& where) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(where + ": unknown value '" + value + "' (expected one of: " + names + ")");
}

NoiseProfile noise_from_json(const json& j) {
  NoiseProfile p;
  Reader r(j, "noise");
  if (const json* comps = r.find("components")) {
    if (!comps->is_array()) throw ConfigError("noise.components: expected a list");
    for (std::size_t i = 0; i < comps->size(); ++i) {
      NoiseComponent c;
      Reader rc((*comps)[i], "noise.components[" + std::to_string(i) + "]");
      rc.get("center", c.center);
      rc.get("bandwidth", c.bandwidth);
      rc.get("spl", c.spl);
      p.components.push_back(c);
    }
  }
  if (const json* floor = r.find("floor_spl")) {
    if (!floor->is_null()) {
      if (!floor->is_number()) throw ConfigError("noise.floor_spl: expected a number or null");
      p.broadband_floor_spl = floor->get<double>();
    }
  }
  r.get("floor_low", p.floor_low);
  r.get("floor_high", p.floor_high);
  return p;
}

json noise_to_json(const NoiseProfile& p) {
  json comps = json::array();
  for (const auto& c : p.components) comps.push_back({{"center", c.center}, {"bandwidth", c.bandwidth}, {"spl", c.spl}});
  json j;
  j["components"] = comps;
  j["floor_spl"] = p.has_floor() ? json(p.broadband_floor_spl) : json(nullptr);
  j["floor_low"] = p.floor_low;
  j["floor_high"] = p.floor_high;
  return j;
}

Scenario from_json_value(const json& root) {
  Scenario s;
  Reader r(root, "");
  if (const json* room = r.find("room")) {
    Reader rr(*room, "room");
    rr.get("lx", s.room.lx);
    rr.get("ly", s.room.ly);
    rr.get("lz", s.room.lz);
  }
  r.get("bands", s.bands.centers);
  r.get("rt60_targets", s.rt60_targets);
  if (const json* cal = r.find("calibration")) {
    if (!cal->is_string()) throw ConfigError("calibration: expected a string");
    s.calibration = parse_enum<CalibrationMode>(cal->get<std::string>(),
                                                {{"sabine", CalibrationMode::kSabine}, {"fitted", CalibrationMode::kFitted}},
                                                "calibration");
  }
  if (const json* air = r.find("air")) {
    if (air->is_null()) {
      s.air.reset();
    } else {
      AirAbsorptionModel a;
      Reader ra(*air, "air");
      ra.get("temperature_c", a.temperature_c);
      ra.get("relative_humidity", a.relative_humidity);
      ra.get("pressure_kpa", a.pressure_kpa);
      s.air = a;
    }
  }
  if (const json* rir = r.find("rir")) {
    Reader rr(*rir, "rir");
    rr.get("max_order", s.max_order);
    rr.get("band_filter_order", s.band_filter_order);
    rr.get("subbands_per_octave", s.subbands_per_octave);
    rr.get("diffuse_phase", s.diffuse_phase);
  }
  if (const json* layout = r.find("layout")) {
    Reader rl(*layout, "layout");
    if (const json* kind = rl.find("kind")) {
      if (!kind->is_string()) throw ConfigError("layout.kind: expected a string");
      s.layout.kind = parse_enum<LayoutKind>(
          kind->get<std::string>(),
          {{"corners", LayoutKind::kCorners}, {"nested", LayoutKind::kNested}, {"explicit", LayoutKind::kExplicit}},
          "layout.kind");
    }
    rl.get("inset", s.layout.inset);
    rl.get("count", s.layout.count);
    rl.get("reference_index", s.layout.reference_index);
    if (const json* mics = rl.find("mics")) {
      if (!mics->is_array()) throw ConfigError("layout.mics: expected a list");
      s.layout.mic_positions.clear();
      for (std::size_t i = 0; i < mics->size(); ++i) {
        s.layout.mic_positions.push_back(to_vec3((*mics)[i], "layout.mics[" + std::to_string(i) + "]"));
      }
    }
  }
  if (const json* grid = r.find("grid")) {
    Reader rg(*grid, "grid");
    rg.get("spacing", s.grid.spacing);
    rg.get("margin", s.grid.margin);
    rg.get("gt_jitter", s.grid.gt_jitter);
    rg.get("gt_jitter_std", s.grid.gt_jitter_std);
  }
  if (const json* chirp = r.find("chirp")) {
    Reader rc(*chirp, "chirp");
    rc.get("f_start", s.chirp.f_start);
    rc.get("f_end", s.chirp.f_end);
    rc.get("duration", s.chirp.duration);
    rc.get("amplitude", s.chirp.amplitude);
    if (const json* w = rc.find("window")) {
      if (!w->is_string()) throw ConfigError("chirp.window: expected a string");
      s.chirp.window = parse_enum<ChirpWindow>(w->get<std::string>(),
                                               {{"none", ChirpWindow::kNone}, {"hann", ChirpWindow::kHann}}, "chirp.window");
    }
  }
  if (const json* sp = r.find("speaker")) {
    Reader rs(*sp, "speaker");
    rs.get("bandwidth", s.speaker.bandwidth);
    rs.get("max_output_spl_at_1m", s.speaker.max_output_spl_at_1m);
    rs.get("directivity", s.speaker.directivity);
  }
  if (const json* daq = r.find("daq")) {
    Reader rd(*daq, "daq");
    rd.get("fs_in", s.daq.fs_in);
    rd.get("fs_out", s.daq.fs_out);
    rd.get("bits", s.daq.bits);
    rd.get("range_volts", s.daq.range_volts);
    rd.get("accuracy_noise", s.daq.accuracy_noise);
    if (const json* dir = rd.find("direction")) {
      if (!dir->is_string()) throw ConfigError("daq.direction: expected a string");
      s.daq.direction = parse_enum<DaqDirection>(
          dir->get<std::string>(), {{"input", DaqDirection::kInput}, {"output", DaqDirection::kOutput}}, "daq.direction");
    }
  }
  if (const json* mic = r.find("mic")) {
    Reader rm(*mic, "mic");
    rm.get("sensitivity_dbv", s.mic.sensitivity_dbv);
    rm.get("bandwidth", s.mic.bandwidth);
    rm.get("gain_db", s.mic.gain_db);
    rm.get("response_db", s.mic.response_db);
  }
  if (const json* noise = r.find("noise")) {
    if (noise->is_null()) {
      s.noise_preset.reset();
      s.noise.reset();
    } else if (noise->is_string()) {
      s.noise_preset = noise->get<std::string>();
      parse_noise_preset(*s.noise_preset);
    } else {
      s.noise = noise_from_json(*noise);
    }
  }
  if (const json* sync = r.find("sync")) {
    Reader rs(*sync, "sync");
    rs.get("jitter_std", s.sync.jitter_std);
    rs.get("bias_per_node", s.sync.bias_per_node);
  }
  r.get("speed_of_sound", s.speed_of_sound);
  r.get("min_peak_ratio", s.min_peak_ratio);
  r.get("emission_offset_max", s.emission_offset_max);
  r.get("trials", s.trials);
  r.get("seed", s.seed);
  r.get("threads", s.threads);
  return s;
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
}

}  // namespace

Scenario scenario_from_json(std::string_view text) { return from_json_value(parse_text(text)); }

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["room"] = {{"lx", s.room.lx}, {"ly", s.room.ly}, {"lz", s.room.lz}};
  j["bands"] = s.bands.centers;
  j["rt60_targets"] = s.rt60_targets;
  j["calibration"] = s.calibration == CalibrationMode::kFitted ? "fitted" : "sabine";
  if (s.air) {
    j["air"] = {{"temperature_c", s.air->temperature_c},
                {"relative_humidity", s.air->relative_humidity},
                {"pressure_kpa", s.air->pressure_kpa}};
  } else {
    j["air"] = nullptr;
  }
  j["rir"] = {{"max_order", s.max_order},
              {"band_filter_order", s.band_filter_order},
              {"subbands_per_octave", s.subbands_per_octave},
              {"diffuse_phase", s.diffuse_phase}};
  const char* kinds[] = {"corners", "nested", "explicit"};
  json mics = json::array();
  for (const auto& m : s.layout.mic_positions) mics.push_back(from_vec3(m));
  j["layout"] = {{"kind", kinds[static_cast<int>(s.layout.kind)]},
                 {"inset", s.layout.inset},
                 {"count", s.layout.count},
                 {"mics", mics},
                 {"reference_index", s.layout.reference_index}};
  j["grid"] = {{"spacing", s.grid.spacing},
               {"margin", s.grid.margin},
               {"gt_jitter", s.grid.gt_jitter},
               {"gt_jitter_std", s.grid.gt_jitter_std}};
  j["chirp"] = {{"f_start", s.chirp.f_start},
                {"f_end", s.chirp.f_end},
                {"duration", s.chirp.duration},
                {"amplitude", s.chirp.amplitude},
                {"window", s.chirp.window == ChirpWindow::kHann ? "hann" : "none"}};
  j["speaker"] = {{"bandwidth", s.speaker.bandwidth},
                  {"max_output_spl_at_1m", s.speaker.max_output_spl_at_1m},
                  {"directivity", s.speaker.directivity}};
  j["daq"] = {{"fs_in", s.daq.fs_in},
              {"fs_out", s.daq.fs_out},
              {"bits", s.daq.bits},
              {"range_volts", s.daq.range_volts},
              {"direction", s.daq.direction == DaqDirection::kInput ? "input" : "output"},
              {"accuracy_noise", s.daq.accuracy_noise}};
  j["mic"] = {{"sensitivity_dbv", s.mic.sensitivity_dbv},
              {"bandwidth", s.mic.bandwidth},
              {"gain_db", s.mic.gain_db},
              {"response_db", s.mic.response_db}};
  if (s.noise_preset) {
    j["noise"] = *s.noise_preset;
  } else if (s.noise) {
    j["noise"] = noise_to_json(*s.noise);
  } else {
    j["noise"] = nullptr;
  }
  j["sync"] = {{"jitter_std", s.sync.jitter_std}, {"bias_per_node", s.sync.bias_per_node}};
  j["speed_of_sound"] = s.speed_of_sound;
  j["min_peak_ratio"] = s.min_peak_ratio;
  j["emission_offset_max"] = s.emission_offset_max;
  j["trials"] = s.trials;
  j["seed"] = s.seed;
  j["threads"] = s.threads;
  return j.dump(2);
}

Scenario load_scenario(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".toml") throw ConfigError("scenario " + path.string() + ": TOML is not supported, use JSON");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scenario " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return scenario_from_json(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string apply_override(std::string_view json_text, std::string_view dotted_key, std::string_view value) {
  json root = parse_text(json_text.empty() ? std::string_view("{}") : json_text);
  if (dotted_key.empty()) throw ConfigError("override: empty key");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = std::string(value);
  }
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part(dotted_key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (part.empty()) throw ConfigError("override: malformed key '" + std::string(dotted_key) + "'");
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError("override: '" + std::string(dotted_key) + "' does not name an object path");
    if (dot == std::string_view::npos) {
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return root.dump(2);
}

}  // namespace roomloc
