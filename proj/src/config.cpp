#include "dualvgr/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "dualvgr/errors.hpp"

namespace dualvgr {

namespace {

struct Field {
    std::string key;
    std::function<std::string(const ModelConfig&)> get;
    std::function<void(ModelConfig&, const std::string&)> set;
};

int parse_int(const std::string& key, const std::string& s) {
    try {
        size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + s + "'");
    }
}

double parse_double(const std::string& key, const std::string& s) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + s + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& s) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + s + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + s + "'");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
  #define INT_FIELD(name) \
      {#name, [](const ModelConfig& c) { return std::to_string(c.name);}, \
              [](ModelConfig& c, const std::string& s) { c.name = parse_int(#name, s); }}
  #define DBL_FIELD(name) \
      {#name, [](const ModelConfig& c) { return fmt_double(c.name); }, \
              [](ModelConfig& c, const std::string& s) { c.name = parse_double(#name, s); }}
  #define BOOL_FIELD(name) \
      {#name, [](const ModelConfig& c) { return c.name ? "true" : "false"; }, \
              [](ModelConfig& c, const std::string& s) { c.name = parse_bool(#name, s); }}
  #define STR_FIELD(name) \
      {#name, [](const ModelConfig& c) { return c.name; }, \
              [](ModelConfig& c, const std::string& s) { c.name = s; }}
        INT_FIELD(d),
        INT_FIELD(d1),
        INT_FIELD(heads),
        INT_FIELD(steps),
        INT_FIELD(n_clips),
        INT_FIELD(frames_per_clip),
        INT_FIELD(d_word),
        INT_FIELD(d_app),
        INT_FIELD(d_mot),
        INT_FIELD(mfb_factor),
        DBL_FIELD(gamma),
        DBL_FIELD(beta),
        DBL_FIELD(learning_rate),
        INT_FIELD(batch_size),
        INT_FIELD(epochs),
        {"seed", [](const ModelConfig& c) { return std::to_string(c.seed); },
                 [](ModelConfig& c, const std::string& s) { c.seed = parse_u64("seed", s); }},
        BOOL_FIELD(deterministic),
        STR_FIELD(variant),
        STR_FIELD(activation),
        BOOL_FIELD(tied_steps),
        INT_FIELD(data_train_pairs),
        INT_FIELD(data_test_pairs),
        INT_FIELD(data_qa_per_video),
        INT_FIELD(data_min_objects),
        INT_FIELD(data_max_objects),
        DBL_FIELD(data_noise_sigma),
        DBL_FIELD(data_long_fraction),
  #undef INT_FIELD
  #undef DBL_FIELD
  #undef BOOL_FIELD
  #undef STR_FIELD
    };
    return f;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

void ModelConfig::validate() const {
    if (heads <= 0 || d1 <= 0 || d <= 0) throw ConfigError("d, d1, heads must be positive");
    if (heads * d1 != d)
        throw ConfigError("heads * d1 must equal d (got " + std::to_string(heads) + " * " +
                          std::to_string(d1) + " != " + std::to_string(d) + ")");
    if (d % 2 != 0) throw ConfigError("d must be even (bidirectional encoder splits d in half)");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (n_clips < 1) throw ConfigError("n_clips must be >= 1");
    if (frames_per_clip < 1) throw ConfigError("frames_per_clip must be >= 1");
    if (gamma < 0 || beta < 0) throw ConfigError("loss weights must be nonnegative");
    if (mfb_factor < 1) throw ConfigError("mfb_factor must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (data_min_objects < 1 || data_max_objects > 6 || data_min_objects > data_max_objects)
        throw ConfigError("object count range must satisfy 1 <= min <= max <= 6");
    if (data_noise_sigma < 0) throw ConfigError("data_noise_sigma must be >= 0");
    if (data_long_fraction < 0 || data_long_fraction > 1)
        throw ConfigError("data_long_fraction must be in [0, 1]");
}

std::string ModelConfig::to_key_values() const {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.key << "=" << f.get(*this) << "\n";
    return os.str();
}

void ModelConfig::apply_override(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(*this, value);
            return;
        }
    }
    throw ConfigError("unknown config key: " + key);
}

ModelConfig ModelConfig::from_key_values(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        cfg.apply_override(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

ModelConfig ModelConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_key_values(os.str());
}

}  // namespace dualvgr
