#include "swinc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "swinc/errors.hpp"

namespace swinc {
namespace {

struct Value;
using List = std::vector<Value>;
struct Value {
  std::variant<bool, std::int64_t, double, std::string, List> v;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

class ValueParser {
 public:
  ValueParser(const std::string& text, const std::string& key) : s_(text), key_(key) {}

  Value parse() {
    Value v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing text '" + s_.substr(pos_) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(key_ + ": " + msg); }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  Value value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '[') {
      ++pos_;
      List items;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return {items};
      }
      for (;;) {
        items.push_back(value());
        skip_ws();
        if (pos_ >= s_.size()) fail("unterminated list");
        if (s_[pos_] == ']') {
          ++pos_;
          return {items};
        }
        if (s_[pos_] != ',') fail("expected ',' or ']' in list");
        ++pos_;
      }
    }
    if (c == '"') {
      const auto end = s_.find('"', pos_ + 1);
      if (end == std::string::npos) fail("unterminated string");
      std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
      pos_ = end + 1;
      return {out};
    }
    const auto end = s_.find_first_of(",] \t", pos_);
    const std::string tok = s_.substr(pos_, end == std::string::npos ? std::string::npos : end - pos_);
    pos_ = end == std::string::npos ? s_.size() : end;
    if (tok == "true") return {true};
    if (tok == "false") return {false};
    std::int64_t i = 0;
    auto [ip, iec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
    if (iec == std::errc() && ip == tok.data() + tok.size()) return {i};
    double d = 0.0;
    auto [dp, dec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (dec == std::errc() && dp == tok.data() + tok.size()) return {d};
    return {tok};  // bare word
  }

  const std::string& s_;
  const std::string& key_;
  size_t pos_ = 0;
};

const char* type_name(const Value& v) {
  switch (v.v.index()) {
    case 0:
      return "bool";
    case 1:
      return "integer";
    case 2:
      return "real";
    case 3:
      return "string";
    default:
      return "list";
  }
}

[[noreturn]] void type_error(const std::string& key, const char* expected, const Value& v) {
  throw ConfigError(key + ": expected " + expected + ", got " + type_name(v));
}

std::int64_t as_int(const std::string& key, const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return *i;
  type_error(key, "integer", v);
}

double as_real(const std::string& key, const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v.v)) return *d;
  type_error(key, "real", v);
}

bool as_bool(const std::string& key, const Value& v) {
  if (const auto* b = std::get_if<bool>(&v.v)) return *b;
  type_error(key, "bool", v);
}

std::string as_string(const std::string& key, const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v.v)) return *s;
  type_error(key, "string", v);
}

const List& as_list(const std::string& key, const Value& v, size_t n) {
  const auto* l = std::get_if<List>(&v.v);
  if (!l) type_error(key, n ? ("list of " + std::to_string(n)).c_str() : "list", v);
  if (n && l->size() != n) throw ConfigError(key + ": expected a list of " + std::to_string(n) + " values, got " + std::to_string(l->size()));
  return *l;
}

template <typename T>
std::string fmt(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Shortest text that parses back to the same double.
std::string fmt_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos) s += ".0";
  return s;
}

template <typename Array>
std::string fmt_list(const Array& a, bool real) {
  std::string s = "[";
  for (size_t i = 0; i < a.size(); ++i) {
    if (i) s += ", ";
    if (real) {
      s += fmt_real(static_cast<double>(a[i]));
    } else {
      s += fmt(a[i]);
    }
  }
  return s + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    auto add = [&](std::string name, std::string type, std::string doc, std::function<void(RunConfig&, const Value&)> set,
                   std::function<std::string(const RunConfig&)> get) {
      v.push_back({{std::move(name), std::move(type), std::move(doc)}, std::move(set), std::move(get)});
    };
    auto integer = [&](std::string name, std::string doc, auto getter) {
      const std::string k = name;
      add(name, "integer", std::move(doc),
          [k, getter](RunConfig& c, const Value& x) { getter(c) = static_cast<std::remove_reference_t<decltype(getter(c))>>(as_int(k, x)); },
          [getter](const RunConfig& c) {
            RunConfig copy = c;
            return fmt(getter(copy));
          });
    };
    auto real = [&](std::string name, std::string doc, auto getter) {
      const std::string k = name;
      add(name, "real", std::move(doc), [k, getter](RunConfig& c, const Value& x) { getter(c) = as_real(k, x); },
          [getter](const RunConfig& c) {
            RunConfig copy = c;
            return fmt_real(getter(copy));
          });
    };
    auto string = [&](std::string name, std::string doc, auto setter, auto getter) {
      const std::string k = name;
      add(name, "string", std::move(doc), [k, setter](RunConfig& c, const Value& x) { setter(c, as_string(k, x)); },
          [getter](const RunConfig& c) { return quote(getter(c)); });
    };
    auto stage_list = [&](std::string name, std::string doc, auto getter) {
      const std::string k = name;
      add(name, "list", std::move(doc),
          [k, getter](RunConfig& c, const Value& x) {
            const List& l = as_list(k, x, kNumStages);
            for (int s = 0; s < kNumStages; ++s) getter(c)[static_cast<size_t>(s)] = as_int(k, l[static_cast<size_t>(s)]);
          },
          [getter](const RunConfig& c) {
            RunConfig copy = c;
            return fmt_list(getter(copy), false);
          });
    };

    integer("model.in_channels", "input image channels", [](RunConfig& c) -> Index& { return c.model.in_channels; });
    integer("model.base_dim", "patch-embedding channels C0; stage i has C0 * 2^i", [](RunConfig& c) -> Index& { return c.model.base_dim; });
    stage_list("model.depths", "blocks per stage", [](RunConfig& c) -> auto& { return c.model.depths; });
    stage_list("model.heads", "attention heads per stage", [](RunConfig& c) -> auto& { return c.model.heads; });
    integer("model.window", "attention window edge in voxels", [](RunConfig& c) -> Index& { return c.model.window; });
    string("model.ff_kind", "inception | mlp | depthwise",
           [](RunConfig& c, const std::string& s) { c.model.ff_kind = parse_ff_kind(s); },
           [](const RunConfig& c) { return to_string(c.model.ff_kind); });
    add("model.branch_widths", "list", "inception branch widths (1x1, 3x3, 5x5, pool) as multiples of C",
        [](RunConfig& c, const Value& x) {
          const List& l = as_list("model.branch_widths", x, 4);
          auto& w = c.model.widths;
          w.b1 = as_real("model.branch_widths", l[0]);
          w.b3 = as_real("model.branch_widths", l[1]);
          w.b5 = as_real("model.branch_widths", l[2]);
          w.bp = as_real("model.branch_widths", l[3]);
        },
        [](const RunConfig& c) {
          const auto& w = c.model.widths;
          return fmt_list(std::array<double, 4>{w.b1, w.b3, w.b5, w.bp}, true);
        });
    real("model.bottleneck_ratio", "bottleneck width of the 3x3 and 5x5 branches, as a fraction of C",
         [](RunConfig& c) -> double& { return c.model.widths.bottleneck_ratio; });
    real("model.mlp_ratio", "hidden width multiplier of the mlp and depthwise feed-forwards",
         [](RunConfig& c) -> double& { return c.model.mlp_ratio; });
    string("model.merge_kind", "linear | conv",
           [](RunConfig& c, const std::string& s) { c.model.merge_kind = parse_merge_kind(s); },
           [](const RunConfig& c) { return to_string(c.model.merge_kind); });
    string("model.decoder_kind", "swinception (pre-merge taps) | swinunetr (post-merge taps)",
           [](RunConfig& c, const std::string& s) { c.model.decoder_kind = parse_decoder_kind(s); },
           [](const RunConfig& c) { return to_string(c.model.decoder_kind); });
    integer("model.num_classes", "output classes including background", [](RunConfig& c) -> Index& { return c.model.num_classes; });
    add("model.use_rel_bias", "bool", "learned relative position bias in attention",
        [](RunConfig& c, const Value& x) { c.model.use_rel_bias = as_bool("model.use_rel_bias", x); },
        [](const RunConfig& c) { return std::string(c.model.use_rel_bias ? "true" : "false"); });

    integer("data.edge", "synthetic volume edge in voxels", [](RunConfig& c) -> Index& { return c.data.edge; });
    integer("data.min_shapes", "fewest shapes per volume", [](RunConfig& c) -> Index& { return c.data.min_shapes; });
    integer("data.max_shapes", "most shapes per volume", [](RunConfig& c) -> Index& { return c.data.max_shapes; });
    real("data.min_radius", "smallest sphere radius / box half-extent", [](RunConfig& c) -> double& { return c.data.min_radius; });
    real("data.max_radius", "largest sphere radius / box half-extent", [](RunConfig& c) -> double& { return c.data.max_radius; });
    add("data.intensities", "list", "per-class intensity; empty means class id",
        [](RunConfig& c, const Value& x) {
          c.data.intensities.clear();
          for (const Value& e : as_list("data.intensities", x, 0)) c.data.intensities.push_back(as_real("data.intensities", e));
        },
        [](const RunConfig& c) { return fmt_list(c.data.intensities, true); });
    real("data.noise_sigma", "Gaussian noise standard deviation", [](RunConfig& c) -> double& { return c.data.noise_sigma; });
    integer("data.train_size", "training volumes", [](RunConfig& c) -> Index& { return c.train_size; });
    integer("data.val_size", "held-out volumes", [](RunConfig& c) -> Index& { return c.val_size; });

    integer("train.steps", "optimizer steps", [](RunConfig& c) -> Index& { return c.train.steps; });
    integer("train.batch", "volumes per step", [](RunConfig& c) -> Index& { return c.train.batch; });
    integer("train.warmup_steps", "linear learning-rate warmup", [](RunConfig& c) -> Index& { return c.train.warmup_steps; });
    integer("train.log_every", "steps between held-out evaluations", [](RunConfig& c) -> Index& { return c.train.log_every; });
    real("train.lr", "AdamW learning rate", [](RunConfig& c) -> double& { return c.train.optimizer.lr; });
    real("train.weight_decay", "AdamW decoupled weight decay", [](RunConfig& c) -> double& { return c.train.optimizer.weight_decay; });
    real("train.beta1", "AdamW first-moment decay", [](RunConfig& c) -> double& { return c.train.optimizer.beta1; });
    real("train.beta2", "AdamW second-moment decay", [](RunConfig& c) -> double& { return c.train.optimizer.beta2; });
    real("train.eps", "AdamW denominator epsilon", [](RunConfig& c) -> double& { return c.train.optimizer.eps; });

    add("run.seed", "integer", "seed for weights, data and batch order",
        [](RunConfig& c, const Value& x) {
          const auto s = as_int("run.seed", x);
          if (s < 0) throw ConfigError("run.seed: must be >= 0");
          c.seed = static_cast<std::uint64_t>(s);
        },
        [](const RunConfig& c) { return fmt(c.seed); });
    string("run.out_dir", "directory for checkpoints and metrics", [](RunConfig& c, const std::string& s) { c.out_dir = s; },
           [](const RunConfig& c) { return c.out_dir; });
    string("run.data_dir", "directory holding train.swnc and val.swnc", [](RunConfig& c, const std::string& s) { c.data_dir = s; },
           [](const RunConfig& c) { return c.data_dir; });
    return v;
  }();
  return f;
}

const Field& find_field(const std::string& key) {
  const auto& f = fields();
  for (const auto& field : f) {
    if (field.key.name == key) return field;
  }
  const Field* best = nullptr;
  size_t best_d = std::string::npos;
  for (const auto& field : f) {
    const size_t d = edit_distance(key, field.key.name);
    if (d < best_d) {
      best_d = d;
      best = &field;
    }
  }
  throw ConfigError("unknown key '" + key + "' (did you mean '" + best->key.name + "'?)");
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  f.set(cfg, ValueParser(value, key).parse());
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      apply_setting(cfg, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

void RunConfig::validate() const {
  model.validate();
  data_spec(0).validate();
  if (train_size < 1 || val_size < 0) throw ConfigError("data.train_size must be >= 1 and data.val_size >= 0");
  if (train.steps < 0 || train.batch < 1 || train.log_every < 1 || train.warmup_steps < 0) {
    throw ConfigError("train.steps >= 0, train.batch >= 1, train.log_every >= 1 and train.warmup_steps >= 0 are required");
  }
  if (train.optimizer.lr <= 0.0) throw ConfigError("train.lr must be > 0");
}

SyntheticSpec RunConfig::data_spec(std::uint64_t split) const {
  SyntheticSpec s = data;
  s.num_classes = model.num_classes;
  s.seed = seed * 1000003ULL + split;
  return s;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.name.find('.');
    const std::string sec = f.key.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << f.key.name.substr(dot + 1) << " = " << f.get(*this) << "\n";
  }
  return os.str();
}

}  // namespace swinc
