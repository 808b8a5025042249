#pragma once

// Run configuration: an INI file with one section per module. Every key has
// a default, so an empty file (or no file) is a valid configuration.
//
//   seed = 0
//
//   [losses]
//   geometry = euclidean          ; euclidean | geodesic
//   tau = 0.07
//   lambda_align = 1
//   tau_ctr = 0.07
//   tuple_weights =               ; comma list, empty = uniform
//   infonce_weights =             ; rows separated by ';', empty = all ones
//   enable_tuple_uniformity = false
//   enable_volume = false
//   anchor = 0
//
//   [trainer]
//   objective = unialign          ; infonce | unialign | unialign_plus
//   tau = 0.5                     ; kernel tau used while training
//   step_size = 0.5
//   epochs = 200
//   record_every = 5
//   divergence_tau = 0.3
//   batch_size = 256
//   dim = 32
//   num_modalities = 3
//   latent_coupling = 0.7
//   init_gap = 1
//
//   [conflict]
//   modalities = 3,5,17,65
//   dim = 16
//   c0 = 0.5
//   sigma = 0.25
//   trials = 10000
//   mu_bar = 0
//   chi_dim = 64
//   chi_trials = 5000
//
//   [divergence]
//   tau = 0.3
//   normalized = false
//   joint = first                 ; first | averaged
//
//   [gradcheck]
//   batches = 27
//   step = 1e-5
//   threshold = 1e-4
//   batch_sizes = 2,4,8
//   modalities = 2,3,4
//   dims = 4,8,16

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "unialign/cli/io.hpp"
#include "unialign/divergence.hpp"
#include "unialign/losses.hpp"
#include "unialign/trainer.hpp"

namespace unialign::cli {

namespace fs = std::filesystem;

struct ConflictScanSpec {
  std::vector<int> modalities{3, 5, 17, 65};
  Index dim = 16;
  double c0 = 0.5;
  double sigma = 0.25;
  int trials = 10000;
  double mu_bar = 0.0;
  Index chi_dim = 64;
  int chi_trials = 5000;
};

struct DivergenceSpec {
  double tau = kDefaultDivergenceTau;
  bool normalized = false;
  JointAnchor joint = JointAnchor::First;
};

struct GradcheckSpec {
  int batches = 27;
  double step = 1e-5;
  double threshold = 1e-4;
  std::vector<int> batch_sizes{2, 4, 8};
  std::vector<int> modalities{2, 3, 4};
  std::vector<int> dims{4, 8, 16};
};

struct Config {
  std::uint64_t seed = 0;
  LossConfig loss;
  int anchor = 0;
  Objective objective = Objective::UniAlign;
  double train_tau = 0.5;
  OptimizerSpec optimizer;
  SyntheticSpec data;
  ConflictScanSpec conflict;
  DivergenceSpec divergence;
  GradcheckSpec gradcheck;

  /// Optimizer settings with the loss block and training tau folded in.
  OptimizerSpec resolved_optimizer() const {
    OptimizerSpec opt = optimizer;
    opt.objective = objective;
    opt.loss = loss;
    opt.loss.kernel.tau = train_tau;
    return opt;
  }

  SyntheticSpec resolved_data() const {
    SyntheticSpec s = data;
    s.seed = seed;
    return s;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& field) {
  T v{};
  const std::string s = trim(text);
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  require(!s.empty() && res.ec == std::errc() && res.ptr == last, ErrorCode::ParseError,
          field + ": cannot parse '" + s + "' as a number");
  return v;
}

inline bool parse_bool(const std::string& text, const std::string& field) {
  std::string s = trim(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorCode::ParseError, field + ": expected a boolean, got '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& field) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(parse_number<T>(part, field));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += io::format_double(xs[k]);
    else
      out += std::to_string(xs[k]);
  }
  return out;
}

inline Objective parse_objective(const std::string& text, const std::string& field) {
  const std::string s = trim(text);
  if (s == "infonce") return Objective::InfoNCE;
  if (s == "unialign") return Objective::UniAlign;
  if (s == "unialign_plus") return Objective::UniAlignPlus;
  fail(ErrorCode::ParseError, field + ": unknown objective '" + s + "'");
}

inline std::string weights_to_string(const Matrix& w) {
  std::string out;
  for (Index i = 0; i < w.rows(); ++i) {
    if (i) out += ';';
    for (Index k = 0; k < w.cols(); ++k) {
      if (k) out += ',';
      out += io::format_double(w(i, k));
    }
  }
  return out;
}

inline Matrix parse_weights(const std::string& text, const std::string& field) {
  if (trim(text).empty()) return {};
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(text, ';')) rows.push_back(parse_list<double>(r, field));
  for (const auto& r : rows)
    require(r.size() == rows.size(), ErrorCode::ParseError, field + ": weights must form a square matrix");
  Matrix w(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows.size(); ++k) w(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  return w;
}

}  // namespace detail

struct ConfigField {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;

  std::string qualified() const { return section.empty() ? key : section + "." + key; }
};

/// Every recognised key in canonical order.
inline const std::vector<ConfigField>& config_fields() {
  using namespace detail;
  auto num = [](auto member) {
    return [member](Config& c, const std::string& v, const std::string& f) {
      auto& ref = member(c);
      ref = parse_number<std::decay_t<decltype(ref)>>(v, f);
    };
  };
  auto show = [](auto member) {
    return [member](const Config& c) {
      const auto& ref = member(const_cast<Config&>(c));
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(ref)>>)
        return io::format_double(ref);
      else
        return std::to_string(ref);
    };
  };
  auto boolean = [](auto member) {
    return ConfigField{"", "",
                       [member](Config& c, const std::string& v, const std::string& f) { member(c) = parse_bool(v, f); },
                       [member](const Config& c) { return std::string(member(const_cast<Config&>(c)) ? "true" : "false"); }};
  };
  auto list = [](auto member) {
    return ConfigField{"", "",
                       [member](Config& c, const std::string& v, const std::string& f) { member(c) = parse_list<int>(v, f); },
                       [member](const Config& c) { return join(member(const_cast<Config&>(c))); }};
  };
  auto field = [&](std::string section, std::string key, auto member) {
    return ConfigField{std::move(section), std::move(key), num(member), show(member)};
  };
  auto with_name = [](ConfigField f, std::string section, std::string key) {
    f.section = std::move(section);
    f.key = std::move(key);
    return f;
  };

  static const std::vector<ConfigField> fields = [&] {
    std::vector<ConfigField> f;
    f.push_back(field("", "seed", [](Config& c) -> auto& { return c.seed; }));

    f.push_back({"losses", "geometry",
                 [](Config& c, const std::string& v, const std::string& n) {
                   const std::string s = trim(v);
                   if (s == "euclidean")
                     c.loss.kernel.geometry = Geometry::Euclidean;
                   else if (s == "geodesic")
                     c.loss.kernel.geometry = Geometry::Geodesic;
                   else
                     fail(ErrorCode::ParseError, n + ": unknown geometry '" + s + "'");
                 },
                 [](const Config& c) { return to_string(c.loss.kernel.geometry); }});
    f.push_back(field("losses", "tau", [](Config& c) -> auto& { return c.loss.kernel.tau; }));
    f.push_back(field("losses", "lambda_align", [](Config& c) -> auto& { return c.loss.lambda_align; }));
    f.push_back(field("losses", "tau_ctr", [](Config& c) -> auto& { return c.loss.tau_ctr; }));
    f.push_back({"losses", "tuple_weights",
                 [](Config& c, const std::string& v, const std::string& n) { c.loss.tuple_weights = parse_list<double>(v, n); },
                 [](const Config& c) { return join(c.loss.tuple_weights); }});
    f.push_back({"losses", "infonce_weights",
                 [](Config& c, const std::string& v, const std::string& n) { c.loss.infonce_weights = parse_weights(v, n); },
                 [](const Config& c) { return weights_to_string(c.loss.infonce_weights); }});
    f.push_back(with_name(boolean([](Config& c) -> auto& { return c.loss.enable_tuple_uniformity; }), "losses",
                          "enable_tuple_uniformity"));
    f.push_back(with_name(boolean([](Config& c) -> auto& { return c.loss.enable_volume; }), "losses", "enable_volume"));
    f.push_back(field("losses", "anchor", [](Config& c) -> auto& { return c.anchor; }));

    f.push_back({"trainer", "objective",
                 [](Config& c, const std::string& v, const std::string& n) { c.objective = parse_objective(v, n); },
                 [](const Config& c) { return to_string(c.objective); }});
    f.push_back(field("trainer", "tau", [](Config& c) -> auto& { return c.train_tau; }));
    f.push_back(field("trainer", "step_size", [](Config& c) -> auto& { return c.optimizer.step_size; }));
    f.push_back(field("trainer", "epochs", [](Config& c) -> auto& { return c.optimizer.epochs; }));
    f.push_back(field("trainer", "record_every", [](Config& c) -> auto& { return c.optimizer.record_every; }));
    f.push_back(field("trainer", "divergence_tau", [](Config& c) -> auto& { return c.optimizer.divergence_tau; }));
    f.push_back(field("trainer", "batch_size", [](Config& c) -> auto& { return c.data.batch_size; }));
    f.push_back(field("trainer", "dim", [](Config& c) -> auto& { return c.data.dim; }));
    f.push_back(field("trainer", "num_modalities", [](Config& c) -> auto& { return c.data.num_modalities; }));
    f.push_back(field("trainer", "latent_coupling", [](Config& c) -> auto& { return c.data.latent_coupling; }));
    f.push_back(field("trainer", "init_gap", [](Config& c) -> auto& { return c.data.init_gap; }));

    f.push_back(with_name(list([](Config& c) -> auto& { return c.conflict.modalities; }), "conflict", "modalities"));
    f.push_back(field("conflict", "dim", [](Config& c) -> auto& { return c.conflict.dim; }));
    f.push_back(field("conflict", "c0", [](Config& c) -> auto& { return c.conflict.c0; }));
    f.push_back(field("conflict", "sigma", [](Config& c) -> auto& { return c.conflict.sigma; }));
    f.push_back(field("conflict", "trials", [](Config& c) -> auto& { return c.conflict.trials; }));
    f.push_back(field("conflict", "mu_bar", [](Config& c) -> auto& { return c.conflict.mu_bar; }));
    f.push_back(field("conflict", "chi_dim", [](Config& c) -> auto& { return c.conflict.chi_dim; }));
    f.push_back(field("conflict", "chi_trials", [](Config& c) -> auto& { return c.conflict.chi_trials; }));

    f.push_back(field("divergence", "tau", [](Config& c) -> auto& { return c.divergence.tau; }));
    f.push_back(with_name(boolean([](Config& c) -> auto& { return c.divergence.normalized; }), "divergence", "normalized"));
    f.push_back({"divergence", "joint",
                 [](Config& c, const std::string& v, const std::string& n) {
                   const std::string s = trim(v);
                   if (s == "first")
                     c.divergence.joint = JointAnchor::First;
                   else if (s == "averaged")
                     c.divergence.joint = JointAnchor::Averaged;
                   else
                     fail(ErrorCode::ParseError, n + ": expected first or averaged, got '" + s + "'");
                 },
                 [](const Config& c) { return std::string(c.divergence.joint == JointAnchor::First ? "first" : "averaged"); }});

    f.push_back(field("gradcheck", "batches", [](Config& c) -> auto& { return c.gradcheck.batches; }));
    f.push_back(field("gradcheck", "step", [](Config& c) -> auto& { return c.gradcheck.step; }));
    f.push_back(field("gradcheck", "threshold", [](Config& c) -> auto& { return c.gradcheck.threshold; }));
    f.push_back(with_name(list([](Config& c) -> auto& { return c.gradcheck.batch_sizes; }), "gradcheck", "batch_sizes"));
    f.push_back(with_name(list([](Config& c) -> auto& { return c.gradcheck.modalities; }), "gradcheck", "modalities"));
    f.push_back(with_name(list([](Config& c) -> auto& { return c.gradcheck.dims; }), "gradcheck", "dims"));
    return f;
  }();
  return fields;
}

/// Applies one key; throws ParseError for bad values and InvalidArgument
/// for unknown keys.
inline void set_config_value(Config& cfg, std::string_view section, std::string_view key, const std::string& value) {
  for (const auto& f : config_fields()) {
    if (f.section == section && f.key == key) {
      f.set(cfg, value, f.qualified());
      return;
    }
  }
  fail(ErrorCode::InvalidArgument,
       "unknown configuration key '" + (section.empty() ? std::string(key) : std::string(section) + "." + std::string(key)) + "'");
}

inline Config parse_config(std::istream& in, const std::string& source = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ParseError, source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  Config cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const bool is_key = std::any_of(config_fields().begin(), config_fields().end(),
                                      [&](const ConfigField& f) { return f.section.empty() && f.key == name; });
      const bool is_section = std::any_of(config_fields().begin(), config_fields().end(),
                                          [&](const ConfigField& f) { return f.section == name; });
      if (is_key || !is_section) set_config_value(cfg, "", name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      require(leaf.empty(), ErrorCode::ParseError, source + ": nested keys are not supported");
      set_config_value(cfg, name, key, leaf.data());
    }
  }
  return cfg;
}

inline Config load_config(const fs::path& path) {
  require(fs::exists(path), ErrorCode::IoError, "no such config file: " + path.string());
  std::istringstream in(io::detail::read_file(path));
  return parse_config(in, path.string());
}

/// Fully resolved configuration as sorted INI text.
inline std::string canonical_config(const Config& cfg) {
  std::string out;
  std::string current = "\x01";
  for (const auto& f : config_fields()) {
    if (f.section != current) {
      if (!f.section.empty()) out += "\n[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorCode::IoError,
          "SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) {
    hex.push_back(kHex[digest[k] >> 4]);
    hex.push_back(kHex[digest[k] & 0xF]);
  }
  return hex;
}

inline std::string config_hash(const Config& cfg) { return sha256_hex(canonical_config(cfg)); }

}  // namespace unialign::cli
