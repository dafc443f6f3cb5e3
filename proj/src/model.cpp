#include "mpqkd/model.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace mpqkd {

namespace {

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError(field + ": " + why);
}

void validate_party(const PartyParams& p, const std::string& who) {
  check(p.mu > 0.0 && p.nu > 0.0 && p.nu < p.mu, who + ".mu/nu",
        "intensity ordering 0 < nu < mu violated");
  for (auto [v, name] : {std::pair{p.p_mu, ".p_mu"}, {p.p_nu, ".p_nu"},
                         {p.p_o, ".p_o"}}) {
    check(v > 0.0 && v < 1.0, who + name, "probability must lie in (0,1)");
  }
  check(std::abs(p.p_mu + p.p_nu + p.p_o - 1.0) <= 1e-12, who + ".p_*",
        "probability sum must equal 1 within 1e-12");
  check(p.loss_to_charlie_db >= 0.0, who + ".loss_to_charlie_db",
        "loss must be non-negative");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const SystemConfig& validate_config(const SystemConfig& cfg) {
  validate_party(cfg.alice, "alice");
  validate_party(cfg.bob, "bob");
  check(cfg.clock_hz > 0.0, "clock_hz", "must be positive");
  check(cfg.n_rounds >= 1, "n_rounds", "must be at least 1");
  check(cfg.l_max >= 1, "l_max", "must be at least 1");
  check(cfg.m_slices >= 2, "m_slices", "must be at least 2");
  check(cfg.det_efficiency > 0.0 && cfg.det_efficiency <= 1.0,
        "det_efficiency", "must lie in (0,1]");
  check(cfg.dark_rate_hz >= 0.0, "dark_rate_hz", "must be non-negative");
  check(cfg.dark_prob_per_gate() < 1.0, "dark_rate_hz",
        "dark probability per gate must be below 1");
  check(cfg.beat_jitter_std_hz >= 0.0, "beat_jitter_std_hz",
        "must be non-negative");
  check(cfg.phase_drift_std_rad >= 0.0, "phase_drift_std_rad",
        "must be non-negative");
  check(cfg.t_r_us > 0.0, "t_r_us", "must be positive");
  check(cfg.ref_rate_hz >= 0.0, "ref_rate_hz", "must be non-negative");
  check(cfg.ref_visibility >= 0.0 && cfg.ref_visibility <= 1.0,
        "ref_visibility", "must lie in [0,1]");
  const std::pair<double, const char*> eps_fields[] = {
      {cfg.eps.cor, "eps_cor"},     {cfg.eps.prime, "eps_prime"},
      {cfg.eps.hat, "eps_hat"},     {cfg.eps.pa, "eps_pa"},
      {cfg.eps.upper, "eps_upper"}, {cfg.eps.lower, "eps_lower"},
      {cfg.eps.e, "eps_e"}};
  for (auto& [v, name] : eps_fields) {
    check(v > 0.0 && v < 1.0, name, "must lie in (0,1)");
  }
  check(cfg.f_ec >= 1.0, "f_ec", "must be at least 1");
  check(cfg.ec_leak_scale > 0.0 && cfg.ec_leak_scale <= 1.0, "ec_leak_scale",
        "must lie in (0,1]");
  return cfg;
}

SystemConfig symmetric_config(const PartyParams& shared) {
  SystemConfig cfg;
  cfg.alice = shared;
  cfg.bob = shared;
  return cfg;
}

namespace {

struct Field {
  std::function<void(SystemConfig&, const std::string&)> set;
  std::function<std::string(const SystemConfig&)> get;
};

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos])))
      ++pos;
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse value '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  if (d < 0 || d != std::floor(d) || d > 1.8e19)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(d);
}

#define DOUBLE_FIELD(key, expr)                                            \
  {key, Field{[](SystemConfig& c, const std::string& v) {                  \
                c.expr = parse_double(key, v);                             \
              },                                                           \
              [](const SystemConfig& c) { return fmt_double(c.expr); }}}

#define U64_FIELD(key, expr, type)                                         \
  {key, Field{[](SystemConfig& c, const std::string& v) {                  \
                c.expr = static_cast<type>(parse_u64(key, v));             \
              },                                                           \
              [](const SystemConfig& c) {                                  \
                return std::to_string(c.expr);                             \
              }}}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      DOUBLE_FIELD("alice.mu", alice.mu),
      DOUBLE_FIELD("alice.nu", alice.nu),
      DOUBLE_FIELD("alice.p_mu", alice.p_mu),
      DOUBLE_FIELD("alice.p_nu", alice.p_nu),
      DOUBLE_FIELD("alice.p_o", alice.p_o),
      DOUBLE_FIELD("alice.loss_to_charlie_db", alice.loss_to_charlie_db),
      DOUBLE_FIELD("bob.mu", bob.mu),
      DOUBLE_FIELD("bob.nu", bob.nu),
      DOUBLE_FIELD("bob.p_mu", bob.p_mu),
      DOUBLE_FIELD("bob.p_nu", bob.p_nu),
      DOUBLE_FIELD("bob.p_o", bob.p_o),
      DOUBLE_FIELD("bob.loss_to_charlie_db", bob.loss_to_charlie_db),
      DOUBLE_FIELD("clock_hz", clock_hz),
      U64_FIELD("n_rounds", n_rounds, std::uint64_t),
      U64_FIELD("l_max", l_max, std::uint32_t),
      U64_FIELD("m_slices", m_slices, std::uint32_t),
      DOUBLE_FIELD("det_efficiency", det_efficiency),
      DOUBLE_FIELD("dark_rate_hz", dark_rate_hz),
      DOUBLE_FIELD("beat_center_hz", beat_center_hz),
      DOUBLE_FIELD("beat_jitter_std_hz", beat_jitter_std_hz),
      DOUBLE_FIELD("phase_drift_std_rad", phase_drift_std_rad),
      DOUBLE_FIELD("t_r_us", t_r_us),
      DOUBLE_FIELD("ref_rate_hz", ref_rate_hz),
      DOUBLE_FIELD("ref_visibility", ref_visibility),
      DOUBLE_FIELD("eps_cor", eps.cor),
      DOUBLE_FIELD("eps_prime", eps.prime),
      DOUBLE_FIELD("eps_hat", eps.hat),
      DOUBLE_FIELD("eps_pa", eps.pa),
      DOUBLE_FIELD("eps_upper", eps.upper),
      DOUBLE_FIELD("eps_lower", eps.lower),
      DOUBLE_FIELD("eps_e", eps.e),
      DOUBLE_FIELD("f_ec", f_ec),
      DOUBLE_FIELD("ec_leak_scale", ec_leak_scale),
  };
  return table;
}

#undef DOUBLE_FIELD
#undef U64_FIELD

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

SystemConfig parse_config(const std::string& text) {
  SystemConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (auto& [name, field] : field_table()) {
      if (name == key) {
        field.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" +
                        key + "'");
  }
  return cfg;
}

SystemConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const SystemConfig& cfg) {
  std::ostringstream out;
  for (auto& [name, field] : field_table()) {
    out << name << " = " << field.get(cfg) << "\n";
  }
  return out.str();
}

TallyTable& TallyTable::operator+=(const TallyTable& o) {
  n_mu_mu += o.n_mu_mu;
  n_mu_o += o.n_mu_o;
  n_o_mu += o.n_o_mu;
  n_nu_nu += o.n_nu_nu;
  n_nu_o += o.n_nu_o;
  n_o_nu += o.n_o_nu;
  n_o_o += o.n_o_o;
  n_2nu_2nu += o.n_2nu_2nu;
  n_2nu_o += o.n_2nu_o;
  n_o_2nu += o.n_o_2nu;
  m_z += o.m_z;
  m_x += o.m_x;
  return *this;
}

std::string tallies_to_json(const TallyTable& t, double n_total) {
  nlohmann::ordered_json j;
  j["n_total"] = n_total;
  j["n_mu_mu"] = t.n_mu_mu;
  j["m_mu_mu"] = t.m_z;
  j["n_mu_o"] = t.n_mu_o;
  j["n_o_mu"] = t.n_o_mu;
  j["n_nu_nu"] = t.n_nu_nu;
  j["n_nu_o"] = t.n_nu_o;
  j["n_o_nu"] = t.n_o_nu;
  j["n_o_o"] = t.n_o_o;
  j["n_2nu_2nu"] = t.n_2nu_2nu;
  j["m_2nu_2nu"] = t.m_x;
  j["n_2nu_o"] = t.n_2nu_o;
  j["n_o_2nu"] = t.n_o_2nu;
  return j.dump(2) + "\n";
}

TallyTable tallies_from_json(const std::string& text, double* n_total_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tally json: ") + e.what());
  }
  auto get = [&](const char* key) -> std::uint64_t {
    if (!j.contains(key))
      throw ParseError(std::string("tally json: missing key '") + key + "'");
    return j.at(key).get<std::uint64_t>();
  };
  TallyTable t;
  t.n_mu_mu = get("n_mu_mu");
  t.m_z = get("m_mu_mu");
  t.n_mu_o = get("n_mu_o");
  t.n_o_mu = get("n_o_mu");
  t.n_nu_nu = get("n_nu_nu");
  t.n_nu_o = get("n_nu_o");
  t.n_o_nu = get("n_o_nu");
  t.n_o_o = get("n_o_o");
  t.n_2nu_2nu = get("n_2nu_2nu");
  t.m_x = get("m_2nu_2nu");
  t.n_2nu_o = get("n_2nu_o");
  t.n_o_2nu = get("n_o_2nu");
  if (t.m_z > t.n_mu_mu || t.m_x > t.n_2nu_2nu)
    throw ParseError("tally json: error count exceeds pair count");
  if (n_total_out) {
    *n_total_out = j.contains("n_total") ? j.at("n_total").get<double>() : 0.0;
  }
  return t;
}

}  // namespace mpqkd
