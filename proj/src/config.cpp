#include "varstable/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "varstable/error.hpp"

namespace varstable {

namespace {

const std::vector<std::pair<Command, std::string>>& command_table() {
  static const std::vector<std::pair<Command, std::string>> t{
      {Command::kValidate, "validate"},
      {Command::kDensity, "density"},
      {Command::kVerifyLemma, "verify-lemma"},
      {Command::kDuhamel, "duhamel"},
      {Command::kCouplingGap, "coupling-gap"},
      {Command::kResolventMass, "resolvent-mass"},
      {Command::kSimulate, "simulate"},
      {Command::kUniquenessTest, "uniqueness-test"},
      {Command::kExitTime, "exit-time"},
  };
  return t;
}

const std::vector<std::string> kLemmas{"L2.1",        "L2.2", "L2.3", "L2.6-0", "L2.6-1",
                                       "L2.6-2",      "second-diff",  "L2.8",   "L2.9",
                                       "F1",          "F2",   "L3.4", "decay",  "scaling"};

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Closest candidate within a third of the word's length, or "".
std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(2, word.size() / 3) + 1;
  for (const auto& c : candidates) {
    const std::size_t dist = edit_distance(word, c);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

std::string where(const std::string& file, const toml::source_region& src) {
  std::ostringstream os;
  os << file;
  if (src.begin.line > 0) os << ':' << src.begin.line << ':' << src.begin.column;
  return os.str();
}

struct Range {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;

  bool contains(double v) const {
    if (!std::isfinite(v)) return false;
    if (lo_open ? !(v > lo) : !(v >= lo)) return false;
    if (hi_open ? !(v < hi) : !(v <= hi)) return false;
    return true;
  }
  std::string describe() const {
    std::ostringstream os;
    os << (lo_open ? '(' : '[');
    if (std::isinf(lo)) os << "-inf"; else os << lo;
    os << ", ";
    if (std::isinf(hi)) os << "inf"; else os << hi;
    os << (hi_open ? ')' : ']');
    return os.str();
  }
};

Range positive() { return {0.0, std::numeric_limits<double>::infinity(), true, false}; }
Range nonnegative() { return {0.0, std::numeric_limits<double>::infinity(), false, false}; }
Range open_unit() { return {0.0, 1.0, true, true}; }
Range any() { return {}; }

// One TOML table with its dotted path. Keys read through it become known;
// finish() rejects the rest with a suggestion.
class Section {
 public:
  Section(const toml::table* tbl, std::string path, const std::string* file,
          toml::source_region where)
      : tbl_(tbl), path_(std::move(path)), file_(file), where_(where) {}

  bool present() const { return tbl_ != nullptr; }
  bool has(const std::string& key) {
    known_.push_back(key);
    return tbl_ && tbl_->contains(key);
  }

  Section sub(const std::string& key) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return Section(nullptr, dotted(key), file_, where_);
    const toml::table* t = n->as_table();
    if (!t) fail(n, key, "must be a table");
    return Section(t, dotted(key), file_, n->source());
  }

  double number(const std::string& key, double def, Range r) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    const double v = to_double(n, key);
    if (!r.contains(v)) fail(n, key, "must lie in " + r.describe() + ", got " + fmt(v));
    return v;
  }

  long long integer(const std::string& key, long long def, long long lo, long long hi) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    const auto v = n->value_exact<int64_t>();
    if (!v) fail(n, key, "must be an integer");
    if (*v < lo || *v > hi)
      fail(n, key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                       std::to_string(*v));
    return *v;
  }

  bool boolean(const std::string& key, bool def) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    const auto v = n->value_exact<bool>();
    if (!v) fail(n, key, "must be true or false");
    return *v;
  }

  std::string string(const std::string& key, const std::string& def,
                     const std::vector<std::string>& choices = {}) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    const auto v = n->value_exact<std::string>();
    if (!v) fail(n, key, "must be a string");
    check_choice(n, key, *v, choices);
    return *v;
  }

  // A string or an array of strings.
  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& def,
                                   const std::vector<std::string>& choices = {}) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    std::vector<std::string> out;
    if (const auto v = n->value_exact<std::string>()) {
      out.push_back(*v);
    } else if (const toml::array* a = n->as_array()) {
      for (const toml::node& e : *a) {
        const auto s = e.value_exact<std::string>();
        if (!s) fail(&e, key, "must hold strings");
        out.push_back(*s);
      }
    } else {
      fail(n, key, "must be a string or an array of strings");
    }
    for (const auto& s : out) check_choice(n, key, s, choices);
    return out;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& def, Range r,
                              bool allow_empty = false, bool increasing = false) {
    known_.push_back(key);
    const toml::node* n = node(key);
    if (!n) return def;
    const toml::array* a = n->as_array();
    if (!a) fail(n, key, "must be an array of numbers");
    std::vector<double> out;
    for (const toml::node& e : *a) {
      const double v = to_double(&e, key);
      if (!r.contains(v)) fail(&e, key, "entries must lie in " + r.describe() + ", got " + fmt(v));
      out.push_back(v);
    }
    if (out.empty() && !allow_empty) fail(n, key, "must not be empty");
    if (increasing)
      for (std::size_t i = 1; i < out.size(); ++i)
        if (!(out[i] > out[i - 1])) fail(n, key, "must be strictly increasing");
    return out;
  }

  // Array of fixed-length numeric arrays.
  std::vector<std::vector<double>> rows(const std::string& key, std::size_t width) {
    known_.push_back(key);
    const toml::node* n = node(key);
    std::vector<std::vector<double>> out;
    if (!n) return out;
    const toml::array* a = n->as_array();
    if (!a || a->empty()) fail(n, key, "must be a nonempty array of arrays");
    for (const toml::node& e : *a) {
      const toml::array* row = e.as_array();
      if (!row || row->size() != width)
        fail(&e, key, "entries must be arrays of " + std::to_string(width) + " numbers");
      std::vector<double> r;
      for (const toml::node& x : *row) r.push_back(to_double(&x, key));
      out.push_back(r);
    }
    return out;
  }

  [[noreturn]] void fail(const toml::node* n, const std::string& key,
                         const std::string& msg) const {
    if (!n) n = node(key);
    throw InputError("config", where(*file_, n ? n->source() : where_) + ": key '" + dotted(key) +
                                   "' " + msg);
  }

  // Unknown keys, with the nearest known one when close.
  void finish(const std::string& context = "") const {
    if (!tbl_) return;
    for (const auto& [k, v] : *tbl_) {
      const std::string key(k.str());
      if (std::find(known_.begin(), known_.end(), key) != known_.end()) continue;
      std::string msg = "unknown key '" + dotted(key) + "'" + context;
      const std::string s = suggest(key, known_);
      if (!s.empty()) msg += "; did you mean '" + dotted(s) + "'?";
      throw InputError("config", where(*file_, v.source()) + ": " + msg);
    }
  }

  std::string dotted(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const toml::node* node(const std::string& key) const {
    return tbl_ ? tbl_->get(key) : nullptr;
  }

  double to_double(const toml::node* n, const std::string& key) const {
    if (const auto f = n->value_exact<double>()) return *f;
    if (const auto i = n->value_exact<int64_t>()) return double(*i);
    fail(n, key, "must be a number");
  }

  void check_choice(const toml::node* n, const std::string& key, const std::string& v,
                    const std::vector<std::string>& choices) const {
    if (choices.empty() || std::find(choices.begin(), choices.end(), v) != choices.end()) return;
    std::string msg = "has unknown value '" + v + "' (expected one of";
    for (const auto& c : choices) msg += " " + c;
    msg += ")";
    const std::string s = suggest(v, choices);
    if (!s.empty()) msg += "; did you mean '" + s + "'?";
    fail(n, key, msg);
  }

  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  const toml::table* tbl_;
  std::string path_;
  const std::string* file_;
  toml::source_region where_;
  std::vector<std::string> known_;
};

bool power_of_two(long long n) { return n > 0 && (n & (n - 1)) == 0; }

void read_grid(Section& s, GridSpec& g) {
  const long long n = s.integer("n", 0, 0, 1LL << 26);
  if (n != 0 && !power_of_two(n)) s.fail(nullptr, "n", "must be 0 (automatic) or a power of two");
  g.n = std::size_t(n);
  g.half_width = s.number("half_width", g.half_width, nonnegative());
  g.alias_target = s.number("alias_target", g.alias_target, open_unit());
  g.max_points = std::size_t(s.integer("max_points", (long long)g.max_points, 1, 1LL << 28));
}

void read_model(Section m, ModelDecl& decl) {
  const std::string preset =
      m.string("family", "custom", {"custom", "constant", "test", "small_amplitude"});
  decl.params.d = int(m.integer("d", 1, 1, 2));
  std::string alpha_default = "constant";
  std::string n_default = "constant";
  double a0 = 1.0, a1 = 0.3, c = 1.0, eps = 0.25;
  if (preset == "test" || preset == "small_amplitude") {
    alpha_default = "tanh";
    n_default = "sin_cos";
    if (preset == "small_amplitude") {
      a1 = 0.1;
      eps = 0.1;
    }
  }

  Section sa = m.sub("alpha");
  const std::string af = sa.string("family", alpha_default, {"constant", "tanh", "step"});
  if (af == "constant") {
    decl.alpha = family::ConstantAlpha{sa.number("value", 1.0, {0.0, 2.0, true, true})};
  } else if (af == "tanh") {
    family::TanhAlpha t{};
    t.a0 = sa.number("a0", a0, {0.0, 2.0, true, true});
    t.a1 = sa.number("a1", a1, any());
    t.c = sa.number("c", c, nonnegative());
    if (!(t.a0 + t.a1 > 0.0 && t.a0 + t.a1 < 2.0))
      sa.fail(nullptr, "a1", "must keep a0 + a1 inside (0, 2)");
    decl.alpha = t;
  } else {
    family::StepAlpha t{};
    t.a0 = sa.number("a0", 1.0, {0.0, 2.0, true, true});
    t.jump = sa.number("jump", 0.4, any());
    t.claimed_lipschitz = sa.number("claimed_lipschitz", 1.0, nonnegative());
    if (!(t.a0 + t.jump > 0.0 && t.a0 + t.jump < 2.0))
      sa.fail(nullptr, "jump", "must keep a0 + jump inside (0, 2)");
    decl.alpha = t;
  }
  sa.finish(" for alpha family '" + af + "'");

  Section sn = m.sub("n");
  const std::string nf = sn.string("family", n_default, {"constant", "sin_cos"});
  if (nf == "constant")
    decl.n = family::ConstantN{sn.number("value", 1.0, positive())};
  else
    decl.n = family::SinCosN{sn.number("eps", eps, nonnegative())};
  sn.finish(" for n family '" + nf + "'");

  // Tightest bounds the families allow, unless declared.
  const auto [amin, amax] = std::visit(
      [](const auto& a) -> std::pair<double, double> {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, family::ConstantAlpha>) return {a.value, a.value};
        else if constexpr (std::is_same_v<T, family::TanhAlpha>)
          return {std::min(a.a0, a.a0 + a.a1), std::max(a.a0, a.a0 + a.a1)};
        else return {std::min(a.a0, a.a0 + a.jump), std::max(a.a0, a.a0 + a.jump)};
      },
      decl.alpha);
  const auto [nmin, nmax] = std::visit(
      [](const auto& n) -> std::pair<double, double> {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, family::ConstantN>) return {n.value, n.value};
        else return {1.0, 1.0 + n.eps};
      },
      decl.n);
  const Range order{0.0, 2.0, true, true};
  decl.params.alpha_lower = m.number("alpha_lower", amin, order);
  decl.params.alpha_upper = m.number("alpha_upper", amax, order);
  decl.params.kappa1 = m.number("kappa1", nmin, positive());
  decl.params.kappa2 = m.number("kappa2", nmax, positive());
  if (decl.params.alpha_lower > decl.params.alpha_upper)
    m.fail(nullptr, "alpha_lower",
           "exceeds model.alpha_upper: alpha bounds need alpha_lower <= alpha_upper");
  if (decl.params.kappa1 > decl.params.kappa2)
    m.fail(nullptr, "kappa1", "exceeds model.kappa2: kappa bounds need kappa1 <= kappa2");
  if (amin < decl.params.alpha_lower || amax > decl.params.alpha_upper)
    m.fail(nullptr, "alpha_lower",
           "alpha bounds [alpha_lower, alpha_upper] do not contain the family's range");
  if (nmin < decl.params.kappa1 || nmax > decl.params.kappa2)
    m.fail(nullptr, "kappa1", "kappa bounds [kappa1, kappa2] do not contain the family's range");
  m.finish();
}

RunConfig parse_table(const toml::table& root, const std::string& file) {
  RunConfig cfg;
  const std::string* fp = &file;
  Section top(&root, "", fp, root.source());

  if (top.has("command")) {
    std::vector<std::string> names = command_names();
    cfg.command = parse_command(top.string("command", "", names));
  }
  cfg.seed = std::uint64_t(top.integer("seed", 1, 0, std::numeric_limits<int64_t>::max()));

  read_model(top.sub("model"), cfg.model);

  {
    Section s = top.sub("output");
    cfg.output.dir = s.string("dir", cfg.output.dir.string());
    if (cfg.output.dir.empty()) s.fail(nullptr, "dir", "must not be empty");
    cfg.output.json = s.boolean("json", true);
    cfg.output.csv = s.boolean("csv", true);
    cfg.output.cache_dir = s.string("cache_dir", "");
    s.finish();
  }
  {
    Section s = top.sub("validation");
    SamplePlan& p = cfg.validation;
    p.seed = cfg.seed;
    p.pairs = std::size_t(s.integer("pairs", (long long)p.pairs, 1, 1LL << 30));
    p.h_per_pair = std::size_t(s.integer("h_per_pair", (long long)p.h_per_pair, 1, 1LL << 20));
    p.x_extent = s.number("x_extent", p.x_extent, positive());
    p.max_separation = s.number("max_separation", p.max_separation, positive());
    p.r0_values = s.numbers("r0_values", p.r0_values, {0.0, 1.0, true, false});
    s.finish();
  }
  {
    Section s = top.sub("density");
    DensityOptions& d = cfg.density;
    d.t = s.numbers("t", d.t, positive());
    d.y = s.numbers("y", d.y, any());
    read_grid(s, d.grid);
    d.grid.derivatives = int(s.integer("derivatives", d.grid.derivatives, 1, 8));
    d.mass_tolerance = s.number("mass_tolerance", d.mass_tolerance, positive());
    d.evenness_tolerance = s.number("evenness_tolerance", d.evenness_tolerance, positive());
    d.chapman_kolmogorov = s.boolean("chapman_kolmogorov", d.chapman_kolmogorov);
    d.ck_tolerance = s.number("ck_tolerance", d.ck_tolerance, positive());
    s.finish();
  }
  {
    Section s = top.sub("verify");
    VerifyOptions& v = cfg.verify;
    std::vector<std::string> choices = kLemmas;
    choices.push_back("all");
    v.lemmas = s.strings("lemma", v.lemmas, choices);
    if (std::find(v.lemmas.begin(), v.lemmas.end(), "all") != v.lemmas.end()) v.lemmas = kLemmas;

    Section c = s.sub("convolution");
    ConvolutionGrid& g = v.convolution;
    g.alpha1 = c.number("alpha1", g.alpha1, {0.0, 2.0, true, true});
    g.alpha2 = c.number("alpha2", g.alpha2, {0.0, 2.0, true, true});
    g.alpha_points = int(c.integer("alpha_points", g.alpha_points, 1, 1000));
    g.t_exp_min = int(c.integer("t_exp_min", g.t_exp_min, -60, 10));
    g.t_exp_max = int(c.integer("t_exp_max", g.t_exp_max, -60, 10));
    g.tau_ratios = c.numbers("tau_ratios", g.tau_ratios, open_unit());
    g.w_min = c.number("w_min", g.w_min, positive());
    g.w_max = c.number("w_max", g.w_max, positive());
    g.w_points = int(c.integer("w_points", g.w_points, 1, 10000));
    g.d = int(c.integer("d", cfg.model.params.d, 1, 2));
    if (g.alpha1 > g.alpha2) c.fail(nullptr, "alpha1", "exceeds alpha2");
    if (g.t_exp_min > g.t_exp_max) c.fail(nullptr, "t_exp_min", "exceeds t_exp_max");
    if (g.w_min > g.w_max) c.fail(nullptr, "w_min", "exceeds w_max");
    c.finish();

    Section dn = s.sub("density");
    DensityBoundGrid& b = v.density;
    b.y_points = dn.numbers("y_points", b.y_points, any());
    b.t_exp_min = int(dn.integer("t_exp_min", b.t_exp_min, -60, 10));
    b.t_exp_max = int(dn.integer("t_exp_max", b.t_exp_max, -60, 10));
    b.x_min = dn.number("x_min", b.x_min, positive());
    b.x_max = dn.number("x_max", b.x_max, positive());
    b.x_points = int(dn.integer("x_points", b.x_points, 1, 10000));
    b.h_min = dn.number("h_min", b.h_min, positive());
    b.h_max = dn.number("h_max", b.h_max, positive());
    b.h_points = int(dn.integer("h_points", b.h_points, 1, 10000));
    b.alpha_tilde = dn.numbers("alpha_tilde", b.alpha_tilde, {0.0, 2.0, true, true}, true);
    read_grid(dn, b.spec);
    if (b.t_exp_min > b.t_exp_max) dn.fail(nullptr, "t_exp_min", "exceeds t_exp_max");
    if (b.x_min > b.x_max) dn.fail(nullptr, "x_min", "exceeds x_max");
    if (b.h_min > b.h_max) dn.fail(nullptr, "h_min", "exceeds h_max");
    dn.finish();

    Section f = s.sub("fbound");
    FBoundGrid& fg = v.fbound;
    fg.y_points = f.numbers("y_points", fg.y_points, any());
    fg.t_exp_min = int(f.integer("t_exp_min", fg.t_exp_min, -60, 10));
    fg.t_exp_max = int(f.integer("t_exp_max", fg.t_exp_max, -60, 10));
    fg.r_min = f.number("r_min", fg.r_min, positive());
    fg.r_max = f.number("r_max", fg.r_max, positive());
    fg.r_points = int(f.integer("r_points", fg.r_points, 1, 10000));
    fg.large_t = f.numbers("large_t", fg.large_t, {0.5, std::numeric_limits<double>::infinity()});
    fg.large_t_x = f.numbers("large_t_x", fg.large_t_x, any());
    fg.large_t_extent = f.number("large_t_extent", fg.large_t_extent, positive());
    read_grid(f, fg.spec);
    if (fg.t_exp_min > fg.t_exp_max) f.fail(nullptr, "t_exp_min", "exceeds t_exp_max");
    if (fg.r_min > fg.r_max) f.fail(nullptr, "r_min", "exceeds r_max");
    f.finish();

    v.decay_u = s.numbers("decay_u", v.decay_u, positive(), true);
    v.decay_y = s.number("decay_y", v.decay_y, any());
    v.scaling_alpha = s.numbers("scaling_alpha", v.scaling_alpha, {0.0, 2.0, true, true});
    v.scaling_t = s.number("scaling_t", v.scaling_t, positive());
    v.scaling_a = s.number("scaling_a", v.scaling_a, positive());
    v.scaling_tolerance = s.number("scaling_tolerance", v.scaling_tolerance, positive());
    s.finish();
  }
  {
    Section s = top.sub("duhamel");
    DuhamelOptions& d = cfg.duhamel;
    const auto pts = s.rows("points", 4);
    if (!pts.empty()) {
      d.points.clear();
      for (const auto& p : pts) {
        if (!(p[0] > 0.0)) s.fail(nullptr, "points", "needs t > 0 in every [t, x, y, w]");
        d.points.push_back({p[0], p[1], p[2], p[3]});
      }
    }
    d.budget.s_nodes = int(s.integer("s_nodes", d.budget.s_nodes, 1, 4096));
    d.budget.rel_tol = s.number("rel_tol", d.budget.rel_tol, open_unit());
    d.tolerance = s.number("tolerance", d.tolerance, positive());
    d.check_doubling = s.boolean("check_doubling", d.check_doubling);
    s.finish();
  }
  {
    Section s = top.sub("coupling");
    CouplingOptions& c = cfg.coupling;
    c.t_exp_min = int(s.integer("t_exp_min", c.t_exp_min, -40, -1));
    c.t_exp_max = int(s.integer("t_exp_max", c.t_exp_max, -40, -1));
    if (c.t_exp_min >= c.t_exp_max) s.fail(nullptr, "t_exp_min", "must be below t_exp_max");
    c.x = s.number("x", c.x, any());
    c.gap.rel_tol = s.number("rel_tol", c.gap.rel_tol, open_unit());
    c.gap.max_evaluations =
        std::size_t(s.integer("max_evaluations", (long long)c.gap.max_evaluations, 1, 1LL << 40));
    c.required_ratio = s.number("required_ratio", c.required_ratio, {0.0, 1.0, true, false});
    s.finish();
  }
  {
    Section s = top.sub("resolvent");
    ResolventOptions& r = cfg.resolvent;
    r.lambdas = s.numbers("lambdas", r.lambdas, positive(), false, true);
    r.x_count = std::size_t(s.integer("x_count", (long long)r.x_count, 1, 100000));
    r.x_samples = s.numbers("x_samples", r.x_samples, any(), true);
    ResolventTruncation& t = r.truncation;
    t.t_min = s.number("t_min", t.t_min, positive());
    t.t_max = s.number("t_max", t.t_max, positive());
    if (!(t.t_max > t.t_min)) s.fail(nullptr, "t_max", "must exceed resolvent.t_min");
    t.y_extent = s.number("y_extent", t.y_extent, positive());
    t.max_remainder = s.number("max_remainder", t.max_remainder, positive());
    t.log_t_panel = s.number("log_t_panel", t.log_t_panel, positive());
    t.nodes_per_panel = int(s.integer("nodes_per_panel", t.nodes_per_panel, 1, 64));
    t.rel_tol = s.number("rel_tol", t.rel_tol, open_unit());
    Section c = s.sub("constants");
    if (c.present()) {
      // No defaults: a zero constant would certify a zero remainder.
      for (const char* key : {"f1", "f2", "large_t"})
        if (!c.has(key)) c.fail(nullptr, key, "is required when resolvent.constants is given");
      FBoundConstants k;
      k.f1 = c.number("f1", 0.0, nonnegative());
      k.f2 = c.number("f2", 0.0, nonnegative());
      k.large_t = c.number("large_t", 0.0, nonnegative());
      r.constants = k;
    }
    c.finish();
    s.finish();
  }
  {
    Section s = top.sub("simulation");
    SimOptions& o = cfg.simulation;
    o.seed = cfg.seed;
    o.scheme = parse_scheme(
        s.string("scheme", to_string(o.scheme), {"frozen_euler", "frozen_subdivided"}));
    o.x0 = s.numbers("x0", std::vector<double>(std::size_t(cfg.model.params.d), 0.0), any());
    if (int(o.x0.size()) != cfg.model.params.d)
      s.fail(nullptr, "x0", "must have model.d = " + std::to_string(cfg.model.params.d) +
                                " coordinates");
    o.horizon = s.number("horizon", o.horizon, positive());
    o.dt = s.number("dt", o.dt, positive());
    if (o.dt > o.horizon) s.fail(nullptr, "dt", "exceeds simulation.horizon");
    o.eps = s.number("eps", o.eps, {0.0, 1.0, true, false});
    o.paths = std::size_t(s.integer("paths", (long long)o.paths, 1, 1LL << 32));
    o.max_proposals_per_path = std::uint64_t(
        s.integer("max_proposals_per_path", 0, 0, std::numeric_limits<int64_t>::max()));
    s.finish();
  }
  {
    Section s = top.sub("simulate");
    SimulateExtras& e = cfg.simulate;
    e.lambdas = s.numbers("lambdas", e.lambdas, positive(), true);
    e.test_function =
        parse_test_function(s.string("test_function", to_string(e.test_function),
                                     {"one", "cos", "gauss"}));
    e.write_paths = s.boolean("write_paths", e.write_paths);
    e.csv_paths = std::size_t(s.integer("csv_paths", (long long)e.csv_paths, 0, 1LL << 32));
    s.finish();
  }
  {
    Section s = top.sub("uniqueness");
    UniquenessOptions& u = cfg.uniqueness;
    std::vector<std::string> def;
    for (Functional f : u.functionals) def.push_back(to_string(f));
    u.functionals.clear();
    for (const auto& name :
         s.strings("functionals", def, {"first_coordinate", "norm", "running_max"}))
      u.functionals.push_back(parse_functional(name));
    u.refinements = int(s.integer("refinements", u.refinements, 0, 8));
    s.finish();
  }
  {
    Section s = top.sub("exit");
    cfg.exit.radii = s.numbers("radii", cfg.exit.radii, open_unit());
    s.finish();
  }
  top.finish();
  return cfg;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // Keep floats floats so the echo reads back with the same types.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

std::string list(const std::vector<std::string>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + quote(v[i]);
  return s + "]";
}

void grid_lines(std::ostream& os, const GridSpec& g) {
  os << "n = " << g.n << "\nhalf_width = " << num(g.half_width)
     << "\nalias_target = " << num(g.alias_target) << "\nmax_points = " << g.max_points << "\n";
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& [k, name] : command_table())
    if (k == c) return name;
  return "?";
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : command_table()) v.push_back(e.second);
    return v;
  }();
  return names;
}

Command parse_command(const std::string& name) {
  for (const auto& [k, n] : command_table())
    if (n == name) return k;
  std::string msg = "unknown command '" + name + "'";
  const std::string s = suggest(name, command_names());
  if (!s.empty()) msg += "; did you mean '" + s + "'?";
  throw InputError("config", msg);
}

CoefficientField ModelDecl::build() const { return CoefficientField(params, alpha, n); }

RunConfig parse_config_string(const std::string& text, const std::string& source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source_name << ':' << e.source().begin.line << ':' << e.source().begin.column << ": "
       << e.description();
    throw InputError("config", os.str());
  }
  RunConfig cfg = parse_table(root, source_name);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("config", "cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg = parse_config_string(text.str(), path.string());
  cfg.source = path;
  return cfg;
}

std::string effective_config(const RunConfig& cfg) {
  std::ostringstream os;
  if (cfg.command) os << "command = " << quote(to_string(*cfg.command)) << "\n";
  os << "seed = " << cfg.seed << "\n";

  const ModelParams& p = cfg.model.params;
  os << "\n[model]\nd = " << p.d << "\nalpha_lower = " << num(p.alpha_lower)
     << "\nalpha_upper = " << num(p.alpha_upper) << "\nkappa1 = " << num(p.kappa1)
     << "\nkappa2 = " << num(p.kappa2) << "\n";
  os << "\n[model.alpha]\n";
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, family::ConstantAlpha>)
          os << "family = \"constant\"\nvalue = " << num(a.value) << "\n";
        else if constexpr (std::is_same_v<T, family::TanhAlpha>)
          os << "family = \"tanh\"\na0 = " << num(a.a0) << "\na1 = " << num(a.a1)
             << "\nc = " << num(a.c) << "\n";
        else
          os << "family = \"step\"\na0 = " << num(a.a0) << "\njump = " << num(a.jump)
             << "\nclaimed_lipschitz = " << num(a.claimed_lipschitz) << "\n";
      },
      cfg.model.alpha);
  os << "\n[model.n]\n";
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, family::ConstantN>)
          os << "family = \"constant\"\nvalue = " << num(n.value) << "\n";
        else
          os << "family = \"sin_cos\"\neps = " << num(n.eps) << "\n";
      },
      cfg.model.n);

  const OutputOptions& o = cfg.output;
  os << "\n[output]\ndir = " << quote(o.dir.string()) << "\njson = " << (o.json ? "true" : "false")
     << "\ncsv = " << (o.csv ? "true" : "false") << "\ncache_dir = " << quote(o.cache_dir.string())
     << "\n";

  const SamplePlan& v = cfg.validation;
  os << "\n[validation]\npairs = " << v.pairs << "\nh_per_pair = " << v.h_per_pair
     << "\nx_extent = " << num(v.x_extent) << "\nmax_separation = " << num(v.max_separation)
     << "\nr0_values = " << list(v.r0_values) << "\n";

  const DensityOptions& d = cfg.density;
  os << "\n[density]\nt = " << list(d.t) << "\ny = " << list(d.y) << "\n";
  grid_lines(os, d.grid);
  os << "derivatives = " << d.grid.derivatives << "\nmass_tolerance = " << num(d.mass_tolerance)
     << "\nevenness_tolerance = " << num(d.evenness_tolerance)
     << "\nchapman_kolmogorov = " << (d.chapman_kolmogorov ? "true" : "false")
     << "\nck_tolerance = " << num(d.ck_tolerance) << "\n";

  const VerifyOptions& vf = cfg.verify;
  os << "\n[verify]\nlemma = " << list(vf.lemmas) << "\ndecay_u = " << list(vf.decay_u)
     << "\ndecay_y = " << num(vf.decay_y) << "\nscaling_alpha = " << list(vf.scaling_alpha)
     << "\nscaling_t = " << num(vf.scaling_t) << "\nscaling_a = " << num(vf.scaling_a)
     << "\nscaling_tolerance = " << num(vf.scaling_tolerance) << "\n";
  const ConvolutionGrid& g = vf.convolution;
  os << "\n[verify.convolution]\nalpha1 = " << num(g.alpha1) << "\nalpha2 = " << num(g.alpha2)
     << "\nalpha_points = " << g.alpha_points << "\nt_exp_min = " << g.t_exp_min
     << "\nt_exp_max = " << g.t_exp_max << "\ntau_ratios = " << list(g.tau_ratios)
     << "\nw_min = " << num(g.w_min) << "\nw_max = " << num(g.w_max)
     << "\nw_points = " << g.w_points << "\nd = " << g.d << "\n";
  const DensityBoundGrid& b = vf.density;
  os << "\n[verify.density]\ny_points = " << list(b.y_points) << "\nt_exp_min = " << b.t_exp_min
     << "\nt_exp_max = " << b.t_exp_max << "\nx_min = " << num(b.x_min)
     << "\nx_max = " << num(b.x_max) << "\nx_points = " << b.x_points
     << "\nh_min = " << num(b.h_min) << "\nh_max = " << num(b.h_max)
     << "\nh_points = " << b.h_points << "\nalpha_tilde = " << list(b.alpha_tilde) << "\n";
  grid_lines(os, b.spec);
  const FBoundGrid& f = vf.fbound;
  os << "\n[verify.fbound]\ny_points = " << list(f.y_points) << "\nt_exp_min = " << f.t_exp_min
     << "\nt_exp_max = " << f.t_exp_max << "\nr_min = " << num(f.r_min)
     << "\nr_max = " << num(f.r_max) << "\nr_points = " << f.r_points
     << "\nlarge_t = " << list(f.large_t) << "\nlarge_t_x = " << list(f.large_t_x)
     << "\nlarge_t_extent = " << num(f.large_t_extent) << "\n";
  grid_lines(os, f.spec);

  const DuhamelOptions& du = cfg.duhamel;
  os << "\n[duhamel]\npoints = [";
  for (std::size_t i = 0; i < du.points.size(); ++i) {
    const DuhamelPoint& q = du.points[i];
    os << (i ? ", " : "") << list(std::vector<double>{q.t, q.x, q.y, q.w});
  }
  os << "]\ns_nodes = " << du.budget.s_nodes << "\nrel_tol = " << num(du.budget.rel_tol)
     << "\ntolerance = " << num(du.tolerance)
     << "\ncheck_doubling = " << (du.check_doubling ? "true" : "false") << "\n";

  const CouplingOptions& c = cfg.coupling;
  os << "\n[coupling]\nt_exp_min = " << c.t_exp_min << "\nt_exp_max = " << c.t_exp_max
     << "\nx = " << num(c.x) << "\nrel_tol = " << num(c.gap.rel_tol)
     << "\nmax_evaluations = " << c.gap.max_evaluations
     << "\nrequired_ratio = " << num(c.required_ratio) << "\n";

  const ResolventOptions& r = cfg.resolvent;
  const ResolventTruncation& t = r.truncation;
  os << "\n[resolvent]\nlambdas = " << list(r.lambdas) << "\nx_count = " << r.x_count
     << "\nx_samples = " << list(r.x_samples) << "\nt_min = " << num(t.t_min)
     << "\nt_max = " << num(t.t_max) << "\ny_extent = " << num(t.y_extent)
     << "\nmax_remainder = " << num(t.max_remainder) << "\nlog_t_panel = " << num(t.log_t_panel)
     << "\nnodes_per_panel = " << t.nodes_per_panel << "\nrel_tol = " << num(t.rel_tol) << "\n";
  if (r.constants)
    os << "\n[resolvent.constants]\nf1 = " << num(r.constants->f1)
       << "\nf2 = " << num(r.constants->f2) << "\nlarge_t = " << num(r.constants->large_t)
       << "\n";

  const SimOptions& s = cfg.simulation;
  os << "\n[simulation]\nscheme = " << quote(to_string(s.scheme)) << "\nx0 = " << list(s.x0)
     << "\nhorizon = " << num(s.horizon) << "\ndt = " << num(s.dt) << "\neps = " << num(s.eps)
     << "\npaths = " << s.paths << "\nmax_proposals_per_path = " << s.max_proposals_per_path
     << "\n";
  const SimulateExtras& e = cfg.simulate;
  os << "\n[simulate]\nlambdas = " << list(e.lambdas)
     << "\ntest_function = " << quote(to_string(e.test_function))
     << "\nwrite_paths = " << (e.write_paths ? "true" : "false")
     << "\ncsv_paths = " << e.csv_paths << "\n";
  std::vector<std::string> fn;
  for (Functional x : cfg.uniqueness.functionals) fn.push_back(to_string(x));
  os << "\n[uniqueness]\nfunctionals = " << list(fn)
     << "\nrefinements = " << cfg.uniqueness.refinements << "\n";
  os << "\n[exit]\nradii = " << list(cfg.exit.radii) << "\n";
  return os.str();
}

}  // namespace varstable
