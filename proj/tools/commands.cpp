#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace phicascade::cli {

void RunConfig::validate() const {
  if (!(quad_rel_tol > 0 && quad_rel_tol <= 1e-6)) throw UsageError("--tol: must lie in (0, 1e-6]");
  if (quad_rel_tol < 1e-15) throw UsageError("--tol: values below 1e-15 are beyond double-precision quadrature");
  if (!(rel_gap > 0)) throw UsageError("--gap: must be positive");
  if (max_gen < 0 || max_gen > 24) throw UsageError("--max-gen: must lie in [0, 24]");
  if (threads < 1) throw UsageError("--threads: must be at least 1");
}

nlohmann::json RunConfig::to_json() const {
  return {{"quad_rel_tol", quad_rel_tol},
          {"rel_gap", rel_gap},
          {"max_gen", max_gen},
          {"seed", seed},
          {"cache_path", cache_path},
          {"format", format == Format::csv ? "csv" : "jsonl"},
          {"threads", threads}};
}

std::string phi_cache_hash(double quad_rel_tol) {
  char tol[64];
  std::snprintf(tol, sizeof tol, "%.17g", quad_rel_tol);
  const std::string key =
      "phicascade-phi-cache/" + std::to_string(PhiCache::kFormatVersion) + "/" + std::string(tol);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : key) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_field(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "1" : "0";
        } else {
          if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
          std::string q = "\"";
          for (char ch : v) {
            if (ch == '"') q += '"';
            q += ch;
          }
          return q + "\"";
        }
      },
      c);
}

nlohmann::json json_field(const Cell& c) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          if (std::isfinite(v)) return v;
          return format_double(v);
        } else {
          return v;
        }
      },
      c);
}

nlohmann::json header_json(const std::string& command, const RunConfig& cfg) {
  return {{"tool", "phicascade"},
          {"command", command},
          {"config", cfg.to_json()},
          {"phi_cache_hash", phi_cache_hash(cfg.quad_rel_tol)}};
}

}  // namespace

void write_table(std::ostream& out, const std::string& command, const RunConfig& cfg, const Table& table) {
  const auto header = header_json(command, cfg);
  if (cfg.format == Format::csv) {
    out << "# " << header.dump() << "\r\n";
    for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
    out << "\r\n";
    for (const auto& row : table.rows) {
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << csv_field(row[j]);
      out << "\r\n";
    }
  } else {
    out << nlohmann::json{{"header", header}}.dump() << '\n';
    for (const auto& row : table.rows) {
      nlohmann::json obj = nlohmann::json::object();
      for (std::size_t j = 0; j < row.size(); ++j) obj[table.columns[j]] = json_field(row[j]);
      out << obj.dump() << '\n';
    }
  }
}

DyadicRational parse_dyadic_flag(const std::string& flag, const std::string& text) {
  try {
    return DyadicRational::parse(text);
  } catch (const std::exception& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

std::vector<DyadicRational> parse_dyadic_list(const std::string& flag, const std::string& text) {
  std::vector<DyadicRational> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError(flag + ": empty entry in list");
    out.push_back(parse_dyadic_flag(flag, item));
  }
  if (out.empty()) throw UsageError(flag + ": expected at least one value");
  return out;
}

namespace {

double ln_of(LogPositive v) { return v.ln_double(); }

// A scan target: either a dyadic point or a steered non-doubling point.
struct PointSpec {
  DyadicRational x;
  std::optional<NonDoublingPoint> nd;
};

PointSpec parse_point(const std::string& text, const PhiConfig& phi) {
  PointSpec p;
  if (text.rfind("nd:", 0) == 0) {
    std::vector<ScheduleEntry> schedule;
    try {
      schedule = parse_schedule(text.substr(3));
      validate_schedule(schedule);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--point: ") + e.what());
    }
    p.nd = build_nondoubling_point(schedule, phi);
    p.x = p.nd->x;
  } else {
    p.x = parse_dyadic_flag("--point", text);
  }
  if (!IntervalD(-1, 1).contains(p.x)) throw UsageError("--point: x must lie in [-1, 1)");
  return p;
}

std::vector<DyadicRational> auto_scales() {
  std::vector<DyadicRational> s;
  for (int j = 1; j <= 30; ++j) s.push_back(DyadicRational::pow2(-j));
  return s;
}

class OutputSink {
 public:
  explicit OutputSink(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_) throw std::runtime_error("cannot open output file " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish(const std::string& path) {
    if (!file_) {
      std::cout.flush();
      return;
    }
    file_->flush();
    if (!*file_) throw std::runtime_error("failed writing output file " + path);
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

int emit(const std::string& command, const RunConfig& cfg, const Table& table) {
  OutputSink sink(cfg.out);
  write_table(sink.stream(), command, cfg, table);
  sink.finish(cfg.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::string point;
  std::string scales = "auto";
};

int cmd_scan(const ScanArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  const PointSpec p = parse_point(a.point, phi);
  const EvalOptions opt = cfg.eval_options();
  Table t;
  t.columns = {"ln2_r", "ln_mu_r", "ln_mu_2r", "ln_mu_17r", "ratio2", "ratio17", "enclosure_gap", "gap_ok"};
  bool ok = true;
  auto base = [&](const DoublingScanRow& r) -> std::vector<Cell> {
    const double slack = r.enclosure_gap;
    if (static_cast<double>(r.ln_ratio2) < -std::log1p(slack) - 1e-12) ok = false;
    return {r.ln2_r(), ln_of(r.mass_r.midpoint()), ln_of(r.mass_2r.midpoint()), ln_of(r.mass_17r.midpoint()),
            r.ratio2(), r.ratio17(), r.enclosure_gap, r.gap_ok};
  };
  if (p.nd && a.scales == "auto") {
    t.columns.insert(t.columns.begin(), {"i", "k"});
    for (const char* c : {"ln_ratio17", "ln_ratio17_lower", "band_ok", "lambda", "C_effective", "bound_applicable",
                          "ln_G", "bound_ok"}) {
      t.columns.push_back(c);
    }
    for (const auto& row : nondoubling_scan(*p.nd, phi, opt)) {
      std::vector<Cell> cells{std::int64_t{row.witness.entry.i}, std::int64_t{row.witness.entry.k}};
      for (auto& c : base(row.scan)) cells.push_back(std::move(c));
      cells.insert(cells.end(), {static_cast<double>(row.scan.ln_ratio17), static_cast<double>(row.scan.ln_ratio17_lower),
                                 row.witness.band_ok, row.lambda, row.C_effective, row.bound_applicable,
                                 static_cast<double>(row.ln_G), row.bound_ok});
      ok = ok && row.witness.band_ok && row.bound_ok;
      t.rows.push_back(std::move(cells));
    }
  } else {
    const auto scales = a.scales == "auto" ? auto_scales() : parse_dyadic_list("--scales", a.scales);
    for (const auto& r : scales) {
      if (r.sign() <= 0) throw UsageError("--scales: radii must be positive");
    }
    for (const auto& row : doubling_scan(p.x, scales, phi, opt)) t.rows.push_back(base(row));
  }
  emit("scan", cfg, t);
  return ok ? 0 : 1;
}

struct SampledArgs {
  int n = 100;
  int depth = 10;
  double threshold = 1000;
};

int cmd_doubling_fraction(const SampledArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  if (a.n < 1) throw UsageError("--n: must be positive");
  if (a.depth < 1 || a.depth > cfg.max_gen) throw UsageError("--depth: must lie in [1, max-gen]");
  const auto s = sampled_doubling_fraction(cfg.seed, a.n, a.depth, a.threshold, phi, cfg.eval_options());
  Table t;
  t.columns = {"points", "exceeding", "threshold", "fraction"};
  t.rows.push_back({std::int64_t{s.points}, std::int64_t{s.exceeding}, s.threshold, s.fraction()});
  return emit("doubling-fraction", cfg, t);
}

struct BlowupArgs {
  std::string x, r, delta = "2^-6", R = "1", exclusion;
  int grid = 257;
};

int cmd_blowup(const BlowupArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  const DyadicRational x = parse_dyadic_flag("--x", a.x);
  const DyadicRational r = parse_dyadic_flag("--r", a.r);
  const DyadicRational delta = parse_dyadic_flag("--delta", a.delta);
  const DyadicRational R = parse_dyadic_flag("--R", a.R);
  if (!IntervalD(-1, 1).contains(x)) throw UsageError("--x: must lie in [-1, 1)");
  if (r.sign() <= 0 || r > DyadicRational(1)) throw UsageError("--r: need 0 < r <= 1");
  if (!(delta.sign() > 0 && delta < DyadicRational(1))) throw UsageError("--delta: need 0 < delta < 1");
  if (R.sign() <= 0) throw UsageError("--R: must be positive");
  if (a.grid < 1 || (a.grid > 1 && ((a.grid - 1) & (a.grid - 2)) != 0)) {
    throw UsageError("--grid: must be 1 or 2^p + 1");
  }
  std::optional<DyadicRational> excl;
  if (!a.exclusion.empty()) excl = parse_dyadic_flag("--exclusion", a.exclusion);

  const DensityProfile prof = density_profile(x, r, R, a.grid, delta, phi, cfg.eval_options(), excl);
  Table t;
  t.columns = {"z", "delta", "ln_nu", "nu_density", "near_E_flag", "enclosure_gap", "degenerate"};
  for (const auto& p : prof.points) {
    t.rows.push_back({p.z.to_double(), delta.to_double(), p.nu.ln_double(), p.density, p.near_E, p.enclosure_gap,
                      p.degenerate});
  }
  emit("blowup", cfg, t);

  if (!cfg.out.empty()) {
    nlohmann::json e = nlohmann::json::array();
    if (prof.scale.valid()) {
      const EPointSet es = detect_E(prof.scale, phi);
      for (std::size_t j = 0; j < es.points.size(); ++j) {
        e.push_back({{"point", es.points[j]}, {"literal", es.points[j].to_string()}, {"normalized", es.normalized[j]}});
      }
    }
    nlohmann::json side{{"x", x.to_string()},
                        {"r", r.to_string()},
                        {"K", prof.scale.valid() ? nlohmann::json(*prof.scale.K) : nlohmann::json(nullptr)},
                        {"reason", prof.scale.reason},
                        {"rho", prof.scale.rho},
                        {"N", prof.scale.N},
                        {"E", e}};
    const std::string path = cfg.out + ".E.json";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open output file " + path);
    f << side.dump(2) << '\n';
  }
  return 0;
}

struct ConditionArgs {
  std::string x, scales, z = "0", deltas = "2^-2,2^-3,2^-4,2^-5,2^-6";
  double quantile = 0.5;
};

int cmd_condition(const ConditionArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  const DyadicRational x = parse_dyadic_flag("--x", a.x);
  const auto scales = parse_dyadic_list("--scales", a.scales);
  const DyadicRational z = parse_dyadic_flag("--z", a.z);
  const auto deltas = parse_dyadic_list("--deltas", a.deltas);
  Condition64Report rep;
  try {
    rep = check_condition_64(x, scales, z, deltas, phi, cfg.eval_options(), a.quantile);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Table t;
  t.columns = {"ln2_r", "delta", "ln_ratio", "c_star"};
  for (const auto& e : rep.entries) {
    t.rows.push_back({static_cast<double>(e.r.ln() / M_LN2q), e.delta.to_double(), static_cast<double>(e.ln_ratio),
                      e.c_star});
  }
  return emit("condition", cfg, t);
}

struct PreissArgs {
  std::string point, R = "9", scales = "auto";
};

int cmd_preiss(const PreissArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  const PointSpec p = parse_point(a.point, phi);
  const DyadicRational R = parse_dyadic_flag("--R", a.R);
  if (R < DyadicRational(1)) throw UsageError("--R: must be at least 1");
  std::vector<PreissRow> rows;
  if (p.nd && a.scales == "auto") {
    rows = preiss_crosscheck(*p.nd, R, phi, cfg.eval_options());
  } else {
    const auto scales = a.scales == "auto" ? auto_scales() : parse_dyadic_list("--scales", a.scales);
    rows = preiss_crosscheck(p.x, R, scales, phi, cfg.eval_options());
  }
  Table t;
  t.columns = {"ln2_r", "ln_ratio", "ln_ratio_lower", "ratio", "enclosure_gap"};
  for (const auto& row : rows) {
    t.rows.push_back({static_cast<double>(row.r.ln() / M_LN2q), static_cast<double>(row.ln_ratio),
                      static_cast<double>(row.ln_ratio_lower), row.ratio(),
                      std::max(row.inner.gap(), row.outer.gap())});
  }
  return emit("preiss", cfg, t);
}

struct PorosityArgs {
  std::string x, r;
  double eps = 1e-3;
  int grid_gen = 4;
};

int cmd_porosity(const PorosityArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  const DyadicRational x = parse_dyadic_flag("--x", a.x);
  const auto radii = parse_dyadic_list("--r", a.r);
  if (!(a.eps > 0)) throw UsageError("--eps: must be positive");
  if (a.grid_gen < 0 || a.grid_gen > 16) throw UsageError("--grid-gen: must lie in [0, 16]");
  const EvalOptions opt = cfg.eval_options();
  EvalOptions tight = opt;
  tight.rel_gap = opt.rel_gap / 10;
  Table t;
  t.columns = {"x", "r", "eps", "delta", "y", "x_literal", "r_literal", "y_literal", "verified"};
  bool ok = true;
  for (const auto& r : radii) {
    PorosityResult res;
    try {
      res = porosity_search(x, r, a.eps, a.grid_gen, phi, opt);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const bool verified = res.delta_exact.is_zero() || verify_porosity(res, phi, tight);
    ok = ok && verified;
    t.rows.push_back({x.to_double(), r.to_double(), a.eps, res.delta(), res.y.to_double(), x.to_string(),
                      r.to_string(), res.y.to_string(), verified});
  }
  emit("porosity", cfg, t);
  return ok ? 0 : 1;
}

struct SampleArgs {
  int n = 100;
  int depth = 12;
};

int cmd_sample(const SampleArgs& a, const RunConfig& cfg, const PhiConfig& phi) {
  if (a.n < 1) throw UsageError("--n: must be positive");
  if (a.depth < 0 || a.depth > kMaxGeneration) throw UsageError("--depth: must lie in [0, 40]");
  Table t;
  t.columns = {"x", "x_literal", "index"};
  for (const auto& p : sample_mu(MuSampler{cfg.seed, a.depth}, a.n, phi)) {
    t.rows.push_back({p.x.to_double(), p.x.to_string(), p.index.to_string()});
  }
  return emit("sample", cfg, t);
}

int cmd_export(int generation, const RunConfig& cfg, const PhiConfig& phi) {
  if (generation < -1 || generation > 5) throw UsageError("--generation: must lie in [-1, 5]");
  OutputSink sink(cfg.out);
  sink.stream() << nlohmann::json{{"header", header_json("export", cfg)}}.dump() << '\n';
  export_tree(sink.stream(), generation, phi);
  sink.finish(cfg.out);
  return 0;
}

int cmd_verify(const std::string& suite, const RunConfig& cfg, const PhiConfig& phi) {
  std::vector<Check> checks;
  if (suite == "phi") {
    checks = verify_phi(cfg, phi);
  } else if (suite == "mu") {
    checks = verify_mu(cfg, phi);
  } else {
    checks = verify_tangent(cfg, phi);
  }
  Table t;
  t.columns = {"check", "pass", "value", "limit", "detail"};
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.pass;
    t.rows.push_back({c.name, c.pass, c.value, c.limit, c.detail});
  }
  emit("verify " + suite, cfg, t);
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Exact construction and analysis of a phi-weighted dyadic cascade measure"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  std::string format = "csv";
  app.add_option("--tol", cfg.quad_rel_tol, "Relative tolerance of phi integrals")->capture_default_str();
  app.add_option("--gap", cfg.rel_gap, "Relative enclosure gap for mu evaluations")->capture_default_str();
  app.add_option("--max-gen", cfg.max_gen, "Deepest generation refined by enclosures (<= 24)")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed for sampling")->capture_default_str();
  app.add_option("--cache", cfg.cache_path, "phi-integral cache file (CASCADE_CACHE overrides)");
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker threads")->capture_default_str();
  app.add_option("--out", cfg.out, "Output file (default: standard output)");

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run a property suite: phi, mu or tangent");
  verify->add_option("suite", suite)->required()->check(CLI::IsMember({"phi", "mu", "tangent"}));

  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "Doubling-ratio scan at a point or a steered non-doubling point");
  scan->add_option("--point", scan_args.point, "Dyadic x, or nd:i,k;i,k;... for a steered point")->required();
  scan->add_option("--scales", scan_args.scales, "auto, or a comma-separated list of dyadic radii")
      ->capture_default_str();

  SampledArgs frac_args;
  auto* frac = app.add_subcommand("doubling-fraction", "Fraction of mu-sampled points with some large ratio17");
  frac->add_option("--n", frac_args.n)->capture_default_str();
  frac->add_option("--depth", frac_args.depth)->capture_default_str();
  frac->add_option("--threshold", frac_args.threshold)->capture_default_str();

  BlowupArgs blow_args;
  auto* blowup = app.add_subcommand("blowup", "Density profile of the blow-up at (x, r)");
  blowup->add_option("--x", blow_args.x)->required();
  blowup->add_option("--r", blow_args.r)->required();
  blowup->add_option("--grid", blow_args.grid, "Grid size, 2^p + 1")->capture_default_str();
  blowup->add_option("--delta", blow_args.delta)->capture_default_str();
  blowup->add_option("--R", blow_args.R, "Grid half-width")->capture_default_str();
  blowup->add_option("--exclusion", blow_args.exclusion, "Exclusion radius around E (default 2 delta)");

  ConditionArgs cond_args;
  auto* cond = app.add_subcommand("condition", "Comparability of small balls at z across scales");
  cond->add_option("--x", cond_args.x)->required();
  cond->add_option("--scales", cond_args.scales)->required();
  cond->add_option("--z", cond_args.z)->capture_default_str();
  cond->add_option("--deltas", cond_args.deltas)->capture_default_str();
  cond->add_option("--quantile", cond_args.quantile)->capture_default_str();

  PreissArgs preiss_args;
  auto* preiss = app.add_subcommand("preiss", "Ratio mu(B(x, R r)) / mu(B(x, r)) per scale");
  preiss->add_option("--point", preiss_args.point)->required();
  preiss->add_option("--R", preiss_args.R)->capture_default_str();
  preiss->add_option("--scales", preiss_args.scales)->capture_default_str();

  PorosityArgs por_args;
  auto* por = app.add_subcommand("porosity", "Largest certified relative hole in B(x, r)");
  por->add_option("--x", por_args.x)->required();
  por->add_option("--r", por_args.r, "One radius or a comma-separated list")->required();
  por->add_option("--eps", por_args.eps)->capture_default_str();
  por->add_option("--grid-gen", por_args.grid_gen)->capture_default_str();

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "mu-distributed points");
  sample->add_option("--n", sample_args.n)->capture_default_str();
  sample->add_option("--depth", sample_args.depth)->capture_default_str();

  int export_gen = 3;
  auto* exp = app.add_subcommand("export", "All construction intervals up to a generation, as JSON lines");
  exp->add_option("--generation", export_gen)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.format = format == "csv" ? Format::csv : Format::jsonl;
    if (const char* env = std::getenv("CASCADE_CACHE"); env && *env) cfg.cache_path = env;
    cfg.validate();

    auto cache = std::make_shared<PhiCache>();
    if (!cfg.cache_path.empty() && !cache->load(cfg.cache_path, cfg.quad_rel_tol) &&
        std::filesystem::exists(cfg.cache_path)) {
      std::cerr << "phicascade: warning: ignoring unusable cache file " << cfg.cache_path << '\n';
    }
    const PhiConfig phi = make_phi_config(cfg.quad_rel_tol, cache);

    int status = 0;
    if (*verify) status = cmd_verify(suite, cfg, phi);
    else if (*scan) status = cmd_scan(scan_args, cfg, phi);
    else if (*frac) status = cmd_doubling_fraction(frac_args, cfg, phi);
    else if (*blowup) status = cmd_blowup(blow_args, cfg, phi);
    else if (*cond) status = cmd_condition(cond_args, cfg, phi);
    else if (*preiss) status = cmd_preiss(preiss_args, cfg, phi);
    else if (*por) status = cmd_porosity(por_args, cfg, phi);
    else if (*sample) status = cmd_sample(sample_args, cfg, phi);
    else if (*exp) status = cmd_export(export_gen, cfg, phi);

    if (!cfg.cache_path.empty()) cache->save(cfg.cache_path, cfg.quad_rel_tol);
    return status;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace phicascade::cli
