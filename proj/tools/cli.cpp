#include "cli.hpp"

#include "supply_eq/closedform.hpp"
#include "supply_eq/core_geometry.hpp"
#include "supply_eq/error.hpp"
#include "supply_eq/ingest.hpp"
#include "supply_eq/optimize.hpp"
#include "supply_eq/threshold.hpp"
#include "supply_eq/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace supply_eq::cli {

namespace {

using nlohmann::json;

struct RunConfig {
  std::string subcommand;
  std::string users = "basis2";
  std::string q = "2";
  double beta = 2.0;
  std::vector<double> alpha;
  int producers = 2;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  bool seed_from_env = false;
  int n_angles = 200;
  int n_radii = 200;
  int max_iters = 5000;
  std::string format;
  std::string output;
  // eq / verify / profit
  std::string variant = "onepop";
  int n_users = 1;
  std::size_t n = 0;
  int cdf_grid = 101;
  std::string samples_output;
  // threshold
  int trials = 50;
  int hull_points = 75;
  double tau = 1e-6;
  double gap = 0.05;
  // nmf
  std::string ratings;
  int factors = 2;
  int epochs = 200;
};

// Infinity is not representable in JSON; it is written as the string "inf".
json num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? num(*v) : json(nullptr);
}

json config_json(const RunConfig& c) {
  json j = {{"subcommand", c.subcommand}, {"users", c.users}, {"q", c.q}, {"beta", c.beta},
            {"producers", c.producers}, {"samples", c.samples}, {"seed", c.seed},
            {"seed_from_env", c.seed_from_env}, {"n_angles", c.n_angles}, {"n_radii", c.n_radii},
            {"max_iters", c.max_iters}, {"format", c.format}, {"output", c.output}};
  j["alpha"] = c.alpha;
  if (c.subcommand == "eq" || c.subcommand == "verify" || c.subcommand == "profit") {
    j["variant"] = c.variant;
    j["n_users"] = c.n_users;
  }
  if (c.subcommand == "eq") {
    j["n"] = c.n;
    j["cdf_grid"] = c.cdf_grid;
    j["samples_output"] = c.samples_output;
  }
  if (c.subcommand == "threshold") {
    j["trials"] = c.trials;
    j["hull_points"] = c.hull_points;
    j["tau"] = c.tau;
    j["gap"] = c.gap;
  }
  if (c.subcommand == "nmf") {
    j["ratings"] = c.ratings;
    j["factors"] = c.factors;
    j["epochs"] = c.epochs;
  }
  return j;
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double parse_q(const std::string& s) {
  if (s == "inf" || s == "infinity") return kInfNorm;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw UsageError("--q: cannot parse '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("--q: cannot parse '" + s + "'");
  }
}

// Accepts a plain number or pi/<x>.
double parse_angle(const std::string& s) {
  try {
    if (s.rfind("pi/", 0) == 0) return std::numbers::pi / std::stod(s.substr(3));
    if (s == "pi") return std::numbers::pi;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw UsageError("bad angle '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("bad angle '" + s + "'");
  }
}

UserSet resolve_users(const std::string& src) {
  if (src == "basis2") return UserSet(Matrix::Identity(2, 2));
  if (src.rfind("angle:", 0) == 0) {
    const double t = parse_angle(src.substr(6));
    if (!(t > 0.0) || t > std::numbers::pi / 2 + 1e-15) throw UsageError("angle preset needs theta* in (0, pi/2]");
    Matrix m(2, 2);
    m << 1.0, 0.0, std::max(0.0, std::cos(t)), std::sin(t);
    return UserSet(m);
  }
  if (src.rfind("orthonormal:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(src.substr(12));
    } catch (const std::logic_error&) {
      throw UsageError("orthonormal preset needs an integer N");
    }
    if (n < 1) throw UsageError("orthonormal preset needs N >= 1");
    return UserSet(Matrix::Identity(n, n));
  }
  return load_embeddings_csv(src);
}

CostSpec resolve_spec(const RunConfig& c, Eigen::Index dim) {
  Vector alpha;
  if (!c.alpha.empty()) {
    alpha = Eigen::Map<const Vector>(c.alpha.data(), static_cast<Eigen::Index>(c.alpha.size()));
    if (alpha.size() != dim) {
      throw UsageError("--alpha has " + std::to_string(alpha.size()) + " entries but users have dimension " +
                       std::to_string(dim));
    }
  }
  try {
    return CostSpec(parse_q(c.q), c.beta, alpha);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

OptimizerConfig solver_config(const RunConfig& c) {
  OptimizerConfig o;
  o.seed = c.seed;
  o.max_iters = c.max_iters;
  return o;
}

class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw InputError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : fallback_; }

 private:
  std::ofstream file_;
  std::ostream& fallback_;
};

void emit_json(const json& j, const RunConfig& c, std::ostream& out) {
  Sink sink(c.output, out);
  sink.stream() << j.dump(2) << '\n';
}

std::string csv_provenance(const RunConfig& c) { return "# config: " + config_json(c).dump() + "\n"; }

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return detail::format_double(v);
}

// Builds the distribution for eq/verify/profit along with the users it is
// an equilibrium for.
struct Instance {
  EquilibriumDist dist;
  UserSet users;
};

Instance resolve_instance(const RunConfig& c, const UserSet& users, const CostSpec& spec) {
  if (c.variant == "onepop") {
    if (c.n_users < 1) throw UsageError("--n-users must be >= 1");
    const Vector u = users.user(0);
    Matrix rows(c.n_users, u.size());
    for (int i = 0; i < c.n_users; ++i) rows.row(i) = u.transpose();
    return {make_one_population(u, c.n_users, spec, c.producers, solver_config(c)), UserSet(rows)};
  }
  if (c.variant == "p2") {
    if (users.dim() != 2) throw UsageError("variant p2 needs two-dimensional users");
    return {make_p2_quarter_circle(c.beta), users};
  }
  if (c.variant == "finitep") {
    if (users.dim() != 2) throw UsageError("variant finitep needs two-dimensional users");
    return {make_finite_p_curve(c.producers), users};
  }
  if (c.variant == "infinite") {
    if (users.size() != 2) throw UsageError("variant infinite needs exactly two users");
    return {make_infinite_two_genre(two_user_plane(users.user(0), users.user(1)), c.beta), users};
  }
  throw UsageError("unknown variant '" + c.variant + "' (onepop, p2, finitep, infinite)");
}

int cmd_nsw(const RunConfig& c, std::ostream& out) {
  const UserSet users = resolve_users(c.users);
  const CostSpec spec = resolve_spec(c, users.dim());
  const OptResult r = nsw_direction(users, spec, solver_config(c));
  if (c.format == "csv") {
    Sink sink(c.output, out);
    auto& s = sink.stream();
    s << csv_provenance(c) << "coord,value\n";
    for (Eigen::Index d = 0; d < r.point.size(); ++d) s << d << ',' << fmt(r.point[d]) << '\n';
  } else {
    emit_json({{"config", config_json(c)}, {"nsw_point", vec(r.point)}, {"nsw_value", num(r.value)},
               {"kkt_residual", num(r.kkt_residual)}, {"iters", r.iters}, {"converged", r.converged}},
              c, out);
  }
  return r.converged ? kOk : kNoConvergence;
}

int cmd_threshold(const RunConfig& c, std::ostream& out) {
  const UserSet users = resolve_users(c.users);
  if (users.size() < 2) throw UsageError("threshold needs at least two users");
  const CostSpec spec = resolve_spec(c, users.dim());
  HullTestConfig h;
  h.trials = c.trials;
  h.hull_points = c.hull_points;
  h.tau = c.tau;
  h.gap = c.gap;
  h.seed = c.seed;
  h.solver = solver_config(c);
  const ThresholdReport rep = estimate_threshold(users, spec, h);
  if (c.format == "csv") {
    Sink sink(c.output, out);
    auto& s = sink.stream();
    s << csv_provenance(c) << "beta,holds,inconclusive,lhs_log,rhs_log\n";
    for (const auto& t : rep.condition_trace) {
      s << fmt(t.beta) << ',' << (t.holds ? 1 : 0) << ',' << (t.inconclusive ? 1 : 0) << ',' << fmt(t.lhs_log) << ','
        << fmt(t.rhs_log) << '\n';
    }
  } else {
    json trace = json::array();
    for (const auto& t : rep.condition_trace) {
      trace.push_back({{"beta", num(t.beta)}, {"holds", t.holds}, {"inconclusive", t.inconclusive},
                       {"lhs_log", num(t.lhs_log)}, {"rhs_log", num(t.rhs_log)}});
    }
    emit_json({{"config", config_json(c)}, {"beta_star_closed", opt(rep.beta_star_closed)},
               {"beta_upper", num(rep.beta_upper)}, {"beta_estimate", opt(rep.beta_estimate)},
               {"condition_trace", trace}, {"nsw_point", vec(rep.nsw_point)}, {"nsw_value", num(rep.nsw_value)},
               {"nsw_converged", rep.nsw_converged}},
              c, out);
  }
  return rep.nsw_converged ? kOk : kNoConvergence;
}

// CDF table on an evenly spaced grid over the natural argument of each variant.
std::vector<std::array<double, 2>> cdf_table(const EquilibriumDist& dist, int points, std::string& arg_name) {
  std::vector<std::array<double, 2>> rows;
  if (points <= 0) return rows;
  double top = 1.0;
  std::function<double(double)> f;
  if (const auto* d = std::get_if<OnePopulation>(&dist)) {
    arg_name = "q";
    top = d->support_max();
    f = [d](double x) { return d->cdf(x); };
  } else if (std::holds_alternative<QuarterCircle>(dist)) {
    arg_name = "theta";
    top = std::numbers::pi / 2;
    f = [](double x) { return QuarterCircle::angle_cdf(x); };
  } else if (const auto* d = std::get_if<FiniteCurve>(&dist)) {
    arg_name = "x";
    f = [d](double x) { return d->x_cdf(x); };
  } else {
    const auto* g = std::get_if<InfiniteTwoGenre>(&dist);
    arg_name = "q";
    top = g->support_max();
    f = [g](double x) { return g->fmax(x); };
  }
  for (int k = 0; k < points; ++k) {
    const double x = points == 1 ? top : top * k / (points - 1);
    rows.push_back({x, f(x)});
  }
  return rows;
}

void write_samples_csv(std::ostream& s, const std::vector<ContentVector>& draws) {
  const Eigen::Index dim = draws.empty() ? 0 : draws.front().size();
  s << "sample";
  for (Eigen::Index d = 0; d < dim; ++d) s << ",p" << d;
  s << '\n';
  for (std::size_t i = 0; i < draws.size(); ++i) {
    s << i;
    for (Eigen::Index d = 0; d < dim; ++d) s << ',' << fmt(draws[i][d]);
    s << '\n';
  }
}

int cmd_eq(const RunConfig& c, std::ostream& out) {
  const UserSet users = resolve_users(c.users);
  const CostSpec spec = resolve_spec(c, users.dim());
  const Instance inst = resolve_instance(c, users, spec);
  std::string arg_name;
  const auto table = cdf_table(inst.dist, c.cdf_grid, arg_name);
  std::vector<ContentVector> draws;
  if (c.n > 0) draws = eq_sample(inst.dist, c.n, c.seed);

  if (c.format == "json") {
    json cdf = json::array();
    for (const auto& r : table) cdf.push_back({{arg_name, num(r[0])}, {"cdf", num(r[1])}});
    json samples = json::array();
    for (const auto& p : draws) samples.push_back(vec(p));
    json genres = json::array();
    const GenreSet gs = genre_set(inst.dist);
    for (const auto& g : gs.directions) genres.push_back(vec(g));
    emit_json({{"config", config_json(c)}, {"variant", variant_name(inst.dist)}, {"cdf", cdf},
               {"samples", samples}, {"genres", genres}, {"genre_continuum", gs.continuum},
               {"genre_description", gs.description}},
              c, out);
    return kOk;
  }
  const bool split = !c.samples_output.empty();
  if (!table.empty() && !draws.empty() && !split) {
    throw UsageError("CSV output holds one table: pass --samples-output, or --n 0, or --cdf-grid 0");
  }
  Sink sink(c.output, out);
  if (!table.empty() || draws.empty()) {
    auto& s = sink.stream();
    s << csv_provenance(c) << arg_name << ",cdf\n";
    for (const auto& r : table) s << fmt(r[0]) << ',' << fmt(r[1]) << '\n';
  }
  if (!draws.empty()) {
    if (split) {
      std::ofstream f(c.samples_output);
      if (!f) throw InputError("cannot write '" + c.samples_output + "'");
      f << csv_provenance(c);
      write_samples_csv(f, draws);
    } else {
      sink.stream() << csv_provenance(c);
      write_samples_csv(sink.stream(), draws);
    }
  }
  return kOk;
}

json positive_profit_json(const PositiveProfitCheck& p) {
  return {{"flag", p.flag}, {"q_value", num(p.q_value)}, {"threshold", num(p.threshold)},
          {"inconclusive", p.inconclusive}};
}

int cmd_verify(const RunConfig& c, std::ostream& out) {
  const UserSet users = resolve_users(c.users);
  const CostSpec spec = resolve_spec(c, users.dim());
  const Instance inst = resolve_instance(c, users, spec);
  VerifyConfig v;
  v.producers = c.producers;
  v.samples = c.samples;
  v.grid = {c.n_angles, c.n_radii};
  v.seed = c.seed;
  v.solver = solver_config(c);
  const VerifyReport rep = verify_equilibrium(inst.dist, inst.users, spec, v);
  json genre = rep.genre_count_estimate.continuum ? json("continuum") : json(rep.genre_count_estimate.count);
  const json j = {{"config", config_json(c)},
                  {"variant", variant_name(inst.dist)},
                  {"eq_profit", opt(rep.eq_profit)},
                  {"eq_profit_mc", opt(rep.eq_profit_mc)},
                  {"eq_profit_mc_stderr", opt(rep.eq_profit_mc_stderr)},
                  {"best_response_gap", num(rep.best_response_gap)},
                  {"gap_argmax", vec(rep.gap_argmax)},
                  {"genre_count_estimate", genre},
                  {"foc_residual_max", opt(rep.foc_residual_max)},
                  {"positive_profit_condition", positive_profit_json(rep.positive_profit)}};
  if (c.format == "csv") {
    Sink sink(c.output, out);
    auto& s = sink.stream();
    s << csv_provenance(c) << "key,value\n";
    for (const auto& [k, val] : j.items()) {
      if (k == "config" || val.is_structured()) continue;
      s << k << ',' << (val.is_string() ? val.get<std::string>() : val.dump()) << '\n';
    }
  } else {
    emit_json(j, c, out);
  }
  return rep.positive_profit.inconclusive ? kNoConvergence : kOk;
}

int cmd_profit(const RunConfig& c, std::ostream& out) {
  const UserSet users = resolve_users(c.users);
  const CostSpec spec = resolve_spec(c, users.dim());
  const Instance inst = resolve_instance(c, users, spec);
  std::optional<double> eq;
  if (!std::holds_alternative<InfiniteTwoGenre>(inst.dist)) {
    eq = equilibrium_profit(inst.dist, inst.users, spec, c.producers);
  }
  const PositiveProfitCheck pp = positive_profit_condition(inst.users, spec, c.producers, solver_config(c));
  const json j = {{"config", config_json(c)},
                  {"variant", variant_name(inst.dist)},
                  {"eq_profit", opt(eq)},
                  {"positive_profit_condition", positive_profit_json(pp)}};
  if (c.format == "csv") {
    Sink sink(c.output, out);
    sink.stream() << csv_provenance(c) << "eq_profit,flag,q_value,threshold\n"
                  << (eq ? fmt(*eq) : std::string("")) << ',' << (pp.flag ? 1 : 0) << ',' << fmt(pp.q_value) << ','
                  << fmt(pp.threshold) << '\n';
  } else {
    emit_json(j, c, out);
  }
  return pp.inconclusive ? kNoConvergence : kOk;
}

int cmd_nmf(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.ratings.empty()) throw UsageError("nmf needs --ratings");
  const RatingsTable t = load_ratings_csv(c.ratings);
  NmfConfig n;
  n.factors = c.factors;
  n.epochs = c.epochs;
  n.seed = c.seed;
  const NmfResult r = nmf_factorize(t, n);
  for (const auto& u : r.dropped_users) err << "warning: dropped user " << u << " (no positive rating)\n";
  Sink sink(c.output, out);
  if (c.format == "json") {
    json rows = json::array();
    for (Eigen::Index i = 0; i < r.users.size(); ++i) rows.push_back(vec(r.users.user(i)));
    sink.stream() << json{{"config", config_json(c)}, {"user_ids", r.user_ids}, {"embeddings", rows},
                          {"trace", r.trace}, {"dropped_users", r.dropped_users}}
                         .dump(2)
                  << '\n';
  } else {
    sink.stream() << csv_provenance(c);
    write_embeddings_csv(sink.stream(), r.users.matrix(), r.user_ids);
  }
  return kOk;
}

void add_common(CLI::App* sub, RunConfig& c) {
  sub->add_option("--users", c.users, "basis2 | angle:<theta> | orthonormal:<N> | path to embeddings CSV");
  sub->add_option("--q", c.q, "norm exponent in [1, inf]; 'inf' for the max-norm");
  sub->add_option("--beta", c.beta, "cost exponent >= 1");
  sub->add_option("--alpha", c.alpha, "per-coordinate cost weights")->delimiter(',');
  sub->add_option("--producers", c.producers, "number of producers P");
  sub->add_option("--samples", c.samples, "Monte Carlo sample count M");
  sub->add_option("--seed", c.seed, "RNG seed (falls back to SUPPLY_EQ_SEED)");
  sub->add_option("--n-angles", c.n_angles, "best-response grid angles");
  sub->add_option("--n-radii", c.n_radii, "best-response grid radii");
  sub->add_option("--max-iters", c.max_iters, "iteration cap for the direction solvers");
  sub->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--output", c.output, "output path (default stdout)");
}

void add_variant(CLI::App* sub, RunConfig& c) {
  sub->add_option("--variant", c.variant, "onepop | p2 | finitep | infinite")
      ->check(CLI::IsMember({"onepop", "p2", "finitep", "infinite"}));
  sub->add_option("--n-users", c.n_users, "population size for onepop (users sit at the first embedding)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Supply-side equilibria under personalized recommendations"};
  app.require_subcommand(1);

  auto* nsw = app.add_subcommand("nsw", "Nash-social-welfare direction");
  auto* thr = app.add_subcommand("threshold", "specialization thresholds and max-condition trace");
  auto* eq = app.add_subcommand("eq", "closed-form equilibrium CDF table and samples");
  auto* ver = app.add_subcommand("verify", "numerical equilibrium verification");
  auto* prof = app.add_subcommand("profit", "equilibrium profit and positive-profit condition");
  auto* nmf = app.add_subcommand("nmf", "embeddings from a ratings CSV");
  for (auto* s : {nsw, thr, eq, ver, prof, nmf}) add_common(s, c);
  for (auto* s : {eq, ver, prof}) add_variant(s, c);
  thr->add_option("--trials", c.trials, "random hulls per beta");
  thr->add_option("--hull-points", c.hull_points, "random directions per hull");
  thr->add_option("--tau", c.tau, "hull-gain threshold at N = 20");
  thr->add_option("--gap", c.gap, "binary-search stopping width");
  eq->add_option("--n", c.n, "number of samples to draw");
  eq->add_option("--cdf-grid", c.cdf_grid, "CDF table rows");
  eq->add_option("--samples-output", c.samples_output, "separate CSV for samples");
  nmf->add_option("--ratings", c.ratings, "ratings CSV user_id,item_id,rating");
  nmf->add_option("--factors", c.factors, "embedding dimension D");
  nmf->add_option("--epochs", c.epochs, "multiplicative-update epochs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  c.subcommand = chosen->get_name();
  if (chosen->count("--seed") == 0) {
    if (const char* env = std::getenv("SUPPLY_EQ_SEED")) {
      try {
        c.seed = std::stoull(env);
        c.seed_from_env = true;
      } catch (const std::logic_error&) {
        err << "usage error: SUPPLY_EQ_SEED is not an unsigned integer\n";
        return kUsage;
      }
    }
  }
  if (c.format.empty()) c.format = (c.subcommand == "eq" || c.subcommand == "nmf") ? "csv" : "json";

  try {
    if (c.subcommand == "nsw") return cmd_nsw(c, out);
    if (c.subcommand == "threshold") return cmd_threshold(c, out);
    if (c.subcommand == "eq") return cmd_eq(c, out);
    if (c.subcommand == "verify") return cmd_verify(c, out);
    if (c.subcommand == "profit") return cmd_profit(c, out);
    return cmd_nmf(c, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputData;
  } catch (const std::invalid_argument& e) {
    // Parameters that parsed but violate an operation's preconditions.
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputData;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace supply_eq::cli
