#include "solidify/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "solidify/brownian.hpp"
#include "solidify/coarsegrain.hpp"
#include "solidify/density.hpp"
#include "solidify/interlacements.hpp"
#include "solidify/parallel.hpp"
#include "solidify/potential.hpp"
#include "solidify/resonance.hpp"
#include "solidify/rng.hpp"

namespace solidify {

using json = nlohmann::json;

// ---------------------------------------------------------------- tables

void Table::add(std::vector<json> row)
{
    if (row.size() != columns.size())
        throw std::logic_error("Table::add: " + std::to_string(row.size()) + " cells for " +
                               std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& name) const
{
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? std::string::npos : std::size_t(it - columns.begin());
}

namespace {

std::string cell_text(const json& v)
{
    if (v.is_null()) return "";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) {
        double x = v.get<double>();
        if (std::isnan(x)) return "nan";
        if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
        std::ostringstream o;
        o << std::setprecision(17) << x;
        return o.str();
    }
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

// NaN and inf do not survive JSON
json finite(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

} // namespace

std::string Table::csv() const
{
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + cell_text(columns[i]);
    out += "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + cell_text(r[i]);
        out += "\n";
    }
    return out;
}

json Table::to_json() const { return {{"columns", columns}, {"keys", keys}, {"rows", rows}}; }

Table Table::from_json(const json& j)
{
    if (!j.is_object() || !j.contains("columns") || !j.contains("rows"))
        throw SchemaError("/table: expected columns and rows");
    Table t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    t.keys = j.value("keys", std::size_t(0));
    for (const auto& r : j.at("rows")) t.add(r.get<std::vector<json>>());
    return t;
}

// ---------------------------------------------------------------- parameters

namespace {

const char* type_name(const json& v)
{
    if (v.is_boolean()) return "a boolean";
    if (v.is_number()) return "a number";
    if (v.is_string()) return "a string";
    if (v.is_array()) return "an array";
    if (v.is_object()) return "an object";
    return "null";
}

bool same_type(const json& want, const json& got)
{
    if (want.is_null() || got.is_null()) return true;
    if (want.is_number()) return got.is_number();
    if (want.is_array() && got.is_number()) return true; // one-element sweep
    return want.type() == got.type();
}

// Defaults merged with the user's object; only known keys, matching types.
class Params {
  public:
    Params(const json& defaults, const json& user) : v_(defaults)
    {
        if (!user.is_object()) throw SchemaError("/: parameters must be an object");
        for (auto it = user.begin(); it != user.end(); ++it) {
            if (!defaults.contains(it.key())) throw SchemaError("/" + it.key() + ": unknown parameter");
            if (!same_type(defaults[it.key()], it.value()))
                throw SchemaError("/" + it.key() + ": expected " + type_name(defaults[it.key()]) + ", got " +
                                  type_name(it.value()));
            v_[it.key()] = it.value();
        }
    }
    const json& all() const { return v_; }
    const json& raw(const std::string& k) const { return v_.at(k); }
    double num(const std::string& k) const
    {
        if (!v_.at(k).is_number()) throw SchemaError("/" + k + ": expected a number");
        return v_.at(k).get<double>();
    }
    long integer(const std::string& k) const
    {
        double x = num(k);
        if (x != std::floor(x) || std::fabs(x) > 9e15) throw SchemaError("/" + k + ": expected an integer");
        return long(x);
    }
    long positive(const std::string& k) const
    {
        long x = integer(k);
        if (x < 1) throw SchemaError("/" + k + ": must be at least 1");
        return x;
    }
    bool flag(const std::string& k) const { return v_.at(k).get<bool>(); }
    std::string str(const std::string& k) const { return v_.at(k).get<std::string>(); }
    std::vector<double> nums(const std::string& k) const
    {
        const json& a = v_.at(k);
        if (a.is_number()) return {a.get<double>()};
        if (!a.is_array() || a.empty()) throw SchemaError("/" + k + ": expected a nonempty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number()) throw SchemaError("/" + k + "/" + std::to_string(i) + ": expected a number");
            out.push_back(a[i].get<double>());
        }
        return out;
    }
    std::vector<long> ints(const std::string& k) const
    {
        std::vector<long> out;
        for (double x : nums(k)) {
            if (x != std::floor(x)) throw SchemaError("/" + k + ": expected integers");
            out.push_back(long(x));
        }
        return out;
    }

  private:
    json v_;
};

Point point_of(const json& a, const std::string& where)
{
    if (!a.is_array() || a.size() != 3) throw SchemaError(where + ": expected 3 coordinates");
    Point p{};
    for (int i = 0; i < 3; ++i) {
        if (!a[std::size_t(i)].is_number()) throw SchemaError(where + "/" + std::to_string(i) + ": expected a number");
        p[i] = a[std::size_t(i)].get<double>();
    }
    return p;
}

Site site_of(const json& a, const std::string& where)
{
    Point p = point_of(a, where);
    Site s{};
    for (int i = 0; i < 3; ++i) {
        if (p[i] != std::floor(p[i])) throw SchemaError(where + ": expected integer coordinates");
        s[i] = long(p[i]);
    }
    return s;
}

std::vector<Point> points_of(const json& a, const std::string& where)
{
    if (!a.is_array()) throw SchemaError(where + ": expected an array of points");
    std::vector<Point> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(point_of(a[i], where + "/" + std::to_string(i)));
    return out;
}

json point_json(const Point& p) { return json::array({p[0], p[1], p[2]}); }

std::vector<Box> boxes_of(const json& a, const std::string& where)
{
    if (!a.is_array() || a.empty()) throw SchemaError(where + ": expected a nonempty array of boxes");
    std::vector<Box> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::string w = where + "/" + std::to_string(i);
        if (!a[i].is_object() || !a[i].contains("lo") || !a[i].contains("hi"))
            throw SchemaError(w + ": expected {lo, hi}");
        Box b;
        b.d = 3;
        b.lo = point_of(a[i]["lo"], w + "/lo");
        b.hi = point_of(a[i]["hi"], w + "/hi");
        for (int k = 0; k < 3; ++k)
            if (!(b.lo[k] < b.hi[k])) throw SchemaError(w + ": need lo < hi");
        out.push_back(b);
    }
    return out;
}

std::string join(const std::vector<int>& v)
{
    std::string s;
    for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
    return s;
}

// ---------------------------------------------------------------- kinds

using Runner = std::function<void(const Params&, std::uint64_t seed, ExperimentResult&)>;

struct Kind {
    std::string help;
    json defaults;
    std::vector<std::string> columns;
    std::size_t keys;
    Runner run;
};

// density laws on random tuples
void run_density_laws(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const long n = p.positive("tuples"), per = p.positive("per_domain");
    const int ell_max = int(p.integer("ell_max"));
    const double slack = p.num("slack");
    struct Law {
        long violations = 0;
        double max_ratio = 0;
    } laws[3];
    Stream rng = derive_stream(seed, "density-check", 0);
    const bool given = !p.raw("domain").is_null();
    DyadicIndicator u;
    auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    for (long t = 0; t < n; ++t) {
        if (t % per == 0)
            u = given ? domain_param(p.raw("domain")) : random_domain(3, ell_max, rng, p.num("p_full"), p.num("p_empty"));
        Point x{}, y{}, xy{};
        for (int i = 0; i < 3; ++i) {
            x[i] = unif(-0.2, 1.2);
            y[i] = unif(-0.05, 0.05);
            xy[i] = x[i] + y[i];
        }
        int ell = int(rng.uniform() * 6);
        int lp = ell + 1 + int(rng.uniform() * 4);
        double l1 = l1_norm(3, y);
        double lhs[3] = {std::fabs(sigma_hat(u, xy, ell) - sigma_hat(u, x, ell)),
                         std::fabs(sigma_tilde(u, xy, ell) - sigma_tilde(u, x, ell)),
                         std::fabs(sigma_hat(u, x, ell) - box_average(u, x, ell, lp))};
        double rhs[3] = {std::ldexp(l1, ell), std::ldexp(l1, ell - 2),
                         averaging_constant(3) * std::ldexp(1.0, ell - lp)};
        for (int k = 0; k < 3; ++k) {
            if (lhs[k] > rhs[k] + slack) ++laws[k].violations;
            if (rhs[k] > 0) laws[k].max_ratio = std::max(laws[k].max_ratio, lhs[k] / rhs[k]);
        }
    }
    const char* names[3] = {"lipschitz sigma_hat", "lipschitz sigma_tilde", "averaging"};
    for (int k = 0; k < 3; ++k) {
        r.table.add({names[k], n, laws[k].violations, laws[k].max_ratio});
        if (laws[k].violations)
            r.violations.push_back(std::string(names[k]) + ": " + std::to_string(laws[k].violations) + " violations");
    }
}

void run_density_alternative(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const long n = p.positive("domains");
    const int ell_max = int(p.integer("ell_max"));
    const std::size_t cells = std::size_t(p.positive("max_cells"));
    struct Row {
        int ell = 0, lp = 0;
        double beta = 0, delta = 0;
        AlternativeReport rep;
    };
    std::vector<Row> rows(static_cast<std::size_t>(n));
    // draws first, in order; certification in parallel
    Stream rng = derive_stream(seed, "alternative", 0);
    std::vector<DyadicIndicator> doms;
    std::vector<Point> xs;
    for (long k = 0; k < n; ++k) {
        doms.push_back(random_domain(3, ell_max, rng));
        Point x{};
        for (int i = 0; i < 3; ++i) x[i] = 0.1 + 0.8 * rng.uniform();
        xs.push_back(x);
        Row& w = rows[std::size_t(k)];
        w.ell = 1 + int(rng.uniform() * 2);
        w.lp = w.ell + 1 + int(rng.uniform() * 2);
        w.beta = box_average(doms.back(), x, w.ell, w.lp);
        w.delta = rng.uniform() * std::min(w.beta, 1 - w.beta);
    }
    parallel_for(std::size_t(n), [&](std::size_t k) {
        Row& w = rows[k];
        w.rep = density_alternative(doms[k], xs[k], w.ell, w.lp, w.delta, cells);
    });
    long failures = 0;
    for (long k = 0; k < n; ++k) {
        const Row& w = rows[std::size_t(k)];
        r.table.add({k, w.ell, w.lp, w.beta, w.delta, w.rep.branch(), w.rep.holds(), w.rep.upper_tail,
                     w.rep.lower_tail, w.rep.middle, w.rep.undecided, w.rep.cells});
        failures += !w.rep.holds();
    }
    if (failures) r.violations.push_back(std::to_string(failures) + " domains without a certified branch");
}

void run_cactus(const Params& p, std::uint64_t, ExperimentResult& r)
{
    const int J = int(p.positive("J")), L = int(p.positive("L"));
    const long grid = p.positive("grid");
    DyadicIndicator u = cactus_pile(3, J, L, 0);
    CactusInfo info = cactus_info(J, L, 0);
    const double alpha = std::pow(4.0, -3) / 3.0;
    std::vector<int> counts(std::size_t(grid) + 1);
    parallel_for(counts.size(), [&](std::size_t i) {
        double t = info.x.back() * p.num("span") * double(i) / double(grid);
        int c = 0;
        for (int l : info.levels) {
            double v = sigma_tilde(u, make_point({t, 0, 0}), l);
            c += (v >= alpha && v <= 1 - alpha);
        }
        counts[i] = c;
    });
    long over = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 1; });
    int mx = *std::max_element(counts.begin(), counts.end());
    long hit = std::count_if(counts.begin(), counts.end(), [](int c) { return c == 1; });
    r.table.add({J, L, long(counts.size()), mx, hit, over});
    if (over) r.violations.push_back(std::to_string(over) + " grid points with two resonant levels");
}

std::vector<int> entry_order(const DyadicIndicator& u, const std::vector<int>& levels, double sign, double length)
{
    const double alpha = std::pow(4.0, -3) / 3.0;
    PathSample line = polyline(3, {Point{}, make_point({sign * length, 0, 0})});
    std::vector<std::pair<double, int>> t;
    for (int l : levels) {
        auto f = [&](const Point& y) { return sigma_tilde(u, y, l); };
        t.push_back({first_entry(line, 0, f, std::ldexp(1.0, l - 2), alpha, 1 - alpha, 1e-9), l});
    }
    std::sort(t.begin(), t.end());
    std::vector<int> out;
    for (auto& q : t) out.push_back(q.second);
    return out;
}

void run_crossing(const Params& p, std::uint64_t, ExperimentResult& r)
{
    const int L = int(p.positive("L"));
    DyadicIndicator u = crossing_order(3, L, 0);
    CactusInfo info = cactus_info(2, L, 0);
    const double len = 2 * info.x[2];
    std::vector<int> want_plus = {info.levels[0], info.levels[1], info.levels[2]};
    std::vector<int> want_minus = {info.levels[0], info.levels[2], info.levels[1]};
    for (double sign : {1.0, -1.0}) {
        std::vector<int> order = entry_order(u, info.levels, sign, len);
        IFamilyRecord rec = track_ifamily(polyline(3, {Point{}, make_point({sign * len, 0, 0})}), u, info.levels);
        const std::vector<int>& want = sign > 0 ? want_plus : want_minus;
        bool ok = order == want && rec.complete && rec.lhat == want;
        r.table.add({sign > 0 ? "+e1" : "-e1", join(order), join(rec.lhat), join(want), ok});
        if (!ok) r.violations.push_back("label order along " + std::string(sign > 0 ? "+e1" : "-e1"));
    }
}

void run_avoidance(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    DyadicIndicator u = domain_param(p.raw("domain"));
    const int J = int(p.positive("J"));
    const Point x = point_of(p.raw("x"), "/x");
    AvoidanceOptions opt;
    opt.n_paths = std::size_t(p.positive("paths"));
    opt.R_out = p.num("R_out");
    opt.abs_eps = p.num("abs_eps");
    opt.seed = seed;
    const double c2 = p.num("c2");
    std::optional<int> L;
    if (p.integer("L") > 0) L = int(p.integer("L"));
    for (long I : p.ints("I")) {
        if (I < 1) throw SchemaError("/I: levels must be at least 1");
        ScaleLadder s = ladder(3, int(p.integer("ell_star")), J, int(I), L);
        AvoidanceResult a = avoidance_experiment({x}, u, s, opt)[0];
        bool exact = true;
        if (p.flag("translation_check")) {
            // the origin on U0 - x
            Point mx{};
            for (int i = 0; i < 3; ++i) mx[i] = -x[i];
            AvoidanceResult c = avoidance_experiment({Point{}}, u.translated(mx), s, opt)[0];
            exact = c.p_avoid == a.p_avoid && c.mean_steps == a.mean_steps;
            if (!exact) r.violations.push_back("translation changed the estimate at I = " + std::to_string(I));
        }
        r.table.add({J, I, s.L, s.ell0, a.p_avoid, a.se, long(opt.n_paths), a.remainder, a.mean_steps,
                     recursion_bound(J, int(I), c2), exact});
    }
}

void run_recursion(const Params& p, std::uint64_t, ExperimentResult& r)
{
    for (long J : p.ints("J"))
        for (long I : p.ints("I")) r.table.add({J, I, p.num("c2"), recursion_bound(int(J), int(I), p.num("c2"))});
}

void run_solidify(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const double R = p.num("R");
    CompactSetSpec A;
    A.d = 3;
    A.add_ball(Point{}, p.num("A_radius"));
    std::vector<Point> starts = points_of(p.raw("starts"), "/starts");
    SolidificationOptions opt;
    opt.n_paths = std::size_t(p.positive("paths"));
    opt.cert_paths = std::size_t(p.positive("cert_paths"));
    opt.cert_points = std::size_t(p.positive("cert_points"));
    opt.certify = p.flag("certify");
    opt.eta = p.num("eta");
    opt.seed = seed;
    std::vector<SolidificationMember> fam;
    DyadicIndicator u0 = cube_domain(3, R, int(p.integer("ell_max")));
    for (double eps : p.nums("eps")) {
        double k = 2 * R / eps;
        if (!(eps > 0) || std::fabs(k - std::round(k)) > 1e-9)
            throw SchemaError("/eps: 2R/eps must be a positive integer");
        SolidificationMember m;
        m.name = "perforated";
        m.u0 = u0;
        m.sigma = perforated_cube_shell(R, eps, p.num("hole") * eps, p.num("thickness") * eps);
        m.eps = eps;
        m.ell_star = int(p.integer("ell_star"));
        fam.push_back(m);
    }
    for (const SolidificationRow& w : solidification_experiment(A, starts, fam, opt))
        r.table.add({w.name, w.eps, w.ell_star, w.u, w.included, w.reason, w.eta_hat, w.p_escape, w.se,
                     long(opt.n_paths), w.remainder, point_json(w.argmax).dump()});
}

void run_feynman_kac(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const Point x = point_of(p.raw("x"), "/x");
    FkOptions o;
    o.n_paths = std::size_t(p.positive("paths"));
    o.seed = seed;
    o.dt = p.num("dt");
    o.cutoff = p.num("cutoff");
    std::string hk = p.str("horizon");
    Horizon h;
    if (hk == "fixed") h = Horizon::fixed(p.num("T"));
    else if (hk == "sup_exit") h = Horizon::sup_exit(p.num("radius"));
    else if (hk == "infinite") h = Horizon::infinite();
    else throw SchemaError("/horizon: one of fixed, sup_exit, infinite");
    std::string ob = p.str("obstacle");
    if (ob == "constant") {
        for (double lam : p.nums("lambda")) {
            FkEstimate e = feynman_kac(x, SoftObstacle::constant(lam), h, o);
            double exact = hk == "fixed" ? std::exp(-lam * p.num("T")) : std::numeric_limits<double>::quiet_NaN();
            r.table.add({ob, lam, e.value, e.se, long(e.n), e.remainder, finite(exact)});
        }
    } else if (ob == "layer") {
        DyadicIndicator u0 = domain_param(p.raw("domain"));
        for (double eps : p.nums("eps")) {
            FkEstimate e = feynman_kac(x, SoftObstacle::boundary_layer(u0, eps, p.num("a")), h, o);
            r.table.add({ob, eps, e.value, e.se, long(e.n), e.remainder, nullptr});
        }
    } else {
        throw SchemaError("/obstacle: one of constant, layer");
    }
}

void run_cap_discrete(const Params& p, std::uint64_t, ExperimentResult& r)
{
    if (!p.raw("sites").is_null()) {
        const json& a = p.raw("sites");
        if (!a.is_array() || a.empty()) throw SchemaError("/sites: expected a nonempty array");
        std::vector<Site> F;
        for (std::size_t i = 0; i < a.size(); ++i) F.push_back(site_of(a[i], "/sites/" + std::to_string(i)));
        EquilibriumSolution e = discrete_capacity(F);
        r.table.add({"sites", 0, long(F.size()), e.capacity, e.residual});
        return;
    }
    const long L = p.positive("L");
    const json& a = p.raw("bases");
    if (!a.is_array() || a.empty()) throw SchemaError("/bases: expected a nonempty array");
    std::vector<Site> bases;
    for (std::size_t i = 0; i < a.size(); ++i) bases.push_back(site_of(a[i], "/bases/" + std::to_string(i)));
    for (std::size_t i = 0; i < bases.size(); ++i)
        for (std::size_t j = i + 1; j < bases.size(); ++j) {
            long s = 0;
            for (int k = 0; k < 3; ++k) s = std::max(s, std::labs(bases[i][k] - bases[j][k]));
            if (s < L) throw SchemaError("/bases: boxes " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
        }
    EquilibriumSolution e = bases.size() == 1 ? discrete_box_capacity(L, bases[0])
                                              : discrete_box_set_capacity(L, bases).eq;
    r.table.add({"boxes", L, long(bases.size()), e.capacity, e.residual});
}

void run_cap_continuum(const Params& p, std::uint64_t, ExperimentResult& r)
{
    std::vector<Box> boxes = boxes_of(p.raw("boxes"), "/boxes");
    BemOptions o;
    o.levels = int(p.positive("levels"));
    o.max_panels = std::size_t(p.positive("max_panels"));
    EquilibriumSolution e = continuum_capacity(boxes, p.num("h0"), o);
    json levels = e.level_capacity;
    r.table.add({long(boxes.size()), e.capacity, e.error_estimate, levels.dump(), e.residual});
}

void run_cap_ball(const Params& p, std::uint64_t, ExperimentResult& r)
{
    BemOptions o;
    o.levels = int(p.positive("levels"));
    for (double rad : p.nums("r")) {
        EquilibriumSolution e = ball_capacity(Point{}, rad, o);
        double exact = 2 * M_PI * rad;
        r.table.add({rad, e.capacity, e.error_estimate, exact, e.capacity / exact - 1});
    }
}

void run_cap_cube(const Params& p, std::uint64_t, ExperimentResult& r)
{
    for (double L : p.nums("L")) {
        CubeCapacity c = cube_capacity(L, int(p.positive("n0")), int(p.positive("levels")));
        r.table.add({L, c.capacity, c.error_estimate, c.capacity / (2 * M_PI * L)});
    }
}

void run_cap_green(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const LatticeGreen& g = LatticeGreen::instance();
    GreenMc mc = srw_green_mc(std::size_t(p.positive("walks")), p.positive("R"), seed);
    double g0 = g(0, 0, 0);
    r.table.add({"0 0 0", g0, LatticeGreen::quadrature({0, 0, 0}), mc.value, mc.se, long(mc.walks), mc.value / g0 - 1});
    for (long d : p.ints("far")) {
        Site x{d, 0, 0};
        double dg = 3 * green_continuum(3, double(d)); // g~ ~ d g
        r.table.add({std::to_string(d) + " 0 0", g(x), LatticeGreen::quadrature(x), nullptr, nullptr, 0,
                     g(x) / dg - 1});
    }
}

void run_cap_hitting(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    std::vector<Box> boxes = boxes_of(p.raw("boxes"), "/boxes");
    EquilibriumSolution e = continuum_capacity(boxes, p.num("h0"));
    CompactSetSpec s;
    s.d = 3;
    for (const Box& b : boxes) s.add_box(b);
    ObstacleSet target(s);
    std::vector<Point> xs;
    if (!p.raw("points").is_null()) {
        xs = points_of(p.raw("points"), "/points");
    } else {
        Stream rng = derive_stream(seed, "hitting-points", 0);
        const double rad = p.num("radius") * target.radius();
        for (long k = 0; k < p.positive("n_points"); ++k) {
            Point v{};
            double n2 = 0;
            for (int i = 0; i < 3; ++i) {
                v[i] = rng.normal();
                n2 += v[i] * v[i];
            }
            double sc = rad / std::sqrt(n2);
            for (int i = 0; i < 3; ++i) v[i] = target.center()[i] + v[i] * sc;
            xs.push_back(v);
        }
    }
    HitOptions o;
    o.n_paths = std::size_t(p.positive("paths"));
    o.seed = seed;
    const double rel = p.num("rel_tol");
    for (std::size_t k = 0; k < xs.size(); ++k) {
        o.kind = "hitting-" + std::to_string(k);
        HitEstimate h = hit_before(xs[k], target, Fence::none(), o);
        double pot = harmonic_potential(e, xs[k]);
        double tol = std::max(3 * h.se, rel * pot + h.remainder);
        bool ok = std::fabs(h.p - pot) <= tol;
        r.table.add({long(k), point_json(xs[k]).dump(), h.p, h.se, long(h.n), h.remainder, pot,
                     e.error_estimate / e.capacity, tol, ok});
        if (!ok) r.violations.push_back("hitting probability off the potential at point " + std::to_string(k));
    }
}

void run_cap_bound(const Params& p, std::uint64_t, ExperimentResult& r)
{
    EquilibriumSolution a = continuum_capacity(boxes_of(p.raw("A"), "/A"));
    EquilibriumSolution s = continuum_capacity(boxes_of(p.raw("sigma"), "/sigma"));
    CapacityBound b = capacity_hitting_lower_bound(a, s);
    bool ok = b.holds(p.num("margin"));
    r.table.add({b.cap_a, b.cap_sigma, b.ratio, b.bound, b.ratio - b.bound, ok});
    if (!ok) r.violations.push_back("cap(Sigma)/cap(A) below inf_A h_Sigma");
}

void run_ratio_configs(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    for (const RatioRow& w : ratio_harness(p.ints("K"), p.ints("L"), std::size_t(p.positive("boxes")),
                                           std::size_t(p.positive("configs")), seed))
        r.table.add({w.K, w.L, long(w.config), long(w.boxes), w.cap_discrete, w.cap_continuum, w.ratio, w.a_L, w.eta,
                     w.delta, w.lower, w.upper, w.in_sandwich});
}

void run_ratio_single(const Params& p, std::uint64_t, ExperimentResult& r)
{
    for (long L : p.ints("L")) {
        if (L < 1) throw SchemaError("/L: sides must be at least 1");
        double a = a_L(L);
        r.table.add({L, a, std::fabs(a - 1)});
    }
}

void run_eta(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const long L = p.positive("L");
    for (long K : p.ints("K")) {
        EtaProbe e = eta_probe(K, L, std::size_t(p.positive("pairs")), seed);
        r.table.add({K, L, e.eta});
    }
}

void run_ri_sample(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    const long side = p.positive("side");
    LatticeBox W = LatticeBox::cube({0, 0, 0}, side);
    std::vector<double> us = p.nums("u");
    std::sort(us.begin(), us.end());
    const double u_max = us.back();
    const long n = p.positive("samples");
    std::vector<Site> pts;
    const json& a = p.raw("sites");
    for (std::size_t i = 0; i < a.size(); ++i) {
        pts.push_back(site_of(a[i], "/sites/" + std::to_string(i)));
        if (!W.contains(pts.back())) throw SchemaError("/sites/" + std::to_string(i) + ": outside the window");
    }
    if (pts.empty()) throw SchemaError("/sites: need at least one site");
    const long halo = p.integer("halo");
    std::vector<std::vector<long>> vac(us.size(), std::vector<long>(pts.size(), 0));
    std::vector<long> broken(std::size_t(n), 0);
    std::vector<std::vector<std::vector<std::uint8_t>>> flags(static_cast<std::size_t>(n));
    double traj = 0;
    std::vector<double> counts(static_cast<std::size_t>(n));
    parallel_for(std::size_t(n), [&](std::size_t k) {
        InterlacementSample s = sample_interlacement(u_max, W, halo, derive_stream(seed, "ri-sample", k)());
        counts[k] = double(s.trajectories.size());
        auto& f = flags[k];
        f.assign(us.size(), std::vector<std::uint8_t>(pts.size()));
        for (std::size_t i = 0; i < us.size(); ++i)
            for (std::size_t b = 0; b < pts.size(); ++b) f[i][b] = s.vacant(pts[b], us[i]);
        for (std::size_t i = 0; i < W.size(); ++i)
            for (std::size_t j = 0; j + 1 < us.size(); ++j)
                if (s.occupied(W.site(i), us[j]) && !s.occupied(W.site(i), us[j + 1])) ++broken[k];
    });
    for (long k = 0; k < n; ++k) {
        traj += counts[std::size_t(k)];
        for (std::size_t i = 0; i < us.size(); ++i)
            for (std::size_t b = 0; b < pts.size(); ++b) vac[i][b] += flags[std::size_t(k)][i][b];
    }
    const double g0 = lattice_green({0, 0, 0});
    for (std::size_t i = 0; i < us.size(); ++i)
        for (std::size_t b = 0; b < pts.size(); ++b) {
            double est = double(vac[i][b]) / double(n), want = std::exp(-us[i] / g0);
            double se = std::sqrt(want * (1 - want) / double(n));
            Site x = pts[b];
            r.table.add({us[i], std::to_string(x[0]) + " " + std::to_string(x[1]) + " " + std::to_string(x[2]), est, se, n,
                         want, std::fabs(est - want) <= 3 * se});
        }
    long total_broken = 0;
    for (long b : broken) total_broken += b;
    if (total_broken) r.violations.push_back("thinning not monotone at " + std::to_string(total_broken) + " sites");
    InterlacementSample one = sample_interlacement(u_max, W, halo, seed);
    r.artifacts["trajectories_mean"] = traj / double(n);
    r.artifacts["trajectories_expected"] = u_max * one.cap_window;
    r.artifacts["return_bound"] = one.return_bound;
}

CompactSetSpec compact_param(const json& j, const std::string& where)
{
    try {
        return compact_from_json(j);
    } catch (const SchemaError& e) {
        throw SchemaError(where + std::string(e.what()));
    }
}

void run_ri_disconnect(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    CompactSetSpec A = compact_param(p.raw("A"), "/A");
    std::vector<double> us = p.nums("u");
    if (!std::is_sorted(us.begin(), us.end())) throw SchemaError("/u: levels must be ascending");
    const double M = p.num("M"), N = p.num("N");
    if (!A.inside_open_ball(M)) throw SchemaError("/M: A must lie in the open ball of radius M");
    const long n = p.positive("samples");
    auto flags = disconnection_levels(A, M, N, us, std::size_t(n), seed, p.integer("halo"));
    long broken = 0;
    std::vector<long> hits(us.size(), 0);
    for (const auto& f : flags)
        for (std::size_t j = 0; j < f.size(); ++j) {
            hits[j] += f[j];
            if (j + 1 < f.size() && f[j] && !f[j + 1]) ++broken;
        }
    for (std::size_t j = 0; j < us.size(); ++j) {
        double est = double(hits[j]) / double(n);
        r.table.add({M, N, us[j], est, std::sqrt(est * (1 - est) / double(n)), n});
    }
    if (broken) r.violations.push_back("disconnection not monotone in u on " + std::to_string(broken) + " samples");
}

GoodParams good_params(const Params& p)
{
    GoodParams g{p.num("alpha"), p.num("beta"), p.num("gamma"), p.num("min_diameter_frac")};
    if (!(g.gamma > 0 && g.gamma < g.beta && g.beta < g.alpha))
        throw SchemaError("/alpha: need 0 < gamma < beta < alpha (got alpha=" + std::to_string(g.alpha) +
                          ", beta=" + std::to_string(g.beta) + ", gamma=" + std::to_string(g.gamma) + ")");
    return g;
}

void run_ri_classify(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    GoodParams g = good_params(p);
    const long L = p.positive("L"), K = p.positive("K");
    const double u = p.num("u"), u_max = p.num("u_max");
    if (!(u > 0 && u <= u_max)) throw SchemaError("/u: need 0 < u <= u_max");
    BoxTriple t0{{0, 0, 0}, L, K}, t1{{L, 0, 0}, L, K};
    const long lo = -(K + 1) * L;
    LatticeBox W = LatticeBox::cube({lo, lo, lo}, 2 * (K + 1) * L + L);
    const long n = p.positive("samples");
    std::vector<int> res(static_cast<std::size_t>(n)), good(static_cast<std::size_t>(n));
    parallel_for(std::size_t(n), [&](std::size_t k) {
        InterlacementSample s = sample_interlacement(u_max, W, 0, derive_stream(seed, "ri-classify", k)());
        good[k] = classify_box(s, t0, g).good;
        res[k] = int(connectivity_check(s, {t0, t1}, g, u));
    });
    long found = std::count(res.begin(), res.end(), int(ChainResult::Found));
    long failed = std::count(res.begin(), res.end(), int(ChainResult::Failed));
    long skipped = n - found - failed;
    long ng = std::count(good.begin(), good.end(), 1);
    double est = double(ng) / double(n);
    r.table.add({L, K, u, n, found, failed, skipped, est, std::sqrt(est * (1 - est) / double(n))});
    if (failed) r.violations.push_back(std::to_string(failed) + " good chains without a connecting path");
}

std::function<double(double)> rho_param(const json& j)
{
    if (j.is_null()) return {};
    if (j.is_number()) {
        double c = j.get<double>();
        if (!(c > 0)) throw SchemaError("/rho: must be positive");
        return [c](double) { return c; };
    }
    if (!j.is_array() || j.empty()) throw SchemaError("/rho: a number or a table [[L, rho], ...]");
    std::vector<std::pair<double, double>> t;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != 2) throw SchemaError("/rho/" + std::to_string(i) + ": expected [L, rho]");
        t.push_back({j[i][0].get<double>(), j[i][1].get<double>()});
    }
    std::sort(t.begin(), t.end());
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i].second > t[i - 1].second) throw SchemaError("/rho: table must be nonincreasing");
    return [t](double L) {
        double v = t.front().second;
        for (const auto& q : t)
            if (q.first <= L) v = q.second;
        return v;
    };
}

ScaleConfig scale_param(const json& j)
{
    try {
        return ScaleConfig::from_json(j);
    } catch (const SchemaError& e) {
        throw SchemaError("/scale" + std::string(e.what()));
    }
}

void run_scale_audit(const Params& p, std::uint64_t, ExperimentResult& r)
{
    ScaleConfig c = scale_param(p.raw("scale"));
    for (const AuditLine& l : scale_audit(c, p.nums("N"), rho_param(p.raw("rho"))))
        r.table.add({l.name, l.pass ? "pass" : "warn", l.detail});
}

json grid_json(const Grid3& g)
{
    return {{"lo", {g.lo[0], g.lo[1], g.lo[2]}},
            {"n", g.n},
            {"encoding", "rle/base64"},
            {"cells", base64_encode(rle_encode(g.v))}};
}

void run_coarsegrain(const Params& p, std::uint64_t seed, ExperimentResult& r)
{
    ScaleConfig c = scale_param(p.raw("scale"));
    c.validate();
    CompactSetSpec A = compact_param(p.raw("A"), "/A");
    if (!A.inside_open_ball(c.M)) throw SchemaError("/A: must lie in the open ball of radius M");
    const json& f = p.raw("field");
    if (!f.is_object()) throw SchemaError("/field: expected an object");
    std::string kind = f.value("kind", "shell");
    BoxField field;
    InterlacementSample sample;
    if (kind == "shell") {
        ShellFixture fx;
        for (auto it = f.begin(); it != f.end(); ++it)
            if (!std::set<std::string>{"kind", "r_in", "r_out", "p_bad", "p_noise", "seed"}.count(it.key()))
                throw SchemaError("/field/" + it.key() + ": unknown parameter");
        fx.r_in = f.value("r_in", fx.r_in);
        fx.r_out = f.value("r_out", fx.r_out);
        fx.p_bad = f.value("p_bad", fx.p_bad);
        fx.p_noise = f.value("p_noise", fx.p_noise);
        fx.seed = f.value("seed", seed);
        if (!(fx.r_in < fx.r_out)) throw SchemaError("/field: need r_in < r_out");
        field = shell_field(c, fx);
    } else if (kind == "interlacement") {
        for (auto it = f.begin(); it != f.end(); ++it)
            if (!std::set<std::string>{"kind", "u_max", "alpha", "beta", "gamma", "min_diameter_frac", "max_side"}.count(it.key()))
                throw SchemaError("/field/" + it.key() + ": unknown parameter");
        GoodParams g{f.value("alpha", 1.2), f.value("beta", 1.0), f.value("gamma", 0.1), f.value("min_diameter_frac", 0.1)};
        // every U_z of the box grid has to sit in the window
        const long L = c.l0(), Rb = c.eval_radius() + c.lhat0() + (c.K + 1) * L;
        const long side = 2 * Rb + L;
        if (side > f.value("max_side", 160L))
            throw SchemaError("/field: an interlacement field needs a window of side " + std::to_string(side) +
                              "; raise max_side or shrink N");
        sample = sample_interlacement(f.value("u_max", c.u), LatticeBox::cube({-Rb, -Rb, -Rb}, side), 0, seed);
        field = interlacement_field(sample, c, g);
    } else {
        throw SchemaError("/field/kind: one of shell, interlacement");
    }
    CoarseGrainOutput k = assemble_kappa(field, c, A);
    PathAudit pa;
    if (k.disconnected) pa = path_meets_interface(k, c, A, std::size_t(p.integer("paths")), seed);
    BoundAssembly b;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    b.cap_C = b.cap_sigma = b.cap_a = b.cap_ratio = b.hitting_bound = b.per_kappa = nan;
    if (p.flag("bound") && !k.C.empty()) {
        double er = p.num("erosion") > 0 ? p.num("erosion") : double(k.Lhat0 + k.L0 + 1) / double(c.N);
        b = bound_assembly(k, c, eroded(A, er));
    }
    PorosityAudit po;
    po.min_p = nan;
    if (p.integer("porosity_points") > 0 && !k.sigma.empty())
        po = porosity(k, c, std::size_t(p.integer("porosity_points")), std::size_t(p.positive("porosity_paths")), seed);
    r.table.add({c.N, c.l0(), c.lhat0(), k.stage, k.disconnected, long(k.selected.size()), long(k.failed_blocks),
                 long(k.C.size()), k.insulated, long(pa.paths), long(pa.missed), k.tally.total(), k.tally.bound,
                 finite(b.cap_C), finite(b.cap_sigma), finite(b.cap_a), finite(b.cap_ratio), finite(b.hitting_bound),
                 finite(b.per_kappa), finite(po.min_p)});
    if (k.disconnected && k.stage == "done") {
        if (!k.insulated) r.violations.push_back("eroded core reaches the unbounded component");
        if (pa.missed) r.violations.push_back(std::to_string(pa.missed) + " paths missed the interface");
    }
    if (k.tally.total() > k.tally.bound) r.violations.push_back("complexity tally above the closed form");

    json kappa = k.summary();
    json boxes = json::array();
    for (const Site& z : k.C) boxes.push_back({z[0], z[1], z[2]});
    kappa["box_corners"] = boxes;
    kappa["config"] = c.to_json();
    if (k.disconnected) {
        kappa["shat"] = grid_json(k.seg.shat);
        kappa["u1_cells"] = grid_json(k.seg.u1);
    }
    kappa["bound"] = b.to_json();
    r.artifacts["kappa"] = kappa;
}

const std::map<std::string, Kind>& registry()
{
    static const std::map<std::string, Kind> m = [] {
        std::map<std::string, Kind> k;
        json cube_dom = {{"kind", "cube"}, {"half_side", 1}, {"ell_max", 3}};
        k["density-check/laws"] = {
            "Lipschitz and averaging laws of the local densities on random dyadic domains",
            {{"tuples", 10000}, {"per_domain", 50}, {"ell_max", 5}, {"p_full", 0.3}, {"p_empty", 0.3}, {"slack", 1e-12},
             {"domain", nullptr}},
            {"law", "tuples", "violations", "max_ratio"}, 1, run_density_laws};
        k["density-check/alternative"] = {
            "certify one branch of the two-sided density alternative on random domains",
            {{"domains", 200}, {"ell_max", 4}, {"max_cells", 400000}},
            {"domain", "ell", "ell_prime", "beta", "delta", "branch", "holds", "upper_tail", "lower_tail", "middle",
             "undecided", "cells"},
            1, run_density_alternative};
        k["resonance-probe/cactus"] = {"resonant levels along the axis of the cactus pile",
                                       {{"J", 3}, {"L", 5}, {"grid", 4000}, {"span", 1.2}},
                                       {"J", "L", "points", "max_count", "resonant_points", "violations"}, 2, run_cactus};
        k["resonance-probe/crossing"] = {"entry order of the labels along +e1 and -e1",
                                         {{"L", 5}},
                                         {"direction", "order", "ifamily", "expected", "ok"}, 1, run_crossing};
        k["resonance-probe/avoidance"] = {
            "P_x[H_Res > tau_R] by walk on spheres, per I",
            {{"domain", {{"kind", "slab"}, {"R_exp", 4}, {"ell_max", 200}}},
             {"J", 1}, {"I", {1, 2, 4, 8}}, {"L", 0}, {"ell_star", 0}, {"x", {-8, 0, 0}}, {"R_out", 6}, {"paths", 2000},
             {"abs_eps", 1e-6}, {"c2", 0.5}, {"translation_check", true}},
            {"J", "I", "L", "ell0", "estimate", "se", "n", "remainder", "mean_steps", "recursion_bound", "translation_exact"},
            2, run_avoidance};
        k["resonance-probe/recursion"] = {"the recursive bound on Gamma~_J(I)",
                                          {{"J", {1, 2, 3}}, {"I", {1, 10, 100, 1000}}, {"c2", 0.5}},
                                          {"J", "I", "c2", "bound"}, 3, run_recursion};
        k["solidify"] = {"escape probability through perforated cube shells",
                         {{"R", 1}, {"eps", {1, 0.5, 0.25, 0.125}}, {"hole", 0.9}, {"thickness", 0.05}, {"ell_max", 5},
                          {"ell_star", 1}, {"A_radius", 0.1}, {"starts", {{0, 0, 0}, {0.1, 0, 0}}}, {"paths", 20000},
                          {"cert_paths", 400}, {"cert_points", 64}, {"eta", 0.05}, {"certify", true}},
                         {"name", "eps", "ell_star", "u", "included", "reason", "eta_hat", "estimate", "se", "n",
                          "remainder", "argmax"},
                         3, run_solidify};
        k["feynman-kac"] = {"E_x exp(-int V) for a constant or a boundary-layer obstacle",
                            {{"obstacle", "layer"}, {"domain", cube_dom}, {"eps", {0.2, 0.1, 0.05}}, {"a", 1},
                             {"lambda", {1}}, {"x", {0, 0, 0}}, {"horizon", "sup_exit"}, {"radius", 2}, {"T", 1},
                             {"paths", 10000}, {"dt", 0}, {"cutoff", 50}},
                            {"obstacle", "parameter", "estimate", "se", "n", "remainder", "exact"}, 2, run_feynman_kac};
        k["capacity/discrete"] = {"lattice capacity of boxes {0..L-1}^3 + base, or of a site list",
                                  {{"L", 1}, {"bases", {{0, 0, 0}}}, {"sites", nullptr}},
                                  {"input", "L", "count", "capacity", "residual"}, 3, run_cap_discrete};
        k["capacity/continuum"] = {"Brownian capacity of a union of boxes by BEM",
                                   {{"boxes", {{{"lo", {0, 0, 0}}, {"hi", {1, 1, 1}}}}}, {"h0", 0}, {"levels", 2},
                                    {"max_panels", 12000}},
                                   {"boxes", "capacity", "error_estimate", "levels", "residual"}, 1, run_cap_continuum};
        k["capacity/ball"] = {"ball capacity by BEM against 2 pi r",
                              {{"r", {1}}, {"levels", 2}},
                              {"r", "capacity", "error_estimate", "exact", "rel_error"}, 1, run_cap_ball};
        k["capacity/cube"] = {"cube capacity by graded symmetric BEM",
                              {{"L", {1}}, {"n0", 16}, {"levels", 3}},
                              {"L", "capacity", "error_estimate", "per_2piL"}, 1, run_cap_cube};
        k["capacity/green"] = {"lattice Green function: table, quadrature, random walk and far field",
                               {{"walks", 1000000}, {"R", 8}, {"far", {50}}},
                               {"x", "table", "quadrature", "mc", "se", "n", "rel_dev"}, 1, run_cap_green};
        k["capacity/hitting"] = {"hitting probability of a box union against its equilibrium potential",
                                 {{"boxes", {{{"lo", {0, 0, 0}}, {"hi", {1, 1, 1}}}}}, {"points", nullptr}, {"n_points", 10},
                                  {"radius", 2.5}, {"paths", 20000}, {"h0", 0}, {"rel_tol", 0.02}},
                                 {"point", "x", "estimate", "se", "n", "remainder", "potential", "cap_rel_error", "tolerance", "ok"}, 2,
                                 run_cap_hitting};
        k["capacity/bound"] = {"cap(Sigma)/cap(A) against inf over A of h_Sigma",
                               {{"A", {{{"lo", {-0.25, -0.25, -0.25}}, {"hi", {0.25, 0.25, 0.25}}}}},
                                {"sigma", {{{"lo", {-1, -1, -1}}, {"hi", {1, 1, 1}}}}}, {"margin", 1e-3}},
                               {"cap_A", "cap_sigma", "ratio", "bound", "margin", "holds"}, 0, run_cap_bound};
        k["ratio-harness/configs"] = {"d cap~(C) / cap(Gamma) on random separated box configurations",
                                      {{"K", {16}}, {"L", {16}}, {"boxes", 5}, {"configs", 1}},
                                      {"K", "L", "config", "boxes", "cap_discrete", "cap_continuum", "ratio", "a_L", "eta",
                                       "delta", "lower", "upper", "in_sandwich"},
                                      3, run_ratio_configs};
        k["ratio-harness/single"] = {"a_L = d cap~(B) / cap(B^) for single boxes",
                                     {{"L", {8, 16, 32, 64}}}, {"L", "a_L", "deviation"}, 1, run_ratio_single};
        k["eta-probe"] = {"sampled lower bound for the Green comparison constant eta_K",
                          {{"K", {10, 16, 32}}, {"L", 16}, {"pairs", 200}}, {"K", "L", "eta"}, 2, run_eta};
        k["ri/sample"] = {"vacancy of sites under interlacements against exp(-u/g~(0))",
                          {{"u", {0.5, 1, 2}}, {"side", 6}, {"halo", 0}, {"samples", 3000},
                           {"sites", {{2, 2, 2}, {3, 3, 3}, {0, 0, 0}}}},
                          {"u", "site", "estimate", "se", "n", "expected", "within_3se"}, 2, run_ri_sample};
        k["ri/disconnect"] = {"disconnection of A_N from S_N by the vacant set",
                              {{"A", {{"balls", {{{"center", {0, 0, 0}}, {"r", 1}}}}}}, {"M", 2}, {"N", 4},
                               {"u", {1, 2, 4, 6}}, {"samples", 100}, {"halo", 0}},
                              {"M", "N", "u", "estimate", "se", "n"}, 3, run_ri_disconnect};
        k["ri/classify"] = {"good boxes and the connectivity check on two neighbouring boxes",
                            {{"L", 6}, {"K", 5}, {"alpha", 1.2}, {"beta", 1.0}, {"gamma", 0.1}, {"min_diameter_frac", 0.1},
                             {"u_max", 1}, {"u", 0.2}, {"samples", 30}},
                            {"L", "K", "u", "n", "found", "failed", "skipped", "estimate", "se"}, 3, run_ri_classify};
        k["coarsegrain/run"] = {"coarse-graining pipeline on a blocking field",
                                {{"scale", {{"N", 64}, {"M", 1.1}, {"L0", 2}, {"Lhat0", 40}, {"K", 2}, {"c_prime", 0.4}}},
                                 {"A", {{"boxes", {{{"lo", {-1, -1, -1}}, {"hi", {1, 1, 1}}}}}}},
                                 {"field", {{"kind", "shell"}}}, {"paths", 100}, {"bound", true}, {"erosion", 0},
                                 {"porosity_points", 0}, {"porosity_paths", 500}},
                                {"N", "L0", "Lhat0", "stage", "disconnected", "selected", "failed_blocks", "boxes",
                                 "insulated", "paths", "missed", "complexity_bits", "complexity_bound", "cap_C",
                                 "cap_sigma", "cap_A_prime", "cap_ratio", "hitting_bound", "per_kappa", "porosity"},
                                3, run_coarsegrain};
        k["scale-audit"] = {"finite-N evaluation of the scale conditions over a sweep",
                            {{"scale", {{"M", 1}, {"gamma_rule", {{"scale", 0.08}, {"floor", 1}}}}},
                             {"N", {1e3, 1e4, 1e5}}, {"rho", nullptr}},
                            {"line", "status", "detail"}, 1, run_scale_audit};
        return k;
    }();
    return m;
}

const Kind& find_kind(const std::string& kind)
{
    auto it = registry().find(kind);
    if (it == registry().end()) throw SchemaError("unknown experiment kind '" + kind + "'");
    return it->second;
}

} // namespace

std::vector<std::string> experiment_kinds()
{
    std::vector<std::string> out;
    for (const auto& [name, k] : registry()) out.push_back(name);
    return out;
}

json experiment_defaults(const std::string& kind) { return find_kind(kind).defaults; }
std::string experiment_help(const std::string& kind) { return find_kind(kind).help; }

ExperimentResult run_experiment(const std::string& kind, const json& params, const RunContext& ctx)
{
    const Kind& k = find_kind(kind);
    Params p(k.defaults, params.is_null() ? json::object() : params);
    if (ctx.replicas < 1) throw SchemaError("/replicas: must be at least 1");
    ExperimentResult out;
    out.params = p.all();
    out.table.columns = k.columns;
    out.table.keys = k.keys;
    if (ctx.replicas > 1) {
        out.table.columns.insert(out.table.columns.begin(), "replica");
        ++out.table.keys;
    }
    for (std::size_t rep = 0; rep < ctx.replicas; ++rep) {
        std::uint64_t seed = ctx.replicas == 1 ? ctx.seed : derive_stream(ctx.seed, kind, rep)();
        ExperimentResult one;
        one.table.columns = k.columns;
        k.run(p, seed, one);
        for (auto& row : one.table.rows) {
            if (ctx.replicas > 1) row.insert(row.begin(), json(rep));
            out.table.rows.push_back(std::move(row));
        }
        for (auto& v : one.violations) out.violations.push_back(ctx.replicas > 1 ? "replica " + std::to_string(rep) + ": " + v : v);
        if (ctx.replicas == 1) out.artifacts = std::move(one.artifacts);
        else out.artifacts[std::to_string(rep)] = std::move(one.artifacts);
    }
    return out;
}

std::string config_hash(const json& j)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h;
    return o.str();
}

json make_manifest(const std::string& kind, const ExperimentResult& r, const RunContext& ctx, double wall_seconds,
                   const std::string& csv_path)
{
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return {{"kind", kind},
            {"d", 3},
            {"params", r.params},
            {"config_hash", config_hash({{"kind", kind}, {"params", r.params}})},
            {"seed", ctx.seed},
            {"replicas", ctx.replicas},
            {"version", kVersion},
            {"workers", worker_count()},
            {"wall_time_s", wall_seconds},
            {"timestamp", stamp},
            {"csv", csv_path},
            {"violations", r.violations},
            {"table", r.table.to_json()}};
}

Table report_merge(const std::vector<json>& manifests)
{
    if (manifests.empty()) throw SchemaError("report: no manifests");
    std::vector<Table> tables;
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        const json& m = manifests[i];
        if (!m.is_object() || !m.contains("table") || !m.contains("kind"))
            throw SchemaError("/" + std::to_string(i) + ": not a manifest");
        if (m.value("d", 3) != manifests[0].value("d", 3))
            throw SchemaError("/" + std::to_string(i) + "/d: manifests mix dimensions " +
                              std::to_string(manifests[0].value("d", 3)) + " and " + std::to_string(m.value("d", 3)));
        if (m["kind"] != manifests[0]["kind"])
            throw SchemaError("/" + std::to_string(i) + "/kind: manifests mix experiment kinds");
        Table t = Table::from_json(m["table"]);
        // replicas are pooled like seeds
        std::size_t rc = t.column("replica");
        if (rc != std::string::npos) {
            t.columns.erase(t.columns.begin() + long(rc));
            for (auto& row : t.rows) row.erase(row.begin() + long(rc));
            --t.keys;
        }
        tables.push_back(std::move(t));
        if (tables.back().columns != tables[0].columns)
            throw SchemaError("/" + std::to_string(i) + "/table: columns differ");
    }
    Table out;
    out.columns = tables[0].columns;
    out.keys = tables[0].keys;
    const std::size_t ie = out.column("estimate"), is = out.column("se"), in = out.column("n");
    const bool pool = ie != std::string::npos && is != std::string::npos && in != std::string::npos;
    struct Acc {
        std::vector<json> first;
        std::vector<std::vector<json>> rows;
    };
    std::vector<Acc> groups;
    std::map<std::string, std::size_t> index;
    for (const Table& t : tables)
        for (const auto& row : t.rows) {
            std::string key = json(std::vector<json>(row.begin(), row.begin() + long(out.keys))).dump();
            if (!pool) key += "#" + std::to_string(groups.size()); // nothing to pool: keep every row
            auto it = index.find(key);
            if (it == index.end()) {
                index[key] = groups.size();
                groups.push_back({row, {row}});
            } else {
                groups[it->second].rows.push_back(row);
            }
        }
    for (const Acc& g : groups) {
        if (g.rows.size() == 1) {
            out.add(g.rows[0]);
            continue;
        }
        std::vector<json> row = g.first;
        double ntot = 0;
        for (const auto& r : g.rows) ntot += r[in].get<double>();
        for (std::size_t c = out.keys; c < row.size(); ++c) {
            if (c == in) {
                row[c] = (long long)(ntot);
            } else if (c == is) {
                double s = 0;
                for (const auto& r : g.rows) s += std::pow(r[in].get<double>() * r[is].get<double>(), 2);
                row[c] = std::sqrt(s) / ntot;
            } else if (g.first[c].is_number()) {
                double s = 0;
                bool ok = true;
                for (const auto& r : g.rows) {
                    if (!r[c].is_number()) ok = false;
                    else s += r[in].get<double>() * r[c].get<double>();
                }
                row[c] = ok ? json(s / ntot) : json(nullptr);
            } else if (g.first[c].is_boolean()) {
                bool all = true;
                for (const auto& r : g.rows) all = all && r[c].is_boolean() && r[c].get<bool>();
                row[c] = all;
            } else {
                for (const auto& r : g.rows)
                    if (r[c] != g.first[c]) row[c] = "mixed";
            }
        }
        out.add(row);
    }
    return out;
}

Table report_long(const std::vector<json>& manifests)
{
    report_merge(manifests); // same checks
    Table out;
    out.columns = {"manifest", "kind", "seed", "config_hash", "row", "column", "value"};
    out.keys = 6;
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        Table t = Table::from_json(manifests[i]["table"]);
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            for (std::size_t c = 0; c < t.columns.size(); ++c)
                out.add({long(i), manifests[i]["kind"], manifests[i].value("seed", json(nullptr)),
                         manifests[i].value("config_hash", ""), long(r), t.columns[c], t.rows[r][c]});
    }
    return out;
}

CompactSetSpec compact_from_json(const json& j)
{
    if (!j.is_object()) throw SchemaError("/: expected {boxes, balls}");
    CompactSetSpec s;
    s.d = 3;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "boxes" && it.key() != "balls") throw SchemaError("/" + it.key() + ": unknown field");
    if (j.contains("boxes"))
        for (const Box& b : boxes_of(j["boxes"], "/boxes")) s.add_box(b);
    if (j.contains("balls")) {
        const json& a = j["balls"];
        if (!a.is_array()) throw SchemaError("/balls: expected an array");
        for (std::size_t i = 0; i < a.size(); ++i) {
            std::string w = "/balls/" + std::to_string(i);
            if (!a[i].is_object() || !a[i].contains("center") || !a[i].contains("r") || !a[i]["r"].is_number())
                throw SchemaError(w + ": expected {center, r}");
            double rad = a[i]["r"].get<double>();
            if (rad < 0) throw SchemaError(w + "/r: must be nonnegative");
            s.add_ball(point_of(a[i]["center"], w + "/center"), rad);
        }
    }
    if (s.parts.empty()) throw SchemaError("/: empty set");
    return s;
}

json compact_to_json(const CompactSetSpec& s)
{
    json boxes = json::array(), balls = json::array();
    for (const Primitive& q : s.parts) {
        if (q.rho == 0) boxes.push_back({{"lo", point_json(q.lo)}, {"hi", point_json(q.hi)}});
        else if (q.lo == q.hi) balls.push_back({{"center", point_json(q.lo)}, {"r", q.rho}});
        else throw std::invalid_argument("compact_to_json: rounded boxes have no JSON form");
    }
    json out = json::object();
    if (!boxes.empty()) out["boxes"] = boxes;
    if (!balls.empty()) out["balls"] = balls;
    return out;
}

DyadicIndicator domain_param(const json& j)
{
    if (!j.is_object()) throw SchemaError("/domain: expected an object");
    if (j.contains("cells")) return domain_from_json(j);
    std::string k = j.value("kind", "");
    auto num = [&](const char* key, double def) {
        if (!j.contains(key)) return def;
        if (!j[key].is_number()) throw SchemaError(std::string("/domain/") + key + ": expected a number");
        return j[key].get<double>();
    };
    int em = int(num("ell_max", 3));
    if (k == "cube") return cube_domain(3, num("half_side", 1), em);
    if (k == "shell") return shell(3, num("R", 1), num("thickness", 0.5), em);
    if (k == "slab") return slab(3, int(num("R_exp", 4)), em);
    if (k == "perforated_shell") return perforated_shell(3, num("R", 1), num("spacing", 0.25), num("hole", 0.125), em);
    if (k == "cactus") return cactus_pile(3, int(num("J", 3)), int(num("L", 5)), int(num("ell0", 0)));
    if (k == "crossing") return crossing_order(3, int(num("L", 5)), int(num("ell0", 0)));
    throw SchemaError("/domain/kind: one of cube, shell, slab, perforated_shell, cactus, crossing, or a domain with cells");
}

} // namespace solidify
