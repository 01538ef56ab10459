#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "solidify/experiments.hpp"
#include "solidify/potential.hpp"

using namespace solidify;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

std::string quote(const std::string& s)
{
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

Run lab(const std::string& args)
{
    std::string cmd = quote(SOLIDIFY_LAB_PATH) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    Run r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name)
{
    fs::path d = fs::temp_directory_path() / ("solidify_cli_" + std::to_string(::getpid())) / name;
    fs::create_directories(d);
    return d;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::stringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

} // namespace

TEST_CASE("capacity discrete of one site is 1/g(0)")
{
    Run r = lab("capacity discrete --set '{\"L\":1,\"bases\":[[0,0,0]]}'");
    REQUIRE(r.code == 0);
    std::stringstream in(r.out);
    std::string head, row;
    std::getline(in, head);
    std::getline(in, row);
    CHECK(head == "input,L,count,capacity,residual");
    double cap = std::stod(split(row)[3]);
    CHECK(cap == doctest::Approx(1 / lattice_green({0, 0, 0})).epsilon(1e-10));
    CHECK(cap == doctest::Approx(0.65946).epsilon(1e-5));
}

TEST_CASE("bad configurations exit 1 with a pointer")
{
    Run r = lab("ri classify --set '{\"alpha\":0.9,\"beta\":1.0}'");
    CHECK(r.code == 1);
    CHECK(r.out.find("/alpha") != std::string::npos);
    CHECK(r.out.find("gamma < beta < alpha") != std::string::npos);

    r = lab("coarsegrain run --set '{\"scale\":{\"alpha\":0.3,\"beta\":0.3}}'");
    CHECK(r.code == 1);

    r = lab("capacity discrete --set '{\"bogus\":1}'");
    CHECK(r.code == 1);
    CHECK(r.out.find("/bogus: unknown parameter") != std::string::npos);

    r = lab("capacity discrete --set '{\"L\":\"two\"}'");
    CHECK(r.code == 1);
    CHECK(r.out.find("/L: expected a number") != std::string::npos);

    r = lab("capacity discrete --set '{\"L\":2,\"bases\":[[0,0,0],[1,0,0]]}'");
    CHECK(r.code == 1);
    CHECK(r.out.find("overlap") != std::string::npos);

    CHECK(lab("capacity nonsense").code == 1);
    CHECK(lab("resonance probe --ladder 'q=1'").code == 1);
}

TEST_CASE("a rerun gives the same bytes")
{
    fs::path d = scratch("rerun");
    std::string args = "ri sample --paths 200 --seed 9 --replicas 2 --csv ";
    REQUIRE(lab(args + quote((d / "a.csv").string())).code == 0);
    REQUIRE(lab(args + quote((d / "b.csv").string())).code == 0);
    std::string a = slurp(d / "a.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(d / "b.csv"));
    CHECK(a.rfind("replica,u,site", 0) == 0);

    // the manifest carries what is needed to reproduce it
    json m = json::parse(slurp(d / "a.csv.manifest.json"));
    CHECK(m["seed"] == 9);
    CHECK(m["replicas"] == 2);
    CHECK(m["d"] == 3);
    CHECK(m["kind"] == "ri/sample");
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m["params"]["samples"] == 200);

    // a different seed changes it
    REQUIRE(lab("ri sample --paths 200 --seed 10 --replicas 2 --csv " + quote((d / "c.csv").string())).code == 0);
    CHECK(a != slurp(d / "c.csv"));
}

TEST_CASE("worker count does not change results")
{
    fs::path d = scratch("workers");
    std::string args = "ri sample --paths 100 --seed 3 --csv ";
    std::string one = "SOLIDIFY_THREADS=1 " + quote(SOLIDIFY_LAB_PATH) + " " + args + quote((d / "1.csv").string());
    std::string four = "SOLIDIFY_THREADS=4 " + quote(SOLIDIFY_LAB_PATH) + " " + args + quote((d / "4.csv").string());
    REQUIRE(std::system(one.c_str()) == 0);
    REQUIRE(std::system(four.c_str()) == 0);
    CHECK(slurp(d / "1.csv") == slurp(d / "4.csv"));
}

TEST_CASE("report of one manifest is the identity")
{
    fs::path d = scratch("identity");
    REQUIRE(lab("ri sample --paths 100 --csv " + quote((d / "a.csv").string())).code == 0);
    Run r = lab("report " + quote((d / "a.csv.manifest.json").string()));
    REQUIRE(r.code == 0);
    CHECK(r.out == slurp(d / "a.csv"));
}

TEST_CASE("two seeds pool like one bigger run")
{
    fs::path d = scratch("pool");
    REQUIRE(lab("ri sample --paths 300 --seed 1 --csv " + quote((d / "1.csv").string())).code == 0);
    REQUIRE(lab("ri sample --paths 500 --seed 2 --csv " + quote((d / "2.csv").string())).code == 0);
    std::vector<json> ms = {json::parse(slurp(d / "1.csv.manifest.json")), json::parse(slurp(d / "2.csv.manifest.json"))};
    Table t1 = Table::from_json(ms[0]["table"]), t2 = Table::from_json(ms[1]["table"]);
    Table m = report_merge(ms);
    REQUIRE(m.rows.size() == t1.rows.size());
    const std::size_t e = m.column("estimate"), s = m.column("se"), n = m.column("n");
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        double n1 = t1.rows[i][n].get<double>(), n2 = t2.rows[i][n].get<double>();
        double e1 = t1.rows[i][e].get<double>(), e2 = t2.rows[i][e].get<double>();
        double s1 = t1.rows[i][s].get<double>(), s2 = t2.rows[i][s].get<double>();
        CHECK(m.rows[i][n].get<double>() == 800);
        CHECK(m.rows[i][e].get<double>() == doctest::Approx((n1 * e1 + n2 * e2) / (n1 + n2)));
        CHECK(m.rows[i][s].get<double>() ==
              doctest::Approx(std::sqrt(n1 * n1 * s1 * s1 + n2 * n2 * s2 * s2) / (n1 + n2)));
        CHECK(m.rows[i][0] == t1.rows[i][0]);
    }
    // the pooled estimate equals counting vacancies over all 800 samples
    double vac = m.rows[0][e].get<double>() * 800;
    CHECK(std::fabs(vac - std::round(vac)) < 1e-9);

    // same through the binary
    Run r = lab("report " + quote((d / "1.csv.manifest.json").string()) + " " + quote((d / "2.csv.manifest.json").string()));
    CHECK(r.code == 0);
    CHECK(r.out == m.csv());
}

TEST_CASE("report refuses mixed manifests")
{
    fs::path d = scratch("mixed");
    REQUIRE(lab("ri sample --paths 50 --csv " + quote((d / "a.csv").string())).code == 0);
    json m = json::parse(slurp(d / "a.csv.manifest.json"));
    json m2 = m;
    m2["d"] = 2;
    std::ofstream(d / "d2.json") << m2.dump();
    Run r = lab("report " + quote((d / "a.csv.manifest.json").string()) + " " + quote((d / "d2.json").string()));
    CHECK(r.code == 1);
    CHECK(r.out.find("dimensions") != std::string::npos);

    REQUIRE(lab("capacity ball --csv " + quote((d / "b.csv").string())).code == 0);
    r = lab("report " + quote((d / "a.csv.manifest.json").string()) + " " + quote((d / "b.csv.manifest.json").string()));
    CHECK(r.code == 1);
    CHECK_THROWS_AS(report_merge({m, m2}), SchemaError);
}

TEST_CASE("long report lists every cell")
{
    fs::path d = scratch("long");
    REQUIRE(lab("resonance recursion --csv " + quote((d / "a.csv").string())).code == 0);
    Run r = lab("report --long " + quote((d / "a.csv.manifest.json").string()));
    REQUIRE(r.code == 0);
    std::size_t lines = 0;
    for (char c : r.out) lines += c == '\n';
    CHECK(lines == 1 + 12 * 4);
    CHECK(r.out.find("recursion_bound") == std::string::npos);
    CHECK(r.out.find(",bound,") != std::string::npos);
}

TEST_CASE("coarsegrain run writes kappa")
{
    fs::path d = scratch("kappa");
    Run r = lab("coarsegrain run --set '{\"bound\":false,\"paths\":20}' --out " + quote(d.string()));
    REQUIRE(r.code == 0);
    json k = json::parse(slurp(d / "kappa.json"));
    CHECK(k["stage"] == "done");
    CHECK(k["box_corners"].size() > 0);
    CHECK(k["shat"]["encoding"] == "rle/base64");
    CHECK(fs::exists(d / "summary.csv"));
    json m = json::parse(slurp(d / "manifest.json"));
    CHECK(m["kind"] == "coarsegrain/run");
}

TEST_CASE("fixtures and domains go through files")
{
    fs::path d = scratch("fixture");
    REQUIRE(lab("geom fixture --name cube --set '{\"ell_max\":3}' --out " + quote((d / "cube.json").string())).code == 0);
    Run r = lab("density check --lemma lip --trials 300 --domain " + quote((d / "cube.json").string()));
    CHECK(r.code == 0);
    CHECK(r.out.find("lipschitz sigma_hat,300,0,") != std::string::npos);
    CHECK(lab("density check --lemma alt --domain " + quote((d / "cube.json").string())).code == 1);
}

TEST_CASE("invariant violations exit 2")
{
    // demanding a gap of 10 between ratio and bound cannot hold
    Run r = lab("capacity bound --set '{\"margin\":-10}'");
    CHECK(r.code == 2);
    CHECK(r.out.find("violation:") != std::string::npos);
}

TEST_CASE("parameter records")
{
    CHECK(experiment_kinds().size() >= 20);
    for (const std::string& k : experiment_kinds()) {
        CHECK(experiment_defaults(k).is_object());
        CHECK(!experiment_help(k).empty());
    }
    CHECK_THROWS_AS(run_experiment("nope", json::object(), {}), SchemaError);
    CHECK(config_hash(json{{"a", 1}}) == config_hash(json::parse("{\"a\":1}")));
    CHECK(config_hash(json{{"a", 1}}) != config_hash(json{{"a", 2}}));

    CompactSetSpec s = compact_from_json(json::parse(R"({"boxes":[{"lo":[0,0,0],"hi":[1,1,1]}],"balls":[{"center":[2,0,0],"r":0.5}]})"));
    CHECK(s.parts.size() == 2);
    CHECK(compact_from_json(compact_to_json(s)).parts.size() == 2);
    CHECK_THROWS_AS(compact_from_json(json::parse(R"({"boxes":[{"lo":[0,0,0],"hi":[0,1,1]}]})")), SchemaError);
}
