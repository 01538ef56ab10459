// solidify-lab: runs the experiments of libsolidify from the command line.
//
// exit codes: 0 ok, 1 bad configuration, 2 invariant violated during the
// run, 3 anything else (numerical failure, I/O).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "solidify/experiments.hpp"
#include "solidify/geometry.hpp"
#include "solidify/resonance.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace solidify;

namespace {

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot open");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void write_file(const std::string& path, const std::string& text)
{
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write");
    out << text;
}

struct Leaf {
    std::string kind;
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 1;
    std::size_t replicas = 1;
    std::string csv, json_out, out_dir;
    std::string domain;
    std::string ladder;
    std::optional<long> paths, trials;
    std::string lemma;
    bool defaults = false;
};

// l*=7,J=1,I=4
json parse_ladder(const std::string& s)
{
    json out = json::object();
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) throw SchemaError("--ladder: expected key=value, got '" + item + "'");
        std::string k = item.substr(0, eq), v = item.substr(eq + 1);
        static const std::map<std::string, std::string> names = {
            {"l*", "ell_star"}, {"ell_star", "ell_star"}, {"J", "J"}, {"I", "I"}, {"L", "L"}};
        auto it = names.find(k);
        if (it == names.end()) throw SchemaError("--ladder: unknown key '" + k + "'");
        try {
            out[it->second] = std::stol(v);
        } catch (const std::exception&) {
            throw SchemaError("--ladder: " + k + " needs an integer");
        }
    }
    return out;
}

json leaf_params(const Leaf& o, std::uint64_t& seed, std::size_t& replicas)
{
    json p = json::object();
    if (!o.config.empty()) {
        json c = read_json(o.config);
        if (!c.is_object()) throw SchemaError(o.config + ": expected an object");
        // either the parameters themselves or {params, seed, replicas}
        if (c.contains("params")) {
            for (auto it = c.begin(); it != c.end(); ++it)
                if (it.key() != "params" && it.key() != "seed" && it.key() != "replicas" && it.key() != "kind")
                    throw SchemaError(o.config + ": /" + it.key() + ": unknown field");
            if (c.contains("kind") && c["kind"] != o.kind)
                throw SchemaError(o.config + ": /kind: file is for " + c["kind"].dump() + ", not " + o.kind);
            if (c.contains("seed")) seed = c["seed"].get<std::uint64_t>();
            if (c.contains("replicas")) replicas = c["replicas"].get<std::size_t>();
            p = c["params"];
        } else {
            p = c;
        }
    }
    for (const std::string& s : o.sets) {
        json patch;
        try {
            patch = json::parse(s);
        } catch (const json::parse_error& e) {
            throw SchemaError("--set: " + std::string(e.what()));
        }
        if (!patch.is_object()) throw SchemaError("--set: expected a JSON object");
        p.merge_patch(patch);
    }
    const json defaults = experiment_defaults(o.kind);
    auto put = [&](const char* flag, const std::string& key, const json& v) {
        if (!defaults.contains(key)) throw SchemaError(std::string(flag) + ": not a parameter of " + o.kind);
        p[key] = v;
    };
    if (!o.domain.empty()) put("--domain", "domain", read_json(o.domain));
    if (o.paths) put("--paths", defaults.contains("paths") ? "paths" : "samples", *o.paths);
    if (o.trials) put("--trials", defaults.contains("tuples") ? "tuples" : "domains", *o.trials);
    if (!o.ladder.empty()) {
        const json lad = parse_ladder(o.ladder);
        for (auto it = lad.begin(); it != lad.end(); ++it) put("--ladder", it.key(), it.value());
    }
    return p;
}

int run_leaf(const Leaf& o)
{
    if (o.defaults) {
        std::cout << experiment_defaults(o.kind).dump(2) << "\n";
        return 0;
    }
    RunContext ctx;
    ctx.seed = o.seed;
    ctx.replicas = o.replicas;
    json params = leaf_params(o, ctx.seed, ctx.replicas);

    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult r = run_experiment(o.kind, params, ctx);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::string csv_path = o.csv, json_path = o.json_out;
    if (!o.out_dir.empty()) {
        if (csv_path.empty()) csv_path = (fs::path(o.out_dir) / "summary.csv").string();
        if (json_path.empty()) json_path = (fs::path(o.out_dir) / "manifest.json").string();
        for (auto& [name, a] : r.artifacts.items())
            write_file((fs::path(o.out_dir) / (name + ".json")).string(), a.dump(1) + "\n");
    }
    if (json_path.empty() && !csv_path.empty()) json_path = csv_path + ".manifest.json";

    const std::string text = r.table.csv();
    if (csv_path.empty()) std::cout << text;
    else write_file(csv_path, text);
    if (!json_path.empty()) {
        json m = make_manifest(o.kind, r, ctx, wall, csv_path);
        if (o.out_dir.empty() && !r.artifacts.empty()) m["artifacts"] = r.artifacts;
        write_file(json_path, m.dump(1) + "\n");
    }
    for (const std::string& v : r.violations) std::cerr << "violation: " << v << "\n";
    return r.violations.empty() ? 0 : 2;
}

void add_leaf(CLI::App& parent, const std::string& name, const std::string& kind, Leaf& o,
              std::function<int()>& action, bool out_dir = false)
{
    CLI::App* c = parent.add_subcommand(name, experiment_help(kind));
    c->add_option("--config", o.config, "JSON file with the parameters");
    c->add_option("--set", o.sets, "JSON object merged over the parameters (repeatable)");
    c->add_option("--seed", o.seed, "master seed");
    c->add_option("--replicas", o.replicas, "independent replicas")->check(CLI::PositiveNumber);
    c->add_option("--csv", o.csv, "CSV output (stdout when absent)");
    c->add_option("--json", o.json_out, "manifest output");
    c->add_flag("--defaults", o.defaults, "print the default parameters and exit");
    const json d = experiment_defaults(kind);
    if (d.contains("domain")) c->add_option("--domain", o.domain, "domain JSON file");
    if (d.contains("paths") || d.contains("samples")) c->add_option("--paths", o.paths, "Monte Carlo paths");
    if (d.contains("tuples") || d.contains("domains")) c->add_option("--trials", o.trials, "number of trials");
    if (d.contains("ell_star")) c->add_option("--ladder", o.ladder, "scale ladder, e.g. l*=7,J=1,I=4");
    if (out_dir) c->add_option("--out", o.out_dir, "directory for summary, manifest and artifacts");
    c->callback([&o, &action, kind] {
        if (o.kind.empty()) o.kind = kind;
        action = [&o] { return run_leaf(o); };
    });
}

int report(const std::vector<std::string>& files, const std::string& csv, const std::string& json_out, bool long_form)
{
    std::vector<json> ms;
    for (const std::string& f : files) ms.push_back(read_json(f));
    Table t = long_form ? report_long(ms) : report_merge(ms);
    if (csv.empty() && json_out.empty()) std::cout << t.csv();
    if (!csv.empty()) write_file(csv, t.csv());
    if (!json_out.empty()) {
        json j = {{"kind", ms[0]["kind"]}, {"d", ms[0].value("d", 3)}, {"sources", files}, {"table", t.to_json()}};
        write_file(json_out, j.dump(1) + "\n");
    }
    return 0;
}

int fixture(const std::string& name, const std::vector<std::string>& sets, const std::string& out)
{
    json p = {{"kind", name}};
    for (const std::string& s : sets) p.merge_patch(json::parse(s));
    json j = domain_to_json(domain_param(p));
    j["name"] = name;
    if (out.empty()) std::cout << j.dump() << "\n";
    else write_file(out, j.dump() + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Porous-interface solidification experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    std::function<int()> action;
    Leaf leaf;

    // the table of command paths and the experiment kinds behind them
    const std::vector<std::tuple<std::string, std::string, std::string>> leaves = {
        {"resonance", "probe", "resonance-probe/avoidance"},
        {"resonance", "cactus", "resonance-probe/cactus"},
        {"resonance", "crossing", "resonance-probe/crossing"},
        {"resonance", "recursion", "resonance-probe/recursion"},
        {"solidify", "run", "solidify"},
        {"feynman-kac", "run", "feynman-kac"},
        {"capacity", "discrete", "capacity/discrete"},
        {"capacity", "continuum", "capacity/continuum"},
        {"capacity", "ball", "capacity/ball"},
        {"capacity", "cube", "capacity/cube"},
        {"capacity", "green", "capacity/green"},
        {"capacity", "hitting", "capacity/hitting"},
        {"capacity", "bound", "capacity/bound"},
        {"capacity", "ratio", "ratio-harness/configs"},
        {"capacity", "single", "ratio-harness/single"},
        {"capacity", "eta", "eta-probe"},
        {"ri", "sample", "ri/sample"},
        {"ri", "disconnect", "ri/disconnect"},
        {"ri", "classify", "ri/classify"},
        {"scale-audit", "run", "scale-audit"},
    };
    std::map<std::string, CLI::App*> groups;
    auto group = [&](const std::string& g) {
        if (!groups.count(g)) {
            groups[g] = app.add_subcommand(g);
            groups[g]->require_subcommand(1);
        }
        return groups[g];
    };
    for (const auto& [g, name, kind] : leaves) add_leaf(*group(g), name, kind, leaf, action);
    add_leaf(*group("coarsegrain"), "run", "coarsegrain/run", leaf, action, true);

    // density check --lemma {lip|avg|alt}
    std::string lemma = "lip";
    CLI::App* density = group("density");
    CLI::App* check = density->add_subcommand("check", "density laws (lip, avg) or the two-sided alternative (alt)");
    check->add_option("--lemma", lemma)->check(CLI::IsMember({"lip", "avg", "alt"}));
    check->add_option("--config", leaf.config);
    check->add_option("--set", leaf.sets);
    check->add_option("--seed", leaf.seed);
    check->add_option("--replicas", leaf.replicas)->check(CLI::PositiveNumber);
    check->add_option("--csv", leaf.csv);
    check->add_option("--json", leaf.json_out);
    check->add_option("--domain", leaf.domain);
    check->add_option("--trials", leaf.trials);
    check->add_flag("--defaults", leaf.defaults);
    check->callback([&] {
        leaf.kind = lemma == "alt" ? "density-check/alternative" : "density-check/laws";
        if (lemma == "alt" && !leaf.domain.empty())
            throw SchemaError("--domain: the alternative runs on random domains");
        action = [&] { return run_leaf(leaf); };
    });

    std::string fx_name, fx_out;
    std::vector<std::string> fx_sets;
    CLI::App* fx = group("geom")->add_subcommand("fixture", "write a named fixture as domain JSON");
    fx->add_option("--name", fx_name, "cube, shell, slab, perforated_shell, cactus, crossing")->required();
    fx->add_option("--set", fx_sets, "fixture parameters as JSON");
    fx->add_option("--out", fx_out);
    fx->callback([&] { action = [&] { return fixture(fx_name, fx_sets, fx_out); }; });

    std::vector<std::string> manifests;
    std::string rep_csv, rep_json;
    bool rep_long = false;
    CLI::App* rep = app.add_subcommand("report", "merge manifests into one table");
    rep->add_option("manifests", manifests)->required()->check(CLI::ExistingFile);
    rep->add_option("--csv", rep_csv);
    rep->add_option("--json", rep_json);
    rep->add_flag("--long", rep_long, "long format: one row per cell");
    rep->callback([&] { action = [&] { return report(manifests, rep_csv, rep_json, rep_long); }; });

    CLI::App* list = app.add_subcommand("list", "experiment kinds and their defaults");
    list->callback([&] {
        action = [] {
            for (const std::string& k : experiment_kinds())
                std::cout << k << "\t" << experiment_help(k) << "\n  " << experiment_defaults(k).dump() << "\n";
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    try {
        return action ? action() : 1;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violated: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 3;
    }
}
