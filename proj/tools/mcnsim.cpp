// mcnsim: drives the context generation node through simulated mobile-core scenarios.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cghf/metrics.hpp"
#include "cghf/nbi.hpp"
#include "cghf/node.hpp"
#include "cghf/rules.hpp"
#include "cghf/sim.hpp"

namespace fs = std::filesystem;
using cghf::json;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

int cmd_run(const std::string& scenario, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    auto spec = cghf::sim::load_scenario_file(scenario);
    if (seed) spec.seed = *seed;
    cghf::sim::Simulation sim(std::move(spec));
    sim.run();
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "events.ndjson", sim.log_text());
    auto m = sim.metrics();
    write_text(fs::path(out_dir) / "metrics.json", m.dump(2) + "\n");
    std::cout << m.dump(2) << "\n";
    return 0;
}

int cmd_replay(const std::string& log_path) {
    auto original = read_lines(log_path);
    auto again = cghf::sim::replay(original);
    std::size_t n = std::min(original.size(), again.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (original[i] != again[i]) {
            std::cerr << "replay diverges at line " << i + 1 << "\n  log:    " << original[i] << "\n  replay: " << again[i] << "\n";
            return 1;
        }
    }
    if (original.size() != again.size()) {
        std::cerr << "replay produced " << again.size() << " records, log has " << original.size() << "\n";
        return 1;
    }
    std::cout << "replay identical: " << original.size() << " records\n";
    return 0;
}

int cmd_lint(const std::string& rules_path, const std::vector<std::string>& model_paths) {
    cghf::ContextModel model;
    for (const auto& p : model_paths) {
        auto parsed = cghf::parse_rules_file(p);
        if (!parsed.ok()) {
            for (const auto& e : parsed.errors) std::cerr << p << ":" << e.message() << "\n";
            return 1;
        }
        for (const auto& e : parsed.ruleset->entities) model.add(e);
    }
    auto errors = cghf::lint(read_text(rules_path), model);
    for (const auto& e : errors) std::cerr << rules_path << ":" << e << "\n";
    if (errors.empty()) std::cout << rules_path << ": ok\n";
    return errors.empty() ? 0 : 1;
}

int cmd_metrics(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("cannot read " + log_path);
    std::cout << cghf::sim::metrics_from_log(in).dump(2) << "\n";
    return 0;
}

std::atomic<cghf::nbi::Server*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

// Config: {"node_id", "tick_ms", "rules": [paths], "principals": [{"id","token","publish_scope","subscribe_scope"}]}
int cmd_serve(const std::string& config_path, const std::string& socket_path) {
    const json cfg = json::parse(read_text(config_path));
    const fs::path base = fs::path(config_path).parent_path();
    cghf::Bus bus(cfg.value("node_id", "cghf") + "-bus");
    cghf::ContextModel model;
    std::vector<cghf::RuleSet> sets;
    for (const auto& r : cfg.value("rules", json::array())) {
        auto parsed = cghf::parse_rules_file((base / r.get<std::string>()).string());
        if (!parsed.ok()) {
            for (const auto& e : parsed.errors) std::cerr << r.get<std::string>() << ":" << e.message() << "\n";
            return 1;
        }
        for (const auto& e : parsed.ruleset->entities) model.add(e);
        parsed.ruleset->entities.clear();
        sets.push_back(std::move(*parsed.ruleset));
    }
    cghf::NodeOptions opts;
    opts.id = cfg.value("node_id", "cghf");
    cghf::Node node(bus, model, opts);
    for (const auto& rs : sets) node.install_or_throw(rs);

    const auto start = std::chrono::steady_clock::now();
    auto clock = [start] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    };
    cghf::nbi::ExposureService service(node, clock);
    for (const auto& p : cfg.value("principals", json::array())) service.add_principal(cghf::nbi::principal_from_json(p));

    cghf::nbi::Server server(service, socket_path);
    server.start();
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    std::atomic<bool> running{true};
    const auto tick = std::chrono::milliseconds(cfg.value("tick_ms", 1000));
    std::thread ticker([&] {
        while (running) {
            std::this_thread::sleep_for(tick);
            node.tick(clock());
        }
    });
    std::cerr << "serving on " << socket_path << "\n";
    server.run();
    running = false;
    ticker.join();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context generation and handling over a simulated mobile core"};
    app.require_subcommand(1);

    std::string scenario, out_dir = ".", log_path, rules_path, config_path, socket_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> model_paths;

    auto* run = app.add_subcommand("run", "Run a scenario and write events.ndjson and metrics.json");
    run->add_option("--scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_dir, "Output directory");

    auto* replay = app.add_subcommand("replay", "Re-run the scenario recorded in a log and compare");
    replay->add_option("--log", log_path, "events.ndjson")->required()->check(CLI::ExistingFile);

    auto* lint = app.add_subcommand("lint", "Parse and validate a rules file");
    lint->add_option("--rules", rules_path, "Rules file")->required()->check(CLI::ExistingFile);
    lint->add_option("--model", model_paths, "Rules files whose entity declarations form the model")->check(CLI::ExistingFile);

    auto* metrics = app.add_subcommand("metrics", "Derive the metrics report from a log");
    metrics->add_option("--log", log_path, "events.ndjson")->required()->check(CLI::ExistingFile);

    auto* serve = app.add_subcommand("serve", "Expose a live node over a Unix socket");
    serve->add_option("--config", config_path, "Node configuration JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--socket", socket_path, "Socket path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario, seed, out_dir);
        if (*replay) return cmd_replay(log_path);
        if (*lint) return cmd_lint(rules_path, model_paths);
        if (*metrics) return cmd_metrics(log_path);
        if (*serve) return cmd_serve(config_path, socket_path);
    } catch (const std::exception& e) {
        std::cerr << "mcnsim: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
