// Experiment runner for the perforated-domain homogenization toolkit.
//
// Exit codes: 0 success, 1 config validation failure, 2 solver-fatal
// (k-monotonicity violation or oracle mismatch), 3 replay drift.

#include "perfhom/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace perfhom;

int main(int argc, char** argv) {
    CLI::App app{"perfhom: cell problems, extension operators, and effective "
                 "energy densities on randomly perforated domains"};

    std::string config_path, out_dir, replay_path, seeds_list;
    int parallel = 0;

    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seeds", seeds_list, "comma-separated seed list (overrides the config)");
    app.add_option("--parallel", parallel, "worker threads (overrides the config)");
    app.add_option("--replay", replay_path, "verify a manifest instead of running");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!replay_path.empty()) {
            ReplayResult rep = replay(replay_path);
            for (const std::string& f : rep.missing) std::cout << "[absent]   " << f << "\n";
            for (const std::string& f : rep.drift) std::cout << "[modified] " << f << "\n";
            for (const std::string& f : rep.rerun_mismatch) std::cout << "[rerun-diff] " << f << "\n";
            if (rep.exit_code == 0) std::cout << "replay: all artifacts match\n";
            else std::cout << "replay: drift detected\n";
            return rep.exit_code;
        }

        if (config_path.empty()) {
            std::cerr << "error: --config or --replay is required\n";
            return 1;
        }

        ExperimentConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (parallel > 0) cfg.parallel = parallel;
        if (!seeds_list.empty()) {
            cfg.seeds.clear();
            std::stringstream ss(seeds_list);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) cfg.seeds.push_back(std::stoull(tok));
        }

        RunResult rr = run_experiment(cfg, cfg.out_dir);
        for (const std::string& e : rr.errors) std::cerr << "config error: " << e << "\n";
        for (const std::string& w : rr.warnings) std::cerr << "warning: " << w << "\n";
        if (rr.exit_code == 0) {
            for (const auto& [file, hash] : rr.artifacts)
                std::cout << file << "  sha256=" << hash << "\n";
            std::cout << "manifest: " << rr.manifest_path << "\n";
        }
        return rr.exit_code;
    } catch (const MonotonicityError& e) {
        std::cerr << "solver-fatal: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
