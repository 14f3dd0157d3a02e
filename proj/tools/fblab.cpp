// fblab <task> --config <file> --seed <u64> --out <dir> [--workers N] [--format csv|json|both]

#include "fblab/fblab.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
    CLI::App app{"Finite-volume random Schroedinger operator experiments"};
    std::string task, config_path, out_dir, format = "both";
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::vector<std::string> task_list;
    for (const auto& [t, name] : fblab::task_names()) task_list.push_back(name);
    app.add_option("task", task, "Task to run")->required()->check(CLI::IsMember(task_list));
    app.add_option("--config", config_path, "Experiment configuration file")->required();
    app.add_option("--seed", seed, "Master seed")->required();
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json", "both"}));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : fblab::kExitConfig;
    }

    try {
        std::ifstream in(config_path);
        if (!in) throw fblab::ConfigError("cannot read config '" + config_path + "'");
        std::stringstream text;
        text << in.rdbuf();
        auto exp = fblab::parse_config(text.str(), std::filesystem::path(config_path).parent_path());
        exp.task = fblab::parse_task(task);
        exp.master_seed = seed;
        fblab::RunOptions run;
        run.workers = workers;
        const auto report = fblab::run_experiment(exp, run);
        for (const auto& p : fblab::emit(report, out_dir, fblab::parse_format(format))) std::cout << p.string() << "\n";
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
        return fblab::exit_code(report);
    } catch (const fblab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fblab::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "compute error: " << e.what() << "\n";
        return fblab::kExitCompute;
    }
}
