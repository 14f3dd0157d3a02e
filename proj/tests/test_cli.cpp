#include "fblab/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace fblab;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"(# small 1D model
d = 1
L_sites = 16
impurities = sublattice 2
c_U = 1
C_U = 1
r_U_sites = 1
R_U_sites = 1
eta_max = 1
law = uniform
)";

std::string with(const std::string& extra) { return std::string(kBase) + extra; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("fblab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::map<Task, std::string> task_extras() {
    return {
        {Task::Curve, "t_points = 4\n"},
        {Task::Uncertainty, "windows_rel_E0 = 0:0.05, 0:0.3, 1:2\nt_points = 8\ndelta = 0.1\n"},
        {Task::Wegner, "n_samples = 20\neps_list = 0.1, 0.01\nwindow_offset = 0.1\nL_list_sites = 16, 32\n"},
        {Task::Ids, "n_samples = 10\nenergies = 0:1:11\neps_list = 0.1, 0.2\n"},
        {Task::Gap, "L_list_sites = 8, 16\n"},
        {Task::MsaParams, "msa_m = 1\nalpha = 5\nxi = 1\nkappa_msa = 0.05\n"},
        {Task::InitialScale, "n_samples = 20\nL_list_sites = 8, 16\nm = 1\n"},
        {Task::Greens, "energies = -1, -0.5\noperator = free\n"},
        {Task::Localize, "windows_rel_E0 = 0:0.5\nn_samples = 2\n"},
        {Task::DynMoment, "windows_rel_E0 = 0:0.5\nn_samples = 5\np_mom = 1\nK_radius_sites = 2\n"},
    };
}

Experiment experiment_for(Task t) {
    auto e = parse_config(with(task_extras().at(t)));
    e.task = t;
    e.master_seed = 7;
    return e;
}

}  // namespace

TEST(Config, MinimalDefaults) {
    const auto e = parse_config(kBase);
    EXPECT_EQ(e.model.dim, 1);
    EXPECT_EQ(e.model.box_side, 16);
    EXPECT_EQ(e.model.spacing, 1.0);
    EXPECT_EQ(e.model.background.constant, 0.0);
    EXPECT_EQ(e.model.profile.shape, ProfileShape::Plateau);
    EXPECT_EQ(e.params.t_points, 32u);
    EXPECT_FALSE(e.master_seed.has_value());
    EXPECT_EQ(e.task, Task::Curve);
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
    EXPECT_THROW(parse_config(with("temperature = 3\n")), ConfigError);
    EXPECT_THROW(parse_config(with("d = 1\n")), ConfigError);
    EXPECT_THROW(parse_config(with("garbage line\n")), ConfigError);
}

TEST(Config, NamesMissingKey) {
    try {
        parse_config("d = 1\nL_sites = 8\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("eta_max"), std::string::npos);
    }
}

TEST(Config, InvariantViolationsAreFieldLevel) {
    std::string text = kBase;
    text.replace(text.find("c_U = 1"), 7, "c_U = 2");
    try {
        parse_config(text);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("c_U <= C_U"), std::string::npos);
    }
    std::string jit = kBase;
    jit.replace(jit.find("sublattice 2"), 12, "jitter 4 2");
    try {
        parse_config(jit);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("uniform discreteness"), std::string::npos);
    }
    EXPECT_THROW(parse_config(with("L_list_sites = 15\n")), ConfigError);
    EXPECT_THROW(parse_config(with("n_samples = -1\n")), ConfigError);
    EXPECT_THROW(parse_config(with("windows_rel_E0 = 1:0\n")), ConfigError);
}

TEST(Config, RoundTripEveryTask) {
    for (const auto& [task, extra] : task_extras()) {
        auto e = parse_config(with(extra + "seed = 99\nh = 0.5\nbackground = constant 0.25\nprofile_shape = tent\n"));
        e.task = task;
        const auto again = parse_config(serialize(e));
        EXPECT_EQ(again, e) << task_name(task);
        EXPECT_EQ(serialize(again), serialize(e));
    }
}

TEST(Config, RoundTripLawsAndTables) {
    const auto dir = scratch("tables");
    {
        std::ofstream(dir / "bg.txt") << "# background\n";
        std::ofstream bg(dir / "bg.txt", std::ios::app);
        for (int i = 0; i < 16; ++i) bg << 0.1 * i << "\n";
    }
    std::ofstream(dir / "law.txt") << "1 2 3 4\n";
    for (const std::string law : {"pointmass 0.5", "bernoulli 0.25", "loghoelder 2", "table law.txt"}) {
        std::string text = kBase;
        text.replace(text.find("law = uniform"), 13, "law = " + law);
        text += "background = table bg.txt\n";
        const auto e = parse_config(text, dir);
        EXPECT_EQ(parse_config(serialize(e), dir), e) << law;
    }
}

TEST(Run, MsaParamsIsPureArithmetic) {
    auto e = experiment_for(Task::MsaParams);
    e.master_seed.reset();
    const auto r = run_experiment(e);
    ASSERT_EQ(r.tables.size(), 2u);
    EXPECT_EQ(std::get<std::string>(r.tables[0].rows[1][1]), "1/5");
    EXPECT_FALSE(r.provenance.seed.has_value());
}

TEST(Run, MsaParamsRejectsThresholdAlpha) {
    auto e = parse_config(with("alpha = 4\n"));
    e.task = Task::MsaParams;
    EXPECT_THROW(run_experiment(e), ConfigError);
}

TEST(Run, EmptyEnsembleRejectedBeforeDispatch) {
    auto e = experiment_for(Task::Wegner);
    e.params.n_samples = 0;
    EXPECT_THROW(run_experiment(e), ConfigError);
    auto s = experiment_for(Task::Wegner);
    s.master_seed.reset();
    EXPECT_THROW(run_experiment(s), ConfigError);
}

TEST(Run, EveryTaskDeterministicAndWorkerIndependent) {
    RunOptions one, four;
    four.workers = 4;
    for (const auto& [task, extra] : task_extras()) {
        const auto e = experiment_for(task);
        const auto a = run_experiment(e, one);
        const auto b = run_experiment(e, one);
        const auto c = run_experiment(e, four);
        EXPECT_EQ(dump_json(a), dump_json(b)) << task_name(task);
        EXPECT_EQ(dump_json(a), dump_json(c)) << task_name(task);
    }
}

TEST(Run, ReplayingConfigEchoReproducesPayload) {
    const auto r = run_experiment(experiment_for(Task::Wegner));
    const auto replay = run_experiment(parse_config(r.config));
    EXPECT_EQ(dump_json(r), dump_json(replay));
}

TEST(Report, JsonRoundTrip) {
    for (const auto& [task, extra] : task_extras()) {
        const auto r = run_experiment(experiment_for(task));
        const auto back = envelope_from_json(nlohmann::json::parse(dump_json(r)));
        EXPECT_EQ(back, r) << task_name(task);
    }
}

TEST(Report, GoldenHeaders) {
    std::map<std::string, std::string> golden;
    std::ifstream in(std::string(FBLAB_SOURCE_DIR) + "/tests/golden/headers.csv");
    std::string line;
    while (std::getline(in, line)) golden[line.substr(0, line.find(','))] = line.substr(line.find(',') + 1);
    ASSERT_EQ(golden.size(), 13u);
    std::size_t seen = 0;
    for (const auto& [task, extra] : task_extras()) {
        for (const auto& t : run_experiment(experiment_for(task)).tables) {
            std::istringstream csv(to_csv(t));
            std::string schema, header;
            std::getline(csv, schema);
            std::getline(csv, header);
            EXPECT_EQ(schema, "# schema " + t.name + "/1");
            ASSERT_TRUE(golden.count(t.name)) << t.name;
            EXPECT_EQ(header, golden[t.name]) << t.name;
            ++seen;
        }
    }
    EXPECT_EQ(seen, golden.size());
}

TEST(Report, EmptyPayloadIsHeaderOnly) {
    const Table t{"uncertainty", {"I_lo", "I_hi"}, {}};
    EXPECT_EQ(to_csv(t), "# schema uncertainty/1\nI_lo,I_hi\n");
}

TEST(Report, ShortestRoundTripNumbers) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
    EXPECT_EQ(format_double(1e-300), "1e-300");
    EXPECT_EQ(csv_cell(Cell{std::string("a,b")}), "\"a,b\"");
    EXPECT_EQ(csv_cell(Cell{std::int64_t{42}}), "42");
}

TEST(Report, EmitWritesRequestedFormats) {
    const auto r = run_experiment(experiment_for(Task::Gap));
    const auto dir = scratch("emit");
    EXPECT_EQ(emit(r, dir, OutputFormat::Csv).size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "gap.csv"));
    EXPECT_FALSE(fs::exists(dir / "gap.json"));
    EXPECT_EQ(emit(r, dir, OutputFormat::Both).size(), 2u);
    EXPECT_EQ(envelope_from_json(nlohmann::json::parse(slurp(dir / "gap.json"))), r);
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FBLAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, ExitCodesAndByteIdenticalOutput) {
    const auto dir = scratch("cli");
    std::ofstream(dir / "ok.cfg") << with(task_extras().at(Task::Wegner));
    std::ofstream(dir / "bad.cfg") << with("bogus = 1\n");
    std::string free14 = with("energies = 1\noperator = free\n");
    free14.replace(free14.find("L_sites = 16"), 12, "L_sites = 14");
    std::ofstream(dir / "nan.cfg") << free14;
    const std::string cfg = (dir / "ok.cfg").string();

    EXPECT_EQ(run_cli("wegner --config " + cfg + " --seed 5 --out " + (dir / "a").string()), 0);
    EXPECT_EQ(run_cli("wegner --config " + cfg + " --seed 5 --out " + (dir / "b").string() + " --workers 4"), 0);
    EXPECT_EQ(slurp(dir / "a" / "wegner.csv"), slurp(dir / "b" / "wegner.csv"));
    EXPECT_EQ(slurp(dir / "a" / "wegner.json"), slurp(dir / "b" / "wegner.json"));

    EXPECT_EQ(run_cli("wegner --config " + (dir / "bad.cfg").string() + " --seed 5 --out " + dir.string()), 2);
    EXPECT_EQ(run_cli("wegner --config " + cfg + " --out " + dir.string()), 2);
    EXPECT_EQ(run_cli("nosuchtask --config " + cfg + " --seed 1 --out " + dir.string()), 2);
    // E = 1 is an eigenvalue of the free chain on 14 sites
    EXPECT_EQ(run_cli("greens --config " + (dir / "nan.cfg").string() + " --seed 1 --out " + dir.string()), 2);
}

TEST(Cli, StatisticalFlagExitCode) {
    ReportEnvelope r;
    EXPECT_EQ(exit_code(r), kExitSuccess);
    r.status = RunStatus::StatisticalFlag;
    EXPECT_EQ(exit_code(r), kExitStatistical);
}

TEST(Cli, ShippedConfigsRun) {
    const fs::path configs = fs::path(FBLAB_SOURCE_DIR) / "configs";
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(configs)) {
        if (entry.path().extension() != ".cfg") continue;
        const auto out = scratch("configs_" + entry.path().stem().string());
        EXPECT_EQ(run_cli(entry.path().stem().string() + " --config " + entry.path().string() +
                          " --seed 1 --workers 4 --out " + out.string()),
                  0)
            << entry.path();
        ++count;
    }
    EXPECT_EQ(count, task_names().size());
}
