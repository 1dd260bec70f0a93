#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orbid/cli.hpp"

using namespace orbid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

double report_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string k;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        ls >> k;
        if (k == key) {
            double v;
            ls >> v;
            return v;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config: defaults, parsing, overrides, and errors") {
    std::istringstream is(
        "# comment\n"
        "synthetic.system = linear_osc\n"
        "synthetic.duration = 12.5\n"
        "bank.order = 3\n"
        "fit.kind = eq\n"
        "split.train = 0.8\n");
    RunConfig c = parse_config(is);
    CHECK(c.synthetic_system == "linear_osc");
    CHECK(c.duration == doctest::Approx(12.5));
    CHECK(c.bank_order == 3);
    CHECK(c.kind == "eq");
    CHECK(c.train_fraction == doctest::Approx(0.8));
    CHECK(c.dt == doctest::Approx(0.01));  // untouched default

    std::istringstream bad("fit.kind trie\n");
    CHECK_THROWS_AS(parse_config(bad), DataError);

    RunConfig a, b;
    b.duration = 99.0;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a) == config_hash(RunConfig{}));
}

TEST_CASE("cmd_synth writes deterministic data") {
    TempDir dir("orbid_cli_synth");
    RunConfig cfg;
    cfg.synthetic_system = "van_der_pol";
    cfg.duration = 2.0;
    cfg.dt = 0.01;
    cfg.noise_std = 0.05;
    cfg.seed = 3;
    cfg.out = dir.str() + "/a";
    CHECK(cli::cmd_synth(cfg) == cli::kExitOk);
    CHECK(fs::exists(cfg.out + "/data.csv"));
    CHECK(fs::exists(cfg.out + "/truth.csv"));
    // row count = duration/dt + 1 data rows (+1 header)
    std::string data = slurp(cfg.out + "/data.csv");
    CHECK(std::count(data.begin(), data.end(), '\n') == 202);

    RunConfig cfg2 = cfg;
    cfg2.out = dir.str() + "/b";
    CHECK(cli::cmd_synth(cfg2) == cli::kExitOk);
    CHECK(slurp(cfg.out + "/data.csv") == slurp(cfg2.out + "/data.csv"));

    RunConfig cfg3 = cfg;
    cfg3.out = dir.str() + "/c";
    cfg3.seed = 4;
    CHECK(cli::cmd_synth(cfg3) == cli::kExitOk);
    CHECK(slurp(cfg.out + "/data.csv") != slurp(cfg3.out + "/data.csv"));
}

TEST_CASE("cmd_fit and cmd_eval round trip on synthetic truth states") {
    TempDir dir("orbid_cli_fit");
    RunConfig cfg;
    cfg.synthetic_system = "van_der_pol";
    cfg.duration = 4.0;
    cfg.dt = 0.02;
    cfg.truth_states = true;
    cfg.deg_e = 3;
    cfg.deg_f_x = 3;
    cfg.deg_f_u = 0;
    cfg.deg_g = 1;
    cfg.kind = "trie";
    cfg.out = dir.str() + "/fit";
    REQUIRE(cli::cmd_fit(cfg) == cli::kExitOk);
    CHECK(fs::exists(cfg.out + "/model.txt"));
    CHECK(fs::exists(cfg.out + "/costs.csv"));
    std::string rep = slurp(cfg.out + "/report.txt");
    CHECK(rep.find("status optimal") != std::string::npos);
    CHECK(std::isfinite(report_value(rep, "objective")));
    CHECK(std::isfinite(report_value(rep, "train_sim_err")));

    RunConfig ev = cfg;
    ev.out = dir.str() + "/eval";
    REQUIRE(cli::cmd_eval(ev, cfg.out + "/model.txt") == cli::kExitOk);
    std::string erep = slurp(ev.out + "/eval_report.txt");
    // the fit stage's training metrics are reproduced exactly by eval
    CHECK(report_value(erep, "train_sim_err") ==
          doctest::Approx(report_value(rep, "train_sim_err")).epsilon(1e-12));
    CHECK(report_value(erep, "train_orb_err") ==
          doctest::Approx(report_value(rep, "train_orb_err")).epsilon(1e-12));
    // traces.csv row count = horizon/dt + 1 (+ header)
    std::string traces = slurp(ev.out + "/traces.csv");
    CHECK(std::count(traces.begin(), traces.end(), '\n') == 202);
}

TEST_CASE("cmd_eval honors a truncated horizon") {
    TempDir dir("orbid_cli_hz");
    RunConfig cfg;
    cfg.synthetic_system = "linear_osc";
    cfg.omega = 1.0;
    cfg.zeta = 0.2;
    cfg.duration = 5.0;
    cfg.dt = 0.01;
    cfg.truth_states = true;
    cfg.deg_e = 1;
    cfg.deg_f_x = 1;
    cfg.deg_g = 1;
    cfg.kind = "eq";
    cfg.out = dir.str() + "/fit";
    REQUIRE(cli::cmd_fit(cfg) == cli::kExitOk);
    RunConfig ev = cfg;
    ev.out = dir.str() + "/eval";
    ev.horizon = 2.0;
    REQUIRE(cli::cmd_eval(ev, cfg.out + "/model.txt") == cli::kExitOk);
    std::string traces = slurp(ev.out + "/traces.csv");
    CHECK(std::count(traces.begin(), traces.end(), '\n') == 202);  // 2.0/0.01 + 1 + header
}

TEST_CASE("missing csv is a data error naming the path") {
    RunConfig cfg;
    cfg.data = "/nonexistent/file.csv";
    try {
        cli::cmd_fit(cfg);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/file.csv") != std::string::npos);
    }
}

#ifdef ORBID_CLI_PATH
TEST_CASE("process-level exit codes") {
    const std::string exe = ORBID_CLI_PATH;
    CHECK(std::system((exe + " --help > /dev/null 2>&1").c_str()) == 0);
    // usage error: unknown subcommand
    int rc = std::system((exe + " frobnicate > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == cli::kExitUsage);
    // data error: missing csv
    TempDir dir("orbid_cli_proc");
    std::ofstream cfgfile(dir.path / "bad.cfg");
    cfgfile << "data = " << (dir.path / "missing.csv").string() << "\n";
    cfgfile.close();
    rc = std::system((exe + " fit --config " + (dir.path / "bad.cfg").string() +
                      " --out " + dir.str() + " > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == cli::kExitData);
}
#endif
