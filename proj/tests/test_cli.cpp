#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "jetspec/cli.hpp"
#include "jetspec/errors.hpp"
#include "jetspec/operators.hpp"

using namespace jetspec;
using namespace jetspec::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("jetspec_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_tool(const std::string& args, const fs::path& err_file) {
  const std::string cmd = std::string(JETSPEC_CLI) + " " + args + " > /dev/null 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("every command has a default config with output keys") {
    for (const auto& name : command_names()) {
      const Json d = default_config(name);
      CHECK(d.contains("out_dir"));
    }
    CHECK_THROWS_AS(default_config("nope"), ValidationError);
    CHECK_THROWS_AS(run_command("nope", Json::object()), ValidationError);
  }

  TEST_CASE("config resolution order and checks") {
    const Json file = Json::parse(R"({"alpha": 500, "grid": {"base_points": 301}})");
    const Json c = resolve_config("sweep", file, {"alpha=250.5", "grid.truncation.floor=80"});
    CHECK(c["alpha"].get<double>() == 250.5);
    CHECK(c["alpha"].is_number_float());
    CHECK(c["grid"]["base_points"] == 301);
    CHECK(c["grid"]["truncation"]["floor"] == 80);
    CHECK(c["m"] == 1);
    CHECK(resolve_config("sweep", file, {})["alpha"].get<double>() == 500.0);
    CHECK(resolve_config("scaling", {}, {"m_list=[1,3,5,7]"})["m_list"].size() == 4);
    CHECK(resolve_config("sweep", {}, {"out_dir=some/where"})["out_dir"] == "some/where");
    CHECK_THROWS_AS(resolve_config("sweep", {}, {"alhpa=1"}), ValidationError);
    CHECK_THROWS_AS(resolve_config("sweep", {}, {"m=1.5"}), ValidationError);
    CHECK_THROWS_AS(resolve_config("sweep", {}, {"grid=3"}), ValidationError);
    CHECK_THROWS_AS(resolve_config("scaling", {}, {"m_list=[1.5]"}), ValidationError);
    CHECK_THROWS_AS(resolve_config("sweep", {}, {"novalue"}), ValidationError);
    CHECK_THROWS_AS(resolve_config("sweep", Json::parse(R"({"grid": {"bogus": 1}})"), {}), ValidationError);
  }

  TEST_CASE("atomic writes") {
    const fs::path dir = fresh_dir("atomic");
    fs::create_directories(dir);
    write_file_atomic(dir / "a.txt", "first");
    write_file_atomic(dir / "a.txt", "second");
    CHECK(slurp(dir / "a.txt") == "second");
    CHECK_FALSE(fs::exists(dir / "a.txt.tmp"));
    CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "a.txt", "x"), IoError);
  }

  TEST_CASE("assemble exports parse back and are reproducible") {
    const fs::path dir = fresh_dir("assemble");
    const Json cfg = resolve_config("assemble", {}, {"out_dir=" + Json(dir.string()).dump()});
    const Json summary = run_command("assemble", cfg);
    CHECK(summary["n_lo"] == 2);
    CHECK(summary["config"] == cfg);
    CHECK(summary["version"] == std::string(version()));
    std::ifstream is(dir / "A.txt");
    const auto A = read_banded_text(is);
    CHECK(A == assemble_A(ModeSpace::full(1, 16)));
    CHECK(slurp(dir / "A.txt").find("band 0 15 -4 0 -10 0 -18 0") != std::string::npos);
    std::ifstream ls(dir / "L.txt");
    CHECK(read_banded_text(ls) == assemble_L(ModeSpace::full(1, 16), 0.0));
    const std::string first = slurp(dir / "L.txt") + slurp(dir / "assemble.json");
    run_command("assemble", cfg);
    CHECK(slurp(dir / "L.txt") + slurp(dir / "assemble.json") == first);
  }

  TEST_CASE("velocity command") {
    const fs::path dir = fresh_dir("velocity");
    const Json s = run_command("velocity", resolve_config("velocity", {}, {"out_dir=" + Json(dir.string()).dump(), "svg=true"}));
    CHECK(s["odd_residual"].get<double>() <= 1e-12);
    const auto rows = csv_rows(slurp(dir / "velocity.csv"));
    CHECK(rows.front() == std::vector<std::string>{"theta", "angular_speed"});
    CHECK(rows.size() == 182);
    const std::string svg = slurp(dir / "velocity.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
  }

  TEST_CASE("semigroup certificate can be rechecked from the CSV") {
    const fs::path dir = fresh_dir("semigroup");
    const Json s =
        run_command("semigroup", resolve_config("semigroup", {}, {"out_dir=" + Json(dir.string()).dump(), "alpha=100"}));
    CHECK(s["certified"] == true);
    const double sigma = s["sigma"].get<double>(), cap = s["c_cap"].get<double>();
    const auto rows = csv_rows(slurp(dir / "curve.csv"));
    CHECK(rows.front() == std::vector<std::string>{"alpha", "m", "t", "qq_norm", "pq_norm", "pp_residual"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double t = std::stod(rows[i][2]), qq = std::stod(rows[i][3]);
      CHECK(qq <= cap * std::exp(-sigma * t) * (1 + 1e-12));
    }
    CHECK(slurp(dir / "curve.csv").rfind("# jetspec-csv curve v1\n", 0) == 0);
  }

  TEST_CASE("sweep and coercivity schemas") {
    const fs::path dir = fresh_dir("sweep");
    const Json s = run_command("sweep", resolve_config("sweep", {}, {"out_dir=" + Json(dir.string()).dump(), "alpha=10"}));
    for (const char* key : {"alpha", "m", "psi", "mu_peak", "C_star", "n_hi_used", "converged"}) CHECK(s.contains(key));
    const auto rows = csv_rows(slurp(dir / "sweep.csv"));
    CHECK(rows.front() ==
          std::vector<std::string>{"alpha", "m", "mu", "lambda", "resolvent_norm", "envelope_G", "ratio"});
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) worst = std::max(worst, std::stod(rows[i][6]));
    CHECK(worst == doctest::Approx(s["C_star"].get<double>()).epsilon(1e-15));

    const fs::path cdir = fresh_dir("coercivity");
    run_command("coercivity", resolve_config("coercivity", {}, {"out_dir=" + Json(cdir.string()).dump(), "m_list=[3]",
                                                                "mu_list=[2.0, 0.0]"}));
    const auto crow = csv_rows(slurp(cdir / "coercivity.csv"));
    CHECK(crow.front() == std::vector<std::string>{"m", "mu", "s_min", "ratio_high", "c_combined", "c_b3"});
    CHECK(crow.size() == 3);
    CHECK(crow[1][4] == "nan");
    CHECK(crow[2][3] == "nan");
  }

  TEST_CASE("exit codes and error records from the executable") {
    const fs::path dir = fresh_dir("exit");
    fs::create_directories(dir);
    const fs::path err = dir / "stderr.txt";
    const std::string out = " -o " + (dir / "out").string();

    CHECK(run_tool("velocity" + out, err) == 0);
    CHECK(run_tool("psbound --set alpha=0" + out, err) == 2);
    const Json rec = Json::parse(slurp(err));
    CHECK(rec["error"]["kind"] == "validation");
    CHECK(rec["error"]["exit_code"] == 2);
    CHECK(rec["error"]["command"] == "psbound");

    CHECK(run_tool("sweep --set nonsense=1" + out, err) == 2);
    CHECK(run_tool("sweep --bogus-flag", err) == 2);
    CHECK(run_tool("", err) == 2);
    CHECK(run_tool("velocity -c " + (dir / "missing.json").string() + out, err) == 4);
    {
      std::ofstream bad(dir / "bad.json");
      bad << "{ not json";
    }
    CHECK(run_tool("velocity -c " + (dir / "bad.json").string() + out, err) == 2);
    {
      std::ofstream blocker(dir / "blocker");
      blocker << "x";
    }
    CHECK(run_tool("velocity -o " + (dir / "blocker" / "sub").string(), err) == 4);

    // A truncation too coarse to settle in one doubling.
    CHECK(run_tool("sweep --set alpha=10000 --set grid.max_doublings=1 --set grid.truncation.floor=12 "
                   "--set grid.truncation.coef=0" + out,
                   err) == 3);
    const Json nc = Json::parse(slurp(err));
    CHECK(nc["error"]["kind"] == "numerical");
    CHECK(nc["error"]["details"].contains("psi"));
    CHECK(nc["error"]["details"].contains("psi_prev"));
    CHECK(fs::exists(dir / "out" / "sweep.csv"));
  }

  TEST_CASE("exit code mapping") {
    CHECK(exit_code(nullptr) == 0);
    CHECK(exit_code(std::make_exception_ptr(ValidationError("x"))) == 2);
    CHECK(exit_code(std::make_exception_ptr(NumericalError("x"))) == 3);
    CHECK(exit_code(std::make_exception_ptr(IoError("x"))) == 4);
    const Json r = error_record(std::make_exception_ptr(IoError("disk")), "sweep");
    CHECK(r["error"]["kind"] == "io");
    CHECK(r["error"]["message"] == "disk");
  }
}
