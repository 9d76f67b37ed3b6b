#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string>

#include "support/synthetic.hpp"

// End-to-end checks of the installed command-line tool: exit codes
// (0 success, 1 config error, 2 data error) and a few output contracts.

#ifndef HSITL_CLI_PATH
#error "HSITL_CLI_PATH must be defined by the build"
#endif

namespace {

struct CliResult {
    int exit_code;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(HSITL_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    std::array<char, 256> buf;
    while (fgets(buf.data(), int(buf.size()), pipe)) output += buf.data();
    int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

}  // namespace

TEST_CASE("budget subcommand prints exact bits and seconds") {
    CliResult res = run_cli(
        "budget --height 2048 --width 2048 --bands 200 --bit-depth 12 --rate-bps 3000000");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("volume_bits 10066329600") != std::string::npos);
    CHECK(res.output.find("seconds 3355.44") != std::string::npos);
}

TEST_CASE("exit code 1 on config errors") {
    CHECK(run_cli("definitely-not-a-subcommand").exit_code == 1);
    CHECK(run_cli("budget --height 0 --width 1 --bands 1 --bit-depth 1 --rate-bps 1").exit_code ==
          1);
    CHECK(run_cli("reduce --in /tmp/x.hsic --out /tmp/y.hsic").exit_code == 1);  // no mode
}

TEST_CASE("exit code 2 on data errors") {
    CHECK(run_cli("reduce --in /nonexistent/cube.hsic --out /tmp/out.hsic --window 2").exit_code ==
          2);
    std::string junk = synth::tmp_path("junk.hsic");
    std::ofstream(junk) << "this is not a cube";
    CHECK(run_cli("reduce --in " + junk + " --out /tmp/out.hsic --window 2").exit_code == 2);
    std::remove(junk.c_str());
}

TEST_CASE("convert then reduce round-trips through files") {
    std::string csv = synth::tmp_path("cli_cube.csv");
    {
        std::ofstream out(csv);
        out << "y,x,band,value\n";
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                for (int b = 0; b < 10; ++b)
                    out << y << ',' << x << ',' << b << ',' << (b + 1) << '\n';
    }
    std::string hsic = synth::tmp_path("cli_cube.hsic");
    CliResult conv = run_cli("convert cube --in " + csv + " --out " + hsic);
    CHECK(conv.exit_code == 0);

    std::string reduced = synth::tmp_path("cli_reduced.hsic");
    CliResult red = run_cli("reduce --in " + hsic + " --out " + reduced + " --window 4");
    CHECK(red.exit_code == 0);
    CHECK(red.output.find("3 bands") != std::string::npos);

    CliResult red2 = run_cli("reduce --in " + hsic + " --out " + reduced + " --bands 7");
    CHECK(red2.exit_code == 0);
    CHECK(red2.output.find("7 bands") != std::string::npos);

    std::remove(csv.c_str());
    std::remove(hsic.c_str());
    std::remove(reduced.c_str());
}

TEST_CASE("grad-check subcommand reports pass") {
    CliResult res = run_cli("grad-check --family cnn1d --blocks 1 --bands 16 --classes 3 --seed 42");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("PASS") != std::string::npos);
}

TEST_CASE("wilcoxon subcommand prints the exact p for the worked case") {
    std::string a = synth::tmp_path("cli_a.csv");
    std::string b = synth::tmp_path("cli_b.csv");
    std::ofstream(a) << "kappa\n1\n2\n3\n4\n5\n";
    std::ofstream(b) << "kappa\n0.5\n0.8\n1.5\n2\n2.5\n";
    CliResult res = run_cli("wilcoxon --a " + a + " --b " + b + " --column kappa");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("p 0.0625") != std::string::npos);
    CHECK(res.output.find("method exact") != std::string::npos);
    std::remove(a.c_str());
    std::remove(b.c_str());
}
