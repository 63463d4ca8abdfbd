#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "voxelmem/config.hpp"

namespace fs = std::filesystem;
using namespace voxelmem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / "voxelmem_cli_io";
    fs::create_directories(dir);
    const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
    const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = std::string(CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                            err.string();
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WEXITSTATUS(status);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        return std::string{std::istreambuf_iterator<char>(in), {}};
    };
    result.out = slurp(out);
    result.err = slurp(err);
    return result;
}

std::string scene(const char* name) {
    return (fs::path(PROJECT_SOURCE_DIR) / "scenes" / name).string();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("documented defaults equal the defaults in code") {
    const RunConfig fresh;
    for (const ConfigKey& key : config_schema()) {
        CHECK_MESSAGE(key.default_value == key.current(fresh), key.name);
        CHECK(!key.description.empty());
    }
}

TEST_CASE("--help documents every config key and its default") {
    const RunResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    for (const ConfigKey& key : config_schema()) {
        CHECK_MESSAGE(help.out.find("--" + key.name) != std::string::npos, key.name);
        CHECK_MESSAGE(help.out.find("[default: " + key.default_value + "]") != std::string::npos,
                      key.name);
    }
    for (const char* sub : {"simulate", "ingest", "query", "bench", "explore"})
        CHECK(help.out.find(sub) != std::string::npos);
}

TEST_CASE("simulate: summary, determinism, seed override, bad script") {
    const fs::path a = fresh_dir("voxelmem_cli_sim_a");
    const fs::path b = fresh_dir("voxelmem_cli_sim_b");
    const RunResult first = run_cli("simulate " + scene("bench_three_rounds.json") + " " + a.string());
    CHECK(first.exit_code == 0);
    CHECK(first.out.find("frames=") != std::string::npos);
    CHECK(first.out.find("queries=18") != std::string::npos);
    CHECK(first.out.find("rounds=3") != std::string::npos);

    const RunResult second = run_cli("simulate " + scene("bench_three_rounds.json") + " " + b.string());
    CHECK(second.exit_code == 0);
    CHECK(file_bytes(a / "manifest.json") == file_bytes(b / "manifest.json"));
    CHECK(file_bytes(a / "frames/000000_depth.pgm") == file_bytes(b / "frames/000000_depth.pgm"));

    // A different seed changes nothing here (no noise), but the flag must parse.
    const fs::path c = fresh_dir("voxelmem_cli_sim_c");
    CHECK(run_cli("--seed 99 simulate " + scene("bench_three_rounds.json") + " " + c.string()).exit_code == 0);

    const fs::path bad = fs::temp_directory_path() / "voxelmem_bad_scene.json";
    std::ofstream(bad) << "{\n \"format\": \"voxelmem-scene\",\n broken\n}";
    const RunResult broken = run_cli("simulate " + bad.string() + " " + fresh_dir("x").string());
    CHECK(broken.exit_code == 2);
    CHECK(broken.err.find(":3") != std::string::npos);  // line-numbered parse error
}

TEST_CASE("ingest, query and bench round trip") {
    const fs::path data = fresh_dir("voxelmem_cli_data");
    REQUIRE(run_cli("simulate " + scene("bench_three_rounds.json") + " " + data.string()).exit_code == 0);
    const fs::path map = fs::temp_directory_path() / "voxelmem_cli_map.vxm";

    const RunResult ingest =
        run_cli("--feature_dim 64 ingest " + data.string() + " --out " + map.string());
    CHECK(ingest.exit_code == 0);
    CHECK(ingest.out.find("cells=") != std::string::npos);

    SUBCASE("query a present and an absent object") {
        const RunResult found = run_cli("--feature_dim 64 query " + map.string() + " mug --dataset " +
                                        data.string());
        CHECK(found.exit_code == 0);
        CHECK(found.out.find("found (") != std::string::npos);
        CHECK(found.out.find("image=") != std::string::npos);

        const RunResult missing = run_cli("--feature_dim 64 query " + map.string() +
                                          " unicorn --dataset " + data.string());
        CHECK(missing.exit_code == 0);
        CHECK(missing.out.find("not found") != std::string::npos);
    }

    SUBCASE("hybrid query through the oracle client") {
        const RunResult hybrid = run_cli("--feature_dim 64 query " + map.string() +
                                         " mug --method hybrid --k 3 --dataset " + data.string() +
                                         " --mllm-client oracle");
        CHECK(hybrid.exit_code == 0);
        CHECK(hybrid.out.find("found (") != std::string::npos);
    }

    SUBCASE("corrupt map file is a data error") {
        const fs::path broken = fs::temp_directory_path() / "voxelmem_broken.vxm";
        std::ofstream(broken, std::ios::binary) << "VXMMjunk";
        const RunResult result = run_cli("query " + broken.string() + " mug");
        CHECK(result.exit_code == 2);
    }

    SUBCASE("bench with the exact stub stack scores 1.0 and writes reports") {
        const fs::path prefix = fs::temp_directory_path() / "voxelmem_cli_report";
        const RunResult bench = run_cli("--feature_dim 64 bench " + data.string() +
                                        " --method vlm --out " + prefix.string());
        CHECK(bench.exit_code == 0);
        CHECK(bench.out.find("rate: 1") != std::string::npos);
        CHECK(fs::exists(prefix.string() + ".txt"));
        CHECK(fs::exists(prefix.string() + ".csv"));
        const std::string csv = file_bytes(prefix.string() + ".csv");
        CHECK(csv.find("text,time,round,kind,success") != std::string::npos);
    }

    SUBCASE("bench ablation direction: no-removal scores lower here") {
        const RunResult dynamic = run_cli("--feature_dim 64 bench " + data.string());
        const RunResult frozen = run_cli("--feature_dim 64 bench " + data.string() + " --no-removal");
        CHECK(dynamic.exit_code == 0);
        CHECK(frozen.exit_code == 0);
        CHECK(dynamic.out.find("rate: 1") != std::string::npos);
        CHECK(frozen.out.find("rate: 1\n") == std::string::npos);
    }

    SUBCASE("bench mllm needs a client and reproduces a scripted mock") {
        CHECK(run_cli("bench " + data.string() + " --method mllm").exit_code == 2);

        const fs::path answers = fs::temp_directory_path() / "voxelmem_answers.json";
        std::ofstream(answers) << R"({"mug": "None", "book": "None", "cup": "None",
                                      "plant": "None"})";
        const RunResult mock = run_cli("--feature_dim 64 bench " + data.string() +
                                       " --method mllm --mllm-client mock:" + answers.string());
        CHECK(mock.exit_code == 0);
        // Every positive is scripted to None -> only the 4 negatives succeed.
        CHECK(mock.out.find("successes: 4") != std::string::npos);

        const RunResult oracle = run_cli("--feature_dim 64 bench " + data.string() +
                                         " --method mllm --mllm-client oracle");
        CHECK(oracle.exit_code == 0);
        CHECK(oracle.out.find("rate: 1") != std::string::npos);
    }
}

TEST_CASE("explore runs to completion and writes a trace") {
    const fs::path trace = fs::temp_directory_path() / "voxelmem_cli_trace.csv";
    const fs::path maps = fs::temp_directory_path() / "voxelmem_cli_maps";
    const RunResult result = run_cli("explore " + scene("room_small.json") +
                                     " --value time --strict --export-maps " + maps.string() +
                                     " --trace " + trace.string());
    CHECK(fs::exists(maps.string() + "_obstacle.pgm"));
    CHECK(fs::exists(maps.string() + "_obstacle.pgm.json"));
    CHECK(fs::exists(maps.string() + "_value.pgm"));
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("complete=1") != std::string::npos);
    REQUIRE(fs::exists(trace));
    std::ifstream in(trace);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("prefix_len") != std::string::npos);
    // Coverage from the final round line.
    const size_t at = result.out.rfind("coverage=");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(result.out.substr(at + 9)) >= 0.99);

    // similarity mode needs a query
    CHECK(run_cli("explore " + scene("room_small.json") + " --value similarity").exit_code == 2);
}

TEST_CASE("effective config is printed and precedence holds") {
    const fs::path config_file = fs::temp_directory_path() / "voxelmem_config.json";
    std::ofstream(config_file) << R"({"voxel_size": 0.08, "k": 5})";
    const fs::path dir = fresh_dir("voxelmem_cli_cfg");
    const RunResult result = run_cli("--config " + config_file.string() + " --k 7 simulate " +
                                     scene("room_small.json") + " " + dir.string());
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("# effective config") != std::string::npos);
    CHECK(result.out.find("voxel_size = 0.08") != std::string::npos);  // file beats default
    CHECK(result.out.find("k = 7") != std::string::npos);              // flag beats file

    std::ofstream(config_file) << R"({"no_such_key": 1})";
    CHECK(run_cli("--config " + config_file.string() + " simulate " + scene("room_small.json") +
                  " " + dir.string())
              .exit_code == 2);
}
