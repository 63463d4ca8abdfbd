#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "voxelmem/config.hpp"
#include "voxelmem/dataset.hpp"
#include "voxelmem/errors.hpp"
#include "voxelmem/evaluate.hpp"
#include "voxelmem/exploration.hpp"
#include "voxelmem/mllm_client.hpp"
#include "voxelmem/pipeline.hpp"
#include "voxelmem/query.hpp"
#include "voxelmem/scene_script.hpp"

namespace fs = std::filesystem;
using namespace voxelmem;

namespace {

// Exit codes: 0 success, 1 usage/config, 2 data error, 3 internal invariant.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct CliState {
    RunConfig config;
    std::string config_file;
    std::vector<std::pair<const ConfigKey*, std::string>> overrides;

    bool overridden(const std::string& name) const {
        for (const auto& [key, value] : overrides)
            if (key->name == name && !value.empty()) return true;
        return false;
    }

    void finalize() {
        if (!config_file.empty()) config = apply_config_file(config_file, config);
        for (auto& [key, value] : overrides)
            if (!value.empty()) key->apply(config, value);
        std::cout << "# effective config\n" << effective_config_text(config) << "\n";
    }
};

PipelineConfig pipeline_config(const RunConfig& run, QueryMethod method) {
    PipelineConfig config;
    config.method = method;
    config.voxel_size = run.voxel_size;
    config.feature_dim = run.feature_dim;
    config.epsilon = run.epsilon;
    config.max_depth = run.max_depth;
    config.stub_seed = run.seed;
    config.stub_noise_sigma = run.stub_noise_sigma;
    config.query.similarity_threshold = run.similarity_threshold;
    config.query.k = run.k;
    config.query.max_context_images = run.max_context_images;
    config.query.dbscan_eps = run.dbscan_eps;
    config.query.dbscan_min_points = run.dbscan_min_points;
    return config;
}

QueryMethod parse_method(const std::string& name) {
    if (name == "vlm") return QueryMethod::Vlm;
    if (name == "mllm") return QueryMethod::Mllm;
    if (name == "hybrid") return QueryMethod::Hybrid;
    throw CLI::ValidationError("--method", "must be one of vlm, mllm, hybrid");
}

// --mllm-client oracle | mock:<answers.json> | http
std::shared_ptr<MllmClient> make_client(const std::string& spec, const RunConfig& run) {
    if (spec == "oracle") return std::make_shared<LabelOracleMllmClient>();
    if (spec.rfind("mock:", 0) == 0)
        return std::make_shared<ScriptedMllmClient>(
            ScriptedMllmClient::from_json_file(spec.substr(5)));
    if (spec == "http") {
        HttpMllmConfig http;
        http.endpoint = run.mllm_endpoint;
        http.model = run.mllm_model;
        http.max_retries = run.mllm_retries;
        http.timeout_seconds = run.mllm_timeout_s;
        if (const char* key = std::getenv("VOXELMEM_MLLM_KEY")) http.api_key = key;
        if (http.endpoint.empty())
            throw DataError("--mllm-client http needs mllm_endpoint in the config");
        return std::make_shared<HttpMllmClient>(http);
    }
    throw DataError("unknown --mllm-client '" + spec + "' (use oracle, mock:<file>, or http)");
}

int cmd_simulate(CliState& state, const std::string& script_path, const std::string& out_dir) {
    state.finalize();
    const SceneScript script = parse_scene_script(script_path);
    GenerateOptions options;
    options.min_visible_pixels = state.config.min_visible_pixels;
    if (state.overridden("seed")) {
        options.seed_override = state.config.seed;
        options.has_seed_override = true;
    }
    const DatasetSummary summary = generate_dataset(script, out_dir, options);
    std::cout << "frames=" << summary.frames << " queries=" << summary.queries
              << " rounds=" << summary.rounds << "\n"
              << "positives=" << summary.positives
              << " negatives_never_seen=" << summary.negatives_never_seen
              << " negatives_removed=" << summary.negatives_removed << "\n";
    return 0;
}

int cmd_ingest(CliState& state, const std::string& dataset_dir, const std::string& out_map,
               bool no_removal) {
    state.finalize();
    const Dataset ds = Dataset::load(dataset_dir);
    PipelineConfig config = pipeline_config(state.config, QueryMethod::Vlm);
    config.enable_removal = !no_removal;
    StubPipeline pipe(config);
    for (size_t n = 0; n < ds.frame_count(); ++n) pipe.ingest(ds.load_frame(n));
    pipe.memory().save(out_map);
    std::cout << "frames=" << ds.frame_count() << " cells=" << pipe.memory().cell_count()
              << " live_images=" << pipe.memory().prune_dead_images().size() << " map=" << out_map
              << "\n";
    return 0;
}

int cmd_query(CliState& state, const std::string& map_path, const std::string& query_text,
              const std::string& method_name, const std::string& dataset_dir,
              const std::string& client_spec, int k_override) {
    state.finalize();
    VoxelMemory memory = VoxelMemory::load(map_path);
    const QueryMethod method = parse_method(method_name);

    QueryConfig qc;
    qc.similarity_threshold = state.config.similarity_threshold;
    qc.k = k_override > 0 ? k_override : state.config.k;
    qc.max_context_images = state.config.max_context_images;
    qc.dbscan_eps = state.config.dbscan_eps;
    qc.dbscan_min_points = state.config.dbscan_min_points;

    StubLabelEmbedder embedder(memory.feature_dim(), state.config.seed,
                               state.config.stub_noise_sigma);
    StubDetector detector;
    FrameStore store;
    if (!dataset_dir.empty()) {
        const Dataset ds = Dataset::load(dataset_dir);
        const auto live = memory.prune_dead_images();
        for (size_t n = 0; n < ds.frame_count(); ++n)
            if (live.count(ds.manifest().frames[n].frame_id)) store.add(ds.load_frame(n));
    } else {
        if (method != QueryMethod::Vlm)
            throw DataError("mllm/hybrid queries need --dataset for the image context");
        // Without frames there is nothing to cross-check against; fall back to
        // the raw voxel location.
        qc.use_detector_check = false;
        std::cout << "note: no --dataset given; detector cross-check disabled\n";
    }

    const auto snapshot = memory.snapshot();
    QueryResult result;
    if (method == QueryMethod::Vlm) {
        result = vlm_query(*snapshot, store, embedder, detector, query_text, qc);
    } else {
        auto client = make_client(client_spec.empty() ? "oracle" : client_spec, state.config);
        result = method == QueryMethod::Mllm
                     ? mllm_query(*snapshot, store, *client, detector, query_text, qc)
                     : hybrid_query(*snapshot, store, *client, embedder, detector, query_text, qc);
    }
    if (result.is_found()) {
        const auto& f = *result.found;
        std::cout << "found (" << f.position.x() << ", " << f.position.y() << ", " << f.position.z()
                  << ") image=" << f.image_id << " score=" << f.score << "\n";
    } else {
        std::cout << "not found\n";
    }
    return 0;
}

int cmd_bench(CliState& state, const std::string& dataset_dir, const std::string& method_name,
              const std::string& out_prefix, const std::string& client_spec, bool no_removal,
              bool no_detector_check, bool no_threshold, bool no_image_filter) {
    state.finalize();
    const Dataset ds = Dataset::load(dataset_dir);
    const QueryMethod method = parse_method(method_name);

    PipelineConfig config = pipeline_config(state.config, method);
    config.enable_removal = !no_removal;
    config.query.use_detector_check = !no_detector_check;
    config.query.use_similarity_threshold = !no_threshold;
    config.query.use_image_filter = !no_image_filter;

    std::shared_ptr<MllmClient> client;
    if (method != QueryMethod::Vlm) {
        if (client_spec.empty())
            throw DataError("--method " + method_name +
                            " needs --mllm-client (mock:<file>, oracle, or http)");
        client = make_client(client_spec, state.config);
    }
    StubPipeline pipe(config, client);
    const EvalReport report = evaluate(ds, pipe);

    std::cout << report.to_text();
    if (!out_prefix.empty()) {
        std::ofstream text(out_prefix + ".txt");
        text << report.to_text();
        std::ofstream csv(out_prefix + ".csv");
        csv << report.to_csv();
        std::cout << "reports: " << out_prefix << ".txt " << out_prefix << ".csv\n";
    }
    return 0;  // completion is success regardless of score
}

int cmd_explore(CliState& state, const std::string& script_path, int rounds_override,
                const std::string& value_name, const std::string& query_text, bool strict,
                const std::string& trace_path, const std::string& export_prefix) {
    state.finalize();
    const SceneScript script = parse_scene_script(script_path);

    ExploreConfig config;
    if (value_name == "time")
        config.value_mode = ValueMode::Time;
    else if (value_name == "similarity")
        config.value_mode = ValueMode::Similarity;
    else if (value_name == "mixed")
        config.value_mode = ValueMode::Mixed;
    else
        throw CLI::ValidationError("--value", "must be one of time, similarity, mixed");
    if (config.value_mode != ValueMode::Time && query_text.empty())
        throw DataError("--value " + value_name + " needs --query");
    config.query = query_text;
    config.params.beta_t = state.config.beta_t;
    config.params.mu_t = state.config.mu_t;
    config.params.beta_s = state.config.beta_s;
    config.params.mu_s = state.config.mu_s;
    config.params.mix_lambda = state.config.lambda;
    config.resolution = state.config.resolution;
    config.z_threshold = state.config.z_threshold;
    config.max_waypoints = state.config.max_waypoints;
    config.goal_tolerance = state.config.goal_tolerance;
    config.explore_penalty = state.config.explore_penalty;
    config.max_steps = state.config.max_steps;
    config.voxel_size = state.config.voxel_size;
    config.ingest_epsilon = state.config.epsilon;
    config.scan_range = state.config.scan_range;
    config.stub_seed = state.config.seed;
    config.intrinsics = script.intrinsics;
    config.camera_height = script.explore.camera_height;
    config.pitch_deg = script.explore.pitch_deg;
    config.scan_yaws = script.explore.scan_yaws;

    ExplorationRunner runner(script.scene, config);
    if (script.explore.start) runner.set_robot(*script.explore.start);

    const int rounds = rounds_override > 0 ? std::min(rounds_override, script.scene.rounds)
                                           : script.scene.rounds;
    std::ofstream trace_out;
    if (!trace_path.empty()) {
        trace_out.open(trace_path);
        trace_out << "round,step,robot_x,robot_y,target_row,target_col,target_value,"
                     "revisit,prefix_len,frontiers,coverage\n";
    }
    bool exhausted = false;
    for (int round = 0; round < rounds; ++round) {
        if (round > 0) runner.advance_clock(script.inter_round_gap);
        const ExploreTrace trace = runner.explore_round(round);
        for (const ExploreStep& step : trace.steps) {
            std::cout << "round=" << round << " step=" << step.step << " target=("
                      << step.target.row << "," << step.target.col << ") value=" << step.target_value
                      << (step.revisit_target ? " revisit" : "") << " prefix=" << step.prefix_length
                      << " frontiers=" << step.frontier_count << " coverage=" << step.coverage
                      << "\n";
            if (trace_out.is_open())
                trace_out << round << "," << step.step << "," << step.robot.x() << ","
                          << step.robot.y() << "," << step.target.row << "," << step.target.col
                          << "," << step.target_value << "," << (step.revisit_target ? 1 : 0) << ","
                          << step.prefix_length << "," << step.frontier_count << ","
                          << step.coverage << "\n";
        }
        std::cout << "round=" << round << " complete=" << (trace.complete ? 1 : 0)
                  << " coverage=" << trace.final_coverage << " scans=" << trace.scans << "\n";
        exhausted = exhausted || trace.budget_exhausted;
    }
    if (!export_prefix.empty()) {
        const ObstacleMap2D map = runner.obstacle_map();
        export_obstacle_map(map, export_prefix + "_obstacle.pgm");
        export_value_map(runner.value_map(map.geom), export_prefix + "_value.pgm");
        std::cout << "maps: " << export_prefix << "_obstacle.pgm " << export_prefix
                  << "_value.pgm\n";
    }
    if (exhausted) {
        std::cout << "step budget exhausted\n";
        if (strict) return kExitData;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic spatio-semantic voxel memory: simulate, ingest, query, bench, explore"};
    app.require_subcommand(1);

    CliState state;
    app.add_option("--config", state.config_file, "JSON config file (defaults < file < flags)");
    state.overrides.reserve(config_schema().size());
    for (const ConfigKey& key : config_schema()) {
        state.overrides.push_back({&key, ""});
        app.add_option("--" + key.name, state.overrides.back().second,
                       key.description + " [default: " + key.default_value + "]");
    }

    auto* simulate = app.add_subcommand("simulate", "render a scene script into a dataset");
    std::string sim_script, sim_out;
    simulate->add_option("script", sim_script, "scene script (JSON)")->required();
    simulate->add_option("out", sim_out, "output dataset directory")->required();

    auto* ingest = app.add_subcommand("ingest", "stream a dataset into a saved voxel map");
    std::string ing_dataset, ing_out = "map.vxm";
    bool ing_no_removal = false;
    ingest->add_option("dataset", ing_dataset, "dataset directory")->required();
    ingest->add_option("--out", ing_out, "output map file");
    ingest->add_flag("--no-removal", ing_no_removal, "only add points, never remove");

    auto* query = app.add_subcommand("query", "localize an object in a saved map");
    std::string q_map, q_text, q_method = "vlm", q_dataset, q_client;
    int q_k = 0;
    query->add_option("map", q_map, "map file from ingest")->required();
    query->add_option("text", q_text, "natural-language object query")->required();
    query->add_option("--method", q_method, "vlm, mllm, or hybrid");
    query->add_option("--dataset", q_dataset, "dataset directory backing the map's images");
    query->add_option("--mllm-client", q_client, "oracle, mock:<answers.json>, or http");
    query->add_option("--k", q_k, "hybrid candidate count (overrides config)");

    auto* bench = app.add_subcommand("bench", "run the offline localization benchmark");
    std::string b_dataset, b_method = "vlm", b_out, b_client;
    bool b_no_removal = false, b_no_detector = false, b_no_threshold = false, b_no_filter = false;
    bench->add_option("dataset", b_dataset, "dataset directory")->required();
    bench->add_option("--method", b_method, "vlm, mllm, or hybrid");
    bench->add_option("--out", b_out, "report file prefix (writes .txt and .csv)");
    bench->add_option("--mllm-client", b_client, "oracle, mock:<answers.json>, or http");
    bench->add_flag("--no-removal", b_no_removal, "ablation: only adding points");
    bench->add_flag("--no-detector-check", b_no_detector, "ablation: skip the detector cross-check");
    bench->add_flag("--no-threshold", b_no_threshold, "ablation: no similarity thresholding");
    bench->add_flag("--no-image-filter", b_no_filter, "ablation: no live-image prompt filtering");

    auto* explore = app.add_subcommand("explore", "closed-loop exploration in the simulator");
    std::string e_script, e_value = "time", e_query, e_trace, e_export;
    int e_rounds = 0;
    bool e_strict = false;
    explore->add_option("script", e_script, "scene script (JSON)")->required();
    explore->add_option("--rounds", e_rounds, "rounds to run (default: all in the script)");
    explore->add_option("--value", e_value, "exploration value map: time, similarity, mixed");
    explore->add_option("--query", e_query, "query text for similarity/mixed value maps");
    explore->add_option("--trace", e_trace, "write the per-step trace CSV here");
    explore->add_option("--export-maps", e_export,
                        "write final obstacle/value maps as <prefix>_*.pgm (+ .json sidecars)");
    explore->add_flag("--strict", e_strict, "exit nonzero when the step budget runs out");

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmd_simulate(state, sim_script, sim_out);
        if (ingest->parsed()) return cmd_ingest(state, ing_dataset, ing_out, ing_no_removal);
        if (query->parsed())
            return cmd_query(state, q_map, q_text, q_method, q_dataset, q_client, q_k);
        if (bench->parsed())
            return cmd_bench(state, b_dataset, b_method, b_out, b_client, b_no_removal,
                             b_no_detector, b_no_threshold, b_no_filter);
        if (explore->parsed())
            return cmd_explore(state, e_script, e_rounds, e_value, e_query, e_strict, e_trace,
                               e_export);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const MalformedAnswerError& e) {
        std::cerr << "mLLM answer error: " << e.what() << "\n";
        return kExitData;
    } catch (const TransportError& e) {
        std::cerr << "mLLM transport error: " << e.what() << "\n";
        return kExitData;
    } catch (const StructuralError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InternalError& e) {
        std::cerr << "internal invariant violated: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}
