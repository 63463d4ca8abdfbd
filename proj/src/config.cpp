#include "voxelmem/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxelmem/errors.hpp"

namespace voxelmem {

namespace {

template <typename T>
std::string render(const T& v) {
    return nlohmann::json(v).dump();
}

template <typename T>
ConfigKey make_key(const char* name, const char* description, T RunConfig::* member) {
    ConfigKey key;
    key.name = name;
    key.description = description;
    key.default_value = render(RunConfig{}.*member);
    key.current = [member](const RunConfig& c) { return render(c.*member); };
    key.apply = [member, name = std::string(name)](RunConfig& c, const std::string& text) {
        if constexpr (std::is_same_v<T, std::string>) {
            c.*member = text;
        } else {
            try {
                nlohmann::json v = nlohmann::json::parse(text);
                c.*member = v.get<T>();
            } catch (const nlohmann::json::exception&) {
                throw DataError("config key '" + name + "': cannot parse value '" + text + "'");
            }
        }
    };
    return key;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        make_key("voxel_size", "voxel edge length in meters", &RunConfig::voxel_size),
        make_key("feature_dim", "semantic feature dimension D", &RunConfig::feature_dim),
        make_key("epsilon", "removal depth tolerance in meters", &RunConfig::epsilon),
        make_key("max_depth", "frustum depth cap in meters", &RunConfig::max_depth),
        make_key("similarity_threshold", "abstention gate on the best voxel score",
                 &RunConfig::similarity_threshold),
        make_key("k", "hybrid candidate image count", &RunConfig::k),
        make_key("max_context_images", "mLLM prompt image cap", &RunConfig::max_context_images),
        make_key("dbscan_eps", "top-k clustering radius in meters", &RunConfig::dbscan_eps),
        make_key("dbscan_min_points", "top-k clustering core size", &RunConfig::dbscan_min_points),
        make_key("z_threshold", "obstacle height threshold in meters", &RunConfig::z_threshold),
        make_key("resolution", "2D grid resolution in meters per cell", &RunConfig::resolution),
        make_key("beta_t", "temporal value slope (negative favors stale cells)", &RunConfig::beta_t),
        make_key("mu_t", "temporal value midpoint in seconds", &RunConfig::mu_t),
        make_key("beta_s", "similarity value slope (negative favors similar cells)",
                 &RunConfig::beta_s),
        make_key("mu_s", "similarity value midpoint", &RunConfig::mu_s),
        make_key("lambda", "temporal weight in the mixed value map", &RunConfig::lambda),
        make_key("max_waypoints", "closed-loop plan prefix length", &RunConfig::max_waypoints),
        make_key("goal_tolerance", "goal-reached distance in meters", &RunConfig::goal_tolerance),
        make_key("explore_penalty", "A* cost multiplier on explorable cells",
                 &RunConfig::explore_penalty),
        make_key("max_steps", "exploration planning-iteration budget", &RunConfig::max_steps),
        make_key("scan_range", "exploration scan ingest range in meters", &RunConfig::scan_range),
        make_key("seed", "seed for stubs, scenes and generation", &RunConfig::seed),
        make_key("stub_noise_sigma", "Gaussian noise on stub text embeddings",
                 &RunConfig::stub_noise_sigma),
        make_key("min_visible_pixels", "generator observability bar for positive queries",
                 &RunConfig::min_visible_pixels),
        make_key("mllm_endpoint", "HTTP endpoint for a live mLLM (empty = none)",
                 &RunConfig::mllm_endpoint),
        make_key("mllm_model", "model name sent to the mLLM endpoint", &RunConfig::mllm_model),
        make_key("mllm_retries", "mLLM transport retries", &RunConfig::mllm_retries),
        make_key("mllm_timeout_s", "mLLM request timeout in seconds", &RunConfig::mllm_timeout_s),
    };
    return schema;
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const ConfigKey& entry : config_schema()) {
        if (entry.name == key) {
            entry.apply(config, value);
            return;
        }
    }
    throw DataError("unknown config key '" + key + "'");
}

RunConfig apply_config_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("unparseable config file " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw DataError("config file must hold a JSON object: " + path.string());
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string value =
            it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
        apply_config_value(base, it.key(), value);
    }
    return base;
}

std::string effective_config_text(const RunConfig& config) {
    std::ostringstream out;
    for (const ConfigKey& entry : config_schema())
        out << entry.name << " = " << entry.current(config) << "\n";
    return out.str();
}

}  // namespace voxelmem
