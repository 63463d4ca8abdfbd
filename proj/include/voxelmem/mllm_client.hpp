#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxelmem/geometry.hpp"
#include "voxelmem/semantics.hpp"

namespace voxelmem {

// Either a 1-based image index or a "None" answer.
struct MllmAnswer {
    std::optional<int> index;
    static MllmAnswer none() { return {}; }
    static MllmAnswer at(int index_1based) { return {index_1based}; }
};

class MllmClient {
public:
    virtual ~MllmClient() = default;
    virtual MllmAnswer answer(const std::string& prompt,
                              const std::vector<std::shared_ptr<const PosedFrame>>& images) = 0;
};

// Fixture-driven client: answers come from a query -> answer table. Each
// query string maps to a list consumed in call order (the last entry repeats).
// Answers are "None" or an integer; deliberately out-of-range fixtures are
// passed through so contract handling can be tested.
class ScriptedMllmClient : public MllmClient {
public:
    using Script = std::map<std::string, std::vector<std::string>>;
    explicit ScriptedMllmClient(Script script);
    static ScriptedMllmClient from_json_file(const std::string& path);

    MllmAnswer answer(const std::string& prompt,
                      const std::vector<std::shared_ptr<const PosedFrame>>& images) override;

private:
    Script script_;
    std::map<std::string, size_t> cursor_;
};

// Ideal mLLM stand-in bound to the simulator label channel: returns the
// 1-based index of the LAST image whose labels contain the query (through the
// synonym table), or "None". The query is recovered from the prompt template.
class LabelOracleMllmClient : public MllmClient {
public:
    explicit LabelOracleMllmClient(SynonymTable synonyms = {});
    MllmAnswer answer(const std::string& prompt,
                      const std::vector<std::shared_ptr<const PosedFrame>>& images) override;

private:
    SynonymTable synonyms_;
};

struct HttpMllmConfig {
    std::string endpoint;     // e.g. http://host:port/v1/answer
    std::string model;
    std::string api_key;      // sent as a bearer token when non-empty
    int max_retries = 3;
    int timeout_seconds = 30;
    double backoff_seconds = 0.5;  // doubled per retry
};

// Generic HTTP adapter: POSTs {model, prompt, images:[base64 pgm...]} as JSON
// and expects {"answer": "<index or None>"}. Nothing in the test suite
// requires a live endpoint; transport failures raise TransportError after the
// configured retries.
class HttpMllmClient : public MllmClient {
public:
    explicit HttpMllmClient(HttpMllmConfig config);
    MllmAnswer answer(const std::string& prompt,
                      const std::vector<std::shared_ptr<const PosedFrame>>& images) override;

private:
    HttpMllmConfig config_;
};

// Strict answer parser: optional surrounding whitespace around either a
// base-10 integer or the token "None". Anything else -> MalformedAnswerError.
MllmAnswer parse_mllm_answer(const std::string& text);

}  // namespace voxelmem
