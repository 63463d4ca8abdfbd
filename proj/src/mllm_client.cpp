#include "voxelmem/mllm_client.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "voxelmem/errors.hpp"
#include "voxelmem/query.hpp"

namespace voxelmem {

MllmAnswer parse_mllm_answer(const std::string& text) {
    size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    const std::string token = text.substr(begin, end - begin);
    if (token == "None") return MllmAnswer::none();
    if (!token.empty() && token.find_first_not_of("0123456789") == std::string::npos) {
        try {
            return MllmAnswer::at(std::stoi(token));
        } catch (const std::exception&) {
            throw MalformedAnswerError("mLLM index does not fit an int: '" + token + "'");
        }
    }
    throw MalformedAnswerError("unparseable mLLM answer: '" + text + "'");
}

ScriptedMllmClient::ScriptedMllmClient(Script script) : script_(std::move(script)) {}

ScriptedMllmClient ScriptedMllmClient::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mLLM answer fixture: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad mLLM answer fixture " + path + ": " + e.what());
    }
    Script script;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        std::vector<std::string> answers;
        if (it.value().is_array())
            for (const auto& a : it.value()) answers.push_back(a.is_string() ? a.get<std::string>()
                                                                             : a.dump());
        else
            answers.push_back(it.value().is_string() ? it.value().get<std::string>()
                                                     : it.value().dump());
        script[it.key()] = std::move(answers);
    }
    return ScriptedMllmClient(std::move(script));
}

MllmAnswer ScriptedMllmClient::answer(const std::string& prompt,
                                      const std::vector<std::shared_ptr<const PosedFrame>>&) {
    const std::string query = extract_query_from_prompt(prompt);
    auto it = script_.find(query);
    if (it == script_.end() || it->second.empty())
        throw MalformedAnswerError("no scripted answer for query '" + query + "'");
    size_t& cursor = cursor_[query];
    const std::string& text = it->second[std::min(cursor, it->second.size() - 1)];
    ++cursor;
    return parse_mllm_answer(text);
}

LabelOracleMllmClient::LabelOracleMllmClient(SynonymTable synonyms)
    : synonyms_(std::move(synonyms)) {}

MllmAnswer LabelOracleMllmClient::answer(
    const std::string& prompt, const std::vector<std::shared_ptr<const PosedFrame>>& images) {
    const std::string target = resolve_synonym(synonyms_, extract_query_from_prompt(prompt));
    for (size_t n = images.size(); n-- > 0;) {
        const LabelImage& labels = images[n]->appearance;
        if (!labels.table) continue;
        uint16_t target_index = 0;
        bool have = false;
        for (size_t i = 0; i < labels.table->size(); ++i)
            if ((*labels.table)[i] == target) {
                target_index = static_cast<uint16_t>(i);
                have = true;
                break;
            }
        if (!have) continue;
        for (uint16_t index : labels.indices)
            if (index == target_index) return MllmAnswer::at(static_cast<int>(n) + 1);
    }
    return MllmAnswer::none();
}

// ---- HTTP adapter -----------------------------------------------------------

namespace {

std::string base64_encode(const std::string& raw) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((raw.size() + 2) / 3 * 4);
    size_t n = 0;
    while (n + 2 < raw.size()) {
        const uint32_t v = (static_cast<uint8_t>(raw[n]) << 16) |
                           (static_cast<uint8_t>(raw[n + 1]) << 8) | static_cast<uint8_t>(raw[n + 2]);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += alphabet[v & 63];
        n += 3;
    }
    if (n + 1 == raw.size()) {
        const uint32_t v = static_cast<uint8_t>(raw[n]) << 16;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += "==";
    } else if (n + 2 == raw.size()) {
        const uint32_t v =
            (static_cast<uint8_t>(raw[n]) << 16) | (static_cast<uint8_t>(raw[n + 1]) << 8);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string frame_as_pgm(const PosedFrame& frame) {
    std::ostringstream out;
    out << "P5\n" << frame.appearance.width << " " << frame.appearance.height << "\n65535\n";
    for (uint16_t v : frame.appearance.indices) {
        out.put(static_cast<char>(v >> 8));
        out.put(static_cast<char>(v & 0xff));
    }
    return out.str();
}

}  // namespace

HttpMllmClient::HttpMllmClient(HttpMllmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw StructuralError("mLLM endpoint not configured");
}

MllmAnswer HttpMllmClient::answer(const std::string& prompt,
                                  const std::vector<std::shared_ptr<const PosedFrame>>& images) {
    nlohmann::json body;
    body["model"] = config_.model;
    body["prompt"] = prompt;
    body["images"] = nlohmann::json::array();
    for (const auto& frame : images) body["images"].push_back(base64_encode(frame_as_pgm(*frame)));
    const std::string payload = body.dump();

    std::string host = config_.endpoint, path = "/";
    if (const size_t scheme = host.find("://"); scheme != std::string::npos)
        host = host.substr(scheme + 3);
    if (const size_t slash = host.find('/'); slash != std::string::npos) {
        path = host.substr(slash);
        host = host.substr(0, slash);
    }
    const bool https = config_.endpoint.rfind("https://", 0) == 0;

    std::string last_error;
    double backoff = config_.backoff_seconds;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
        try {
            httplib::Client client((https ? "https://" : "http://") + host);
            client.set_connection_timeout(config_.timeout_seconds);
            client.set_read_timeout(config_.timeout_seconds);
            httplib::Headers headers;
            if (!config_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + config_.api_key);
            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "no response (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status != 200) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            const auto reply = nlohmann::json::parse(res->body);
            if (!reply.contains("answer") || !reply["answer"].is_string())
                throw MalformedAnswerError("mLLM reply missing string field 'answer'");
            return parse_mllm_answer(reply["answer"].get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw MalformedAnswerError(std::string("unparseable mLLM reply body: ") + e.what());
        }
    }
    throw TransportError("mLLM endpoint unreachable after " + std::to_string(config_.max_retries + 1) +
                         " attempts: " + last_error);
}

}  // namespace voxelmem
