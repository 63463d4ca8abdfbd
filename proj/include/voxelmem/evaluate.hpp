#pragma once

#include <memory>
#include <string>
#include <vector>

#include "voxelmem/dataset.hpp"
#include "voxelmem/query.hpp"

namespace voxelmem {

// What the harness drives: ingest frames in stream order, answer queries.
class LocalizationPipeline {
public:
    virtual ~LocalizationPipeline() = default;
    virtual void ingest(std::shared_ptr<const PosedFrame> frame) = 0;
    virtual QueryResult localize(const std::string& query) = 0;
};

struct QueryOutcome {
    QueryAnnotation query;
    bool success = false;
    QueryResult result;       // what the pipeline answered
    std::string error;        // non-empty when the pipeline threw (counted as failure)
    double latency_ms = 0.0;  // recorded, never part of the success criterion
};

struct EvalReport {
    std::vector<QueryOutcome> outcomes;

    size_t total() const { return outcomes.size(); }
    size_t successes() const;
    double success_rate() const;  // successes / total
    double success_rate_positive() const;
    double success_rate_negative() const;
    double success_rate_round(int round) const;
    size_t count_round(int round) const;

    std::string to_text() const;
    std::string to_csv() const;  // one row per query
};

// Feeds every frame with timestamp < t before issuing query (q, t); queries
// with equal timestamps run in manifest order. Positives succeed iff Found
// within epsilon of the annotation; negatives iff NotFound.
EvalReport evaluate(const Dataset& dataset, LocalizationPipeline& pipeline);

}  // namespace voxelmem
