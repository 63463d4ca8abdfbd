#include "voxelmem/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

namespace voxelmem {

size_t EvalReport::successes() const {
    return static_cast<size_t>(std::count_if(outcomes.begin(), outcomes.end(),
                                             [](const QueryOutcome& o) { return o.success; }));
}

double EvalReport::success_rate() const {
    return outcomes.empty() ? 0.0 : static_cast<double>(successes()) / static_cast<double>(total());
}

namespace {

double rate_if(const std::vector<QueryOutcome>& outcomes, auto&& pred) {
    size_t n = 0, ok = 0;
    for (const QueryOutcome& o : outcomes) {
        if (!pred(o)) continue;
        ++n;
        if (o.success) ++ok;
    }
    return n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
}

}  // namespace

double EvalReport::success_rate_positive() const {
    return rate_if(outcomes, [](const QueryOutcome& o) { return o.query.positive; });
}

double EvalReport::success_rate_negative() const {
    return rate_if(outcomes, [](const QueryOutcome& o) { return !o.query.positive; });
}

double EvalReport::success_rate_round(int round) const {
    return rate_if(outcomes, [round](const QueryOutcome& o) { return o.query.round == round; });
}

size_t EvalReport::count_round(int round) const {
    return static_cast<size_t>(std::count_if(outcomes.begin(), outcomes.end(),
                                             [round](const QueryOutcome& o) {
                                                 return o.query.round == round;
                                             }));
}

EvalReport evaluate(const Dataset& dataset, LocalizationPipeline& pipeline) {
    // Queries interleave into the frame stream by time; manifest order breaks ties.
    std::vector<size_t> query_order(dataset.manifest().queries.size());
    std::iota(query_order.begin(), query_order.end(), 0);
    std::stable_sort(query_order.begin(), query_order.end(), [&](size_t a, size_t b) {
        return dataset.manifest().queries[a].time < dataset.manifest().queries[b].time;
    });

    EvalReport report;
    size_t frame_at = 0;
    auto feed_until = [&](double t) {
        while (frame_at < dataset.frame_count() &&
               dataset.manifest().frames[frame_at].timestamp < t) {
            pipeline.ingest(dataset.load_frame(frame_at));
            ++frame_at;
        }
    };

    for (size_t qi : query_order) {
        const QueryAnnotation& query = dataset.manifest().queries[qi];
        feed_until(query.time);
        QueryOutcome outcome;
        outcome.query = query;
        const auto begin = std::chrono::steady_clock::now();
        try {
            outcome.result = pipeline.localize(query.text);
            if (query.positive) {
                outcome.success = outcome.result.is_found() &&
                                  (outcome.result.found->position - query.position).norm() <=
                                      query.epsilon;
            } else {
                outcome.success = !outcome.result.is_found();
            }
        } catch (const std::exception& e) {
            outcome.success = false;
            outcome.error = e.what();
        }
        outcome.latency_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - begin)
                                 .count();
        report.outcomes.push_back(std::move(outcome));
    }
    return report;
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << "queries: " << total() << "  successes: " << successes() << "  rate: ";
    out.precision(4);
    out << success_rate() << "\n";
    out << "  positive rate: " << success_rate_positive()
        << "  negative rate: " << success_rate_negative() << "\n";
    int max_round = 0;
    for (const QueryOutcome& o : outcomes) max_round = std::max(max_round, o.query.round);
    for (int r = 0; r <= max_round; ++r)
        if (count_round(r) > 0)
            out << "  round " << r << ": rate " << success_rate_round(r) << " over "
                << count_round(r) << " queries\n";
    for (const QueryOutcome& o : outcomes) {
        out << (o.success ? "  [ok]   " : "  [fail] ") << (o.query.positive ? "pos" : "neg") << " t="
            << o.query.time << " '" << o.query.text << "'";
        if (o.result.is_found()) {
            const auto& f = *o.result.found;
            out << " -> (" << f.position.x() << ", " << f.position.y() << ", " << f.position.z()
                << ") image " << f.image_id << " score " << f.score;
        } else {
            out << " -> not found";
        }
        if (!o.error.empty()) out << " error: " << o.error;
        out << "\n";
    }
    return out.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "text,time,round,kind,success,found,x,y,z,image_id,score,latency_ms,error\n";
    for (const QueryOutcome& o : outcomes) {
        std::string text = o.query.text;
        for (char& c : text)
            if (c == ',') c = ';';
        std::string error = o.error;
        for (char& c : error)
            if (c == ',' || c == '\n') c = ';';
        out << text << "," << o.query.time << "," << o.query.round << ","
            << (o.query.positive ? "positive" : "negative") << "," << (o.success ? 1 : 0) << ",";
        if (o.result.is_found()) {
            const auto& f = *o.result.found;
            out << 1 << "," << f.position.x() << "," << f.position.y() << "," << f.position.z() << ","
                << f.image_id << "," << f.score << ",";
        } else {
            out << 0 << ",,,,,,";
        }
        out << o.latency_ms << "," << error << "\n";
    }
    return out.str();
}

}  // namespace voxelmem
