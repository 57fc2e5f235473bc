#include "coevolve/metrics.hpp"

#include <algorithm>
#include <map>

#include "coevolve/recognizer.hpp"

namespace coevolve {

namespace {

// Correctness compares token content only: one keyed entry per line that starts a token.
std::vector<KeyedLine> token_lines(const LosslessInstance& inst) {
    std::map<std::size_t, std::string> keys;
    for (const auto& t : inst.tokens()) keys[t.line] += strip_whitespace(t.text);
    std::vector<KeyedLine> out;
    for (auto& [line, key] : keys) out.push_back({line, std::move(key)});
    return out;
}

// Preservation compares whole lines, comments and blank lines included.
std::vector<KeyedLine> all_lines(const LosslessInstance& inst) {
    std::vector<KeyedLine> out;
    for (std::size_t l = 1; l <= inst.line_count(); ++l) out.push_back({l, strip_whitespace(inst.line_text(l))});
    return out;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (!v) continue;
        sum += *v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace

std::optional<double> precision_of(double line_evl, double line_evl_wrg) {
    if (line_evl <= 0) return std::nullopt;
    return (line_evl - line_evl_wrg) / line_evl;
}

std::optional<double> recall_of(double line_evl, double line_evl_wrg, double line_req) {
    if (line_req <= 0) return std::nullopt;
    return std::min(1.0, (line_evl - line_evl_wrg) / line_req);
}

std::optional<double> retention_of(double saved, double lost) {
    if (saved + lost <= 0) return std::nullopt;
    return saved / (saved + lost);
}

LosslessInstance lex_for_evaluation(std::string text, const GrammarAst& grammar1, const GrammarAst& grammar2) {
    return lex_instance(std::move(text), grammar2, grammar1.keywords(), LexMode::Lenient);
}

LosslessInstance lex_candidate(std::string text, const GrammarAst& grammar2) {
    return lex_instance(std::move(text), grammar2, {}, LexMode::Lenient);
}

std::size_t compute_line_req(const LosslessInstance& instance1, const GrammarAst& grammar2) {
    return check_conformance(instance1, grammar2).error_lines.size();
}

CorrectnessMetrics compute_correctness(const LosslessInstance& instance1, const LosslessInstance& candidate,
                                       const GrammarAst& grammar2, std::size_t line_req) {
    CorrectnessMetrics m;
    m.line_req = line_req;
    m.candidate_lines = candidate.line_count();

    Recognizer rec(grammar2);
    const ConformanceReport cand = rec.check(candidate);
    m.candidate_error_lines = cand.error_lines;
    m.line_err = cand.error_lines.size();
    m.error_rate = m.candidate_lines == 0 ? 0.0 : static_cast<double>(m.line_err) / m.candidate_lines;

    // Lines the evolved grammar itself forces out of instance 1.
    const std::set<std::size_t> justified = rec.check(instance1).deletion_lines;

    const LineAlignment al = align_lines(token_lines(instance1), token_lines(candidate));
    for (const auto& p : al.pairs) {
        if (p.identical) continue;
        ++m.line_evl;
        if (cand.error_lines.count(p.b)) ++m.line_evl_wrg;
    }
    for (std::size_t a : al.dropped) {
        ++m.line_evl;
        if (!justified.count(a)) ++m.line_evl_wrg;
    }
    m.line_inserted = al.inserted.size();
    m.precision = precision_of(double(m.line_evl), double(m.line_evl_wrg));
    m.recall = recall_of(double(m.line_evl), double(m.line_evl_wrg), double(m.line_req));
    return m;
}

PreservationMetrics compute_preservation(const HumanInfoProfile& profile1, const LosslessInstance& instance1,
                                         const LosslessInstance& candidate, const MetricOptions& options) {
    PreservationMetrics m;
    const auto cand_sigs = line_signatures(candidate);
    const LineAlignment al = align_lines(all_lines(instance1), all_lines(candidate));
    std::map<std::size_t, LineAlignment::Pair> partner;
    for (const auto& p : al.pairs) partner.emplace(p.a, p);

    std::vector<std::string> cand_comments;
    for (const auto& t : candidate.trivia())
        if (t.is_comment()) cand_comments.emplace_back(candidate.text_of(t));

    for (std::size_t line : profile1.comment_lines) {
        const auto& fragments = profile1.per_line_signature.at(line).comments;
        auto found = [&](const std::string& fragment) {
            if (options.comment_mode == CommentMode::Positional) {
                auto it = partner.find(line);
                return it != partner.end() && candidate.line_text(it->second.b).find(fragment) != std::string_view::npos;
            }
            return std::any_of(cand_comments.begin(), cand_comments.end(),
                               [&](const std::string& c) { return c.find(fragment) != std::string::npos; });
        };
        bool saved = std::all_of(fragments.begin(), fragments.end(), found);
        ++(saved ? m.cmt_save : m.cmt_lost);
    }

    std::set<std::size_t> denominator;
    if (options.fmt_denominator == FmtDenominator::AllLines) {
        for (std::size_t l = 1; l <= instance1.line_count(); ++l) denominator.insert(l);
    } else {
        denominator = profile1.format_lines;
    }
    for (std::size_t line : denominator) {
        const LineSignature& sig = profile1.per_line_signature.at(line);
        bool saved = false;
        auto it = partner.find(line);
        if (it != partner.end()) {
            const LineSignature& other = cand_sigs.at(it->second.b);
            saved = other.blank == sig.blank && other.indentation == sig.indentation;
            if (saved && profile1.compressed_lines.count(line) && !it->second.identical)
                saved = other.content_chars >= sig.content_chars;
        }
        ++(saved ? m.fmt_save : m.fmt_lost);
    }

    m.cmt_ret = retention_of(double(m.cmt_save), double(m.cmt_lost));
    m.fmt_ret = retention_of(double(m.fmt_save), double(m.fmt_lost));
    return m;
}

RunMetrics evaluate_run(const LosslessInstance& instance1, const HumanInfoProfile& profile1,
                        const std::string& candidate_text, const GrammarAst& grammar2, std::size_t line_req,
                        double response_time_s, const MetricOptions& options) {
    RunMetrics r;
    r.response_time_s = response_time_s;
    const LosslessInstance candidate = lex_candidate(candidate_text, grammar2);
    r.preservation = compute_preservation(profile1, instance1, candidate, options);
    if (candidate_text.empty()) {
        r.failed_generation = true;
        r.correctness.line_req = line_req;
        r.correctness.precision = 0.0;
        r.correctness.recall = 0.0;
        return r;
    }
    r.correctness = compute_correctness(instance1, candidate, grammar2, line_req);
    return r;
}

AggregateMetrics aggregate(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw Error("aggregate needs at least one run");
    AggregateMetrics a;
    a.run_count = runs.size();
    const double n = static_cast<double>(runs.size());
    std::vector<std::optional<double>> precision, recall, error_rate, cmt_ret, fmt_ret;
    for (const auto& r : runs) {
        const auto& c = r.correctness;
        const auto& p = r.preservation;
        a.failed_runs += r.failed_generation;
        a.line_req += double(c.line_req) / n;
        a.line_err += double(c.line_err) / n;
        a.line_evl += double(c.line_evl) / n;
        a.line_evl_wrg += double(c.line_evl_wrg) / n;
        a.line_inserted += double(c.line_inserted) / n;
        a.candidate_lines += double(c.candidate_lines) / n;
        a.cmt_lost += double(p.cmt_lost) / n;
        a.cmt_save += double(p.cmt_save) / n;
        a.fmt_lost += double(p.fmt_lost) / n;
        a.fmt_save += double(p.fmt_save) / n;
        a.response_time_s += r.response_time_s / n;
        precision.push_back(c.precision);
        recall.push_back(c.recall);
        error_rate.push_back(c.error_rate);
        cmt_ret.push_back(p.cmt_ret);
        fmt_ret.push_back(p.fmt_ret);
    }
    a.precision = {mean_defined(precision), precision_of(a.line_evl, a.line_evl_wrg)};
    a.recall = {mean_defined(recall), recall_of(a.line_evl, a.line_evl_wrg, a.line_req)};
    if (a.failed_runs == a.run_count) a.precision.ratio_of_means = a.recall.ratio_of_means = 0.0;
    a.error_rate = {mean_defined(error_rate),
                    a.candidate_lines > 0 ? std::optional<double>(a.line_err / a.candidate_lines) : 0.0};
    a.cmt_ret = {mean_defined(cmt_ret), retention_of(a.cmt_save, a.cmt_lost)};
    a.fmt_ret = {mean_defined(fmt_ret), retention_of(a.fmt_save, a.fmt_lost)};
    return a;
}

}  // namespace coevolve
