#include "robmrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "robmrag/error.hpp"

namespace robmrag {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) {
        throw ValidationError("cosine of vectors with lengths " + std::to_string(u.size()) + " and " +
                              std::to_string(v.size()));
    }
    double dot = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0 || vv == 0) throw ValidationError("cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

void Bm25Index::add(const std::string& doc_id, const std::vector<std::string>& tokens) {
    if (auto it = docs_.find(doc_id); it != docs_.end()) {
        total_length_ -= it->second.length;
        for (const auto& [term, _] : it->second.tf) --doc_freq_[term];
        docs_.erase(it);
    }
    Doc doc;
    doc.length = tokens.size();
    for (const auto& t : tokens) ++doc.tf[t];
    for (const auto& [term, _] : doc.tf) ++doc_freq_[term];
    total_length_ += doc.length;
    docs_.emplace(doc_id, std::move(doc));
}

double Bm25Index::average_length() const {
    return docs_.empty() ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(docs_.size());
}

double Bm25Index::idf(const std::string& term) const {
    auto it = doc_freq_.find(term);
    const double n_t = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
    const double n = static_cast<double>(docs_.size());
    return std::log(1.0 + (n - n_t + 0.5) / (n_t + 0.5));
}

double Bm25Index::score(std::span<const std::string> query, const std::string& doc_id) const {
    auto it = docs_.find(doc_id);
    if (it == docs_.end()) throw NotFoundError("unknown BM25 document '" + doc_id + "'");
    const Doc& doc = it->second;
    const double avgdl = average_length();
    double total = 0;
    for (const auto& term : query) {
        auto tf_it = doc.tf.find(term);
        if (tf_it == doc.tf.end()) continue;
        const double tf = static_cast<double>(tf_it->second);
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc.length) / avgdl);
        total += idf(term) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

Instruction Instruction::from_text(std::string text, std::optional<std::vector<float>> embedding) {
    if (embedding) embedding_from_tensor(embedding_tensor(*embedding));
    Instruction instr;
    instr.tokens = tokenize(text);
    instr.text = std::move(text);
    instr.embedding = std::move(embedding);
    return instr;
}

void RetrievalConfig::validate() const {
    if (top_n < 1) throw ValidationError("top_n must be at least 1");
    if (!(tau_den >= -1 && tau_den <= 1)) throw ValidationError("tau_den must lie in [-1, 1]");
    if (!(bm25_k1 > 0)) throw ValidationError("bm25 k1 must be positive");
    if (!(bm25_b >= 0 && bm25_b <= 1)) throw ValidationError("bm25 b must lie in [0, 1]");
}

std::string_view to_string(Priority p) {
    switch (p) {
        case Priority::p1_sparse: return "P1_sparse";
        case Priority::p2_dense: return "P2_dense";
        case Priority::p3_expanded: return "P3_expanded";
    }
    return "unknown";
}

std::string_view to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::bm25: return "bm25";
        case ScoreKind::text_cosine: return "text_cosine";
        case ScoreKind::visual_cosine: return "visual_cosine";
    }
    return "unknown";
}

void sort_scored(std::vector<ScoredId>& scored) {
    std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    });
}

Retriever::Retriever(const KnowledgeBase& kb, RetrievalConfig config)
    : kb_(&kb), config_(std::move(config)), bm25_({config_.bm25_k1, config_.bm25_b}) {
    config_.validate();
    for (const auto& id : kb.ids_for(Source::simulation)) {
        const auto& record = kb.get_example(id).record();
        auto name_tokens = tokenize(normalize_object_name(record.object_name));
        auto doc = tokenize(record.instruction);
        doc.insert(doc.end(), name_tokens.begin(), name_tokens.end());
        bm25_.add(id, doc);
        sim_names_.emplace_back(id, std::move(name_tokens));
    }
}

std::vector<ScoredId> Retriever::dense_scores(const Instruction& instruction,
                                              const std::vector<std::string>& ids) const {
    if (!instruction.embedding) {
        throw ValidationError("dense retrieval requires an instruction embedding");
    }
    std::vector<ScoredId> scored;
    scored.reserve(ids.size());
    for (const auto& id : ids) {
        const auto& example = kb_->get_example(id);
        if (!example.has_instruction_embedding()) {
            throw ValidationError("dense retrieval requires an instruction embedding for record '" + id + "'");
        }
        scored.push_back({id, cosine(*instruction.embedding, example.instruction_embedding()), ScoreKind::text_cosine});
    }
    sort_scored(scored);
    return scored;
}

RetrievalResult Retriever::retrieve(const Instruction& instruction) const {
    if (kb_->empty()) throw Error("empty knowledge base");

    RetrievalResult result;
    auto& trace = result.trace;
    trace.tau_den = config_.tau_den;

    const std::unordered_set<std::string> present(instruction.tokens.begin(), instruction.tokens.end());
    std::vector<ScoredId> sparse;
    for (const auto& [id, name] : sim_names_) {
        const bool matched = !name.empty() && std::all_of(name.begin(), name.end(),
                                                          [&](const auto& t) { return present.contains(t); });
        if (matched) sparse.push_back({id, bm25_.score(instruction.tokens, id), ScoreKind::bm25});
    }

    if (!sparse.empty()) {
        sort_scored(sparse);
        trace.priority_used = Priority::p1_sparse;
        trace.sources = {Source::simulation};
        trace.scored = std::move(sparse);
    } else {
        const auto& sim_ids = kb_->ids_for(Source::simulation);
        auto dense = dense_scores(instruction, sim_ids);
        if (!dense.empty() && dense.front().score >= config_.tau_den) {
            trace.priority_used = Priority::p2_dense;
            trace.sources = {Source::simulation};
            trace.scored = std::move(dense);
        } else {
            trace.priority_used = Priority::p3_expanded;
            trace.rejected_dense = std::move(dense);
            std::vector<std::string> expanded;
            for (Source s : config_.sources_priority3) {
                trace.sources.push_back(s);
                const auto& ids = kb_->ids_for(s);
                expanded.insert(expanded.end(), ids.begin(), ids.end());
            }
            if (expanded.empty()) throw Error("no records in the expanded source set");
            trace.scored = dense_scores(instruction, expanded);
        }
    }

    for (const auto& s : trace.scored) trace.candidates.push_back(s.id);
    result.candidates = trace.candidates;
    return result;
}

RetrievalResult hybrid_retrieve(const KnowledgeBase& kb, const Instruction& instruction,
                                const RetrievalConfig& config) {
    return Retriever(kb, config).retrieve(instruction);
}

VisualRanking visual_rank(std::span<const float> obs_embedding, const std::vector<std::string>& candidates,
                          const KnowledgeBase& kb, const RetrievalConfig& config) {
    config.validate();
    VisualRanking out;
    out.ranked.reserve(candidates.size());
    for (const auto& id : candidates) {
        const auto& example = kb.get_example(id);
        out.ranked.push_back({id, cosine(obs_embedding, example.contact_embedding()), ScoreKind::visual_cosine});
    }
    sort_scored(out.ranked);
    const std::size_t n = std::min(config.top_n, out.ranked.size());
    for (std::size_t i = 0; i < n; ++i) out.top.push_back(out.ranked[i].id);
    return out;
}

std::vector<std::string> visual_top_n(std::span<const float> obs_embedding,
                                      const std::vector<std::string>& candidates, const KnowledgeBase& kb,
                                      const RetrievalConfig& config) {
    return visual_rank(obs_embedding, candidates, kb, config).top;
}

}  // namespace robmrag
