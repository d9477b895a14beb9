#pragma once

// Textual and visual retrieval layers.
//
// Textual retrieval is a three-priority cascade:
//   P1  object-name match among simulation records, ranked by BM25
//   P2  dense instruction-embedding cosine over simulation records, accepted
//       when the best score reaches tau_den
//   P3  dense cosine over the expanded source set
// Visual filtering then keeps the top_n candidates by contact-frame
// embedding cosine.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robmrag/knowledge_base.hpp"

namespace robmrag {

// Lowercased tokens split on every non-alphanumeric ASCII byte. Bytes >= 0x80
// are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

// (u . v) / (|u| |v|). Throws ValidationError on length mismatch or a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

class Bm25Index {
public:
    Bm25Index() = default;
    explicit Bm25Index(Bm25Params params) : params_(params) {}

    // Adds (or replaces) a document.
    void add(const std::string& doc_id, const std::vector<std::string>& tokens);

    // Sum over every query token (repeats count) of
    //   IDF(t) * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl))
    // with IDF(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5)).
    // Throws NotFoundError for an unknown doc.
    double score(std::span<const std::string> query, const std::string& doc_id) const;

    double idf(const std::string& term) const;
    std::size_t size() const noexcept { return docs_.size(); }
    double average_length() const;

private:
    struct Doc {
        std::map<std::string, std::size_t> tf;
        std::size_t length = 0;
    };

    Bm25Params params_;
    std::map<std::string, Doc> docs_;
    std::map<std::string, std::size_t> doc_freq_;
    std::size_t total_length_ = 0;
};

struct Instruction {
    std::string text;
    std::vector<std::string> tokens;
    std::optional<std::vector<float>> embedding;

    // Throws ValidationError when the embedding is not unit-norm (1e-6).
    static Instruction from_text(std::string text, std::optional<std::vector<float>> embedding = std::nullopt);
};

struct RetrievalConfig {
    double tau_den = 0.75;
    std::size_t top_n = 5;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;
    std::set<Source> sources_priority3 = {Source::simulation, Source::robotic, Source::internet};

    void validate() const;
};

enum class Priority { p1_sparse, p2_dense, p3_expanded };
enum class ScoreKind { bm25, text_cosine, visual_cosine };

std::string_view to_string(Priority p);
std::string_view to_string(ScoreKind k);

struct ScoredId {
    std::string id;
    double score = 0;
    ScoreKind kind = ScoreKind::bm25;
};

struct RetrievalTrace {
    Priority priority_used = Priority::p1_sparse;
    std::vector<ScoredId> scored;         // sorted (score desc, id asc)
    std::vector<std::string> candidates;  // prefix of scored
    std::vector<Source> sources;          // sources searched by the firing priority
    // Simulation cosine scores that failed the tau_den test (P3 only).
    std::vector<ScoredId> rejected_dense;
    double tau_den = 0;
};

struct RetrievalResult {
    std::vector<std::string> candidates;
    RetrievalTrace trace;
};

// Sort by (score desc, id asc).
void sort_scored(std::vector<ScoredId>& scored);

// Retrieval indexes over one knowledge base. The BM25 index covers simulation
// records: instruction tokens followed by object-name tokens.
class Retriever {
public:
    Retriever(const KnowledgeBase& kb, RetrievalConfig config = {});

    // Throws Error("empty knowledge base") or ValidationError when a dense
    // priority needs an embedding that is missing.
    RetrievalResult retrieve(const Instruction& instruction) const;

    const Bm25Index& bm25() const noexcept { return bm25_; }
    const RetrievalConfig& config() const noexcept { return config_; }

private:
    std::vector<ScoredId> dense_scores(const Instruction& instruction, const std::vector<std::string>& ids) const;

    const KnowledgeBase* kb_;
    RetrievalConfig config_;
    Bm25Index bm25_;
    std::vector<std::pair<std::string, std::vector<std::string>>> sim_names_;  // id -> name tokens
};

RetrievalResult hybrid_retrieve(const KnowledgeBase& kb, const Instruction& instruction,
                                const RetrievalConfig& config = {});

struct VisualRanking {
    std::vector<ScoredId> ranked;  // every candidate, sorted
    std::vector<std::string> top;  // first min(top_n, |candidates|)
};

// Ranks candidates by cosine(obs_embedding, contact embedding).
VisualRanking visual_rank(std::span<const float> obs_embedding, const std::vector<std::string>& candidates,
                          const KnowledgeBase& kb, const RetrievalConfig& config = {});

std::vector<std::string> visual_top_n(std::span<const float> obs_embedding,
                                      const std::vector<std::string>& candidates, const KnowledgeBase& kb,
                                      const RetrievalConfig& config = {});

}  // namespace robmrag
