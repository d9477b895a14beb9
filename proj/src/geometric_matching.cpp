#include "robmrag/geometric_matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "parallel.hpp"
#include "robmrag/error.hpp"

namespace robmrag {
namespace {

constexpr std::size_t kObsTile = 32;
constexpr std::size_t kCandTile = 512;

struct Best {
    double sq = std::numeric_limits<double>::infinity();
    std::int64_t index = -1;
};

inline double squared_distance(const float* a, const float* b, int channels) {
    double sq = 0;
    for (int k = 0; k < channels; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sq += d * d;
    }
    return sq;
}

// Same accumulation as squared_distance, abandoned once it reaches bound.
// Squares are non-negative so the prefix sums never decrease; a candidate
// abandoned here could not have been strictly better than bound.
inline bool improves(const float* a, const float* b, int channels, double bound, double& out) {
    double sq = 0;
    for (int k = 0; k < channels; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sq += d * d;
        if (sq >= bound) return false;
    }
    out = sq;
    return true;
}

}  // namespace

std::string_view to_string(Gate gate) {
    return gate == Gate::accept ? "accept" : "needs_refinement";
}

ImdResult imd(const DenseFeatureMap& obs, const DenseFeatureMap& ctc, const InstanceMask& mask,
              const ImdOptions& options) {
    if (obs.channels != ctc.channels) {
        throw ValidationError("feature channel mismatch: obs has " + std::to_string(obs.channels) +
                              ", candidate has " + std::to_string(ctc.channels));
    }
    if (mask.height != obs.height || mask.width != obs.width) {
        throw ValidationError("mask size does not match the observed feature map");
    }
    const auto* cmask = options.candidate_mask;
    if (cmask && (cmask->height != ctc.height || cmask->width != ctc.width)) {
        throw ValidationError("candidate mask size does not match the candidate feature map");
    }

    std::vector<std::size_t> masked;
    for (std::size_t p = 0; p < mask.bits.size(); ++p) {
        if (mask.bits[p]) masked.push_back(p);
    }

    ImdResult result;
    result.mask_pixels = masked.size();
    if (options.record_matches) result.matches.assign(obs.pixel_count(), -1);
    if (masked.empty()) {
        result.empty_mask = true;
        return result;
    }

    // Candidate pixels searched, in ascending row-major order.
    std::vector<std::int64_t> cand_index;
    for (std::size_t q = 0; q < ctc.pixel_count(); ++q) {
        if (!cmask || cmask->bits[q]) cand_index.push_back(static_cast<std::int64_t>(q));
    }
    if (cand_index.empty()) throw ValidationError("candidate search set is empty");

    const int nc = obs.channels;
    std::vector<float> cand(cand_index.size() * nc);
    for (std::size_t j = 0; j < cand_index.size(); ++j) {
        const auto px = ctc.pixel(static_cast<std::size_t>(cand_index[j]));
        std::copy(px.begin(), px.end(), cand.begin() + static_cast<std::ptrdiff_t>(j * nc));
    }

    std::vector<Best> best(masked.size());
    const std::size_t ncand = cand_index.size();

    detail::parallel_chunks(masked.size(), options.threads, [&](std::size_t begin, std::size_t end) {
        if (options.search == NnSearch::brute_force) {
            for (std::size_t i = begin; i < end; ++i) {
                const float* a = obs.values.data() + masked[i] * nc;
                for (std::size_t j = 0; j < ncand; ++j) {
                    const double sq = squared_distance(a, cand.data() + j * nc, nc);
                    if (sq < best[i].sq) best[i] = {sq, static_cast<std::int64_t>(j)};
                }
            }
            return;
        }
        for (std::size_t i0 = begin; i0 < end; i0 += kObsTile) {
            const std::size_t i1 = std::min(end, i0 + kObsTile);
            for (std::size_t j0 = 0; j0 < ncand; j0 += kCandTile) {
                const std::size_t j1 = std::min(ncand, j0 + kCandTile);
                for (std::size_t i = i0; i < i1; ++i) {
                    const float* a = obs.values.data() + masked[i] * nc;
                    Best b = best[i];
                    for (std::size_t j = j0; j < j1; ++j) {
                        double sq;
                        if (improves(a, cand.data() + j * nc, nc, b.sq, sq)) b = {sq, static_cast<std::int64_t>(j)};
                    }
                    best[i] = b;
                }
            }
        }
    });

    double total = 0;
    for (std::size_t i = 0; i < masked.size(); ++i) {
        total += std::sqrt(best[i].sq);
        if (options.record_matches) result.matches[masked[i]] = cand_index[static_cast<std::size_t>(best[i].index)];
    }
    result.imd = total;
    result.imd_normalized = total / static_cast<double>(std::max<std::size_t>(1, masked.size()));
    return result;
}

MatchResult select_min_imd(const DenseFeatureMap& obs, const InstanceMask& mask,
                           const std::vector<std::string>& candidates, const KnowledgeBase& kb, double tau_imd,
                           const ImdOptions& options) {
    if (candidates.empty()) throw Error("no candidates for geometric matching");
    MatchResult out;
    out.evaluated.reserve(candidates.size());
    for (const auto& id : candidates) {
        out.evaluated.push_back({id, imd(obs, kb.get_example(id).contact_features(), mask, options)});
    }
    const auto* best = &out.evaluated.front();
    for (const auto& c : out.evaluated) {
        const double a = c.result.imd_normalized, b = best->result.imd_normalized;
        if (a < b || (a == b && c.id < best->id)) best = &c;
    }
    out.best_id = best->id;
    out.best = best->result;
    out.gate = out.best.imd_normalized <= tau_imd ? Gate::accept : Gate::needs_refinement;
    return out;
}

}  // namespace robmrag
