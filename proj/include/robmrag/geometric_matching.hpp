#pragma once

// Instance Matching Distance between an observed feature map and a candidate
// contact-frame feature map:
//
//   IMD = sum over masked obs pixels p of || F_obs(p) - NN(F_obs(p), F_ctc) ||_2
//
// where NN is the exact L2 nearest neighbour among candidate pixels, ties
// going to the smallest row-major index. Distances accumulate in double in
// row-major order of the masked pixels, so the result is independent of the
// search strategy and thread count.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "robmrag/knowledge_base.hpp"
#include "robmrag/raster.hpp"

namespace robmrag {

struct ImdResult {
    double imd = 0;             // sum form
    double imd_normalized = 0;  // imd / max(1, mask pixel count)
    std::size_t mask_pixels = 0;
    bool empty_mask = false;    // warning: nothing to match, imd forced to 0
    // Per obs pixel (row-major, all pixels) the matched candidate pixel index,
    // or -1 outside the mask. Filled only when requested.
    std::vector<std::int64_t> matches;
};

enum class NnSearch {
    brute_force,
    // Partial-distance early exit over blocks of candidate pixels; selects the
    // same neighbour and produces bit-identical sums.
    blocked,
};

struct ImdOptions {
    NnSearch search = NnSearch::blocked;
    bool record_matches = false;
    // Restricts the neighbour search to these candidate pixels.
    const InstanceMask* candidate_mask = nullptr;
    int threads = 0;  // 0 = hardware concurrency
};

// Throws ValidationError on channel or mask/obs size mismatch, or an empty
// candidate search set.
ImdResult imd(const DenseFeatureMap& obs, const DenseFeatureMap& ctc, const InstanceMask& mask,
              const ImdOptions& options = {});

enum class Gate { accept, needs_refinement };
std::string_view to_string(Gate gate);

inline constexpr double kDefaultTauImd = 0.25;

struct CandidateImd {
    std::string id;
    ImdResult result;
};

struct MatchResult {
    std::string best_id;
    ImdResult best;
    Gate gate = Gate::accept;
    std::vector<CandidateImd> evaluated;  // in candidate order
};

// Minimum imd_normalized over the candidates (ties by ascending id); gate is
// accept when that value is <= tau_imd. Throws Error on an empty list.
MatchResult select_min_imd(const DenseFeatureMap& obs, const InstanceMask& mask,
                           const std::vector<std::string>& candidates, const KnowledgeBase& kb,
                           double tau_imd = kDefaultTauImd, const ImdOptions& options = {});

}  // namespace robmrag
