#pragma once

// Loss evaluators for grasp-pose prediction: pose regression loss, digit
// masking of pose text, and character-level cross-entropy over supplied
// distributions. Nothing here trains a model.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robmrag/pose_refinement.hpp"

namespace robmrag {

struct PoseLossConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
};

// lambda1 |(x,y) - (x^,y^)|^2 + lambda2 (2 - d_u . d^_u - d_f . d^_f).
// Throws ValidationError for a direction more than 1e-4 off unit norm or a
// negative weight.
double pose_loss(const GraspPose& pred, const GraspPose& gt, const PoseLossConfig& cfg = {});

inline constexpr std::string_view kDefaultMaskToken = "<m>";

struct MaskingResult {
    std::string masked_text;
    std::vector<std::size_t> positions;  // ascending indices into the original text
    std::vector<std::string> targets;    // original characters, parallel to positions
    std::string mask_token = std::string(kDefaultMaskToken);
};

// Byte offsets of digits that belong to numeric spans: maximal runs of
// [0-9+-.] holding at least one digit and not glued to a letter or '_'.
std::vector<std::size_t> numeric_digit_positions(std::string_view text);

// Masks ceil(fraction * count) of the numeric digits, chosen by a seeded
// mt19937_64 partial shuffle; deterministic for (text, fraction, seed) on
// every platform. fraction must lie in (0, 1].
MaskingResult mask_pose_parameters(std::string_view text, double fraction, std::uint64_t seed,
                                   std::string_view mask_token = kDefaultMaskToken);

// Inverse of mask_pose_parameters.
std::string unmask(const MaskingResult& masked);

// Characters a distribution ranges over, in order.
struct CharVocabulary {
    std::string chars = "0123456789";

    std::size_t index_of(char c) const;  // throws ValidationError if absent
};

// One masked position: its target characters and one distribution per
// character.
struct MaskedPrediction {
    std::string target;
    std::vector<std::vector<double>> dists;
};

// -sum_i sum_c log P(c). Distributions must sum to 1 within 1e-6.
double mlm_cross_entropy(std::span<const MaskedPrediction> predictions, const CharVocabulary& vocab = {});

inline double total_loss(double mlm, double pose) { return mlm + pose; }

}  // namespace robmrag
