#include "robmrag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include "robmrag/error.hpp"

namespace robmrag {
namespace {

void check_unit(const Vec3& v, const char* name) {
    if (!(std::abs(v.norm() - 1.0) <= 1e-4)) throw ValidationError(std::string(name) + " is not a unit vector");
}

bool numeric_char(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
}

bool word_char(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace

double pose_loss(const GraspPose& pred, const GraspPose& gt, const PoseLossConfig& cfg) {
    if (!(cfg.lambda1 >= 0 && cfg.lambda2 >= 0)) throw ValidationError("loss weights must be non-negative");
    check_unit(pred.dir_up, "predicted dir_up");
    check_unit(pred.dir_forward, "predicted dir_forward");
    check_unit(gt.dir_up, "ground-truth dir_up");
    check_unit(gt.dir_forward, "ground-truth dir_forward");
    const double contact = (pred.contact_2d - gt.contact_2d).squaredNorm();
    const double direction = 2.0 - pred.dir_up.dot(gt.dir_up) - pred.dir_forward.dot(gt.dir_forward);
    return cfg.lambda1 * contact + cfg.lambda2 * direction;
}

std::vector<std::size_t> numeric_digit_positions(std::string_view text) {
    std::vector<std::size_t> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!numeric_char(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && numeric_char(text[j])) ++j;
        const bool glued = (i > 0 && word_char(text[i - 1])) || (j < text.size() && word_char(text[j]));
        if (!glued) {
            for (std::size_t k = i; k < j; ++k) {
                if (std::isdigit(static_cast<unsigned char>(text[k]))) out.push_back(k);
            }
        }
        i = j;
    }
    return out;
}

MaskingResult mask_pose_parameters(std::string_view text, double fraction, std::uint64_t seed,
                                   std::string_view mask_token) {
    if (!(fraction > 0 && fraction <= 1)) throw ValidationError("mask fraction must lie in (0, 1]");
    if (mask_token.empty()) throw ValidationError("mask token must not be empty");

    auto digits = numeric_digit_positions(text);
    const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(digits.size())));

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, digits.size() - i));
        std::swap(digits[i], digits[j]);
    }
    digits.resize(count);
    std::sort(digits.begin(), digits.end());

    MaskingResult out;
    out.mask_token = std::string(mask_token);
    out.positions = digits;
    std::size_t next = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (next < digits.size() && digits[next] == i) {
            out.masked_text += mask_token;
            out.targets.emplace_back(1, text[i]);
            ++next;
        } else {
            out.masked_text.push_back(text[i]);
        }
    }
    return out;
}

std::string unmask(const MaskingResult& masked) {
    std::string out;
    std::size_t cursor = 0, next = 0, original = 0;
    while (cursor < masked.masked_text.size()) {
        if (next < masked.positions.size() && masked.positions[next] == original) {
            out += masked.targets[next];
            cursor += masked.mask_token.size();
            ++next;
        } else {
            out.push_back(masked.masked_text[cursor++]);
        }
        ++original;
    }
    return out;
}

std::size_t CharVocabulary::index_of(char c) const {
    const auto pos = chars.find(c);
    if (pos == std::string::npos) throw ValidationError(std::string("character '") + c + "' is not in the vocabulary");
    return pos;
}

double mlm_cross_entropy(std::span<const MaskedPrediction> predictions, const CharVocabulary& vocab) {
    double loss = 0;
    for (const auto& pred : predictions) {
        if (pred.dists.size() != pred.target.size()) {
            throw ValidationError("need one distribution per target character");
        }
        for (std::size_t i = 0; i < pred.target.size(); ++i) {
            const auto& dist = pred.dists[i];
            if (dist.size() != vocab.chars.size()) throw ValidationError("distribution does not match the vocabulary");
            double sum = 0;
            for (double p : dist) {
                if (!(p >= 0)) throw ValidationError("negative probability");
                sum += p;
            }
            if (!(std::abs(sum - 1.0) <= 1e-6)) throw ValidationError("distribution does not sum to 1");
            loss -= std::log(dist[vocab.index_of(pred.target[i])]);
        }
    }
    return loss;
}

}  // namespace robmrag
