#pragma once

#include <cstdint>
#include <vector>

namespace mmkg {

// Probe used by knowledge discovery: confidence for a global pair and, per
// phrase of the sentence, the softmax-normalized match probability of every
// object in the image.
class PairScorer {
public:
    virtual ~PairScorer() = default;

    virtual double global_score(uint32_t image, uint32_t sentence) const = 0;

    // result[phrase_position][object_position], each row summing to 1
    virtual std::vector<std::vector<double>> local_scores(uint32_t image, uint32_t sentence) const = 0;
};

}  // namespace mmkg
