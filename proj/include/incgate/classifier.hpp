#pragma once

#include <json.hpp>

#include "incgate/hmm.hpp"

namespace incgate {

// Benign/malicious model pair for likelihood-ratio classification.
struct ModelPair {
    hmm::CategoricalHmm benign;
    hmm::CategoricalHmm malicious;
    double bias = 0.0;  // log-likelihood offset subtracted from the margin

    void validate() const;  // throws ArityMismatch
};

struct Decision {
    Label label = Label::benign;
    double ll_benign = 0;
    double ll_malicious = 0;
    double margin = 0;  // ll_malicious - ll_benign - bias
};

// Two forward passes; malicious iff margin > 0, ties resolve to benign.
Decision classify(const ModelPair& pair, const ObservationSequence& obs);

nlohmann::json decision_to_json(const Decision& decision);

}  // namespace incgate
