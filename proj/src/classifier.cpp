#include "incgate/classifier.hpp"

#include "incgate/errors.hpp"

namespace incgate {

void ModelPair::validate() const {
    benign.validate(1e-9);
    malicious.validate(1e-9);
    if (benign.config.feature_arities != malicious.config.feature_arities)
        throw ArityMismatch("benign and malicious models disagree on feature arities");
}

Decision classify(const ModelPair& pair, const ObservationSequence& obs) {
    Decision decision;
    decision.ll_benign = hmm::log_likelihood_forward(pair.benign, obs);
    decision.ll_malicious = hmm::log_likelihood_forward(pair.malicious, obs);
    decision.margin = decision.ll_malicious - decision.ll_benign - pair.bias;
    decision.label = decision.margin > 0 ? Label::malicious : Label::benign;
    return decision;
}

nlohmann::json decision_to_json(const Decision& decision) {
    return nlohmann::json{{"label", std::string(to_string(decision.label))},
                          {"ll_benign", decision.ll_benign},
                          {"ll_malicious", decision.ll_malicious},
                          {"margin", decision.margin}};
}

}  // namespace incgate
