#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "incgate/features.hpp"

namespace incgate::hmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct HmmConfig {
    int num_states = 20;
    std::vector<int> feature_arities;
    int max_iterations = 200;
    double log_likelihood_tolerance = 1e-4;
    double smoothing_alpha = 0.01;
    std::uint64_t seed = 0;
    int restarts = 1;

    void validate() const;  // throws InvalidConfig

    nlohmann::json to_json() const;
    static HmmConfig from_json(const nlohmann::json& j);
};

// Fully connected discrete-emission HMM. Emissions factorize per feature:
// the probability of a feature tuple given a state is the product of the
// per-feature categorical probabilities.
struct CategoricalHmm {
    HmmConfig config;
    Vector initial;                  // num_states
    Matrix transition;               // num_states x num_states, row-stochastic
    std::vector<Matrix> emissions;   // per feature: num_states x arity

    int num_states() const { return static_cast<int>(initial.size()); }
    int num_features() const { return static_cast<int>(emissions.size()); }

    // Verifies shapes, non-negativity, and row sums within `tol`.
    void validate(double tol = 1e-12) const;

    nlohmann::json to_json() const;  // includes a content digest
    static CategoricalHmm from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static CategoricalHmm load(const std::string& path);
};

struct TrainTrace {
    std::vector<double> log_likelihoods;  // total dataset LL per iteration
    int iterations = 0;
    bool converged = false;
};

// Rows drawn from a symmetric Dirichlet(1.0); deterministic per seed.
CategoricalHmm init_model(const HmmConfig& config);

// log P(obs | model) via the scaled forward recursion. Throws
// SymbolOutOfRange / InvalidLength. Returns -inf for impossible sequences.
double log_likelihood_forward(const CategoricalHmm& model, const ObservationSequence& obs);

// Same quantity through the backward recursion with independent scaling;
// exists to cross-check the forward pass.
double log_likelihood_backward(const CategoricalHmm& model, const ObservationSequence& obs);

std::pair<CategoricalHmm, TrainTrace> train_baum_welch(
    const CategoricalHmm& initial_model, std::span<const ObservationSequence> dataset,
    const HmmConfig& config);

// init_model + train_baum_welch with config.restarts seeded restarts,
// keeping the model with the best final data log-likelihood.
std::pair<CategoricalHmm, TrainTrace> train_new(const HmmConfig& config,
                                                std::span<const ObservationSequence> dataset);

// Ancestral sampling; deterministic per seed.
ObservationSequence sample(const CategoricalHmm& model, int length, std::uint64_t seed);

double total_log_likelihood(const CategoricalHmm& model,
                            std::span<const ObservationSequence> dataset);

namespace detail {

// Deterministic, implementation-independent uniform double in [0, 1).
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    double next_double();
    std::uint64_t next_u64();

private:
    std::uint64_t state_[4];
};

int draw_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& weights, double u);

}  // namespace detail

}  // namespace incgate::hmm
