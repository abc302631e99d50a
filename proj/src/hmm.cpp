#include "incgate/hmm.hpp"

#include <cmath>
#include <limits>

#include "incgate/errors.hpp"
#include "incgate/io.hpp"

namespace incgate::hmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_symbols(const CategoricalHmm& model, const ObservationSequence& obs) {
    const auto& arities = model.config.feature_arities;
    for (const auto& row : obs.symbols) {
        if (row.size() != arities.size())
            throw ArityMismatch("observation has " + std::to_string(row.size()) +
                                " features, model expects " + std::to_string(arities.size()));
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (row[f] < 0 || row[f] >= arities[f])
                throw SymbolOutOfRange("symbol " + std::to_string(row[f]) + " for feature " +
                                       std::to_string(f) + " with arity " +
                                       std::to_string(arities[f]));
        }
    }
}

// Per-state probability of emitting the feature tuple `row`.
Vector emission_probs(const CategoricalHmm& model, const std::vector<int>& row) {
    Vector e = Vector::Ones(model.num_states());
    for (std::size_t f = 0; f < row.size(); ++f)
        e.array() *= model.emissions[f].col(row[f]).array();
    return e;
}

void normalize_vector(Vector& v) {
    double sum = v.sum();
    if (sum > 0)
        v /= sum;
    else
        v.setConstant(1.0 / static_cast<double>(v.size()));
}

void normalize_rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double sum = m.row(i).sum();
        if (sum > 0)
            m.row(i) /= sum;
        else
            m.row(i).setConstant(1.0 / static_cast<double>(m.cols()));
    }
}

struct ForwardResult {
    double log_likelihood = 0;
    Matrix alphas;               // T x S, scaled to sum 1 per row
    std::vector<double> scales;  // c_t
};

ForwardResult forward_pass(const CategoricalHmm& model, const ObservationSequence& obs,
                           bool keep_lattice) {
    const auto T = obs.symbols.size();
    const int S = model.num_states();
    ForwardResult result;
    if (keep_lattice) result.alphas.resize(static_cast<Eigen::Index>(T), S);
    result.scales.reserve(T);

    Vector alpha = model.initial.cwiseProduct(emission_probs(model, obs.symbols[0]));
    for (std::size_t t = 0;; ++t) {
        double c = alpha.sum();
        if (c <= 0) {
            result.log_likelihood = kNegInf;
            return result;
        }
        alpha /= c;
        result.scales.push_back(c);
        result.log_likelihood += std::log(c);
        if (keep_lattice) result.alphas.row(static_cast<Eigen::Index>(t)) = alpha.transpose();
        if (t + 1 == T) break;
        alpha = (model.transition.transpose() * alpha)
                    .cwiseProduct(emission_probs(model, obs.symbols[t + 1]));
    }
    return result;
}

struct Accumulators {
    Vector pi;
    Matrix trans;
    std::vector<Matrix> emis;

    explicit Accumulators(const CategoricalHmm& model) {
        pi = Vector::Zero(model.num_states());
        trans = Matrix::Zero(model.num_states(), model.num_states());
        for (const auto& b : model.emissions) emis.push_back(Matrix::Zero(b.rows(), b.cols()));
    }
};

// One E-step over a sequence: scaled forward/backward, posterior
// accumulation. Returns the sequence log-likelihood under the current model.
double accumulate_expectations(const CategoricalHmm& model, const ObservationSequence& obs,
                               Accumulators& acc) {
    ForwardResult fwd = forward_pass(model, obs, true);
    if (!std::isfinite(fwd.log_likelihood)) return fwd.log_likelihood;

    const auto T = obs.symbols.size();
    const int S = model.num_states();

    // Backward lattice sharing the forward scales.
    Matrix betas(static_cast<Eigen::Index>(T), S);
    betas.row(static_cast<Eigen::Index>(T - 1)).setOnes();
    for (std::size_t t = T - 1; t-- > 0;) {
        Vector eb = emission_probs(model, obs.symbols[t + 1])
                        .cwiseProduct(betas.row(static_cast<Eigen::Index>(t + 1)).transpose());
        betas.row(static_cast<Eigen::Index>(t)) =
            (model.transition * eb).transpose() / fwd.scales[t + 1];

        // Transition posterior for step t -> t+1, normalized explicitly.
        Matrix xi = (fwd.alphas.row(static_cast<Eigen::Index>(t)).transpose() * eb.transpose())
                        .cwiseProduct(model.transition);
        double z = xi.sum();
        if (z > 0) acc.trans += xi / z;
    }

    for (std::size_t t = 0; t < T; ++t) {
        Vector gamma = fwd.alphas.row(static_cast<Eigen::Index>(t))
                           .cwiseProduct(betas.row(static_cast<Eigen::Index>(t)))
                           .transpose();
        double z = gamma.sum();
        if (z <= 0) continue;
        gamma /= z;
        if (t == 0) acc.pi += gamma;
        for (std::size_t f = 0; f < obs.symbols[t].size(); ++f)
            acc.emis[f].col(obs.symbols[t][f]) += gamma;
    }
    return fwd.log_likelihood;
}

void maximize(CategoricalHmm& model, const Accumulators& acc, double alpha) {
    Vector pi = acc.pi.array() + alpha;
    normalize_vector(pi);
    model.initial = pi;

    Matrix trans = acc.trans.array() + alpha;
    normalize_rows(trans);
    model.transition = std::move(trans);

    for (std::size_t f = 0; f < acc.emis.size(); ++f) {
        Matrix b = acc.emis[f].array() + alpha;
        normalize_rows(b);
        model.emissions[f] = std::move(b);
    }
}

}  // namespace

void HmmConfig::validate() const {
    if (num_states < 1) throw InvalidConfig("num_states must be >= 1");
    if (feature_arities.empty()) throw InvalidConfig("feature_arities must be non-empty");
    for (int a : feature_arities)
        if (a < 2) throw InvalidConfig("feature arities must be >= 2");
    if (max_iterations < 1) throw InvalidConfig("max_iterations must be >= 1");
    if (log_likelihood_tolerance <= 0) throw InvalidConfig("log_likelihood_tolerance must be > 0");
    if (smoothing_alpha < 0) throw InvalidConfig("smoothing_alpha must be >= 0");
    if (restarts < 1) throw InvalidConfig("restarts must be >= 1");
}

nlohmann::json HmmConfig::to_json() const {
    return nlohmann::json{{"num_states", num_states},
                          {"feature_arities", feature_arities},
                          {"max_iterations", max_iterations},
                          {"log_likelihood_tolerance", log_likelihood_tolerance},
                          {"smoothing_alpha", smoothing_alpha},
                          {"seed", seed},
                          {"restarts", restarts}};
}

HmmConfig HmmConfig::from_json(const nlohmann::json& j) {
    HmmConfig config;
    config.num_states = j.at("num_states").get<int>();
    config.feature_arities = j.at("feature_arities").get<std::vector<int>>();
    if (j.contains("max_iterations")) config.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("log_likelihood_tolerance"))
        config.log_likelihood_tolerance = j.at("log_likelihood_tolerance").get<double>();
    if (j.contains("smoothing_alpha"))
        config.smoothing_alpha = j.at("smoothing_alpha").get<double>();
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("restarts")) config.restarts = j.at("restarts").get<int>();
    return config;
}

void CategoricalHmm::validate(double tol) const {
    config.validate();
    const int S = num_states();
    if (S != config.num_states) throw InvalidConfig("state count does not match config");
    if (static_cast<std::size_t>(num_features()) != config.feature_arities.size())
        throw InvalidConfig("emission count does not match feature_arities");
    auto check_row = [tol](const Eigen::RowVectorXd& row, const char* what) {
        if (row.minCoeff() < 0) throw InvalidConfig(std::string(what) + " has negative entries");
        if (std::abs(row.sum() - 1.0) > tol)
            throw InvalidConfig(std::string(what) + " row does not sum to 1");
    };
    check_row(initial.transpose(), "initial distribution");
    if (transition.rows() != S || transition.cols() != S)
        throw InvalidConfig("transition matrix shape mismatch");
    for (Eigen::Index i = 0; i < transition.rows(); ++i)
        check_row(transition.row(i), "transition");
    for (std::size_t f = 0; f < emissions.size(); ++f) {
        if (emissions[f].rows() != S ||
            emissions[f].cols() != config.feature_arities[f])
            throw InvalidConfig("emission matrix shape mismatch for feature " + std::to_string(f));
        for (Eigen::Index i = 0; i < emissions[f].rows(); ++i)
            check_row(emissions[f].row(i), "emission");
    }
}

nlohmann::json CategoricalHmm::to_json() const {
    auto vec = [](const Vector& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    auto mat = [](const Matrix& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            rows.emplace_back(m.row(i).begin(), m.row(i).end());
        }
        return rows;
    };
    nlohmann::json j{{"format", "incgate-hmm"},
                     {"version", 1},
                     {"config", config.to_json()},
                     {"initial", vec(initial)},
                     {"transition", mat(transition)}};
    nlohmann::json emis = nlohmann::json::array();
    for (const auto& b : emissions) emis.push_back(mat(b));
    j["emissions"] = std::move(emis);
    j["digest"] = fnv1a64_hex(j.dump());
    return j;
}

CategoricalHmm CategoricalHmm::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "incgate-hmm" || j.at("version").get<int>() != 1)
            throw ParseError("not an incgate-hmm document");
        if (j.contains("digest")) {
            nlohmann::json payload = j;
            std::string digest = payload.at("digest").get<std::string>();
            payload.erase("digest");
            if (fnv1a64_hex(payload.dump()) != digest)
                throw DigestMismatch("model file content digest does not match");
        }
        CategoricalHmm model;
        model.config = HmmConfig::from_json(j.at("config"));
        auto initial = j.at("initial").get<std::vector<double>>();
        model.initial = Eigen::Map<const Vector>(initial.data(),
                                                 static_cast<Eigen::Index>(initial.size()));
        auto mat = [](const nlohmann::json& rows) {
            auto data = rows.get<std::vector<std::vector<double>>>();
            Matrix m(static_cast<Eigen::Index>(data.size()),
                     data.empty() ? 0 : static_cast<Eigen::Index>(data[0].size()));
            for (std::size_t i = 0; i < data.size(); ++i)
                for (std::size_t k = 0; k < data[i].size(); ++k)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = data[i][k];
            return m;
        };
        model.transition = mat(j.at("transition"));
        for (const auto& b : j.at("emissions")) model.emissions.push_back(mat(b));
        model.validate(1e-9);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad model document: ") + e.what());
    }
}

void CategoricalHmm::save(const std::string& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

CategoricalHmm CategoricalHmm::load(const std::string& path) {
    auto text = read_file(path);
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("model file is not valid JSON: " + path);
    return from_json(j);
}

namespace detail {

// xoshiro256** seeded through splitmix64; stable across platforms.
Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        s = z ^ (z >> 31);
    }
}

std::uint64_t Rng::next_u64() {
    auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int draw_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& weights, double u) {
    double cum = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
}

}  // namespace detail

CategoricalHmm init_model(const HmmConfig& config) {
    config.validate();
    detail::Rng rng(config.seed);
    // Symmetric Dirichlet(1.0) rows via normalized exponentials.
    auto dirichlet_matrix = [&rng](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j)
                m(i, j) = -std::log1p(-rng.next_double());
        normalize_rows(m);
        return m;
    };

    CategoricalHmm model;
    model.config = config;
    const int S = config.num_states;
    model.initial = dirichlet_matrix(1, S).row(0).transpose();
    model.transition = dirichlet_matrix(S, S);
    for (int arity : config.feature_arities)
        model.emissions.push_back(dirichlet_matrix(S, arity));
    return model;
}

double log_likelihood_forward(const CategoricalHmm& model, const ObservationSequence& obs) {
    if (obs.symbols.empty()) throw InvalidLength("cannot score an empty sequence");
    check_symbols(model, obs);
    return forward_pass(model, obs, false).log_likelihood;
}

double log_likelihood_backward(const CategoricalHmm& model, const ObservationSequence& obs) {
    if (obs.symbols.empty()) throw InvalidLength("cannot score an empty sequence");
    check_symbols(model, obs);

    const auto T = obs.symbols.size();
    Vector beta = Vector::Ones(model.num_states());
    double log_scale = 0;
    for (std::size_t t = T - 1; t-- > 0;) {
        beta = model.transition *
               emission_probs(model, obs.symbols[t + 1]).cwiseProduct(beta);
        double d = beta.sum();
        if (d <= 0) return kNegInf;
        beta /= d;
        log_scale += std::log(d);
    }
    double p = model.initial.cwiseProduct(emission_probs(model, obs.symbols[0])).dot(beta);
    if (p <= 0) return kNegInf;
    return std::log(p) + log_scale;
}

std::pair<CategoricalHmm, TrainTrace> train_baum_welch(
    const CategoricalHmm& initial_model, std::span<const ObservationSequence> dataset,
    const HmmConfig& config) {
    if (dataset.empty()) throw EmptyDataset("training requires at least one sequence");
    config.validate();
    initial_model.validate(1e-9);
    for (const auto& obs : dataset) {
        if (obs.symbols.empty()) throw InvalidLength("dataset contains an empty sequence");
        check_symbols(initial_model, obs);
    }

    CategoricalHmm model = initial_model;
    TrainTrace trace;
    double previous_ll = kNegInf;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        Accumulators acc(model);
        double total_ll = 0;
        for (const auto& obs : dataset) total_ll += accumulate_expectations(model, obs, acc);
        trace.log_likelihoods.push_back(total_ll);
        trace.iterations = iter + 1;
        maximize(model, acc, config.smoothing_alpha);
        if (iter > 0 && std::abs(total_ll - previous_ll) < config.log_likelihood_tolerance) {
            trace.converged = true;
            break;
        }
        previous_ll = total_ll;
    }
    model.config = config;
    return {std::move(model), std::move(trace)};
}

std::pair<CategoricalHmm, TrainTrace> train_new(const HmmConfig& config,
                                                std::span<const ObservationSequence> dataset) {
    config.validate();
    std::pair<CategoricalHmm, TrainTrace> best;
    double best_ll = kNegInf;
    for (int r = 0; r < config.restarts; ++r) {
        HmmConfig run = config;
        run.seed = config.seed + static_cast<std::uint64_t>(r);
        auto trained = train_baum_welch(init_model(run), dataset, run);
        double final_ll = total_log_likelihood(trained.first, dataset);
        if (r == 0 || final_ll > best_ll) {
            best_ll = final_ll;
            best = std::move(trained);
        }
    }
    return best;
}

ObservationSequence sample(const CategoricalHmm& model, int length, std::uint64_t seed) {
    if (length < 1) throw InvalidLength("sample length must be >= 1");
    detail::Rng rng(seed);
    ObservationSequence obs;
    obs.symbols.reserve(static_cast<std::size_t>(length));
    Eigen::RowVectorXd pi = model.initial.transpose();
    int state = detail::draw_categorical(pi, rng.next_double());
    for (int t = 0; t < length; ++t) {
        if (t > 0)
            state = detail::draw_categorical(model.transition.row(state), rng.next_double());
        std::vector<int> row(model.emissions.size());
        for (std::size_t f = 0; f < model.emissions.size(); ++f)
            row[f] = detail::draw_categorical(model.emissions[f].row(state), rng.next_double());
        obs.symbols.push_back(std::move(row));
    }
    return obs;
}

double total_log_likelihood(const CategoricalHmm& model,
                            std::span<const ObservationSequence> dataset) {
    double total = 0;
    for (const auto& obs : dataset) total += log_likelihood_forward(model, obs);
    return total;
}

}  // namespace incgate::hmm
