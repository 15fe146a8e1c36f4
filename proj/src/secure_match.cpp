#include "pcbe/secure_match.hpp"

#include "pcbe/wire.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pcbe {

namespace {

constexpr std::uint32_t kKeyMagic = 0x4b424350;  // "PCBK"
constexpr std::uint32_t kKeyVersion = 1;

void check_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch, got " +
                                    std::to_string(got) + ", expected " + std::to_string(want));
    }
}

Eigen::MatrixXd random_matrix(std::size_t dim, Rng& rng) {
    Eigen::MatrixXd m(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.uniform(-1.0, 1.0);
        }
    }
    return m;
}

bool acceptable(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, std::size_t dim) {
    const auto diag = lu.matrixLU().diagonal();
    const double max_pivot = diag.cwiseAbs().maxCoeff();
    const double min_pivot = diag.cwiseAbs().minCoeff();
    if (!(min_pivot > 0.0) || min_pivot < 1e-12 * max_pivot) return false;
    const double rcond = lu.rcond();
    return rcond > 1.0 / SecretKey::kappa_limit(dim);
}

std::vector<std::uint8_t> serialize_vector_pair(const Eigen::VectorXd& a,
                                                const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vector pair dimension mismatch");
    std::vector<std::uint8_t> out;
    out.reserve(4 + static_cast<std::size_t>(a.size()) * 8);
    wire::put_u32(out, static_cast<std::uint32_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) wire::put_f32(out, static_cast<float>(a[i]));
    for (Eigen::Index i = 0; i < b.size(); ++i) wire::put_f32(out, static_cast<float>(b[i]));
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> parse_vector_pair(
    const std::vector<std::uint8_t>& bytes) {
    wire::Reader r(bytes);
    const std::uint32_t dim = r.u32();
    if (dim < 3) throw std::runtime_error("vector pair dimension below minimum");
    if (bytes.size() != 4 + 2ull * dim * 4) {
        throw std::runtime_error("vector pair payload size mismatch: got " +
                                 std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(4 + 2ull * dim * 4));
    }
    Eigen::VectorXd a(dim), b(dim);
    for (std::uint32_t i = 0; i < dim; ++i) a[i] = static_cast<double>(r.f32());
    for (std::uint32_t i = 0; i < dim; ++i) b[i] = static_cast<double>(r.f32());
    return {std::move(a), std::move(b)};
}

// Split one position into two summands. The random summand is uniform in
// [-|v|-1, |v|+1], which keeps magnitudes within one order of the target.
inline std::pair<double, double> split_value(double v, Rng& rng) {
    const double bound = std::abs(v) + 1.0;
    const double first = rng.uniform(-bound, bound);
    return {first, v - first};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_on(const Eigen::VectorXd& extended,
                                                     const std::vector<std::uint8_t>& s,
                                                     std::uint8_t split_when, Rng& rng) {
    check_dim(static_cast<std::size_t>(extended.size()), s.size(), "split");
    Eigen::VectorXd first(extended.size()), second(extended.size());
    for (Eigen::Index j = 0; j < extended.size(); ++j) {
        if (s[static_cast<std::size_t>(j)] == split_when) {
            const auto [x, y] = split_value(extended[j], rng);
            first[j] = x;
            second[j] = y;
        } else {
            first[j] = extended[j];
            second[j] = extended[j];
        }
    }
    return {std::move(first), std::move(second)};
}

}  // namespace

double SecretKey::kappa_limit(std::size_t dim) {
    return 1e4 * static_cast<double>(std::max<std::size_t>(dim, 1));
}

SecretKey SecretKey::generate(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("dictionary size must be at least 1");
    const std::size_t dim = n + 2;
    Rng rng(seed);

    SecretKey key;
    key.s_.resize(dim);
    for (auto& bit : key.s_) bit = rng.bit() ? 1 : 0;

    for (auto* m : {&key.m1_, &key.m2_}) {
        for (;;) {
            *m = random_matrix(dim, rng);
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(*m);
            if (acceptable(lu, dim)) {
                (m == &key.m1_ ? key.lu1_ : key.lu2_) = std::move(lu);
                break;
            }
        }
    }
    return key;
}

SecretKey SecretKey::from_parts(std::vector<std::uint8_t> s, Eigen::MatrixXd m1,
                                Eigen::MatrixXd m2) {
    if (s.size() < 3) throw std::invalid_argument("split vector must have length n+2 >= 3");
    const auto dim = static_cast<Eigen::Index>(s.size());
    if (m1.rows() != dim || m1.cols() != dim || m2.rows() != dim || m2.cols() != dim) {
        throw std::invalid_argument("key matrices must be (n+2)x(n+2)");
    }
    for (auto& bit : s) {
        if (bit > 1) throw std::invalid_argument("split vector entries must be 0 or 1");
    }
    SecretKey key;
    key.s_ = std::move(s);
    key.m1_ = std::move(m1);
    key.m2_ = std::move(m2);
    key.factorize();
    return key;
}

void SecretKey::factorize() {
    lu1_ = Eigen::PartialPivLU<Eigen::MatrixXd>(m1_);
    lu2_ = Eigen::PartialPivLU<Eigen::MatrixXd>(m2_);
    const auto invertible = [](const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
        const auto diag = lu.matrixLU().diagonal();
        return diag.cwiseAbs().minCoeff() > 0.0 && std::isfinite(diag.cwiseAbs().maxCoeff());
    };
    if (!invertible(lu1_)) throw std::invalid_argument("M1 is singular");
    if (!invertible(lu2_)) throw std::invalid_argument("M2 is singular");
}

std::size_t SecretKey::blob_size(std::size_t n) {
    const std::size_t dim = n + 2;
    return 12 + (dim + 7) / 8 + 2 * dim * dim * 8;
}

std::vector<std::uint8_t> SecretKey::save() const {
    const std::size_t dim = s_.size();
    std::vector<std::uint8_t> out;
    out.reserve(blob_size(dict_size()));
    wire::put_u32(out, kKeyMagic);
    wire::put_u32(out, kKeyVersion);
    wire::put_u32(out, static_cast<std::uint32_t>(dim));
    std::uint8_t acc = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        if (s_[i]) acc |= static_cast<std::uint8_t>(1u << (i % 8));
        if (i % 8 == 7 || i + 1 == dim) {
            out.push_back(acc);
            acc = 0;
        }
    }
    for (const auto* m : {&m1_, &m2_}) {
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            for (Eigen::Index c = 0; c < m->cols(); ++c) {
                wire::put_f64(out, (*m)(r, c));
            }
        }
    }
    return out;
}

SecretKey SecretKey::load(const std::vector<std::uint8_t>& blob) {
    wire::Reader r(blob);
    if (r.u32() != kKeyMagic) throw std::runtime_error("not a key blob");
    if (r.u32() != kKeyVersion) throw std::runtime_error("unsupported key blob version");
    const std::uint32_t dim = r.u32();
    if (dim < 3) throw std::runtime_error("key dimension below minimum");
    if (blob.size() != SecretKey::blob_size(dim - 2)) {
        throw std::runtime_error("key blob size mismatch");
    }
    const std::size_t bits_off = 12;
    const std::size_t bits_len = (dim + 7) / 8;
    std::vector<std::uint8_t> s(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
        s[i] = (blob[bits_off + i / 8] >> (i % 8)) & 1u;
    }
    Eigen::MatrixXd m1(dim, dim), m2(dim, dim);
    std::size_t off = bits_off + bits_len;
    const auto read_f64 = [&blob, &off]() {
        double v;
        std::memcpy(&v, blob.data() + off, 8);
        off += 8;
        return v;
    };
    for (auto* m : {&m1, &m2}) {
        for (std::uint32_t i = 0; i < dim; ++i) {
            for (std::uint32_t j = 0; j < dim; ++j) {
                (*m)(i, j) = read_f64();
            }
        }
    }
    return from_parts(std::move(s), std::move(m1), std::move(m2));
}

QueryVector build_query(const Eigen::VectorXd& plain, double r, double t) {
    if (r == 0.0) throw std::invalid_argument("query scale r must be nonzero");
    QueryVector q;
    q.plain = plain;
    q.r = r;
    q.t = t;
    q.extended.resize(plain.size() + 2);
    q.extended.head(plain.size()) = r * plain;
    q.extended[plain.size()] = r;
    q.extended[plain.size() + 1] = t;
    return q;
}

CandidateVector extend_candidate(const Eigen::VectorXd& plain, double epsilon) {
    CandidateVector d;
    d.plain = plain;
    d.epsilon = epsilon;
    d.extended.resize(plain.size() + 2);
    d.extended.head(plain.size()) = plain;
    d.extended[plain.size()] = epsilon;
    d.extended[plain.size() + 1] = 1.0;
    return d;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_query(const Eigen::VectorXd& extended,
                                                        const std::vector<std::uint8_t>& s,
                                                        Rng& rng) {
    return split_on(extended, s, 0, rng);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_index(const Eigen::VectorXd& extended,
                                                        const std::vector<std::uint8_t>& s,
                                                        Rng& rng) {
    return split_on(extended, s, 1, rng);
}

Trapdoor seal_query_halves(const SecretKey& key, const Eigen::VectorXd& q1,
                           const Eigen::VectorXd& q2) {
    check_dim(static_cast<std::size_t>(q1.size()), key.dim(), "trapdoor");
    check_dim(static_cast<std::size_t>(q2.size()), key.dim(), "trapdoor");
    return {key.m1_inverse_apply(q1), key.m2_inverse_apply(q2)};
}

EncIndex seal_index_halves(const SecretKey& key, const Eigen::VectorXd& d1,
                           const Eigen::VectorXd& d2) {
    check_dim(static_cast<std::size_t>(d1.size()), key.dim(), "index");
    check_dim(static_cast<std::size_t>(d2.size()), key.dim(), "index");
    return {key.m1_transpose_apply(d1), key.m2_transpose_apply(d2)};
}

Trapdoor build_trapdoor(const InterestModel& model, const SecretKey& key, Rng& rng,
                        std::optional<double> r, std::optional<double> t) {
    const Eigen::VectorXd plain = to_plain_vector(model, key.dict_size());
    const double rv = r.value_or(rng.uniform(0.5, 2.0));
    const double tv = t.value_or(rng.uniform(-1.0, 1.0));
    const QueryVector q = build_query(plain, rv, tv);
    auto [q1, q2] = split_query(q.extended, key.split_bits(), rng);
    return seal_query_halves(key, q1, q2);
}

EncIndex build_index(const InterestModel& model, const SecretKey& key,
                     const ObfuscationParams& obf, Rng& rng, std::optional<double> epsilon) {
    if (obf.sigma < 0.0) throw std::invalid_argument("obfuscation sigma must be >= 0");
    const Eigen::VectorXd plain = to_plain_vector(model, key.dict_size());
    const double eps = epsilon.value_or(obf.sigma == 0.0 ? obf.mu : rng.normal(obf.mu, obf.sigma));
    const CandidateVector d = extend_candidate(plain, eps);
    auto [d1, d2] = split_index(d.extended, key.split_bits(), rng);
    return seal_index_halves(key, d1, d2);
}

double score(const Trapdoor& t, const EncIndex& i) {
    if (t.a.size() != i.a.size() || t.b.size() != i.b.size()) {
        throw std::invalid_argument("score: trapdoor/index dimension mismatch");
    }
    return t.a.dot(i.a) + t.b.dot(i.b);
}

std::vector<ScoredCandidate> score_all(
    const Trapdoor& t, const std::vector<std::pair<std::string, EncIndex>>& indices) {
    std::vector<ScoredCandidate> scored;
    scored.reserve(indices.size());
    for (const auto& [id, idx] : indices) {
        scored.push_back({id, score(t, idx)});
    }
    return scored;
}

namespace {

// Ranks by descending score with id-ascending tie-breaks, operating on
// indices so candidate ids are never copied during the sort. `id_at` maps a
// candidate position to its id.
template <typename IdAt>
std::vector<std::string> rank_by_score(const std::vector<double>& scores, IdAt&& id_at,
                                       std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k requires k >= 1");
    if (scores.empty()) throw std::invalid_argument("top_k requires a non-empty candidate list");

    std::vector<std::uint32_t> order(scores.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return id_at(x) < id_at(y);
    });

    // Cluster consecutive scores within the tie band and re-order each cluster
    // by id, so roundoff in the cancelled matrices cannot scramble true ties.
    constexpr double kTieRel = 1e-6;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= order.size(); ++i) {
        const bool tied =
            i < order.size() &&
            std::abs(scores[order[i - 1]] - scores[order[i]]) <=
                kTieRel * std::max(1.0, std::max(std::abs(scores[order[i - 1]]),
                                                 std::abs(scores[order[i]])));
        if (!tied) {
            std::sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(i),
                      [&](std::uint32_t x, std::uint32_t y) { return id_at(x) < id_at(y); });
            start = i;
        }
    }

    std::vector<std::string> ids;
    ids.reserve(std::min(k, order.size()));
    for (std::size_t i = 0; i < order.size() && i < k; ++i) ids.emplace_back(id_at(order[i]));
    return ids;
}

}  // namespace

std::vector<std::string> rank_scores(std::vector<ScoredCandidate> scored, std::size_t k) {
    std::vector<double> scores;
    scores.reserve(scored.size());
    for (const auto& s : scored) scores.push_back(s.value);
    return rank_by_score(scores, [&scored](std::uint32_t i) -> const std::string& {
        return scored[i].id;
    }, k);
}

std::vector<std::string> top_k(const Trapdoor& t,
                               const std::vector<std::pair<std::string, EncIndex>>& indices,
                               std::size_t k) {
    std::vector<double> scores;
    scores.reserve(indices.size());
    for (const auto& [_, idx] : indices) scores.push_back(score(t, idx));
    return rank_by_score(scores, [&indices](std::uint32_t i) -> const std::string& {
        return indices[i].first;
    }, k);
}

std::vector<std::uint8_t> serialize_trapdoor(const Trapdoor& t) {
    return serialize_vector_pair(t.a, t.b);
}

std::vector<std::uint8_t> serialize_index(const EncIndex& i) {
    return serialize_vector_pair(i.a, i.b);
}

Trapdoor parse_trapdoor(const std::vector<std::uint8_t>& bytes) {
    auto [a, b] = parse_vector_pair(bytes);
    return {std::move(a), std::move(b)};
}

EncIndex parse_index(const std::vector<std::uint8_t>& bytes) {
    auto [a, b] = parse_vector_pair(bytes);
    return {std::move(a), std::move(b)};
}

}  // namespace pcbe
