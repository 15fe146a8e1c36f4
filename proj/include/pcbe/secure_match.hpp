#pragma once

#include "pcbe/rng.hpp"
#include "pcbe/taxonomy.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pcbe {

/// Normal-distribution parameters for the per-candidate obfuscation scalar.
struct ObfuscationParams {
    double mu = 0.0;
    double sigma = 1.0;
};

/// The matching secret: a split-control bit vector S of length n+2 and two
/// invertible (n+2)x(n+2) matrices. Queries go through the matrix inverses,
/// candidate indices through the transposes, so inner products of the two
/// encrypted forms cancel the matrices exactly.
class SecretKey {
  public:
    /// Random key for an n-keyword dictionary. Matrices get uniform [-1, 1]
    /// entries and are regenerated until they are invertible with a bounded
    /// condition estimate (see kappa_limit). Deterministic per seed.
    static SecretKey generate(std::size_t n, std::uint64_t seed);

    /// Assembles a key from explicit parts, validating invertibility.
    /// Used by persistence and by tests that need degenerate keys.
    static SecretKey from_parts(std::vector<std::uint8_t> s, Eigen::MatrixXd m1,
                                Eigen::MatrixXd m2);

    std::size_t dim() const { return s_.size(); }          // n + 2
    std::size_t dict_size() const { return s_.size() - 2; }
    const std::vector<std::uint8_t>& split_bits() const { return s_; }
    const Eigen::MatrixXd& m1() const { return m1_; }
    const Eigen::MatrixXd& m2() const { return m2_; }

    Eigen::VectorXd m1_inverse_apply(const Eigen::VectorXd& v) const { return lu1_.solve(v); }
    Eigen::VectorXd m2_inverse_apply(const Eigen::VectorXd& v) const { return lu2_.solve(v); }
    Eigen::VectorXd m1_transpose_apply(const Eigen::VectorXd& v) const {
        return m1_.transpose() * v;
    }
    Eigen::VectorXd m2_transpose_apply(const Eigen::VectorXd& v) const {
        return m2_.transpose() * v;
    }

    /// Upper bound enforced on the 1-norm condition estimate at generation.
    /// Random dense matrices condition like O(n), so the bound scales with the
    /// dimension; the floor keeps small keys well clear of the scoring
    /// tolerance.
    static double kappa_limit(std::size_t dim);

    /// Versioned binary blob: magic, version, dimension, S packed bits, then
    /// M1 and M2 row-major in double precision. Never leaves the key owner's
    /// trust boundary.
    std::vector<std::uint8_t> save() const;
    static SecretKey load(const std::vector<std::uint8_t>& blob);
    static std::size_t blob_size(std::size_t n);

  private:
    SecretKey() = default;
    void factorize();  // throws if either matrix fails the invertibility guard

    std::vector<std::uint8_t> s_;
    Eigen::MatrixXd m1_, m2_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu1_, lu2_;
};

/// Extended query vector (rQ, r, t) of length n+2.
struct QueryVector {
    Eigen::VectorXd plain;     // Q, length n
    double r = 1.0;
    double t = 0.0;
    Eigen::VectorXd extended;  // (rQ, r, t)
};

/// Encrypted query: a = M1^-1 Q', b = M2^-1 Q''.
struct Trapdoor {
    Eigen::VectorXd a, b;
};

/// Extended candidate vector (D, eps, 1) of length n+2.
struct CandidateVector {
    Eigen::VectorXd plain;     // D, length n
    double epsilon = 0.0;
    Eigen::VectorXd extended;  // (D, eps, 1)
};

/// Encrypted candidate index: a = M1^T D', b = M2^T D''.
struct EncIndex {
    Eigen::VectorXd a, b;
};

QueryVector build_query(const Eigen::VectorXd& plain, double r, double t);
CandidateVector extend_candidate(const Eigen::VectorXd& plain, double epsilon);

/// Query-side split: positions with S[j]=0 are split into two random summands,
/// positions with S[j]=1 are copied into both halves.
std::pair<Eigen::VectorXd, Eigen::VectorXd> split_query(const Eigen::VectorXd& extended,
                                                        const std::vector<std::uint8_t>& s,
                                                        Rng& rng);

/// Index-side split: the complement condition. S[j]=1 splits, S[j]=0 copies.
/// The asymmetry against split_query is what cancels in the score.
std::pair<Eigen::VectorXd, Eigen::VectorXd> split_index(const Eigen::VectorXd& extended,
                                                        const std::vector<std::uint8_t>& s,
                                                        Rng& rng);

/// Matrix stage of trapdoor construction: {M1^-1 q1, M2^-1 q2}.
Trapdoor seal_query_halves(const SecretKey& key, const Eigen::VectorXd& q1,
                           const Eigen::VectorXd& q2);

/// Matrix stage of index construction: {M1^T d1, M2^T d2}.
EncIndex seal_index_halves(const SecretKey& key, const Eigen::VectorXd& d1,
                           const Eigen::VectorXd& d2);

/// Full trapdoor pipeline: weight vector -> (rQ, r, t) -> split -> seal.
/// r is drawn from [0.5, 2] and t from [-1, 1] when not supplied; r stays
/// positive so ranking order is preserved.
Trapdoor build_trapdoor(const InterestModel& model, const SecretKey& key, Rng& rng,
                        std::optional<double> r = std::nullopt,
                        std::optional<double> t = std::nullopt);

/// Full index pipeline: weight vector -> (D, eps, 1) -> split -> seal.
/// eps is drawn from N(mu, sigma^2) when not supplied.
EncIndex build_index(const InterestModel& model, const SecretKey& key,
                     const ObfuscationParams& obf, Rng& rng,
                     std::optional<double> epsilon = std::nullopt);

/// Similarity score: a.a' + b.b'. Equals r(Q.D + eps) + t up to roundoff.
double score(const Trapdoor& t, const EncIndex& i);

struct ScoredCandidate {
    std::string id;
    double value = 0.0;
};

/// Scores every candidate against the trapdoor.
std::vector<ScoredCandidate> score_all(const Trapdoor& t,
                                       const std::vector<std::pair<std::string, EncIndex>>& indices);

/// Top-k candidate ids by descending score. Scores within a relative 1e-6
/// band are treated as tied and ordered by ascending id, which keeps the
/// ranking stable against floating-point noise in the cancelled matrices.
/// Returns all candidates when k exceeds the pool.
std::vector<std::string> top_k(const Trapdoor& t,
                               const std::vector<std::pair<std::string, EncIndex>>& indices,
                               std::size_t k);

/// Rank pre-computed scores with the same tie handling as top_k.
std::vector<std::string> rank_scores(std::vector<ScoredCandidate> scored, std::size_t k);

/// Trapdoor/index wire format: 4-byte unsigned dimension header (value n+2),
/// vector a as n+2 single-precision floats, then vector b. Payload excluding
/// the header is 2*(n+2)*4 bytes.
std::vector<std::uint8_t> serialize_trapdoor(const Trapdoor& t);
std::vector<std::uint8_t> serialize_index(const EncIndex& i);
Trapdoor parse_trapdoor(const std::vector<std::uint8_t>& bytes);
EncIndex parse_index(const std::vector<std::uint8_t>& bytes);

/// Serialized byte counts for a dictionary of size n.
constexpr std::size_t vector_pair_payload_bytes(std::size_t n) { return 2 * (n + 2) * 4; }
constexpr std::size_t vector_pair_total_bytes(std::size_t n) {
    return 4 + vector_pair_payload_bytes(n);
}

}  // namespace pcbe
