#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcbe {

/// Keyword dictionary with stable, contiguous indices. Indices are 0-based in
/// memory; external formats that carry indices use 1-based positions.
class KeywordDictionary {
  public:
    /// Parses a fixture: one keyword per line, '#' starts a comment,
    /// surrounding whitespace ignored, line order defines the index.
    /// Throws std::invalid_argument naming the keyword on duplicates.
    static KeywordDictionary load(std::istream& in);
    static KeywordDictionary load_file(const std::string& path);

    /// Synthetic dictionary of n generated keywords, for sweeps and tests.
    static KeywordDictionary synthetic(std::size_t n);

    explicit KeywordDictionary(std::vector<std::string> keywords);

    std::size_t size() const { return keywords_.size(); }
    const std::string& keyword(std::uint32_t index) const { return keywords_.at(index); }
    std::optional<std::uint32_t> find(std::string_view keyword) const;
    std::uint32_t require(std::string_view keyword) const;  // throws if unknown

  private:
    std::vector<std::string> keywords_;
    std::map<std::string, std::uint32_t, std::less<>> by_name_;
};

/// Keyword-index -> preference weight map. Weights are unnormalized positive
/// integers; group joins bump them via update_interest.
struct InterestModel {
    std::map<std::uint32_t, std::uint32_t> weights;
    std::string owner;

    std::size_t keyword_count() const { return weights.size(); }
    std::uint64_t total_weight() const;
    bool operator==(const InterestModel&) const = default;
};

/// A group's interest keyword set, fixed by its super node at creation.
struct GroupProfile {
    std::string group_id;
    std::vector<std::uint32_t> keyword_ids;  // sorted, unique, non-empty

    GroupProfile() = default;
    GroupProfile(std::string id, std::vector<std::uint32_t> ids, const KeywordDictionary& dict);
};

/// Initial model at registration: every chosen keyword gets weight 1.
InterestModel init_interest(const KeywordDictionary& dict,
                            const std::vector<std::string>& chosen, std::string owner = {});
InterestModel init_interest_ids(std::size_t dict_size, const std::vector<std::uint32_t>& chosen,
                                std::string owner = {});

/// Folds group keyword sets into the model: +1 per occurrence for known
/// keywords, insert at weight 1 otherwise. Validates every set before
/// touching anything, so the input is unchanged on error.
InterestModel update_interest(const InterestModel& model,
                              const std::vector<GroupProfile>& groups, std::size_t dict_size);

/// Dense weight vector of length n: position j holds the weight of keyword j,
/// zero where the model has no entry.
Eigen::VectorXd to_plain_vector(const InterestModel& model, std::size_t dict_size);

/// Interest-profile wire format: per entry a 4-byte unsigned 1-based keyword
/// index then a 4-byte IEEE-754 single-precision weight, entries in ascending
/// index order. 8 bytes per keyword, no header.
std::vector<std::uint8_t> serialize_profile(const InterestModel& model);
InterestModel parse_profile(const std::vector<std::uint8_t>& bytes, std::size_t dict_size);

}  // namespace pcbe
