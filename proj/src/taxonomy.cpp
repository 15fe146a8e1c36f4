#include "pcbe/taxonomy.hpp"

#include "pcbe/wire.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace pcbe {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeywordDictionary::KeywordDictionary(std::vector<std::string> keywords)
    : keywords_(std::move(keywords)) {
    if (keywords_.empty()) throw std::invalid_argument("dictionary must hold at least one keyword");
    for (std::uint32_t i = 0; i < keywords_.size(); ++i) {
        if (keywords_[i].empty()) throw std::invalid_argument("empty keyword in dictionary");
        auto [_, inserted] = by_name_.emplace(keywords_[i], i);
        if (!inserted) {
            throw std::invalid_argument("duplicate keyword: " + keywords_[i]);
        }
    }
}

KeywordDictionary KeywordDictionary::load(std::istream& in) {
    std::vector<std::string> keywords;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (!line.empty()) keywords.push_back(line);
    }
    return KeywordDictionary(std::move(keywords));
}

KeywordDictionary KeywordDictionary::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open taxonomy fixture: " + path);
    return load(in);
}

KeywordDictionary KeywordDictionary::synthetic(std::size_t n) {
    std::vector<std::string> keywords;
    keywords.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        keywords.push_back("kw" + std::to_string(i + 1));
    }
    return KeywordDictionary(std::move(keywords));
}

std::optional<std::uint32_t> KeywordDictionary::find(std::string_view keyword) const {
    const auto it = by_name_.find(keyword);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t KeywordDictionary::require(std::string_view keyword) const {
    const auto idx = find(keyword);
    if (!idx) throw std::invalid_argument("unknown keyword: " + std::string(keyword));
    return *idx;
}

std::uint64_t InterestModel::total_weight() const {
    std::uint64_t sum = 0;
    for (const auto& [_, w] : weights) sum += w;
    return sum;
}

GroupProfile::GroupProfile(std::string id, std::vector<std::uint32_t> ids,
                           const KeywordDictionary& dict)
    : group_id(std::move(id)), keyword_ids(std::move(ids)) {
    std::sort(keyword_ids.begin(), keyword_ids.end());
    keyword_ids.erase(std::unique(keyword_ids.begin(), keyword_ids.end()), keyword_ids.end());
    if (keyword_ids.empty()) throw std::invalid_argument("group profile must not be empty");
    for (const auto idx : keyword_ids) {
        if (idx >= dict.size()) {
            throw std::invalid_argument("group profile keyword index out of range: " +
                                        std::to_string(idx));
        }
    }
}

InterestModel init_interest(const KeywordDictionary& dict, const std::vector<std::string>& chosen,
                            std::string owner) {
    std::vector<std::uint32_t> ids;
    ids.reserve(chosen.size());
    for (const auto& kw : chosen) ids.push_back(dict.require(kw));
    return init_interest_ids(dict.size(), ids, std::move(owner));
}

InterestModel init_interest_ids(std::size_t dict_size, const std::vector<std::uint32_t>& chosen,
                                std::string owner) {
    if (chosen.empty()) throw std::invalid_argument("initial keyword set must not be empty");
    InterestModel model;
    model.owner = std::move(owner);
    for (const auto idx : chosen) {
        if (idx >= dict_size) {
            throw std::invalid_argument("unknown keyword index: " + std::to_string(idx));
        }
        model.weights[idx] = 1;
    }
    return model;
}

InterestModel update_interest(const InterestModel& model, const std::vector<GroupProfile>& groups,
                              std::size_t dict_size) {
    for (const auto& g : groups) {
        for (const auto idx : g.keyword_ids) {
            if (idx >= dict_size) {
                throw std::invalid_argument("unknown keyword index: " + std::to_string(idx));
            }
        }
    }
    InterestModel updated = model;
    for (const auto& g : groups) {
        for (const auto idx : g.keyword_ids) {
            auto [it, inserted] = updated.weights.try_emplace(idx, 1);
            if (!inserted) it->second += 1;
        }
    }
    return updated;
}

Eigen::VectorXd to_plain_vector(const InterestModel& model, std::size_t dict_size) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dict_size));
    for (const auto& [idx, weight] : model.weights) {
        if (idx >= dict_size) {
            throw std::invalid_argument("model keyword index out of range: " + std::to_string(idx));
        }
        v[static_cast<Eigen::Index>(idx)] = static_cast<double>(weight);
    }
    return v;
}

std::vector<std::uint8_t> serialize_profile(const InterestModel& model) {
    std::vector<std::uint8_t> out;
    out.reserve(model.weights.size() * 8);
    for (const auto& [idx, weight] : model.weights) {
        wire::put_u32(out, idx + 1);  // 1-based on the wire
        wire::put_f32(out, static_cast<float>(weight));
    }
    return out;
}

InterestModel parse_profile(const std::vector<std::uint8_t>& bytes, std::size_t dict_size) {
    if (bytes.size() % 8 != 0) throw std::runtime_error("profile payload not a multiple of 8 bytes");
    wire::Reader r(bytes);
    InterestModel model;
    while (r.remaining() > 0) {
        const std::uint32_t wire_idx = r.u32();
        const float weight = r.f32();
        if (wire_idx == 0 || wire_idx > dict_size) {
            throw std::runtime_error("profile keyword index out of range: " +
                                     std::to_string(wire_idx));
        }
        if (weight < 1.0f) throw std::runtime_error("profile weight below 1");
        model.weights[wire_idx - 1] = static_cast<std::uint32_t>(weight);
    }
    return model;
}

}  // namespace pcbe
