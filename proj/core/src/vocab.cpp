#include "capforge/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "capforge/errors.hpp"

namespace capforge {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (std::ispunct(c)) {
            continue;
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_count) {
    if (captions.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, long> counts;  // ordered map gives the lexicographic tie-break
    for (const std::string& c : captions) {
        for (const std::string& tok : tokenize(c)) ++counts[tok];
    }
    std::vector<std::pair<std::string, long>> kept;
    for (const auto& [tok, n] : counts) {
        if (n >= min_count) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.id_to_token_ = {"<start>", "<stop>", "<unk>"};
    for (const auto& [tok, n] : kept) v.id_to_token_.push_back(tok);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        v.token_to_id_[v.id_to_token_[i]] = static_cast<TokenId>(i);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < 3 || id_to_token[0] != "<start>" || id_to_token[1] != "<stop>" ||
        id_to_token[2] != "<unk>") {
        throw ParseError("vocabulary table must begin with <start>, <stop>, <unk>");
    }
    Vocabulary v;
    v.id_to_token_ = std::move(id_to_token);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        auto [it, fresh] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i));
        if (!fresh) throw ParseError("duplicate token in vocabulary table: " + v.id_to_token_[i]);
    }
    return v;
}

TokenId Vocabulary::encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(TokenId id) const {
    if (id < 0 || id >= size()) {
        throw IntegrityError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(size()));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

}  // namespace capforge
