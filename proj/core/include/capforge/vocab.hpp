#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace capforge {

using TokenId = int;

/// Lowercase, strip ASCII punctuation, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// Token<->id bijection with fixed reserved ids. Immutable once built.
class Vocabulary {
public:
    static constexpr TokenId kStart = 0;
    static constexpr TokenId kStop = 1;
    static constexpr TokenId kUnk = 2;

    Vocabulary() = default;

    /// Ids from 3 upward go to tokens with count >= min_count, in descending
    /// frequency order, ties broken lexicographically. Everything else
    /// encodes as UNK.
    static Vocabulary build(const std::vector<std::string>& captions, int min_count = 1);

    /// Rebuild from an explicit id->token table (checkpoint load). The table
    /// must start with the three reserved tokens.
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    TokenId encode(const std::string& token) const;
    const std::string& decode(TokenId id) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

private:
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
};

}  // namespace capforge
