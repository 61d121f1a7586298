#include "capforge/infer.hpp"

namespace capforge {

std::string tokens_to_text(const Vocabulary& vocab, const std::vector<TokenId>& tokens) {
    std::string out;
    for (TokenId t : tokens) {
        if (t == Vocabulary::kStop) break;
        if (!out.empty()) out += ' ';
        out += vocab.decode(t);
    }
    return out;
}

}  // namespace capforge
