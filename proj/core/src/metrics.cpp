#include "capforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

constexpr int kMaxOrder = 4;

std::string join_gram(const WordSeq& tokens, std::size_t start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) key += '\x1f';
        key += tokens[start + static_cast<std::size_t>(i)];
    }
    return key;
}

void check_inputs(const std::vector<WordSeq>& cands,
                  const std::vector<std::vector<WordSeq>>& refs) {
    if (cands.empty()) throw ConfigError("metric called with an empty candidate set");
    if (cands.size() != refs.size()) {
        throw DimensionError("candidate/reference count mismatch: " +
                             std::to_string(cands.size()) + " vs " + std::to_string(refs.size()));
    }
    for (const auto& r : refs) {
        if (r.empty()) throw IntegrityError("a candidate has no references");
    }
}

}  // namespace

std::map<std::string, int> ngram_counts(const WordSeq& tokens, int n) {
    if (n < 1 || n > kMaxOrder) throw ConfigError("n-gram order must be in 1..4");
    std::map<std::string, int> out;
    if (static_cast<int>(tokens.size()) < n) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        ++out[join_gram(tokens, i, n)];
    }
    return out;
}

double bleu4(const std::vector<WordSeq>& candidates,
             const std::vector<std::vector<WordSeq>>& references_per_candidate) {
    check_inputs(candidates, references_per_candidate);
    long long matched[kMaxOrder] = {0, 0, 0, 0};
    long long total[kMaxOrder] = {0, 0, 0, 0};
    long long cand_len = 0, ref_len = 0;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const WordSeq& cand = candidates[i];
        const auto& refs = references_per_candidate[i];
        cand_len += static_cast<long long>(cand.size());

        // closest reference length, shorter on ties
        long long best_ref = static_cast<long long>(refs[0].size());
        for (const WordSeq& r : refs) {
            const long long len = static_cast<long long>(r.size());
            const long long d_new = std::llabs(len - static_cast<long long>(cand.size()));
            const long long d_old = std::llabs(best_ref - static_cast<long long>(cand.size()));
            if (d_new < d_old || (d_new == d_old && len < best_ref)) best_ref = len;
        }
        ref_len += best_ref;

        for (int n = 1; n <= kMaxOrder; ++n) {
            const auto cand_grams = ngram_counts(cand, n);
            std::map<std::string, int> max_ref;
            for (const WordSeq& r : refs) {
                for (const auto& [gram, count] : ngram_counts(r, n)) {
                    max_ref[gram] = std::max(max_ref[gram], count);
                }
            }
            for (const auto& [gram, count] : cand_grams) {
                auto it = max_ref.find(gram);
                if (it != max_ref.end()) matched[n - 1] += std::min(count, it->second);
                total[n - 1] += count;
            }
        }
    }

    double log_prec = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0;
        log_prec += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
    if (cand_len == 0) return 0.0;
    const double bp = std::exp(std::min(
        0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));
    return bp * std::exp(log_prec / kMaxOrder);
}

namespace {

using TfIdf = std::map<std::string, double>;

double cosine(const TfIdf& a, const TfIdf& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [k, v] : a) {
        na += v * v;
        auto it = b.find(k);
        if (it != b.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<double> cider_per_image(
    const std::vector<WordSeq>& candidates,
    const std::vector<std::vector<WordSeq>>& references_per_candidate) {
    check_inputs(candidates, references_per_candidate);
    const std::size_t n_images = candidates.size();
    if (n_images < 2) {
        throw ConfigError("CIDEr needs at least 2 images: IDF is degenerate on a "
                          "single-image corpus");
    }

    std::vector<double> per_image(n_images, 0.0);
    for (int n = 1; n <= kMaxOrder; ++n) {
        // document frequency: number of images whose reference set contains
        // the gram (presence, not multiplicity)
        std::map<std::string, int> df;
        for (const auto& refs : references_per_candidate) {
            std::map<std::string, int> seen;
            for (const WordSeq& r : refs) {
                for (const auto& [gram, count] : ngram_counts(r, n)) seen[gram] = 1;
            }
            for (const auto& [gram, one] : seen) df[gram] += 1;
        }
        auto idf = [&](const std::string& gram) {
            auto it = df.find(gram);
            const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
            if (d == 0.0) return 0.0;  // gram unseen in any reference set
            return std::log(static_cast<double>(n_images) / d);
        };
        auto tfidf = [&](const WordSeq& s) {
            TfIdf v;
            for (const auto& [gram, count] : ngram_counts(s, n)) {
                v[gram] = static_cast<double>(count) * idf(gram);
            }
            return v;
        };

        for (std::size_t i = 0; i < n_images; ++i) {
            const TfIdf gc = tfidf(candidates[i]);
            double mean_cos = 0.0;
            for (const WordSeq& r : references_per_candidate[i]) {
                mean_cos += cosine(gc, tfidf(r));
            }
            mean_cos /= static_cast<double>(references_per_candidate[i].size());
            per_image[i] += mean_cos;
        }
    }
    // mean over orders, x10 scale
    for (double& v : per_image) v = 10.0 * v / kMaxOrder;
    return per_image;
}

double cider(const std::vector<WordSeq>& candidates,
             const std::vector<std::vector<WordSeq>>& references_per_candidate) {
    const std::vector<double> per_image =
        cider_per_image(candidates, references_per_candidate);
    double total = 0.0;
    for (double v : per_image) total += v;
    return total / static_cast<double>(per_image.size());
}

std::string EvalReport::summary_line() const {
    std::ostringstream os;
    os << "BLEU_4=" << corpus_bleu4 << " CIDEr=" << corpus_cider << " n=" << n_images;
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json doc;
    doc["corpus"] = {{"bleu4", corpus_bleu4},
                     {"cider", corpus_cider},
                     {"cider_scale", "10x tf-idf cosine, not a fraction"},
                     {"n_images", n_images},
                     {"n_candidate_tokens", n_candidate_tokens}};
    doc["per_image"] = nlohmann::json::array();
    for (const PerImageScore& s : per_image) {
        doc["per_image"].push_back({{"image_id", s.image_id},
                                    {"candidate", s.candidate},
                                    {"references", s.references},
                                    {"bleu4", s.bleu4},
                                    {"cider", s.cider}});
    }
    return doc.dump(2);
}

}  // namespace capforge
