#pragma once

#include <map>
#include <string>
#include <vector>

namespace capforge {

using WordSeq = std::vector<std::string>;

/// Contiguous n-grams with multiplicity; keys are tokens joined with '\x1f'.
std::map<std::string, int> ngram_counts(const WordSeq& tokens, int n);

/// Corpus-level BLEU_4: clipped matches and totals summed over the corpus per
/// order, geometric mean of p_1..p_4, brevity penalty exp(min(0, 1 - r/c))
/// with r accumulated from closest-length references. Zero if any corpus
/// p_n is zero.
double bleu4(const std::vector<WordSeq>& candidates,
             const std::vector<std::vector<WordSeq>>& references_per_candidate);

/// Plain consensus TF-IDF score: per order n, cosine between the candidate's
/// and each reference's IDF-weighted n-gram vectors (IDF = log(#images /
/// #images whose references contain the gram)), averaged over references and
/// orders 1..4, scaled by 10. Needs >= 2 images for a non-degenerate IDF.
/// Note the x10 scale: scores are not capped at 1.
double cider(const std::vector<WordSeq>& candidates,
             const std::vector<std::vector<WordSeq>>& references_per_candidate);

/// Per-image CIDEr values (IDF still computed over the whole corpus); the
/// corpus score is their mean.
std::vector<double> cider_per_image(
    const std::vector<WordSeq>& candidates,
    const std::vector<std::vector<WordSeq>>& references_per_candidate);

/// Per-image values of both metrics (BLEU here is the single-image corpus
/// computation; the corpus score is not their mean).
struct PerImageScore {
    long long image_id = 0;
    std::string candidate;
    std::vector<std::string> references;
    double bleu4 = 0.0;
    double cider = 0.0;
};

struct EvalReport {
    double corpus_bleu4 = 0.0;
    double corpus_cider = 0.0;  // 10x TF-IDF cosine scale, may exceed 1
    std::vector<PerImageScore> per_image;
    long long n_images = 0;
    long long n_candidate_tokens = 0;

    std::string summary_line() const;  // "BLEU_4=<v> CIDEr=<v> n=<images>"
    std::string to_json() const;
};

}  // namespace capforge
