#include "capforge/eval.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

int worker_count() {
    if (const char* env = std::getenv("CAPTION_FORGE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

EvalReport evaluate_corpus(const CaptionModel& model, const DatasetSplit& split, int beam_k) {
    if (split.captions.empty()) throw IntegrityError("evaluation split has no references");
    BeamConfig bc;
    bc.k = beam_k;

    const std::size_t n = split.images.size();
    std::vector<DecodeResult> decoded(n);
    const int workers = std::min<int>(worker_count(), static_cast<int>(n));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    decoded[i] = caption_entry(model, split.images[i], bc);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    EvalReport report;
    std::vector<WordSeq> candidates;
    std::vector<std::vector<WordSeq>> references;
    for (std::size_t i = 0; i < n; ++i) {
        const ImageEntry& img = split.images[i];
        PerImageScore s;
        s.image_id = img.id;
        s.candidate = tokens_to_text(model.vocab, decoded[i].tokens);
        WordSeq cand_words = tokenize(s.candidate);
        std::vector<WordSeq> refs;
        for (const CaptionRecord& c : split.captions) {
            if (c.image_id != img.id) continue;
            s.references.push_back(c.raw_text);
            refs.push_back(tokenize(c.raw_text));
        }
        if (refs.empty()) {
            throw IntegrityError("image " + std::to_string(img.id) + " has no references");
        }
        report.n_candidate_tokens += static_cast<long long>(cand_words.size());
        s.bleu4 = bleu4({cand_words}, {refs});
        candidates.push_back(std::move(cand_words));
        references.push_back(std::move(refs));
        report.per_image.push_back(std::move(s));
    }
    report.n_images = static_cast<long long>(n);
    report.corpus_bleu4 = bleu4(candidates, references);
    if (n >= 2) {
        const std::vector<double> per_image = cider_per_image(candidates, references);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            report.per_image[i].cider = per_image[i];
            total += per_image[i];
        }
        report.corpus_cider = total / static_cast<double>(n);
    }
    return report;
}

double evaluate_mean_loss(const CaptionModel& model, const DatasetSplit& split) {
    CaptionModel& m = const_cast<CaptionModel&>(model);
    double total = 0.0;
    long tokens = 0;
    // Encode each image once; every caption of the image reuses the feature.
    for (const ImageEntry& img : split.images) {
        const Tensor feature = model.encode_entry(img);
        for (const CaptionRecord& c : split.captions) {
            if (c.image_id != img.id) continue;
            if (c.tokens.empty()) throw IntegrityError("evaluate_mean_loss needs encoded captions");
            Graph g;
            NodeId f = g.ref_input(feature);
            auto dists = decoder_forward(g, m.decoder, f, c.tokens, false, nullptr, false);
            NodeId loss = sequence_nll(g, dists, c.tokens);
            total += static_cast<double>(g.value(loss).values[0]);
            tokens += static_cast<long>(c.tokens.size()) - 1;
        }
    }
    if (tokens == 0) throw IntegrityError("split has no prediction targets");
    return total / static_cast<double>(tokens);
}

}  // namespace capforge
