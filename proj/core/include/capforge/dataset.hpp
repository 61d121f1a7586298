#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "capforge/tensor.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

constexpr int kDefaultMaxSeqLen = 16;

/// One caption, START...STOP bracketed once encoded. Interior length is
/// capped (over-length captions are truncated, not rejected).
struct CaptionRecord {
    std::int64_t image_id = 0;
    std::vector<TokenId> tokens;  // empty until encoded against a vocabulary
    std::string raw_text;
};

struct ImageEntry {
    std::int64_t id = 0;
    Tensor pixels;   // (H,W,3), empty when the dataset ships features only
    Tensor feature;  // precomputed feature vector, empty when pixels present
    std::string file_name;

    bool has_pixels() const { return !pixels.values.empty(); }
    bool has_feature() const { return !feature.values.empty(); }
};

struct DatasetSplit {
    enum class Role { kTrain, kVal };
    Role role = Role::kTrain;
    std::vector<ImageEntry> images;
    std::vector<CaptionRecord> captions;

    const ImageEntry& image_by_id(std::int64_t id) const;
    int image_index_of(std::int64_t id) const;
    std::vector<std::string> raw_texts() const;

    void rebuild_index();

private:
    std::unordered_map<std::int64_t, int> index_;
};

std::vector<TokenId> encode_caption(const std::string& text, const Vocabulary& vocab,
                                    int max_seq_len = kDefaultMaxSeqLen);

/// Encode every caption in place against `vocab`.
void encode_split(DatasetSplit& split, const Vocabulary& vocab,
                  int max_seq_len = kDefaultMaxSeqLen);

/// Load a caption annotation file (see README for the schema: `images` with
/// id + file_name or inline feature, `annotations` with image_id + caption).
/// Pixel grids referenced by file_name are read relative to the annotation
/// file. When `vocab` is null, captions stay unencoded.
DatasetSplit load_annotations(const std::string& path, const Vocabulary* vocab = nullptr,
                              int max_seq_len = kDefaultMaxSeqLen);

/// Write a split back out in the same schema; pixel grids go to sibling
/// `img_<id>.rgb` files.
void save_annotations(const DatasetSplit& split, const std::string& path);

// Raw float RGB grid files used for synthetic images and video frames.
void write_image_grid(const std::string& path, const Tensor& image);
Tensor read_image_grid(const std::string& path);

/// Pair one computed image feature with each of the image's captions; the
/// feature is shared, never copied per caption.
std::vector<std::pair<const Tensor*, const CaptionRecord*>> expand_features(
    const Tensor& image_feature, const std::vector<const CaptionRecord*>& captions);

/// One training pair after feature expansion. `image_index` points into the
/// owning split so the trainer can dedupe encoder work per image.
struct TrainPair {
    int image_index = 0;
    const CaptionRecord* caption = nullptr;
};

struct Batch {
    std::vector<TrainPair> pairs;
    std::vector<std::vector<TokenId>> tokens;  // B rows, STOP-padded to seq_len
    Tensor mask;                               // B x (seq_len-1), 1 on real targets
    int seq_len = 0;
};

/// Deterministic per-seed shuffle, then fixed-size chunks; the final partial
/// batch is kept.
std::vector<Batch> make_batches(const std::vector<TrainPair>& pairs, int batch_size,
                                std::uint64_t rng_seed);

/// All (image, caption) pairs of a split in caption order.
std::vector<TrainPair> all_pairs(const DatasetSplit& split);

}  // namespace capforge
