#include "capforge/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "capforge/errors.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;

const ImageEntry& DatasetSplit::image_by_id(std::int64_t id) const {
    return images[static_cast<std::size_t>(image_index_of(id))];
}

int DatasetSplit::image_index_of(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        throw IntegrityError("caption references unknown image id " + std::to_string(id));
    }
    return it->second;
}

std::vector<std::string> DatasetSplit::raw_texts() const {
    std::vector<std::string> out;
    out.reserve(captions.size());
    for (const auto& c : captions) out.push_back(c.raw_text);
    return out;
}

void DatasetSplit::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto [it, fresh] = index_.emplace(images[i].id, static_cast<int>(i));
        if (!fresh) throw IntegrityError("duplicate image id " + std::to_string(images[i].id));
    }
}

std::vector<TokenId> encode_caption(const std::string& text, const Vocabulary& vocab,
                                    int max_seq_len) {
    std::vector<std::string> words = tokenize(text);
    if (static_cast<int>(words.size()) > max_seq_len) {
        words.resize(static_cast<std::size_t>(max_seq_len));
    }
    std::vector<TokenId> out;
    out.reserve(words.size() + 2);
    out.push_back(Vocabulary::kStart);
    for (const std::string& w : words) out.push_back(vocab.encode(w));
    out.push_back(Vocabulary::kStop);
    return out;
}

void encode_split(DatasetSplit& split, const Vocabulary& vocab, int max_seq_len) {
    for (CaptionRecord& c : split.captions) {
        c.tokens = encode_caption(c.raw_text, vocab, max_seq_len);
    }
}

namespace {

constexpr char kGridMagic[8] = {'C', 'F', 'I', 'M', 'G', '0', '0', '1'};

void validate_split(DatasetSplit& split) {
    if (split.images.empty()) throw IntegrityError("annotation file contains no images");
    if (split.captions.empty()) throw IntegrityError("annotation file contains no captions");
    split.rebuild_index();
    std::vector<int> caption_counts(split.images.size(), 0);
    for (const CaptionRecord& c : split.captions) {
        ++caption_counts[static_cast<std::size_t>(split.image_index_of(c.image_id))];
    }
    for (std::size_t i = 0; i < caption_counts.size(); ++i) {
        if (caption_counts[i] == 0) {
            throw IntegrityError("image id " + std::to_string(split.images[i].id) +
                                 " has no captions");
        }
    }
}

}  // namespace

void write_image_grid(const std::string& path, const Tensor& image) {
    if (image.rank() != 3) {
        throw DimensionError("image grid must be (H,W,C), got " + image.shape_str());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open " + path + " for writing");
    f.write(kGridMagic, sizeof(kGridMagic));
    std::int32_t dims[3] = {image.dim(0), image.dim(1), image.dim(2)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(image.values.data()),
            static_cast<std::streamsize>(image.numel() * sizeof(float)));
    if (!f) throw FileError("short write to " + path);
}

Tensor read_image_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open image grid file " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) {
        throw ParseError("bad image grid magic in " + path);
    }
    std::int32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
        throw ParseError("bad image grid header in " + path);
    }
    Tensor t = Tensor::zeros({dims[0], dims[1], dims[2]});
    f.read(reinterpret_cast<char*>(t.values.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw ParseError("truncated image grid file " + path);
    return t;
}

DatasetSplit load_annotations(const std::string& path, const Vocabulary* vocab, int max_seq_len) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open annotation file " + path);
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError("annotation file " + path + ": " + e.what());
    }
    DatasetSplit split;
    const fs::path base = fs::path(path).parent_path();
    try {
        for (const json& jimg : doc.at("images")) {
            ImageEntry e;
            e.id = jimg.at("id").get<std::int64_t>();
            if (jimg.contains("feature")) {
                std::vector<float> v = jimg.at("feature").get<std::vector<float>>();
                if (v.empty()) throw ParseError("image " + std::to_string(e.id) + ": empty feature");
                const int dim = static_cast<int>(v.size());
                e.feature = Tensor({dim}, std::move(v));
            } else if (jimg.contains("file_name")) {
                e.file_name = jimg.at("file_name").get<std::string>();
                e.pixels = read_image_grid((base / e.file_name).string());
            } else {
                throw ParseError("image " + std::to_string(e.id) +
                                 ": needs either file_name or feature");
            }
            split.images.push_back(std::move(e));
        }
        for (const json& jann : doc.at("annotations")) {
            CaptionRecord c;
            c.image_id = jann.at("image_id").get<std::int64_t>();
            c.raw_text = jann.at("caption").get<std::string>();
            split.captions.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ParseError("annotation file " + path + ": " + e.what());
    }
    validate_split(split);
    if (vocab) encode_split(split, *vocab, max_seq_len);
    return split;
}

void save_annotations(const DatasetSplit& split, const std::string& path) {
    const fs::path base = fs::path(path).parent_path();
    json doc;
    doc["images"] = json::array();
    for (const ImageEntry& e : split.images) {
        json jimg;
        jimg["id"] = e.id;
        if (e.has_pixels()) {
            const std::string name = "img_" + std::to_string(e.id) + ".rgb";
            write_image_grid((base / name).string(), e.pixels);
            jimg["file_name"] = name;
        } else {
            jimg["feature"] = e.feature.values;
        }
        doc["images"].push_back(std::move(jimg));
    }
    doc["annotations"] = json::array();
    for (const CaptionRecord& c : split.captions) {
        doc["annotations"].push_back({{"image_id", c.image_id}, {"caption", c.raw_text}});
    }
    std::ofstream f(path);
    if (!f) throw FileError("cannot open " + path + " for writing");
    f << doc.dump(2) << "\n";
}

std::vector<std::pair<const Tensor*, const CaptionRecord*>> expand_features(
    const Tensor& image_feature, const std::vector<const CaptionRecord*>& captions) {
    if (captions.empty()) throw IntegrityError("expand_features called with zero captions");
    std::vector<std::pair<const Tensor*, const CaptionRecord*>> out;
    out.reserve(captions.size());
    for (const CaptionRecord* c : captions) out.emplace_back(&image_feature, c);
    return out;
}

std::vector<TrainPair> all_pairs(const DatasetSplit& split) {
    std::vector<TrainPair> out;
    out.reserve(split.captions.size());
    for (const CaptionRecord& c : split.captions) {
        out.push_back({split.image_index_of(c.image_id), &c});
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<TrainPair>& pairs, int batch_size,
                                std::uint64_t rng_seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<TrainPair> shuffled = pairs;
    Rng rng(rng_seed);
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        const std::size_t j = rng.next_u64() % i;
        std::swap(shuffled[i - 1], shuffled[j]);
    }
    std::vector<Batch> out;
    for (std::size_t start = 0; start < shuffled.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(shuffled.size(), start + static_cast<std::size_t>(batch_size));
        Batch b;
        b.pairs.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(start),
                       shuffled.begin() + static_cast<std::ptrdiff_t>(end));
        int t = 0;
        for (const TrainPair& p : b.pairs) {
            if (p.caption->tokens.empty()) {
                throw IntegrityError("make_batches requires encoded captions");
            }
            t = std::max(t, static_cast<int>(p.caption->tokens.size()));
        }
        b.seq_len = t;
        b.mask = Tensor::zeros({static_cast<int>(b.pairs.size()), t - 1});
        for (std::size_t r = 0; r < b.pairs.size(); ++r) {
            std::vector<TokenId> row = b.pairs[r].caption->tokens;
            const int real_targets = static_cast<int>(row.size()) - 1;
            row.resize(static_cast<std::size_t>(t), Vocabulary::kStop);
            b.tokens.push_back(std::move(row));
            for (int j = 0; j < real_targets; ++j) {
                b.mask.values[r * static_cast<std::size_t>(t - 1) + static_cast<std::size_t>(j)] =
                    1.0f;
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace capforge
