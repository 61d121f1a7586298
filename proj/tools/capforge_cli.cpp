// caption-forge command line: dataset generation, training, captioning,
// evaluation, video-stream captioning and loss plotting.
//
// Exit codes: 0 success, 2 bad usage or configuration, 3 file or format
// problem, 4 numeric or data-integrity failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capforge/checkpoint.hpp"
#include "capforge/errors.hpp"
#include "capforge/eval.hpp"
#include "capforge/infer.hpp"
#include "capforge/plot.hpp"
#include "capforge/synthetic.hpp"
#include "capforge/trainer.hpp"
#include "capforge/video.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace capforge;

namespace {

struct TrainFlags {
    std::string data, out_checkpoint, resume, transfer_from, config_file, loss_log;
    std::string encoder = "plain_conv";
    int width = 16;
    int hidden = 512;
    int embed = 512;
    int layers = 1;
    bool full_finetune = false;
    TrainConfig cfg;
};

// Config file fills in anything the command line left at its default;
// explicitly passed flags win.
void apply_config_file(TrainFlags& f, const CLI::App& cmd) {
    if (f.config_file.empty()) return;
    std::ifstream in(f.config_file);
    if (!in) throw FileError("cannot open config " + f.config_file);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config " + f.config_file + ": " + e.what());
    }
    auto get = [&](const char* key, const char* flag, auto& slot) {
        if (j.contains(key) && cmd.count(flag) == 0) {
            slot = j.at(key).get<std::decay_t<decltype(slot)>>();
        }
    };
    get("lr0", "--lr", f.cfg.lr0);
    get("decay_factor", "--decay-factor", f.cfg.decay_factor);
    get("decay_every", "--decay-every", f.cfg.decay_every);
    get("batch", "--batch", f.cfg.batch);
    get("clip", "--clip", f.cfg.clip);
    get("max_seq_len", "--max-seq-len", f.cfg.max_seq_len);
    get("dropout", "--dropout", f.cfg.dropout);
    get("beam", "--beam", f.cfg.beam);
    get("max_iters", "--iters", f.cfg.max_iters);
    get("seed", "--seed", f.cfg.seed);
    get("checkpoint_every", "--checkpoint-every", f.cfg.checkpoint_every);
    get("target_mean_loss", "--target-loss", f.cfg.target_mean_loss);
    get("encoder", "--encoder", f.encoder);
    get("width", "--width", f.width);
    get("hidden", "--hidden", f.hidden);
    get("embed", "--embed", f.embed);
    get("layers", "--layers", f.layers);
    get("full_finetune", "--full-finetune", f.full_finetune);
}

json train_config_json(const TrainFlags& f) {
    return {{"lr0", f.cfg.lr0},
            {"decay_factor", f.cfg.decay_factor},
            {"decay_every", f.cfg.decay_every},
            {"batch", f.cfg.batch},
            {"clip", f.cfg.clip},
            {"max_seq_len", f.cfg.max_seq_len},
            {"dropout", f.cfg.dropout},
            {"beam", f.cfg.beam},
            {"max_iters", f.cfg.max_iters},
            {"seed", f.cfg.seed},
            {"checkpoint_every", f.cfg.checkpoint_every},
            {"target_mean_loss", f.cfg.target_mean_loss},
            {"encoder", f.encoder},
            {"width", f.width},
            {"hidden", f.hidden},
            {"embed", f.embed},
            {"layers", f.layers},
            {"full_finetune", f.full_finetune}};
}

ModelConfig model_config_from_flags(const TrainFlags& f) {
    ModelConfig mc;
    const EncoderKind kind = encoder_kind_from_name(f.encoder);
    switch (kind) {
        case EncoderKind::kPassthrough:
            mc.encoder = EncoderSpec::passthrough(f.embed);
            break;
        case EncoderKind::kPlainConv:
            mc.encoder = EncoderSpec::plain_desk(f.embed, f.width);
            break;
        case EncoderKind::kResidualConv:
            mc.encoder = EncoderSpec::residual_desk(f.embed, f.width);
            break;
    }
    mc.encoder.finetune_top_only = !f.full_finetune;
    mc.decoder = DecoderConfig{f.layers, f.hidden, f.embed, f.cfg.dropout};
    mc.validate();
    return mc;
}

int run_gen_data(int n, std::uint64_t seed, const std::string& out) {
    SyntheticDataset ds = gen_synthetic(n, seed);
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out).parent_path());
    save_annotations(ds.split, out);
    std::cout << "wrote " << ds.split.images.size() << " images, " << ds.split.captions.size()
              << " captions to " << out << "\n";
    return 0;
}

int run_train(TrainFlags f, const CLI::App& cmd) {
    apply_config_file(f, cmd);
    std::cout << "resolved config: " << train_config_json(f).dump() << "\n";

    DatasetSplit raw = load_annotations(f.data);

    if (!f.transfer_from.empty()) {
        TrainResult result;
        CaptionModel model =
            transfer_train(f.transfer_from, raw, f.cfg, f.out_checkpoint, &result);
        if (!f.loss_log.empty()) write_loss_log(result.history, f.loss_log);
        std::cout << "transfer-trained " << result.iterations_run << " iterations, final loss "
                  << (result.history.empty() ? 0.0f : result.history.back().loss) << "\n";
        return 0;
    }

    CaptionModel model;
    std::vector<LossRecord> prior;
    long start_iteration = 0;
    if (!f.resume.empty()) {
        CheckpointData ckpt = load_checkpoint(f.resume);
        model = std::move(ckpt.model);
        prior = std::move(ckpt.history);
        start_iteration = ckpt.iteration;
    } else {
        Vocabulary vocab = Vocabulary::build(raw.raw_texts());
        model = CaptionModel::init(model_config_from_flags(f), std::move(vocab), f.cfg.seed);
    }
    encode_split(raw, model.vocab, f.cfg.max_seq_len);
    raw.rebuild_index();

    TrainResult result = train(model, raw, f.cfg, f.out_checkpoint, std::move(prior),
                               start_iteration);
    if (!f.loss_log.empty()) write_loss_log(result.history, f.loss_log);
    std::cout << "trained " << result.iterations_run << " iterations, final loss "
              << (result.history.empty() ? 0.0f : result.history.back().loss) << "\n";
    return 0;
}

Tensor read_feature_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open feature file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("feature file " + path + ": " + e.what());
    }
    std::vector<float> v = j.get<std::vector<float>>();
    const int dim = static_cast<int>(v.size());
    return Tensor({dim}, std::move(v));
}

int run_caption(const std::string& checkpoint, const std::string& image,
                const std::string& feature, int beam) {
    CheckpointData ckpt = load_checkpoint(checkpoint);
    ImageEntry entry;
    if (!image.empty()) {
        entry.pixels = read_image_grid(image);
    } else {
        entry.feature = read_feature_file(feature);
    }
    BeamConfig bc;
    bc.k = beam;
    const DecodeResult r = caption_entry(ckpt.model, entry, bc);
    std::cout << tokens_to_text(ckpt.model.vocab, r.tokens) << "\n";
    std::cerr << "logprob=" << r.logprob << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, int beam,
             const std::string& report_out) {
    CheckpointData ckpt = load_checkpoint(checkpoint);
    DatasetSplit split = load_annotations(data);
    encode_split(split, ckpt.model.vocab, ckpt.train_cfg.max_seq_len);
    split.rebuild_index();
    EvalReport report = evaluate_corpus(ckpt.model, split, beam);
    if (!report_out.empty()) {
        std::ofstream out(report_out);
        if (!out) throw FileError("cannot open report " + report_out + " for writing");
        out << report.to_json() << "\n";
    }
    std::cout << report.summary_line() << "\n";
    return 0;
}

int run_video(const std::string& checkpoint, const std::string& frames_dir,
              const std::string& mode, double delta, double alpha, int beam) {
    CheckpointData ckpt = load_checkpoint(checkpoint);
    std::vector<fs::path> files;
    if (!fs::is_directory(frames_dir)) {
        throw FileError("frames path is not a directory: " + frames_dir);
    }
    for (const auto& e : fs::directory_iterator(frames_dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IntegrityError("no frame files in " + frames_dir);

    std::vector<Tensor> features;
    for (const fs::path& p : files) {
        ImageEntry entry;
        entry.pixels = read_image_grid(p.string());
        features.push_back(ckpt.model.encode_entry(entry));
    }

    StabilizerConfig cfg;
    cfg.mode = stabilize_mode_from_name(mode);
    cfg.margin = delta;
    cfg.alpha = static_cast<float>(alpha);
    BeamConfig bc;
    bc.k = beam;
    ModelFrameCaptioner captioner(ckpt.model, bc);
    StreamResult r = caption_stream(features, captioner, cfg);
    std::cout << render_stream(r, ckpt.model.vocab);
    std::cout << "switches=" << r.switch_count << "\n";
    return 0;
}

int run_plot(const std::string& log, const std::string& out_svg) {
    write_loss_curve_svg(read_loss_log(log), out_svg);
    std::cout << "wrote " << out_svg << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"caption-forge: train and run a CNN+LSTM image captioner"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic captioned corpus");
    int gen_n = 100;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of images")->capture_default_str();
    gen->add_option("--seed", gen_seed, "rng seed")->capture_default_str();
    gen->add_option("--out", gen_out, "annotation file to write")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a captioning model");
    TrainFlags tf;
    tr->add_option("--data", tf.data, "annotation file")->required();
    tr->add_option("--out-checkpoint", tf.out_checkpoint, "checkpoint to write")->required();
    auto* opt_resume = tr->add_option("--resume", tf.resume, "checkpoint to continue from");
    auto* opt_transfer =
        tr->add_option("--transfer-from", tf.transfer_from,
                       "checkpoint to transfer-learn from (fresh schedule, kept vocabulary)");
    opt_resume->excludes(opt_transfer);
    tr->add_option("--config", tf.config_file, "JSON config file (flags still override)");
    tr->add_option("--lr", tf.cfg.lr0, "initial learning rate")->capture_default_str();
    tr->add_option("--decay-factor", tf.cfg.decay_factor, "LR decay factor")
        ->capture_default_str();
    tr->add_option("--decay-every", tf.cfg.decay_every, "iterations between LR decays")
        ->capture_default_str();
    tr->add_option("--batch", tf.cfg.batch, "batch size")->capture_default_str();
    tr->add_option("--clip", tf.cfg.clip, "gradient element clamp")->capture_default_str();
    tr->add_option("--max-seq-len", tf.cfg.max_seq_len, "max interior caption length")
        ->capture_default_str();
    tr->add_option("--dropout", tf.cfg.dropout, "dropout rate")->capture_default_str();
    tr->add_option("--beam", tf.cfg.beam, "beam width used at evaluation")
        ->capture_default_str();
    tr->add_option("--iters", tf.cfg.max_iters, "training iterations")->capture_default_str();
    tr->add_option("--seed", tf.cfg.seed, "rng seed")->capture_default_str();
    tr->add_option("--checkpoint-every", tf.cfg.checkpoint_every, "checkpoint cadence")
        ->capture_default_str();
    tr->add_option("--target-loss", tf.cfg.target_mean_loss,
                   "stop early below this mean per-token loss (0 disables)")
        ->capture_default_str();
    tr->add_option("--encoder", tf.encoder, "passthrough | plain_conv | residual_conv")
        ->capture_default_str();
    tr->add_option("--width", tf.width, "conv channel width")->capture_default_str();
    tr->add_option("--hidden", tf.hidden, "LSTM hidden size")->capture_default_str();
    tr->add_option("--embed", tf.embed, "embedding size")->capture_default_str();
    tr->add_option("--layers", tf.layers, "decoder depth (1, 2 or 4)")->capture_default_str();
    tr->add_flag("--full-finetune", tf.full_finetune,
                 "train the whole conv stack instead of only the projection");
    tr->add_option("--loss-log", tf.loss_log, "CSV loss log to write");

    // caption
    auto* cap = app.add_subcommand("caption", "caption one image");
    std::string cap_ckpt, cap_image, cap_feature;
    int cap_beam = 20;
    cap->add_option("--checkpoint", cap_ckpt, "model checkpoint")->required();
    auto* opt_img = cap->add_option("--image", cap_image, "image grid file (.rgb)");
    auto* opt_feat = cap->add_option("--feature", cap_feature, "JSON feature vector file");
    opt_img->excludes(opt_feat);
    cap->add_option("--beam", cap_beam, "beam width")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "score a model against a corpus");
    std::string ev_ckpt, ev_data, ev_report;
    int ev_beam = 20;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "annotation file")->required();
    ev->add_option("--beam", ev_beam, "beam width")->capture_default_str();
    ev->add_option("--report-out", ev_report, "JSON report to write");

    // video
    auto* vid = app.add_subcommand("video", "caption a frame stream with stabilization");
    std::string vid_ckpt, vid_frames, vid_mode = "hysteresis";
    double vid_delta = 1.0, vid_alpha = 0.3;
    int vid_beam = 20;
    vid->add_option("--checkpoint", vid_ckpt, "model checkpoint")->required();
    vid->add_option("--frames", vid_frames, "directory of frame grid files")->required();
    vid->add_option("--mode", vid_mode, "raw | hysteresis | hysteresis+ema")
        ->capture_default_str();
    vid->add_option("--delta", vid_delta, "log-prob switch margin in nats")
        ->capture_default_str();
    vid->add_option("--alpha", vid_alpha, "feature EMA weight")->capture_default_str();
    vid->add_option("--beam", vid_beam, "beam width")->capture_default_str();

    // plot-loss
    auto* pl = app.add_subcommand("plot-loss", "render a loss log as SVG");
    std::string pl_log, pl_svg;
    pl->add_option("--log", pl_log, "CSV loss log")->required();
    pl->add_option("--out-svg", pl_svg, "SVG file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_n, gen_seed, gen_out);
        if (tr->parsed()) return run_train(tf, *tr);
        if (cap->parsed()) {
            if (cap_image.empty() == cap_feature.empty()) {
                throw ConfigError("caption needs exactly one of --image / --feature");
            }
            return run_caption(cap_ckpt, cap_image, cap_feature, cap_beam);
        }
        if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_beam, ev_report);
        if (vid->parsed())
            return run_video(vid_ckpt, vid_frames, vid_mode, vid_delta, vid_alpha, vid_beam);
        if (pl->parsed()) return run_plot(pl_log, pl_svg);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: dimension: " << e.what() << "\n";
        return 2;
    } catch (const FileError& e) {
        std::cerr << "error: file: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
        return 3;
    } catch (const IntegrityError& e) {
        std::cerr << "error: integrity: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
