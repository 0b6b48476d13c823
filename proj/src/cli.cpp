#include "kpmask/cli.hpp"

#include <cstdlib>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kpmask/animator.hpp"
#include "kpmask/checkpoint.hpp"
#include "kpmask/error.hpp"
#include "kpmask/evaluator.hpp"

namespace kpmask {

namespace fs = std::filesystem;

std::vector<fs::path> export_masks(const fs::path& frame_path, const fs::path& detector_path, const fs::path& out_dir) {
    const CheckpointFile file = read_checkpoint_file(detector_path);
    const int side = KeyValueConfig::parse(file.config_text).get_int("generator.input_side", 256);
    const auto detector = load_pretrained(detector_path, 0);
    const Frame frame = preprocess(load_video(frame_path).front(), side);

    const HeatmapStack stack = detector->predict_heatmaps(frame);
    const int k = stack.num_keypoints();
    const int g = stack.channels.shape().h;
    const KeypointSet kps = extract_keypoints(spatial_softmax(stack, detector->config().temperature));
    const GaussianStack gaussians = render_gaussians(kps, detector->config().variance, g, g);

    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, const Tensor& image) {
        written.push_back(out_dir / name);
        write_png(written.back(), image);
    };
    for (int c = 0; c < k; ++c) emit(fmt::format("channel_{:02d}.png", c), normalize_for_display(stack.channels.channel(0, c)));
    emit("heatmap_mask.png", heatmap_mask(stack).map);
    for (int c = 0; c < k; ++c) emit(fmt::format("gaussian_{:02d}.png", c), gaussians.channels.channel(0, c));
    emit("circles_mask.png", circles_mask(kps, detector->config().variance, g, g).map);
    write_keypoints_csv(out_dir / "keypoints.csv", {kps});
    return written;
}

namespace {

struct Globals {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int verbose = 0;
    bool quiet = false;
};

KeyValueConfig effective_config(const Globals& g) {
    KeyValueConfig kv;
    std::string path = g.config_path;
    if (path.empty())
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    if (!path.empty()) kv = KeyValueConfig::load(path);
    for (const std::string& o : g.overrides) kv.apply_override(o);
    if (g.seed) kv.set("train.seed", std::to_string(*g.seed));
    return kv;
}

void echo_config(const KeyValueConfig& kv) {
    spdlog::info("effective configuration:");
    const std::string text = kv.to_text();
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t end = text.find('\n', start);
        spdlog::info("  {}", text.substr(start, end - start));
        if (end == std::string::npos) break;
        start = end + 1;
    }
}

int run_make_synthetic(const fs::path& out_root, int videos, int frames, int side, double eval_ratio,
                       std::uint64_t seed, std::ostream& out) {
    SyntheticDataset synth = make_synthetic_dataset(videos, frames, side, seed);
    std::vector<std::string> ids;
    for (const Video& v : synth.dataset.videos) ids.push_back(v.id);
    const std::vector<Split> splits = assign_splits(ids, eval_ratio);
    VideoDataset train{out_root, Split::Train, {}};
    VideoDataset eval{out_root, Split::Eval, {}};
    for (std::size_t i = 0; i < ids.size(); ++i)
        (splits[i] == Split::Train ? train : eval).videos.push_back(synth.dataset.videos[i]);
    fs::create_directories(out_root / "train");
    fs::create_directories(out_root / "eval");
    write_dataset(train, out_root);
    write_dataset(eval, out_root);
    write_tracks_csv(out_root / "tracks.csv", synth.tracks);
    out << fmt::format("wrote {} train and {} eval videos to {}\n", train.videos.size(), eval.videos.size(),
                       out_root.string());
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Keypoint-mask image animation: training, animation and evaluation", "kpmask"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, fmt::format("key = value config file (default: ${})", kConfigEnv));
    app.add_option("--set", g.overrides, "override a config key, key=value (repeatable)");
    app.add_option("--seed", g.seed, "random seed (train.seed)");
    app.add_flag("-v,--verbose", g.verbose, "more logging (repeatable)");
    app.add_flag("-q,--quiet", g.quiet, "warnings and errors only");

    auto* synth = app.add_subcommand("make-synthetic", "write the synthetic toy dataset");
    std::string synth_out;
    int synth_videos = 1;
    int synth_frames = 8;
    int synth_side = 64;
    double synth_eval = 0.0;
    synth->add_option("--out", synth_out, "dataset root")->required();
    synth->add_option("--videos", synth_videos, "number of videos")->capture_default_str();
    synth->add_option("--frames", synth_frames, "frames per video")->capture_default_str();
    synth->add_option("--side", synth_side, "frame side in pixels")->capture_default_str();
    synth->add_option("--eval-ratio", synth_eval, "fraction of videos held out for eval")->capture_default_str();

    auto* train = app.add_subcommand("train", "train the generator (and detector when finetuning)");
    std::string train_data;
    std::string train_out;
    std::optional<int> train_steps;
    std::string train_resume;
    train->add_option("--data", train_data, "dataset root (train.data_root)");
    train->add_option("--out", train_out, "output directory (train.output_dir)");
    train->add_option("--steps", train_steps, "total steps (train.steps)");
    train->add_option("--resume", train_resume, "continue from a training checkpoint");

    auto* anim = app.add_subcommand("animate", "animate a source image with a driving video");
    AnimationJob job;
    std::string anim_mode = "absolute";
    std::string anim_mask;
    std::optional<double> anim_fps;
    anim->add_option("--source", job.source_path, "source image")->required();
    anim->add_option("--driving", job.driving_path, "driving video (directory of frames or container)")->required();
    anim->add_option("--ckpt", job.checkpoint_path, "training checkpoint")->required();
    anim->add_option("--mode", anim_mode, "absolute|relative")->capture_default_str();
    anim->add_option("--mask", anim_mask, "heatmap|circles (default: as trained)");
    anim->add_option("--out", job.output_dir, "output directory")->required();
    anim->add_option("--fps", anim_fps, "frame rate hint for encoding");
    anim->add_flag("--contact-sheet", job.contact_sheet, "also write contact_sheet.png");

    auto* eval = app.add_subcommand("evaluate", "reconstruct held-out videos and report AKD, AED and L1");
    std::string eval_ckpt;
    std::string eval_data;
    std::string eval_split = "eval";
    std::string eval_poses;
    std::string eval_emb;
    std::string eval_out;
    std::string eval_generated;
    eval->add_option("--ckpt", eval_ckpt, "training checkpoint")->required();
    eval->add_option("--data", eval_data, "dataset root")->required();
    eval->add_option("--split", eval_split, "eval|train")->capture_default_str();
    eval->add_option("--poses", eval_poses, "pose files: <dir>/{generated,truth}/<video>.csv");
    eval->add_option("--embeddings", eval_emb, "embedding files: <dir>/{generated,truth}/<video>.csv");
    eval->add_option("--generated", eval_generated, "also write reconstructed frames here");
    eval->add_option("--out", eval_out, "report CSV")->required();

    auto* exp = app.add_subcommand("export-masks", "render heatmaps, keypoint Gaussians and both masks for one frame");
    std::string exp_frame;
    std::string exp_detector;
    std::string exp_out;
    exp->add_option("--frame", exp_frame, "input image")->required();
    exp->add_option("--detector", exp_detector, "detector or training checkpoint")->required();
    exp->add_option("--out", exp_out, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << fmt::format("ERROR UsageError: {}\n", e.what());
        return 2;
    }

    spdlog::set_level(g.quiet ? spdlog::level::warn : g.verbose > 0 ? spdlog::level::debug : spdlog::level::info);

    try {
        KeyValueConfig kv = effective_config(g);
        if (synth->parsed()) {
            const std::uint64_t seed = static_cast<std::uint64_t>(kv.get_int64("train.seed", 0));
            return run_make_synthetic(synth_out, synth_videos, synth_frames, synth_side, synth_eval, seed, out);
        }
        if (train->parsed()) {
            if (!train_data.empty()) kv.set("train.data_root", train_data);
            if (!train_out.empty()) kv.set("train.output_dir", train_out);
            if (train_steps) kv.set("train.steps", std::to_string(*train_steps));
            std::unique_ptr<TrainState> state;
            if (!train_resume.empty()) {
                state = load_checkpoint(train_resume);
                // Only run-control keys may change on resume.
                TrainConfig& t = state->train;
                if (train_steps || kv.contains("train.steps")) t.steps = kv.get_int("train.steps", t.steps);
                if (kv.contains("train.output_dir")) t.output_dir = kv.get_string("train.output_dir", "");
                if (kv.contains("train.data_root")) t.data_root = kv.get_string("train.data_root", "");
                if (kv.contains("train.checkpoint_every"))
                    t.checkpoint_every = kv.get_int("train.checkpoint_every", t.checkpoint_every);
                spdlog::info("resuming from '{}' at step {}", train_resume, state->step);
            } else {
                ModelConfig model;
                model.read(kv);
                TrainConfig tc;
                tc.read(kv);
                state = make_train_state(model, tc);
            }
            KeyValueConfig shown;
            state->models.config.write(shown);
            state->train.write(shown);
            echo_config(shown);
            if (state->train.data_root.empty()) fail(ErrorCategory::UsageError, "no dataset: pass --data or set train.data_root");
            const VideoDataset data =
                load_dataset(state->train.data_root, Split::Train, state->models.config.generator.input_side);
            const std::uint64_t total = static_cast<std::uint64_t>(state->train.steps);
            const std::uint64_t every = std::max<std::uint64_t>(1, total / 20);
            const fs::path last = fit(*state, data, {[&](std::uint64_t s, double loss) {
                                          if (s % every == 0 || s == total) spdlog::info("step {} loss {:.6f}", s, loss);
                                      }});
            out << last.string() << '\n';
            return 0;
        }
        if (anim->parsed()) {
            job.mode = parse_transfer_mode(anim_mode);
            if (!anim_mask.empty()) job.mask_variant = parse_mask_variant(anim_mask);
            job.fps = anim_fps;
            const AnimationResult r = animate(job);
            out << fmt::format("wrote {} frames to {}\n", r.frames.size(), job.output_dir.string());
            return 0;
        }
        if (eval->parsed()) {
            const Models models = load_models(eval_ckpt);
            const Split split = eval_split == "train" ? Split::Train : eval_split == "eval" ? Split::Eval
                                : throw Error(ErrorCategory::UsageError, "--split must be eval or train");
            const VideoDataset data = load_dataset(eval_data, split, models.config.generator.input_side);
            MetricSources sources;
            if (!eval_poses.empty()) sources.poses = eval_poses;
            if (!eval_emb.empty()) sources.embeddings = eval_emb;
            const MetricReport report = evaluate_reconstruction(data, models, sources, eval_generated);
            report.write_csv(eval_out);
            out << report.table();
            return 0;
        }
        if (exp->parsed()) {
            const auto files = export_masks(exp_frame, exp_detector, exp_out);
            out << fmt::format("wrote {} images to {}\n", files.size(), exp_out);
            return 0;
        }
    } catch (const Error& e) {
        err << fmt::format("ERROR {}: {}\n", category_name(e.category()), e.what());
        return e.category() == ErrorCategory::UsageError ? 2 : 1;
    } catch (const fs::filesystem_error& e) {
        err << fmt::format("ERROR IoError: {}\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace kpmask
