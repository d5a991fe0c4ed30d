#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mcflow/codec.hpp"
#include "mcflow/data.hpp"
#include "mcflow/dsr.hpp"
#include "mcflow/error.hpp"
#include "mcflow/mcrope.hpp"
#include "mcflow/metrics.hpp"
#include "mcflow/params.hpp"
#include "mcflow/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcflow::cli {
namespace {

constexpr std::uint64_t kInitStream = 1ull << 40;
constexpr std::uint64_t kDegradeStream = 2ull << 40;
constexpr const char* kManifest = "manifest.json";

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) throw Error("cannot write " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(what + ": " + e.what());
    }
}

std::size_t get_count(const json& j, const std::string& key, const std::string& what) {
    if (!j.is_number_unsigned()) throw Error(what + ": \"" + key + "\" must be a non-negative integer");
    return j.get<std::size_t>();
}

// Corpus written by make-data.
struct CorpusEntry {
    std::string name;
    Video video;
    KeyframeRequest request;
    std::size_t scenario = 0;
};

std::vector<CorpusEntry> load_corpus(const fs::path& dir) {
    const json m = parse_json(read_text(dir / kManifest), (dir / kManifest).string());
    std::vector<CorpusEntry> out;
    try {
        for (const auto& v : m.at("videos")) {
            CorpusEntry e;
            v.at("name").get_to(e.name);
            e.video = load_video(dir / v.at("video").get<std::string>());
            e.request.total_frames = e.video.frames();
            v.at("keyframes").get_to(e.request.requested);
            v.at("scenario").get_to(e.scenario);
            out.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error((dir / kManifest).string() + ": " + e.what());
    }
    if (out.empty()) throw Error((dir / kManifest).string() + " lists no videos");
    for (const auto& e : out)
        if (!e.video.same_geometry(out.front().video)) throw ShapeError("corpus videos differ in frame geometry");
    return out;
}

ModelConfig model_for_corpus(ModelConfig cfg, const std::vector<CorpusEntry>& corpus, std::size_t n_scenarios) {
    cfg.channels = corpus.front().video.channels();
    cfg.n_scenarios = n_scenarios;
    cfg.validate();
    return cfg;
}

TrainConfig train_config(const RunConfig& rc, std::uint64_t seed) {
    TrainConfig tc = rc.train;
    tc.seed = seed;
    return tc;
}

StepCallback progress(std::ostream& err, std::size_t every, std::vector<double>& losses) {
    return [&err, every, &losses](std::size_t step, double loss) {
        losses.push_back(loss);
        if (every && (step + 1) % every == 0) err << "step " << step + 1 << " loss " << format_metric(loss) << "\n";
    };
}

void write_losses(const std::string& path, const std::vector<double>& losses) {
    if (path.empty()) return;
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) csv += std::to_string(i) + "," + format_metric(losses[i]) + "\n";
    write_text(path, csv);
}

void save_model(const fs::path& path, const ParamStore& params, const ModelConfig& cfg) {
    save_checkpoint(path, with_config(params, cfg).entries);
}

std::pair<ParamStore, ModelConfig> load_model(const fs::path& path) {
    ParamStore store;
    store.entries = load_checkpoint(path);
    const ModelConfig cfg = take_config(store);
    return {std::move(store), cfg};
}

json plan_json(const ChunkPlan& plan) {
    return {{"total_frames", plan.total_frames()},
            {"keyframes", plan.keyframes},
            {"lengths", plan.lengths},
            {"snap_offsets", plan.snap_offsets},
            {"latent_lengths", latent_lengths(plan)}};
}

KeyframeRequest request_from(const std::string& spec, std::size_t total, const std::vector<std::size_t>& keys) {
    if (!spec.empty()) {
        if (total || !keys.empty()) throw CLI::ValidationError("--spec cannot be combined with --total/--keyframes");
        return load_keyframe_spec(spec);
    }
    if (!total || keys.empty()) throw CLI::ValidationError("give --spec or both --total and --keyframes");
    return {total, keys};
}

void write_keyframe_images(const Video& v, const std::vector<std::size_t>& frames, const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t j = 0; j < frames.size(); ++j) {
        char prefix[32];
        std::snprintf(prefix, sizeof prefix, "key_%02zu", j);
        if (v.channels() == 1) {
            export_pgm(v.frame(frames[j]), dir, prefix);
        } else {
            save_video(dir / (std::string(prefix) + ".mcvd"), v.frame(frames[j]));
        }
    }
}

// Subcommand options. Each struct is filled by CLI11 before run_* is called.

struct MakeDataOpts {
    std::string out;
    std::size_t count = 8, frames = 98, cut = 49, height = 32, width = 32, channels = 1;
    double speed = 0.3;
    std::uint64_t seed = 0;
    bool lr = false;
    DegradeParams degrade;
};

int run_make_data(const MakeDataOpts& o, std::ostream& out) {
    o.degrade.validate();
    if (o.count == 0) throw Error("--count must be positive");
    const fs::path dir = o.out;
    fs::create_directories(dir);
    std::vector<Scenario> scenarios;
    const std::optional<std::size_t> cut = o.cut ? std::optional<std::size_t>(o.cut) : std::nullopt;
    for (std::size_t i = 0; i < o.count; ++i)
        scenarios.push_back(random_scenario(i, o.frames, cut, o.seed, o.height, o.width, o.speed));
    const auto corpus = synth_corpus(scenarios, o.height, o.width, o.channels);

    json videos = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scenario_%03zu", i);
        const std::string n = name;
        const SynthResult& r = corpus[i];
        std::vector<std::size_t> request{0};
        if (cut) request.push_back(*cut);
        const ChunkPlan plan = snap_keyframes({o.frames, request});
        save_video(dir / (n + ".mcvd"), r.video);
        write_text(dir / (n + ".caption.json"), caption_to_json(r.caption).dump(2) + "\n");
        write_text(dir / (n + ".keyframes.json"),
                   json{{"total_frames", o.frames}, {"keyframes", plan.keyframes}}.dump() + "\n");
        write_keyframe_images(r.video, plan.keyframes, dir / (n + "_keys"));
        json entry = {{"name", n},
                      {"video", n + ".mcvd"},
                      {"scenario", i},
                      {"keyframes", plan.keyframes},
                      {"ground_truth_keyframes", r.keyframes},
                      {"caption", n + ".caption.json"},
                      {"keyframe_spec", n + ".keyframes.json"},
                      {"keyframe_images", n + "_keys"}};
        if (o.lr) {
            save_video(dir / (n + ".lr.mcvd"), degrade(r.video, o.degrade, degrade_seed(o.seed, i)));
            entry["lr_video"] = n + ".lr.mcvd";
        }
        videos.push_back(entry);
    }
    const json manifest = {{"height", o.height}, {"width", o.width}, {"channels", o.channels}, {"videos", videos}};
    write_text(dir / kManifest, manifest.dump(2) + "\n");
    out << "wrote " << corpus.size() << " videos to " << dir.string() << "\n";
    return 0;
}

struct PlanOpts {
    std::string spec;
    std::size_t total = 0;
    std::vector<std::size_t> keyframes;
    std::vector<std::size_t> lengths;
};

int run_chunk_plan(const PlanOpts& o, std::ostream& out) {
    out << plan_json(snap_keyframes(request_from(o.spec, o.total, o.keyframes))).dump() << "\n";
    return 0;
}

int run_rope_dump(const PlanOpts& o, std::ostream& out) {
    std::vector<std::size_t> lengths = o.lengths;
    if (lengths.empty()) {
        lengths = latent_lengths(snap_keyframes(request_from(o.spec, o.total, o.keyframes)));
    } else if (!o.spec.empty() || o.total || !o.keyframes.empty()) {
        throw CLI::ValidationError("--lengths cannot be combined with a keyframe plan");
    }
    const auto u = mc_temporal_indices(lengths);
    out << "position,u\n";
    for (std::size_t i = 0; i < u.size(); ++i) out << i << "," << format_metric(u[i]) << "\n";
    return 0;
}

struct TrainOpts {
    std::string config, data, out, loss_csv;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    DegradeParams degrade;
};

int finish_training(const TrainOpts& o, const ParamStore& params, const ModelConfig& cfg, const TrainResult& res,
                    const std::vector<double>& losses, std::ostream& out) {
    save_model(o.out, params, cfg);
    write_losses(o.loss_csv, losses);
    out << "eval_loss_initial " << format_metric(res.eval_initial) << "\n"
        << "eval_loss_final " << format_metric(res.eval_final) << "\n"
        << "wrote " << o.out << "\n";
    return 0;
}

int run_gen_train(const TrainOpts& o, std::ostream& out, std::ostream& err) {
    const RunConfig rc = load_run_config(o.config);
    const auto corpus = load_corpus(o.data);
    std::size_t n_scen = 0;
    for (const auto& e : corpus) n_scen = std::max(n_scen, e.scenario + 1);
    const ModelConfig cfg = model_for_corpus(rc.model, corpus, n_scen);
    std::vector<Example> examples;
    for (const auto& e : corpus) examples.push_back(generation_example(e.video, snap_keyframes(e.request), e.scenario, cfg));
    Rng init(o.seed, kInitStream);
    ParamStore params = init_params(cfg, init);
    std::vector<double> losses;
    const TrainResult res = train(params, cfg, examples, train_config(rc, o.seed), progress(err, o.log_every, losses));
    return finish_training(o, params, cfg, res, losses, out);
}

int run_sr_train(const TrainOpts& o, std::ostream& out, std::ostream& err) {
    o.degrade.validate();
    const RunConfig rc = load_run_config(o.config);
    const auto corpus = load_corpus(o.data);
    const ModelConfig cfg = model_for_corpus(rc.model, corpus, 1);
    std::vector<Example> examples;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Video lr = degrade(corpus[i].video, o.degrade, degrade_seed(o.seed, i));
        examples.push_back(sr_example(make_sr_pair(corpus[i].video, lr, snap_keyframes(corpus[i].request)), cfg));
    }
    Rng init(o.seed, kInitStream);
    ParamStore params = init_params(cfg, init);
    std::vector<double> losses;
    const TrainResult res = train(params, cfg, examples, train_config(rc, o.seed), progress(err, o.log_every, losses));
    return finish_training(o, params, cfg, res, losses, out);
}

struct SampleOpts {
    std::string ckpt, keyframes, frames, out, lr, pgm_dir;
    std::size_t steps = 20, scenario = 0;
    std::uint64_t seed = 0;
};

void write_output(const SampleOpts& o, const Video& v, std::ostream& out) {
    save_video(o.out, v);
    if (!o.pgm_dir.empty()) {
        fs::create_directories(o.pgm_dir);
        export_pgm(v, o.pgm_dir, "frame");
    }
    out << "wrote " << o.out << " (" << v.frames() << " frames)\n";
}

int run_gen_sample(const SampleOpts& o, std::ostream& out) {
    auto [params, cfg] = load_model(o.ckpt);
    const KeyframeRequest req = load_keyframe_spec(o.keyframes);
    const Video v = generate(params, cfg, load_keyframe_images(o.frames), req, o.steps, o.scenario, o.seed);
    write_output(o, v, out);
    return 0;
}

int run_sr_sample(const SampleOpts& o, std::ostream& out) {
    auto [params, cfg] = load_model(o.ckpt);
    const KeyframeRequest req = load_keyframe_spec(o.keyframes);
    const Video v = sr_sample(params, cfg, load_video(o.lr), load_keyframe_images(o.frames), req, o.steps);
    write_output(o, v, out);
    return 0;
}

struct EvalOpts {
    std::string video, reference, keyframes, frames, ratings, name, out;
};

int run_eval(const EvalOpts& o, std::ostream& out) {
    if (o.video.empty() && o.ratings.empty()) throw CLI::ValidationError("give --video and/or --ratings");
    if (o.video.empty() && !(o.reference.empty() && o.keyframes.empty() && o.frames.empty()))
        throw CLI::ValidationError("--reference, --keyframes and --frames need --video");
    if (!o.frames.empty() && o.keyframes.empty()) throw CLI::ValidationError("--frames needs --keyframes");
    std::string csv = "metric,name,value\n";
    auto row = [&csv](const std::string& metric, const std::string& name, double v) {
        csv += metric + "," + name + "," + format_metric(v) + "\n";
    };
    if (!o.video.empty()) {
        const std::string name = o.name.empty() ? fs::path(o.video).stem().string() : o.name;
        const Video v = load_video(o.video);
        std::optional<ChunkPlan> plan;
        if (!o.keyframes.empty()) plan = snap_keyframes(load_keyframe_spec(o.keyframes));
        if (!o.reference.empty()) {
            const Video ref = load_video(o.reference);
            row("psnr", name, psnr(v, ref));
            row("ssim", name, ssim(v, ref));
            if (plan) row("codec_psnr", name, psnr(decode_multichunk(encode_video(ref, *plan)), ref));
        }
        if (!o.frames.empty()) row("keyframe_adherence", name, keyframe_adherence(v, load_keyframe_images(o.frames), *plan));
    }
    if (!o.ratings.empty()) row("gsb", fs::path(o.ratings).stem().string(), gsb(tally_from_csv(read_text(o.ratings))));
    if (o.out.empty()) {
        out << csv;
    } else {
        write_text(o.out, csv);
    }
    return 0;
}

void add_degrade_options(CLI::App* app, DegradeParams& p) {
    app->add_option("--blur", p.blur_sigma, "Gaussian blur sigma before downsampling (0 disables)");
    app->add_option("--noise", p.noise_sigma, "standard deviation of the additive LR noise");
}

void add_plan_options(CLI::App* app, PlanOpts& o) {
    app->add_option("--spec", o.spec, "keyframe spec JSON file");
    app->add_option("--total", o.total, "total frame count (with --keyframes)");
    app->add_option("--keyframes", o.keyframes, "requested keyframe indices, comma separated")->delimiter(',')->default_str("");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    const json j = parse_json(json_text, "config");
    if (!j.is_object()) throw Error("config: expected a JSON object");
    RunConfig rc;
    for (const auto& [key, value] : j.items()) {
        const std::string what = "config";
        if (key == "model_dim") {
            rc.model.model_dim = get_count(value, key, what);
        } else if (key == "n_layers") {
            rc.model.n_layers = get_count(value, key, what);
        } else if (key == "n_heads") {
            rc.model.n_heads = get_count(value, key, what);
        } else if (key == "lr") {
            if (!value.is_number() || !(value.get<double>() > 0)) throw Error("config: \"lr\" must be a positive number");
            rc.train.adam.lr = value.get<double>();
        } else if (key == "steps") {
            rc.train.steps = get_count(value, key, what);
        } else if (key == "batch") {
            rc.train.batch = get_count(value, key, what);
            if (rc.train.batch == 0) throw Error("config: \"batch\" must be positive");
        } else if (key == "seed") {
            rc.seed = get_count(value, key, what);
        } else {
            throw Error("config: unknown key \"" + key + "\"");
        }
    }
    if (rc.model.n_heads == 0 || rc.model.model_dim % rc.model.n_heads != 0) {
        throw Error("config: model_dim " + std::to_string(rc.model.model_dim) + " is not divisible by n_heads " +
                    std::to_string(rc.model.n_heads));
    }
    rc.model.head_dim = rc.model.model_dim / rc.model.n_heads;
    rc.model.validate();
    return rc;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_text(path)); }

KeyframeRequest parse_keyframe_spec(const std::string& json_text) {
    const json j = parse_json(json_text, "keyframe spec");
    KeyframeRequest req;
    try {
        if (!j.is_object() || j.size() != 2) throw Error("keyframe spec: expected {\"total_frames\", \"keyframes\"}");
        req.total_frames = get_count(j.at("total_frames"), "total_frames", "keyframe spec");
        for (const auto& k : j.at("keyframes")) req.requested.push_back(get_count(k, "keyframes", "keyframe spec"));
    } catch (const json::exception& e) {
        throw Error(std::string("keyframe spec: ") + e.what());
    }
    return req;
}

KeyframeRequest load_keyframe_spec(const fs::path& path) { return parse_keyframe_spec(read_text(path)); }

std::vector<Video> load_keyframe_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("keyframe image directory " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".pgm" || ext == ".mcvd")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Video> out;
    for (const auto& f : files) {
        Video v = f.extension() == ".pgm" ? import_pgm(f) : load_video(f);
        if (v.frames() != 1) throw Error(f.string() + " holds " + std::to_string(v.frames()) + " frames, expected 1");
        out.push_back(std::move(v));
    }
    if (out.empty()) throw Error("no keyframe images (*.pgm, *.mcvd) in " + dir.string());
    return out;
}

std::uint64_t degrade_seed(std::uint64_t seed, std::size_t index) { return Rng(seed, kDegradeStream + index).next_u64(); }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Keyframe-conditioned multi-chunk video generation and super-resolution", "mcflow"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough(false);

    MakeDataOpts md;
    auto* make_data = app.add_subcommand("make-data", "render a synthetic multi-shot corpus");
    make_data->add_option("--out", md.out, "output directory")->required()->default_str("");
    make_data->add_option("--count", md.count, "number of scenarios");
    make_data->add_option("--frames", md.frames, "frames per video");
    make_data->add_option("--cut", md.cut, "first frame of the second shot (0 for a single shot)");
    make_data->add_option("--height", md.height, "frame height");
    make_data->add_option("--width", md.width, "frame width");
    make_data->add_option("--channels", md.channels, "channels per frame");
    make_data->add_option("--speed", md.speed, "shape speed in pixels per frame");
    make_data->add_option("--seed", md.seed, "random seed")->required()->default_str("");
    make_data->add_flag("--lr", md.lr, "also write degraded low-resolution videos");
    add_degrade_options(make_data, md.degrade);

    PlanOpts cp;
    auto* chunk_plan = app.add_subcommand("chunk-plan", "snap keyframes and print the chunk plan as JSON");
    add_plan_options(chunk_plan, cp);

    PlanOpts rd;
    auto* rope_dump = app.add_subcommand("rope-dump", "print MC-RoPE temporal indices as CSV");
    add_plan_options(rope_dump, rd);
    rope_dump->add_option("--lengths", rd.lengths, "latent chunk lengths, comma separated")->delimiter(',')->default_str("");

    TrainOpts gt;
    auto* gen_train = app.add_subcommand("gen-train", "train the keyframe-conditioned generator");
    TrainOpts st;
    auto* sr_train = app.add_subcommand("sr-train", "train the keyframe-conditioned super-resolution model");
    for (auto [sub, o] : {std::pair{gen_train, &gt}, std::pair{sr_train, &st}}) {
        sub->add_option("--config", o->config, "run config JSON")->required()->default_str("");
        sub->add_option("--data", o->data, "corpus directory written by make-data")->required()->default_str("");
        sub->add_option("--out", o->out, "output checkpoint")->required()->default_str("");
        sub->add_option("--seed", o->seed, "random seed (overrides the config)")->required()->default_str("");
        sub->add_option("--loss-csv", o->loss_csv, "write per-step losses to this CSV");
        sub->add_option("--log-every", o->log_every, "report the loss every N steps (0 disables)");
    }
    add_degrade_options(sr_train, st.degrade);

    SampleOpts gs;
    auto* gen_sample = app.add_subcommand("gen-sample", "generate a video from keyframes");
    SampleOpts ss;
    auto* sr_sample_cmd = app.add_subcommand("sr-sample", "super-resolve a low-resolution video");
    for (auto [sub, o] : {std::pair{gen_sample, &gs}, std::pair{sr_sample_cmd, &ss}}) {
        sub->add_option("--ckpt", o->ckpt, "model checkpoint")->required()->default_str("");
        sub->add_option("--keyframes", o->keyframes, "keyframe spec JSON")->required()->default_str("");
        sub->add_option("--frames", o->frames, "directory of keyframe images")->required()->default_str("");
        sub->add_option("--steps", o->steps, "Euler steps");
        sub->add_option("--out", o->out, "output video (MCVD)")->required()->default_str("");
        sub->add_option("--pgm-dir", o->pgm_dir, "also export frames as PGM to this directory");
    }
    gen_sample->add_option("--seed", gs.seed, "random seed")->required()->default_str("");
    gen_sample->add_option("--scenario", gs.scenario, "scenario embedding row");
    sr_sample_cmd->add_option("--lr", ss.lr, "low-resolution input video (MCVD)")->required()->default_str("");

    EvalOpts ev;
    auto* eval = app.add_subcommand("eval", "compute metrics as CSV (metric,name,value)");
    eval->add_option("--video", ev.video, "video to score (MCVD)");
    eval->add_option("--reference", ev.reference, "ground-truth video for PSNR/SSIM");
    eval->add_option("--keyframes", ev.keyframes, "keyframe spec JSON");
    eval->add_option("--frames", ev.frames, "directory of keyframe images for adherence");
    eval->add_option("--ratings", ev.ratings, "CSV of 5-point pairwise ratings for GSB");
    eval->add_option("--name", ev.name, "name column (default: video file stem)");
    eval->add_option("--out", ev.out, "output CSV (default: stdout)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (make_data->parsed()) return run_make_data(md, out);
        if (chunk_plan->parsed()) return run_chunk_plan(cp, out);
        if (rope_dump->parsed()) return run_rope_dump(rd, out);
        if (gen_train->parsed()) return run_gen_train(gt, out, err);
        if (sr_train->parsed()) return run_sr_train(st, out, err);
        if (gen_sample->parsed()) return run_gen_sample(gs, out);
        if (sr_sample_cmd->parsed()) return run_sr_sample(ss, out);
        if (eval->parsed()) return run_eval(ev, out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::Error& e) {
        const auto subs = app.get_subcommands();
        err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    } catch (const ChunkingError& e) {
        err << "error: " << e.what();
        if (auto n = e.nearest_admissible_total()) err << " (nearest admissible total_frames: " << *n << ")";
        err << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace mcflow::cli
