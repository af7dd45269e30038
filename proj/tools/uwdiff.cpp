// uwdiff: dataset generation, training, enhancement, evaluation, schedule
// search and runtime benchmarking for the conditional diffusion enhancer.

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "uwdiff/analytic_oracle.hpp"
#include "uwdiff/config.hpp"
#include "uwdiff/data.hpp"
#include "uwdiff/ea_search.hpp"
#include "uwdiff/metrics.hpp"
#include "uwdiff/nn/checkpoint.hpp"
#include "uwdiff/train.hpp"

namespace fs = std::filesystem;
using namespace uwdiff;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Flag values are collected as strings and folded into the RunConfig after
// the config file, which gives flag > file > default.
struct Overrides {
    std::optional<std::string> config_file;
    std::map<std::string, std::string> values;

    RunConfig resolve() const {
        RunConfig cfg;
        if (config_file) cfg.merge_file(*config_file);
        for (const auto& [k, v] : values) {
            try {
                cfg.set(k, v);
            } catch (const ConfigError& e) {
                std::string flag = "--" + k;
                std::replace(flag.begin(), flag.end(), '_', '-');
                throw ConfigError(flag + ": " + e.what());
            }
        }
        return cfg;
    }
};

const std::initializer_list<const char*> kScheduleKeys = {"T", "beta_min", "beta_max"};
const std::initializer_list<const char*> kModelKeys = {"base_width", "time_dim", "attn_kernel", "ff_mult", "gate"};
const std::initializer_list<const char*> kCorpusKeys = {
    "data_seed", "image_size", "train_count", "val_count", "test_count", "gain_r",  "gain_g",     "gain_b",
    "blur_sigma", "noise_sigma", "haze_r",     "haze_g",    "haze_b",     "haze_weight"};
const std::initializer_list<const char*> kSamplingKeys = {"seed", "eta", "sequence", "piecewise_mid",
                                                          "piecewise_dense", "piecewise_sparse"};

void add_groups(Overrides& o, CLI::App* cmd, std::initializer_list<std::initializer_list<const char*>> groups) {
    std::vector<const char*> all;
    for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
    std::sort(all.begin(), all.end(), [](const char* a, const char* b) { return std::string_view(a) < b; });
    all.erase(std::unique(all.begin(), all.end(),
                          [](const char* a, const char* b) { return std::string_view(a) == b; }),
              all.end());
    cmd->add_option("--config", o.config_file, "key=value configuration file");
    for (const char* key : all) {
        const auto& table = RunConfig::keys();
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& k) { return k.name == key; });
        const std::string help = it->help + " (default " + it->default_value + ")";
        std::string flag = std::string("--") + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        cmd->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o.values[key] = v; }, help);
    }
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

nn::Denoiser load_model(const fs::path& checkpoint, const RunConfig& cfg) {
    return nn::load_denoiser(checkpoint, cfg.gate());
}

DenoiserFn counted(DenoiserFn inner, long long& calls) {
    return [inner = std::move(inner), &calls](const ImageTensor& x, const ImageTensor& c, int t) {
        ++calls;
        return inner(x, c, t);
    };
}

void print_report(const char* label, const EvalReport& r) {
    std::printf("%s mean_psnr_db=%s mean_ssim=%s seconds_per_image=%.6f\n", label, format_metric(r.mean_psnr).c_str(),
                format_metric(r.mean_ssim).c_str(), r.seconds_per_image);
}

// ------------------------------------------------------------ commands

int cmd_make_data(const RunConfig& cfg, const fs::path& out) {
    const CorpusSpec spec = cfg.corpus();
    write_corpus(out, spec);
    std::printf("wrote %d train, %d val, %d test pairs to %s\n", spec.train_count, spec.val_count, spec.test_count,
                out.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
              const std::optional<fs::path>& resume, int print_every) {
    const TrainConfig tc = cfg.train();
    const auto train_set = load_split(data, Split::Train);
    nn::Denoiser model(cfg.model());
    model.initialize(tc.seed);
    fs::create_directories(out);
    write_text(out / "run_manifest.txt", "# training run configuration\ndata=" + fs::absolute(data).string() +
                                             "\n" + cfg.dump());
    std::printf("training %zu parameters on %zu pairs for %d steps\n", model.params().scalar_count(),
                train_set.size(), tc.total_steps);
    std::fflush(stdout);
    TrainOptions opts;
    opts.out_dir = out;
    opts.resume = resume;
    opts.progress = [print_every](int step, double loss) {
        if (print_every > 0 && step % print_every == 0) {
            std::printf("step %d loss %.6f\n", step, loss);
            std::fflush(stdout);
        }
    };
    const TrainResult r = train(model, train_set, tc, opts);
    std::printf("final step %d loss %.6f checkpoint %s\n", r.final_step, r.final_loss, r.final_checkpoint.c_str());
    return 0;
}

int cmd_enhance(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& input, const fs::path& output) {
    const NoiseSchedule sched = cfg.schedule();
    const SamplingSequence seq = cfg.sequence();
    const nn::Denoiser model = load_model(checkpoint, cfg);
    const ImageTensor cond = load_image(input);
    long long calls = 0;
    const auto t0 = std::chrono::steady_clock::now();
    const ImageTensor out = reverse_process(counted(model.as_function(), calls), cond, seq, cfg.get_real("eta"),
                                            cfg.get_seed("seed"), sched);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    save_image(out, output);
    std::printf("denoiser_calls=%lld\nseconds=%.6f\n", calls, seconds);
    return 0;
}

DenoiserFn oracle_fn(const RunConfig& cfg, const NoiseSchedule& sched) {
    return make_oracle_denoiser(GaussianPrior::from_condition(cfg.get_real("oracle_sigma0")), sched);
}

// Oracle mode scores the clean image as its own condition, so the analytic
// posterior is centered on the ground truth.
std::vector<ImagePair> oracle_pairs(std::vector<ImagePair> pairs) {
    for (auto& p : pairs) p.degraded = p.clean;
    return pairs;
}

std::vector<ImagePair> split_pairs(const std::optional<fs::path>& data, Split split, const RunConfig& cfg) {
    if (data) return load_split(*data, split);
    const CorpusSpec spec = cfg.corpus();
    const int count = split == Split::Train ? spec.train_count : split == Split::Val ? spec.val_count : spec.test_count;
    std::vector<ImagePair> pairs;
    for (int i = 0; i < count; ++i) pairs.push_back(make_pair(spec, split, i));
    return pairs;
}

int cmd_evaluate(const RunConfig& cfg, const std::optional<fs::path>& checkpoint, bool oracle,
                 const std::optional<fs::path>& data, const std::string& split_name_arg,
                 const std::optional<fs::path>& report_path) {
    if (!checkpoint && !oracle) throw ConfigError("evaluate needs --checkpoint or --oracle");
    if (!data && !oracle) throw ConfigError("evaluate needs --data");
    const NoiseSchedule sched = cfg.schedule();
    const SamplingSequence seq = cfg.sequence();
    auto pairs = split_pairs(data, parse_split(split_name_arg), cfg);
    std::optional<nn::Denoiser> model;
    DenoiserFn fn;
    if (oracle) {
        pairs = oracle_pairs(std::move(pairs));
        fn = oracle_fn(cfg, sched);
    } else {
        model.emplace(load_model(*checkpoint, cfg));
        fn = model->as_function();
    }
    const EvalReport baseline = evaluate_identity(pairs);
    const EvalReport report = evaluate(fn, pairs, seq, cfg.get_real("eta"), cfg.get_seed("seed"), sched);
    std::printf("sequence=%s\n", seq.to_string().c_str());
    print_report("input", baseline);
    print_report("enhanced", report);
    if (report_path) write_report(*report_path, report);
    return 0;
}

int cmd_search(const RunConfig& cfg, const std::optional<fs::path>& checkpoint, bool oracle,
               const std::optional<fs::path>& data, const fs::path& out_sequence, const fs::path& log_path) {
    if (!checkpoint && !oracle) throw ConfigError("search-schedule needs --checkpoint or --oracle");
    if (!data && !oracle) throw ConfigError("search-schedule needs --data");
    const NoiseSchedule sched = cfg.schedule();
    const EAConfig ea = cfg.ea();
    auto pairs = split_pairs(data, Split::Val, cfg);
    std::optional<nn::Denoiser> model;
    DenoiserFn fn;
    if (oracle) {
        pairs = oracle_pairs(std::move(pairs));
        fn = oracle_fn(cfg, sched);
    } else {
        model.emplace(load_model(*checkpoint, cfg));
        fn = model->as_function();
    }
    const double eta = cfg.get_real("eta");
    const std::uint64_t seed = cfg.get_seed("seed");
    const FitnessFn fitness = [&](const SamplingSequence& s) { return evaluate(fn, pairs, s, eta, seed, sched).mean_psnr; };

    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    log.precision(17);
    log << "epoch,genes,score\n";
    std::size_t rows = 0;
    EvolutionarySearch search(ea, sched.steps(), fitness, [&](const ScoredCandidate& c) {
        log << c.epoch << ',' << genes_to_log_string(c.genes) << ',' << format_metric(c.score) << '\n';
        log.flush();
        ++rows;
    });
    const SearchResult result = search.run();
    write_text(out_sequence, result.best.genes.to_string() + "\n");

    const int intervals = ea.gene_length - 1;
    std::printf("best_sequence=%s\nbest_score=%.17g\nscored_candidates=%zu\n", result.best.genes.to_string().c_str(),
                result.best.score, rows);
    if (sched.steps() % intervals == 0) {
        const double uniform = fitness(uniform_sequence(sched.steps(), intervals));
        std::printf("uniform_%d_score=%.17g\n", intervals, uniform);
    }
    return 0;
}

int cmd_benchmark(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data, const fs::path& out_csv) {
    const NoiseSchedule sched = cfg.schedule();
    const auto pairs = load_split(data, Split::Test);
    const nn::Denoiser model = load_model(checkpoint, cfg);
    const DenoiserFn fn = model.as_function();
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    std::ofstream csv(out_csv);
    if (!csv) throw std::runtime_error("cannot write " + out_csv.string());
    csv.precision(10);
    csv << "steps,seconds_per_image,psnr_db,ssim\n";
    for (int s : cfg.int_list("benchmark_steps")) {
        const EvalReport r =
            evaluate(fn, pairs, uniform_sequence(sched.steps(), s), cfg.get_real("eta"), cfg.get_seed("seed"), sched);
        csv << s << ',' << r.seconds_per_image << ',' << format_metric(r.mean_psnr) << ','
            << format_metric(r.mean_ssim) << '\n';
        std::printf("S=%d seconds_per_image=%.6f psnr_db=%s ssim=%s\n", s, r.seconds_per_image,
                    format_metric(r.mean_psnr).c_str(), format_metric(r.mean_ssim).c_str());
        std::fflush(stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Activations are re-allocated every forward pass; keeping freed blocks
    // on the heap avoids repeated mmap page faults.
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
    CLI::App app{"Conditional diffusion enhancement of underwater images"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    Overrides make_o, train_o, enhance_o, eval_o, search_o, bench_o;
    fs::path out, data_dir, checkpoint, input, output, log_path, csv_path;
    std::optional<fs::path> resume, opt_checkpoint, opt_data, report;
    std::string split = "test";
    bool oracle = false;
    int print_every = 100;

    auto* make = app.add_subcommand("make-data", "generate the synthetic paired corpus");
    make->add_option("--out", out, "output directory (absent or empty)")->required();
    add_groups(make_o, make, {kCorpusKeys});

    auto* tr = app.add_subcommand("train", "train the denoiser");
    tr->add_option("--data", data_dir, "corpus directory")->required();
    tr->add_option("--out", out, "run directory for checkpoints and the log")->required();
    tr->add_option("--resume", resume, "checkpoint to continue from");
    tr->add_option("--print-every", print_every, "progress line interval in steps");
    add_groups(train_o, tr,
               {kScheduleKeys, kModelKeys,
                {"seed", "image_size", "learning_rate", "batch_size", "steps", "checkpoint_interval"}});

    auto* en = app.add_subcommand("enhance", "enhance one PNG image");
    en->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    en->add_option("--input", input, "degraded 8-bit RGB PNG")->required();
    en->add_option("--output", output, "enhanced PNG to write")->required();
    add_groups(enhance_o, en, {kScheduleKeys, kSamplingKeys, {"gate"}});

    auto* ev = app.add_subcommand("evaluate", "score enhancement on a corpus split");
    ev->add_option("--checkpoint", opt_checkpoint, "model checkpoint");
    ev->add_flag("--oracle", oracle, "use the analytic oracle on clean-conditioned pairs");
    ev->add_option("--data", opt_data, "corpus directory");
    ev->add_option("--split", split, "train, val or test");
    ev->add_option("--report", report, "per-image CSV (image_id, psnr_db, ssim)");
    add_groups(eval_o, ev, {kScheduleKeys, kSamplingKeys, kCorpusKeys, {"gate", "oracle_sigma0"}});

    auto* se = app.add_subcommand("search-schedule", "evolutionary search for a sampling sequence");
    se->add_option("--checkpoint", opt_checkpoint, "model checkpoint");
    se->add_flag("--oracle", oracle, "score with the analytic oracle instead of a checkpoint");
    se->add_option("--data", opt_data, "corpus directory (validation split is used)");
    se->add_option("--out-sequence", output, "file receiving the best sequence")->required();
    se->add_option("--log", log_path, "CSV log: epoch, genes, score")->required();
    add_groups(search_o, se,
               {kScheduleKeys, kCorpusKeys,
                {"seed", "eta", "gate", "oracle_sigma0", "ea_gene_length", "ea_pc", "ea_pm", "ea_epochs",
                 "ea_capacity"}});

    auto* be = app.add_subcommand("benchmark", "time sampling for several uniform step counts");
    be->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    be->add_option("--data", data_dir, "corpus directory (test split is used)")->required();
    be->add_option("--out", csv_path, "CSV: steps, seconds_per_image, psnr_db, ssim")->required();
    add_groups(bench_o, be, {kScheduleKeys, {"seed", "eta", "gate", "benchmark_steps"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*make) return cmd_make_data(make_o.resolve(), out);
        if (*tr) return cmd_train(train_o.resolve(), data_dir, out, resume, print_every);
        if (*en) return cmd_enhance(enhance_o.resolve(), checkpoint, input, output);
        if (*ev) return cmd_evaluate(eval_o.resolve(), opt_checkpoint, oracle, opt_data, split, report);
        if (*se) return cmd_search(search_o.resolve(), opt_checkpoint, oracle, opt_data, output, log_path);
        if (*be) return cmd_benchmark(bench_o.resolve(), checkpoint, data_dir, csv_path);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
