#include "uwdiff/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "uwdiff/metrics.hpp"
#include "uwdiff/nn/checkpoint.hpp"

namespace uwdiff {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
    if (total_steps <= 0) throw std::invalid_argument("total steps must be positive");
    if (diffusion_steps <= 0) throw std::invalid_argument("T must be positive");
    if (checkpoint_interval <= 0) throw std::invalid_argument("checkpoint interval must be positive");
    if (image_size <= 0 || image_size % 4 != 0) throw std::invalid_argument("image size must be a positive multiple of 4");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam eps must be positive");
}

// ----------------------------------------------------------------- Adam

Adam::Adam(const nn::ParamStore& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : params.entries()) {
        m_.emplace_back(e.values.size(), 0.0);
        v_.emplace_back(e.values.size(), 0.0);
    }
}

void Adam::step(nn::ParamStore& params, const nn::Gradients& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::invalid_argument("optimizer state does not match the parameter store");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t id = 0; id < m_.size(); ++id) {
        double* w = params.values(id);
        const std::vector<double>& g = grads[id];
        std::vector<double>& m = m_[id];
        std::vector<double>& v = v_[id];
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::save(const fs::path& path) const {
    nn::ParamStore state;
    // The counter is split so it survives the float32 container exactly.
    const auto step_id = state.add("adam.step", {2});
    state.values(step_id)[0] = static_cast<double>(t_ / 65536);
    state.values(step_id)[1] = static_cast<double>(t_ % 65536);
    for (std::size_t id = 0; id < m_.size(); ++id) {
        const int n = static_cast<int>(m_[id].size());
        const auto mid = state.add("adam.m." + std::to_string(id), {n});
        const auto vid = state.add("adam.v." + std::to_string(id), {n});
        std::copy(m_[id].begin(), m_[id].end(), state.values(mid));
        std::copy(v_[id].begin(), v_[id].end(), state.values(vid));
    }
    nn::save_params(path, state);
}

void Adam::load(const fs::path& path) {
    const nn::ParamStore state = nn::load_params(path);
    const auto step_id = state.find("adam.step");
    if (!step_id || state.size() != 1 + 2 * m_.size()) {
        throw nn::CheckpointError("optimizer state " + path.string() + " does not match the model");
    }
    for (std::size_t id = 0; id < m_.size(); ++id) {
        const auto mid = state.find("adam.m." + std::to_string(id));
        const auto vid = state.find("adam.v." + std::to_string(id));
        if (!mid || !vid || state.entry(*mid).values.size() != m_[id].size()) {
            throw nn::CheckpointError("optimizer state " + path.string() + " does not match the model");
        }
        m_[id] = state.entry(*mid).values;
        v_[id] = state.entry(*vid).values;
    }
    const double* s = state.values(*step_id);
    t_ = static_cast<std::int64_t>(s[0]) * 65536 + static_cast<std::int64_t>(s[1]);
}

// ------------------------------------------------------------ objective

std::vector<TrainSample> draw_samples(const std::vector<const ImagePair*>& batch, Rng& rng,
                                      const NoiseSchedule& sched) {
    if (batch.empty()) throw std::invalid_argument("training batch is empty");
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    std::vector<TrainSample> samples;
    samples.reserve(batch.size());
    for (const ImagePair* pair : batch) {
        const int t = pick_t(rng);
        const ImageTensor& x0 = pair->clean;
        samples.push_back({pair, t, gaussian_like(x0.height(), x0.width(), x0.channels(), rng)});
    }
    return samples;
}

double loss_and_gradient(const nn::Denoiser& model, const std::vector<TrainSample>& samples,
                         const NoiseSchedule& sched, nn::Gradients& grads) {
    if (samples.empty()) throw std::invalid_argument("training batch is empty");
    double total = 0.0;
    nn::Activations act;
    for (const TrainSample& s : samples) {
        const ImageTensor x_t = q_sample(s.pair->clean, s.t, s.eps, sched);
        const ImageTensor pred = model.forward(x_t, s.pair->degraded, s.t, &act);
        const double scale = 1.0 / (static_cast<double>(pred.size()) * static_cast<double>(samples.size()));
        ImageTensor grad(pred.height(), pred.width(), pred.channels());
        double sum = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - s.eps[i];
            sum += std::abs(d);
            grad[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
        }
        total += sum / static_cast<double>(pred.size());
        model.backward(grad, act, grads);
    }
    return total / static_cast<double>(samples.size());
}

double apply_samples(nn::Denoiser& model, Adam& optimizer, const std::vector<TrainSample>& samples,
                     const NoiseSchedule& sched) {
    nn::Gradients grads(model.params());
    const double loss = loss_and_gradient(model, samples, sched, grads);
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss (" << loss << ") at optimizer step " << optimizer.steps_taken() + 1
            << "; timesteps:";
        for (const auto& s : samples) msg << ' ' << s.t;
        throw NonFiniteLossError(msg.str());
    }
    optimizer.step(model.params(), grads);
    return loss;
}

double train_step(nn::Denoiser& model, Adam& optimizer, const std::vector<const ImagePair*>& batch, Rng& rng,
                  const NoiseSchedule& sched) {
    return apply_samples(model, optimizer, draw_samples(batch, rng, sched), sched);
}

// ----------------------------------------------------------------- loop

std::string checkpoint_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%06d.ckpt", step);
    return buf;
}

fs::path optimizer_sidecar(const fs::path& checkpoint) {
    fs::path p = checkpoint;
    p.replace_extension(".adam");
    return p;
}

int checkpoint_step(const fs::path& checkpoint) {
    const std::string stem = checkpoint.stem().string();
    int step = 0;
    char tail = 0;
    if (std::sscanf(stem.c_str(), "step_%d%c", &step, &tail) != 1 || step < 0) {
        throw std::invalid_argument("cannot read a step number from " + checkpoint.filename().string());
    }
    return step;
}

namespace {

struct LogRow {
    int step;
    double loss;
    double wall_seconds;
};

// Keeps rows up to `last_step` so a resumed run does not duplicate steps.
std::vector<LogRow> read_log_prefix(const fs::path& path, int last_step) {
    std::vector<LogRow> rows;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        LogRow r{};
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &r.step, &r.loss, &r.wall_seconds) == 3 && r.step <= last_step) {
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace

TrainResult train(nn::Denoiser& model, const std::vector<ImagePair>& train_set, const TrainConfig& config,
                  const TrainOptions& options) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("training set is empty");
    for (const auto& pair : train_set) {
        if (pair.clean.height() != config.image_size || pair.clean.width() != config.image_size) {
            throw std::invalid_argument("training image is " + pair.clean.shape_string() + ", expected " +
                                        std::to_string(config.image_size) + "x" + std::to_string(config.image_size));
        }
    }
    const NoiseSchedule sched = linear_beta_schedule(config.diffusion_steps);
    fs::create_directories(options.out_dir);
    Adam optimizer(model.params(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);

    int start = 0;
    double wall_offset = 0.0;
    const fs::path log_path = options.out_dir / "train_log.csv";
    std::vector<LogRow> kept;
    if (options.resume) {
        start = checkpoint_step(*options.resume);
        nn::assign_params(model.params(), nn::load_params(*options.resume));
        optimizer.load(optimizer_sidecar(*options.resume));
        kept = read_log_prefix(log_path, start);
        if (!kept.empty()) wall_offset = kept.back().wall_seconds;
    }
    if (start >= config.total_steps) throw std::invalid_argument("checkpoint is already at or past the final step");

    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    log.precision(10);
    log << "step,loss,wall_seconds\n";
    for (const auto& r : kept) log << r.step << ',' << r.loss << ',' << r.wall_seconds << '\n';

    std::vector<const ImagePair*> batch(static_cast<std::size_t>(config.batch_size));
    std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    for (int step = start + 1; step <= config.total_steps; ++step) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(step)));
        for (auto& p : batch) p = &train_set[pick(rng)];
        const double loss = train_step(model, optimizer, batch, rng, sched);
        const double wall =
            wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log << step << ',' << loss << ',' << wall << '\n';
        log.flush();
        if (options.progress) options.progress(step, loss);
        if (step % config.checkpoint_interval == 0 || step == config.total_steps) {
            const fs::path ckpt = options.out_dir / checkpoint_name(step);
            nn::save_params(ckpt, model.params());
            optimizer.save(optimizer_sidecar(ckpt));
            result.final_checkpoint = ckpt;
        }
        result.final_step = step;
        result.final_loss = loss;
    }
    return result;
}

// ----------------------------------------------------------- evaluation

namespace {

EvalReport summarize(std::vector<ImageScore> rows, double seconds) {
    EvalReport report;
    for (const auto& r : rows) {
        report.mean_psnr += r.psnr_db;
        report.mean_ssim += r.ssim;
    }
    const double n = static_cast<double>(rows.size());
    report.mean_psnr /= n;
    report.mean_ssim /= n;
    report.seconds_per_image = seconds / n;
    report.rows = std::move(rows);
    return report;
}

}  // namespace

EvalReport evaluate(const DenoiserFn& model, const std::vector<ImagePair>& dataset, const SamplingSequence& seq,
                    double eta, std::uint64_t seed, const NoiseSchedule& sched) {
    if (dataset.empty()) throw std::invalid_argument("evaluation set is empty");
    std::vector<ImageScore> rows;
    double seconds = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const ImageTensor out =
            reverse_process(model, dataset[i].degraded, seq, eta, derive_seed(seed, i), sched);
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const Image8 a = to_image8(out);
        const Image8 b = to_image8(dataset[i].clean);
        rows.push_back({static_cast<int>(i), psnr(a, b), ssim(a, b)});
    }
    return summarize(std::move(rows), seconds);
}

EvalReport evaluate_identity(const std::vector<ImagePair>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("evaluation set is empty");
    std::vector<ImageScore> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Image8 a = to_image8(dataset[i].degraded);
        const Image8 b = to_image8(dataset[i].clean);
        rows.push_back({static_cast<int>(i), psnr(a, b), ssim(a, b)});
    }
    return summarize(std::move(rows), 0.0);
}

void write_report(const fs::path& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "image_id,psnr_db,ssim\n";
    for (const auto& r : report.rows) {
        out << r.image_id << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << '\n';
    }
}

}  // namespace uwdiff
