#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwdiff/data.hpp"
#include "uwdiff/diffusion.hpp"
#include "uwdiff/nn/denoiser.hpp"
#include "uwdiff/random.hpp"

namespace uwdiff {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int total_steps = 20000;
    int diffusion_steps = 2000;
    int checkpoint_interval = 1000;
    std::uint64_t seed = 0;
    int image_size = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adam with bias correction. Moment buffers mirror the parameter store.
class Adam {
public:
    Adam(const nn::ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(nn::ParamStore& params, const nn::Gradients& grads);

    std::int64_t steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }

    /// Moments and step counter in the checkpoint container format.
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// One (pair, t, eps) draw of the training objective.
struct TrainSample {
    const ImagePair* pair;
    int t;
    ImageTensor eps;
};

/// Draws t ~ U{1..T} and eps ~ N(0, I) for every pair of the batch.
std::vector<TrainSample> draw_samples(const std::vector<const ImagePair*>& batch, Rng& rng,
                                      const NoiseSchedule& sched);

/// Mean L1 between eps and the prediction over all samples, accumulating the
/// gradient of that mean into `grads`.
double loss_and_gradient(const nn::Denoiser& model, const std::vector<TrainSample>& samples,
                         const NoiseSchedule& sched, nn::Gradients& grads);

/// Gradient step on fixed samples. Throws NonFiniteLossError before touching
/// the parameters if the loss is not finite.
double apply_samples(nn::Denoiser& model, Adam& optimizer, const std::vector<TrainSample>& samples,
                     const NoiseSchedule& sched);

double train_step(nn::Denoiser& model, Adam& optimizer, const std::vector<const ImagePair*>& batch, Rng& rng,
                  const NoiseSchedule& sched);

struct TrainOptions {
    std::filesystem::path out_dir;
    /// Continue from this checkpoint; its Adam sidecar must sit next to it.
    std::optional<std::filesystem::path> resume;
    std::function<void(int step, double loss)> progress;
};

struct TrainResult {
    int final_step = 0;
    double final_loss = 0.0;
    std::filesystem::path final_checkpoint;
};

std::string checkpoint_name(int step);
std::filesystem::path optimizer_sidecar(const std::filesystem::path& checkpoint);
/// Step number encoded in a step_NNNNNN.ckpt file name.
int checkpoint_step(const std::filesystem::path& checkpoint);

/// Runs steps (start, total] writing out_dir/train_log.csv (step, loss,
/// wall_seconds) and out_dir/step_NNNNNN.ckpt every checkpoint interval and
/// at the last step. Step k draws its batch and noise from derive_seed(seed, k),
/// so a resumed run follows the same trajectory as an uninterrupted one.
TrainResult train(nn::Denoiser& model, const std::vector<ImagePair>& train_set, const TrainConfig& config,
                  const TrainOptions& options);

struct ImageScore {
    int image_id;
    double psnr_db;
    double ssim;
};

struct EvalReport {
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double seconds_per_image = 0.0;
    std::vector<ImageScore> rows;
};

/// Enhances every degraded image (image i uses seed derive_seed(seed, i)) and
/// scores it against the clean image.
EvalReport evaluate(const DenoiserFn& model, const std::vector<ImagePair>& dataset, const SamplingSequence& seq,
                    double eta, std::uint64_t seed, const NoiseSchedule& sched);

/// Baseline: degraded input scored against the clean image.
EvalReport evaluate_identity(const std::vector<ImagePair>& dataset);

/// CSV with columns image_id, psnr_db, ssim.
void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace uwdiff
