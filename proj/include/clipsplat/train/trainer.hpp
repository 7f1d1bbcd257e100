#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/errors.hpp"
#include "clipsplat/guidance/encoders.hpp"
#include "clipsplat/splat/gaussian_set.hpp"
#include "clipsplat/train/config.hpp"

namespace clipsplat::train {

/// Two consecutive non-finite losses. Carries the most recent snapshot taken at the configured
/// cadence (the input model if none was taken yet).
class TrainingDiverged : public TrainingDivergedError {
public:
    TrainingDiverged(const std::string& what, std::string component, splat::GaussianSet snapshot, std::uint64_t step)
        : TrainingDivergedError(what, std::move(component)), snapshot(std::move(snapshot)), step(step) {}

    splat::GaussianSet snapshot;
    std::uint64_t step;
};

/// One line of the stage-2 log. `total` is the weighted sum of the components.
struct StepRecord {
    std::uint64_t step = 0;
    double l_d = 0;
    double l_p = 0;
    double l_c = 0;
    double l_b = 0;
    double total = 0;
};

/// One line of the stage-1 log.
struct FitRecord {
    std::uint64_t step = 0;
    double loss = 0;
};

std::string to_jsonl(const std::vector<StepRecord>& log);
void write_log(const std::filesystem::path& path, const std::vector<StepRecord>& log);

/// Seeded stage-1 starting point: flat splats facing the viewer for images, space-time splats
/// spread over the clip for video, a ball of points inside the cameras for scenes. Colors are
/// sampled from the images where a pixel position is known.
splat::GaussianSet initialize(const data::Dataset& dataset, const FitConfig& cfg);

/// (1 - lambda) L1 + lambda (1 - SSIM) between 1 x 3 x H x W tensors; SSIM uses an 11 x 11
/// Gaussian window with sigma 1.5.
torch::Tensor reconstruction_loss(const torch::Tensor& render, const torch::Tensor& target, double lambda_ssim);

double psnr(const data::Image& a, const data::Image& b);

/// Stage 1. Image models also fit the mirrored view against the flipped image each step.
splat::GaussianSet fit_reconstruction(const data::Dataset& dataset, const FitConfig& cfg,
                                      const std::function<void(const FitRecord&)>& on_step = {});

/// Same, starting from a given model.
splat::GaussianSet fit_reconstruction(splat::GaussianSet model, const data::Dataset& dataset, const FitConfig& cfg,
                                      const std::function<void(const FitRecord&)>& on_step = {});

struct Encoders {
    std::shared_ptr<const guidance::ClipEncoder> clip;
    std::shared_ptr<const guidance::VggFeatures> vgg;
};

struct StylizeResult {
    splat::GaussianSet model;
    std::vector<StepRecord> log;
};

/// Stage 2. Each step renders one uniformly drawn view (image models: front or mirrored) and
/// descends the weighted style objective on the enabled groups. Throws IncompatibleModelsError
/// when the model and dataset modalities differ and TrainingDiverged on divergence.
StylizeResult stylize(const splat::GaussianSet& model, const guidance::StyleCondition& condition,
                      const data::Dataset& dataset, const TrainConfig& cfg, const Encoders& encoders,
                      const std::function<void(const StepRecord&)>& on_step = {});

/// Render of a view as a 1 x 3 x H x W float tensor.
torch::Tensor render_tensor(const splat::GaussianSet& model, const render::View& view, const render::Color& background);

}  // namespace clipsplat::train
