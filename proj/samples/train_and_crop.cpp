// Trains a small coordinate-encoder policy on hidden-target scenes, then crops
// a fresh scene and compares the result with its target.
//
//   a2rl_sample [ticks]

#include <cstdio>
#include <cstdlib>

#include "a2rl/checkpoint.hpp"
#include "a2rl/eval.hpp"
#include "a2rl/pipeline.hpp"

int main(int argc, char** argv) {
    using namespace a2rl;

    RunConfig cfg;
    cfg.net.encoder = EncoderKind::Coordinate;
    cfg.trainer.total_steps = argc > 1 ? std::atoll(argv[1]) : 2000;
    cfg.trainer.seed = 7;

    const TrainResult res = train_run(cfg, [](const LogRecord& r) {
        std::printf("step %lld  reward %.3f  length %.1f  final IoU %.3f\n", static_cast<long long>(r.step),
                    r.mean_reward, r.mean_length, r.mean_final_score);
    });

    HiddenTargetTaskSource scenes(cfg.synthetic, cfg.reward);
    Rng rng(2024);
    const CropWindow target = sample_target_window(rng, scenes.dims(), cfg.reward);
    const EpisodeTask task = scenes.task_for(target);

    const AgentCrop crop = agent_crop(res.params, *task.image, cfg.env());
    const PixelRect box = to_pixel_rect(crop.window, task.image->dims());
    const PixelRect want = to_pixel_rect(target, task.image->dims());
    std::printf("crop   %d %d %d %d after %d steps\n", box.left, box.top, box.width, box.height, crop.steps);
    std::printf("target %d %d %d %d  IoU %.3f\n", want.left, want.top, want.width, want.height, iou(box, want));

    save_checkpoint("sample.ckpt", res.params, cfg);
    std::printf("checkpoint written to sample.ckpt\n");
}
