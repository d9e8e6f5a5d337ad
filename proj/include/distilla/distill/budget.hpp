// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "distilla/core/persistence.hpp"
#include "distilla/core/synthetic.hpp"
#include "distilla/distill/augment.hpp"
#include "distilla/distill/matching.hpp"

namespace distilla::distill {

/// Optimization budget for one distillation stage.
struct DistillBudget {
    std::size_t ipc = 1;
    std::size_t outer_iterations = 100;
    std::size_t inner_steps = 10;  // N: student steps per outer iteration
    std::size_t expert_span = 2;   // M: expert steps matched, measured in optimizer steps
    double outer_lr = 0.1;
    MatchMetric match_metric = MatchMetric::layerwise_cosine;

    // Student inner loop.
    double student_lr = 0.01;
    double student_momentum = 0.0;
    std::size_t real_batch_per_class = 64;  // matching batch per class
    std::size_t real_batch = 128;           // student batch in real-trajectory mode

    // Trajectory matching.
    double initial_student_lr = 0.01;
    bool learn_lr = true;
    double lr_lr = 1e-5;
    std::size_t max_anchor_step = 0;  // 0 means no limit

    std::vector<AugmentOp> augment;
    InitMode init_mode = InitMode::real_sample;

    void validate() const;
};

Json to_json(const DistillBudget& budget);

/// Pixel optimizer momentum for gradient matching; trajectory matching uses none.
inline constexpr double kGradmatchOuterMomentum = 0.5;

}  // namespace distilla::distill
