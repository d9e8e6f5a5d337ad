// SPDX-License-Identifier: Apache-2.0
#include "distilla/distill/budget.hpp"

#include <cmath>

#include "distilla/core/error.hpp"

namespace distilla::distill {

void DistillBudget::validate() const {
    require(ipc >= 1, Errc::invalid_argument, "ipc must be at least 1");
    require(outer_iterations >= 1, Errc::invalid_argument, "outer_iterations must be at least 1");
    require(inner_steps >= 1, Errc::invalid_argument, "inner_steps must be at least 1");
    require(expert_span >= 1, Errc::invalid_argument, "expert_span must be at least 1");
    require(std::isfinite(outer_lr) && outer_lr >= 0.0, Errc::invalid_argument, "outer_lr must be nonnegative");
    require(std::isfinite(student_lr) && student_lr >= 0.0, Errc::invalid_argument, "student_lr must be nonnegative");
    require(student_momentum >= 0.0 && student_momentum < 1.0, Errc::invalid_argument,
            "student_momentum must lie in [0, 1)");
    require(real_batch_per_class >= 1 && real_batch >= 1, Errc::invalid_argument, "real batch sizes must be positive");
    require(std::isfinite(initial_student_lr), Errc::invalid_argument, "initial_student_lr must be finite");
    require(std::isfinite(lr_lr) && lr_lr >= 0.0, Errc::invalid_argument, "lr_lr must be nonnegative");
}

Json to_json(const DistillBudget& b) {
    Json ops = Json::array();
    for (const auto op : b.augment) ops.push_back(std::string(to_string(op)));
    return {{"ipc", b.ipc},
            {"outer_iterations", b.outer_iterations},
            {"inner_steps", b.inner_steps},
            {"expert_span", b.expert_span},
            {"outer_lr", b.outer_lr},
            {"match_metric", std::string(to_string(b.match_metric))},
            {"student_lr", b.student_lr},
            {"student_momentum", b.student_momentum},
            {"real_batch_per_class", b.real_batch_per_class},
            {"real_batch", b.real_batch},
            {"initial_student_lr", b.initial_student_lr},
            {"learn_lr", b.learn_lr},
            {"lr_lr", b.lr_lr},
            {"max_anchor_step", b.max_anchor_step},
            {"augment", ops},
            {"init_mode", std::string(to_string(b.init_mode))}};
}

}  // namespace distilla::distill
