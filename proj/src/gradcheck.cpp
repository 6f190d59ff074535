#include "vila/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vila/rng.hpp"

namespace vila {

GradCheckReport gradcheck_model(VilaModel& model, const Bag& bag, int label,
                                double fd_step) {
    auto loss_value = [&] {
        Tape tape;
        auto diag = model.forward(tape, bag);
        return model.normalize_and_loss(tape, diag, label)->values[0];
    };

    auto params = model.parameters();
    model.zero_grad();
    {
        Tape tape;
        auto diag = model.forward(tape, bag);
        auto loss = model.normalize_and_loss(tape, diag, label);
        tape.backward(loss);
    }

    GradCheckReport report;
    for (auto& [name, t] : params) {
        GradCheckEntry entry{name, 0.0};
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double saved = t->values[i];
            t->values[i] = saved + fd_step;
            const double up = loss_value();
            t->values[i] = saved - fd_step;
            const double down = loss_value();
            t->values[i] = saved;
            const double fd = (up - down) / (2.0 * fd_step);
            const double analytic = t->grad[i];
            const double denom = std::max(std::abs(analytic) + std::abs(fd), 1e-3);
            entry.max_rel_error =
                std::max(entry.max_rel_error, std::abs(analytic - fd) / denom);
        }
        report.worst = std::max(report.worst, entry.max_rel_error);
        report.groups.push_back(std::move(entry));
    }
    return report;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.n_prototypes = 2;
    cfg.n_context = 2;
    cfg.tau = 0.5;
    return cfg;
}

Bag tiny_bag(std::uint64_t seed, int dim, int n_low, int n_high) {
    Bag bag;
    bag.id = "tiny";
    bag.label = 0;
    bag.dim = dim;
    bag.n_low = n_low;
    bag.n_high = n_high;
    bag.h_low = gaussian_vector(std::size_t(n_low) * dim, derive_seed(seed, "tiny_low"));
    bag.h_high = gaussian_vector(std::size_t(n_high) * dim, derive_seed(seed, "tiny_high"));
    return bag;
}

GradCheckReport gradcheck_tiny_model(double fd_step) {
    DescriptionConfig desc = synthetic_descriptions({"alpha", "beta"});
    VilaModel model(tiny_model_config(), desc);
    Bag bag = tiny_bag();
    return gradcheck_model(model, bag, 1, fd_step);
}

}  // namespace vila
