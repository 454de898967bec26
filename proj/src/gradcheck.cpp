#include "navrep/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "navrep/error.hpp"

namespace navrep {

namespace {

double eval_loss(ParamStore& store, const LossBuilder& f) {
    Tape tape;
    ParamCtx ctx(tape, store);
    Var loss = f(tape, ctx);
    const double v = loss.scalar();
    if (!std::isfinite(v)) throw NumericsError("grad_check: non-finite loss");
    return v;
}

}  // namespace

GradCheckResult grad_check(ParamStore& store, const LossBuilder& f, int coords_per_param, Rng& rng,
                           double step) {
    store.zero_grad();
    {
        Tape tape;
        ParamCtx ctx(tape, store);
        Var loss = f(tape, ctx);
        if (!std::isfinite(loss.scalar())) throw NumericsError("grad_check: non-finite loss");
        tape.backward(loss);
    }
    // Snapshot analytic gradients before the finite-difference sweep.
    std::map<std::string, Tensor> analytic;
    for (const auto& name : store.names()) analytic.emplace(name, store.entry(name).grad);

    GradCheckResult result;
    for (const auto& name : store.names()) {
        Tensor& value = store.value(name);
        const Tensor& an = analytic.at(name);
        const std::int64_t n = value.numel();
        const std::int64_t k = std::min<std::int64_t>(coords_per_param, n);
        auto coords = rng.sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
        for (std::size_t c : coords) {
            const double x0 = value.data[c];
            value.data[c] = x0 + step;
            const double fp = eval_loss(store, f);
            value.data[c] = x0 - step;
            const double fm = eval_loss(store, f);
            value.data[c] = x0;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = an.data[c];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_index = static_cast<std::int64_t>(c);
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    store.zero_grad();
    return result;
}

}  // namespace navrep
