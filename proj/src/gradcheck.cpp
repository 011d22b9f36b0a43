#include "haaseg/gradcheck.hpp"

#include "haaseg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace haaseg {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double eps,
                                  std::size_t max_coords_per_input) {
    std::vector<bool> restore_flag;
    for (auto& t : inputs) {
        restore_flag.push_back(t.requires_grad());
        t.set_requires_grad(true);
        t.clear_grad();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor y;
        {
            Tape::Scope scope(tape);
            y = f();
        }
        tape.backward(y);
        for (auto& t : inputs)
            analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                               : std::vector<double>(t.numel(), 0.0));
    }

    auto eval = [&] {
        Tensor y = f();
        if (y.numel() != 1)
            throw ContractError("finite_diff_check: function must be scalar-valued");
        return y.data()[0];
    };

    GradCheckResult result;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto data = inputs[ti].mutable_data();
        const std::size_t n = data.size();
        std::size_t step = 1;
        if (max_coords_per_input && n > max_coords_per_input)
            step = (n + max_coords_per_input - 1) / max_coords_per_input;
        for (std::size_t i = 0; i < n; i += step) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double fp = eval();
            data[i] = saved - eps;
            const double fm = eval();
            data[i] = saved;
            const double numeric = (fp - fm) / (2 * eps);
            const double a = analytic[ti][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++result.coordinates_checked;
            if (rel > result.max_rel_error || !std::isfinite(rel)) {
                result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
                result.input_index = ti;
                result.coordinate = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }

    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        inputs[ti].clear_grad();
        inputs[ti].set_requires_grad(restore_flag[ti]);
    }
    return result;
}

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    Tensor inputs[] = {x};
    return finite_diff_check([&] { return f(x); }, inputs, eps);
}

} // namespace haaseg
