#include "polarbev/grad_check.hpp"

#include <cmath>
#include <vector>

namespace polarbev::tc {

namespace {

double eval_scalar(const std::function<Tensor<double>(Tape<double>&)>& f, bool record,
                   Tape<double>& tape, const std::string& where) {
    tape.set_recording(record);
    Tensor<double> y = f(tape);
    if (y.numel() != 1) {
        throw DimensionError("grad_check: function must return a scalar, got " + shape_str(y.shape()));
    }
    const double v = y.at(0);
    if (!std::isfinite(v)) {
        throw NumericalError("grad_check: non-finite value " + std::to_string(v) + " " + where);
    }
    if (record) {
        tape.backward(y);
    }
    return v;
}

} // namespace

GradCheckReport grad_check(const std::function<Tensor<double>(Tape<double>&)>& f,
                           std::span<Tensor<double>* const> leaves, double step, double tol) {
    for (auto* leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->zero_grad();
    }

    Tape<double> tape;
    const double y0 = eval_scalar(f, true, tape, "in the base evaluation");
    tape.clear();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto* leaf : leaves) {
        analytic.emplace_back(leaf->grad().begin(), leaf->grad().end());
    }

    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor<double>& leaf = *leaves[li];
        for (std::int64_t ei = 0; ei < leaf.numel(); ++ei) {
            const double saved = leaf.at(ei);
            const std::string where =
                "perturbing leaf " + std::to_string(li) + " element " + std::to_string(ei);
            leaf.at(ei) = saved + step;
            const double y_plus = eval_scalar(f, false, tape, where);
            leaf.at(ei) = saved - step;
            const double y_minus = eval_scalar(f, false, tape, where);
            leaf.at(ei) = saved;

            const double fwd = (y_plus - y0) / step;
            const double bwd = (y0 - y_minus) / step;
            // one-sided slopes disagreeing means a kink inside [-step, +step]
            if (std::abs(fwd - bwd) > 0.1 * std::max({std::abs(fwd), std::abs(bwd), 1.0})) {
                ++report.excluded;
                continue;
            }
            const double central = (y_plus - y_minus) / (2.0 * step);
            const double a = analytic[li][static_cast<std::size_t>(ei)];
            const double rel = std::abs(a - central) / std::max({std::abs(a), std::abs(central), 1e-2});
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = "leaf " + std::to_string(li) + " element " + std::to_string(ei) +
                               " analytic " + std::to_string(a) + " fd " + std::to_string(central);
            }
        }
    }
    report.pass = report.checked > 0 && report.max_rel_err <= tol;
    return report;
}

} // namespace polarbev::tc
