#pragma once

// Central-difference gradient checker. Runs entirely in double so the
// h=1e-5 step leaves ~1e-10 truncation error against analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "spikegan/ops.hpp"
#include "spikegan/tape.hpp"

namespace gradcheck {

using spikegan::Shape;
using spikegan::Tape;
using spikegan::Tensor;
using spikegan::Var;

using Builder = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({1e-6, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

struct Report {
    double max_rel = 0.0;
    int64_t checked = 0;
};

inline double eval(std::vector<Tensor<double>>& xs, const Builder& fn) {
    Tape<double> t;
    std::vector<Var<double>> vs;
    vs.reserve(xs.size());
    for (Tensor<double>& x : xs) vs.push_back(t.leaf(x, false));
    return fn(t, vs).val()[0];
}

// Compares d(fn)/d(xs[i][j]) for every input element against central
// differences. fn must return a scalar.
inline Report check(std::vector<Tensor<double>> xs, const Builder& fn, double h = 1e-5) {
    Tape<double> t;
    std::vector<Var<double>> vs;
    vs.reserve(xs.size());
    for (Tensor<double>& x : xs) vs.push_back(t.leaf(x, true));
    Var<double> loss = fn(t, vs);
    if (loss.val().size() != 1) throw spikegan::ShapeError("gradcheck needs a scalar loss");
    t.backward(loss);

    Report rep;
    for (size_t i = 0; i < xs.size(); ++i) {
        const bool has = t.has_grad(vs[i]);
        for (int64_t j = 0; j < xs[i].size(); ++j) {
            const double saved = xs[i][j];
            xs[i][j] = saved + h;
            const double fp = eval(xs, fn);
            xs[i][j] = saved - h;
            const double fm = eval(xs, fn);
            xs[i][j] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = has ? t.grad(vs[i])[j] : 0.0;
            rep.max_rel = std::max(rep.max_rel, rel_err(analytic, numeric));
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace gradcheck
