#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relseg/tensor.hpp"

namespace relseg {

/// Central finite-difference check of an analytic gradient, h = 1e-3 in
/// double precision. Perturbations are applied to the f32 storage; the
/// realized step is re-measured in double so storage rounding cancels.
/// Relative error uses max(|ga|, |gfd|, 1e-2) in the denominator so
/// near-zero entries are held to a 1e-6 absolute bar instead.
double fd_max_rel_err(Tensor& x, const std::function<double()>& eval, const Tensor& analytic,
                      double h = 1e-3);

/// Scalar-argument variant for losses taking plain doubles.
double fd_rel_err_scalar(double& x, const std::function<double()>& eval, double analytic,
                         double h = 1e-3);

struct GradCheckEntry {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_pass = false;
    double seconds = 0.0;
    double tolerance = 1e-4;
};

/// Runs the finite-difference suite over every loss with an analytic
/// gradient (path losses, aggregation, overlap losses, distillation,
/// and the three calibration losses with respect to every head
/// parameter). Instances are random but re-rolled deterministically when
/// they land within a finite-difference step of a kink (|.|, relu,
/// margin), where no two-sided derivative exists.
GradCheckReport run_gradcheck_suite(std::uint64_t seed, int instances_per_loss = 20);

} // namespace relseg
