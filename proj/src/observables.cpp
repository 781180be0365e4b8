#include "spinmeas/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spinmeas/coherent_algebra.hpp"

namespace spinmeas {
namespace {

double entropy_of_spectrum(const Eigen::Vector2d& lambdas) {
    double s = 0.0;
    for (double l : lambdas) {
        l = std::clamp(l, 0.0, 1.0);
        if (l > 0.0) {
            s -= l * std::log(l);
        }
    }
    return s;
}

// Hermitian 2x2 eigenvalues in closed form.
Eigen::Vector2d eigenvalues_2x2(const Eigen::Matrix2cd& m) {
    const double a = std::real(m(0, 0));
    const double d = std::real(m(1, 1));
    const double mean = 0.5 * (a + d);
    const double half_gap = std::hypot(0.5 * (a - d), std::abs(m(1, 0)));
    return {mean + half_gap, mean - half_gap};
}

}  // namespace

double linear_entropy(const SpinDensity& rho) {
    return 1.0 - std::real((rho * rho).trace());
}

double spin_entropy(const SpinDensity& rho) {
    return entropy_of_spectrum(eigenvalues_2x2(rho));
}

double environment_entropy(const D2State& state) {
    // W[s,s'] = <B_s|B_s'>; its nonzero spectrum is that of the bath reduced density.
    const Eigen::MatrixXcd s = gram_matrix(state.gammas);
    Eigen::Matrix2cd w;
    for (int a = 0; a < 2; ++a) {
        const Eigen::VectorXcd sb = s * state.amps.col(a);
        for (int b = 0; b < 2; ++b) {
            w(b, a) = state.amps.col(b).dot(sb);
        }
    }
    w /= std::real(w.trace());
    return entropy_of_spectrum(eigenvalues_2x2(w));
}

EntropyRecord entropies(const D2State& state) {
    const SpinDensity rho = reduced_spin_density(state);
    EntropyRecord r;
    r.linear = linear_entropy(rho);
    r.spin = spin_entropy(rho);
    r.environment = environment_entropy(state);
    r.mutual = r.spin + r.environment;
    return r;
}

AsymptoteRecord extract_asymptote(const std::vector<TraceSample>& trace, const AsymptoteOptions& options) {
    std::vector<const TraceSample*> post;
    for (const auto& sample : trace) {
        if (sample.t >= options.t_from) {
            post.push_back(&sample);
        }
    }
    const auto take = static_cast<std::size_t>(std::ceil(options.window_frac * static_cast<double>(post.size())));
    if (post.empty() || take == 0) {
        throw std::invalid_argument("extract_asymptote: empty window");
    }
    const std::size_t first = post.size() - take;
    double sum = 0.0;
    double sum_a2 = 0.0;
    for (std::size_t i = first; i < post.size(); ++i) {
        sum += post[i]->a.z;
        sum_a2 += post[i]->a.norm_squared();
    }
    const double n = static_cast<double>(take);
    const double mean = sum / n;
    double var = 0.0;
    for (std::size_t i = first; i < post.size(); ++i) {
        const double d = post[i]->a.z - mean;
        var += d * d;
    }
    AsymptoteRecord rec;
    rec.a_z_inf = mean;
    rec.window_std = std::sqrt(var / n);
    rec.a_norm2_inf = sum_a2 / n;
    rec.converged = rec.window_std < options.convergence_std;
    rec.t_lo = post[first]->t;
    rec.t_hi = post.back()->t;
    return rec;
}

long Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), 0L);
}

Histogram histogram_asymptotes(const std::vector<AsymptoteRecord>& records, int bins, bool include_nonconverged) {
    if (bins < 1) {
        throw std::invalid_argument("histogram_asymptotes: bins must be >= 1");
    }
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        h.edges[static_cast<std::size_t>(i)] = -1.0 + 2.0 * i / bins;
    }
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (const auto& r : records) {
        if (!include_nonconverged && !r.converged) {
            continue;
        }
        const double x = std::clamp(r.a_z_inf, -1.0, 1.0);
        const int bin = std::min(bins - 1, static_cast<int>(std::floor((x + 1.0) * 0.5 * bins)));
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    if (h.total() == 0) {
        throw std::invalid_argument("histogram_asymptotes: no records after filtering");
    }
    return h;
}

double predicted_polarization(double phi) {
    return std::cos(2.0 * phi);
}

double outcome_density_unnormalized(double a) {
    return std::sqrt(1.0 + 1.0 / (1.0 - a * a));
}

double outcome_density_norm(double epsilon) {
    // a = sin(theta) turns the integrand into sqrt(1 + cos^2 theta), which is smooth.
    const double theta_max = std::asin(1.0 - epsilon);
    const int intervals = 4096;
    const double h = 2.0 * theta_max / intervals;
    auto f = [](double th) { return std::sqrt(1.0 + std::cos(th) * std::cos(th)); };
    double sum = f(-theta_max) + f(theta_max);
    for (int i = 1; i < intervals; ++i) {
        sum += f(-theta_max + i * h) * ((i % 2 == 1) ? 4.0 : 2.0);
    }
    return sum * h / 3.0;
}

PhiSweepFit phi_sweep_fit(const std::vector<PhiSweepPoint>& points, double epsilon) {
    if (points.size() < 3) {
        throw std::invalid_argument("phi_sweep_fit: need at least 3 points");
    }
    const bool all_same = std::all_of(points.begin(), points.end(),
                                      [&](const PhiSweepPoint& p) { return p.phi == points.front().phi; });
    if (all_same) {
        throw std::invalid_argument("phi_sweep_fit: all points share one mixing angle");
    }
    PhiSweepFit fit;
    fit.density_epsilon = epsilon;
    for (const auto& p : points) {
        if (!std::isfinite(p.phi) || !std::isfinite(p.a_z_inf)) {
            throw std::invalid_argument("phi_sweep_fit: non-finite point");
        }
        const double pred = predicted_polarization(p.phi);
        fit.predicted.push_back(pred);
        const double d = p.a_z_inf - pred;
        fit.sse += d * d;
        fit.max_abs = std::max(fit.max_abs, std::abs(d));
    }
    fit.rms = std::sqrt(fit.sse / static_cast<double>(points.size()));
    fit.density_norm = outcome_density_norm(epsilon);
    return fit;
}

}  // namespace spinmeas
