#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/d2_state.hpp"
#include "spinmeas/modulation.hpp"
#include "spinmeas/observables.hpp"
#include "spinmeas/types.hpp"

namespace spinmeas {

enum class MetricSolver {
    // Eigendecomposition with smooth spectral filter lambda / (lambda^2 + cut^2).
    spectral,
    // Cholesky factorization of metric + cut * identity.
    shifted_cholesky,
};

std::string to_string(MetricSolver solver);
MetricSolver parse_metric_solver(const std::string& name);

struct IntegratorConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    // Metric eigenvalues below metric_reg * lambda_max are discarded.
    double metric_reg = 1e-10;
    MetricSolver solver = MetricSolver::spectral;
    bool adaptive = false;
    // Keeps a parity-invariant initial state on the invariant subspace; the
    // flow there is unstable to rounding.
    bool parity_projection = true;
    // Variational residual per unit norm that triggers a spawn.
    double spawn_threshold = 1e-3;
    // |<gamma_m|gamma_m'>| above this triggers apoptosis of one member.
    double apoptosis_overlap = 0.995;
    // Multiplicity cap for spawning; 0 means twice the initial multiplicity.
    long max_multiplicity = 0;
    double h_init = 1e-2;
    double h_min = 1e-10;
    double h_max = 1.0;
    long max_steps = 50'000'000;

    void validate() const;
};

// Scalar prefactors of the Hamiltonian at one instant:
//   H = eps_x sigma_x + eps_z sigma_z + sigma_z sum_n c_n (a_n^dag + a_n) + sum_n w_n a_n^dag a_n
struct HamiltonianTerms {
    double eps_x = 0.0;
    double eps_z = 0.0;
    Eigen::VectorXd couplings;  // f_OE(t) g_n
};

HamiltonianTerms hamiltonian_terms(const BathSpec& bath, const Protocol& protocol, double t);

// 2x2 block <a, s| H |b, s'> between two multimode configurations.
Eigen::Matrix2cd hamiltonian_block(const MultimodeConfig& a, const MultimodeConfig& b, const BathSpec& bath,
                                   const HamiltonianTerms& terms);

// <Psi|H(t)|Psi> / <Psi|Psi>, assembled block by block from coherent-state matrix elements.
double energy_expectation(const D2State& state, const BathSpec& bath, const Protocol& protocol, double t);

// <Psi|H^2|Psi> / <Psi|Psi>.
double energy_square_expectation(const D2State& state, const BathSpec& bath, const HamiltonianTerms& terms);

// Time derivative of the D2 parameters from the Dirac-Frenkel principle.
struct TdvpDerivative {
    Eigen::MatrixX2cd amps_dot;
    ConfigSet gammas_dot;
    // gammas_dot + i w_n gamma_mn: the part not due to free bath rotation.
    ConfigSet gammas_dot_slow;
    double norm2 = 0.0;
    double energy = 0.0;
    // ||(i d/dt - H) Psi|| / ||Psi||, only when requested (NaN otherwise).
    double residual = 0.0;
    long discarded = 0;  // metric eigenvalues below the cutoff (spectral solver only)
    Eigen::Index dimension = 0;
};

TdvpDerivative tdvp_derivative(const D2State& state, const BathSpec& bath, const HamiltonianTerms& terms,
                               double metric_reg, bool want_residual = false,
                               MetricSolver solver = MetricSolver::spectral);

struct BasisEvent {
    double t = 0.0;
    std::string kind;  // spawn | apoptosis | warning
    long multiplicity_before = 0;
    long multiplicity_after = 0;
    double value = 0.0;  // residual or overlap that triggered it
    std::string detail;
};

struct IntegratorStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evaluations = 0;
    long max_discarded = 0;
};

struct BlochTrace {
    std::vector<TraceSample> samples;
    std::vector<BasisEvent> events;
    IntegratorStats stats;
    D2State final_state;
};

// Adaptive Dormand-Prince 5(4) propagation of D2 states. Bath parameters are
// integrated in the interaction picture beta_mn = gamma_mn exp(i w_n t), so
// the free rotation does not limit the step size.
class Propagator {
  public:
    Propagator(BathSpec bath, Protocol protocol, IntegratorConfig config);

    const BathSpec& bath() const { return bath_; }
    const Protocol& protocol() const { return protocol_; }
    const IntegratorConfig& config() const { return config_; }

    // One accepted step of at most `h_try` (shrunk on rejection), never past t_limit.
    // Returns the suggested next step size.
    double step(D2State& state, double h_try, double t_limit);

    // Spawn and apoptosis. Appends events; returns true if the basis changed.
    bool adapt_basis(D2State& state, std::vector<BasisEvent>& events, long max_multiplicity) const;

    BlochTrace run(const D2State& initial, const std::vector<double>& sample_times);

    const IntegratorStats& stats() const { return stats_; }

    TraceSample observe(const D2State& state) const;

  private:
    using Vec = Eigen::VectorXcd;

    Vec pack(const D2State& state) const;
    void unpack(const Vec& y, double t, Eigen::Index multiplicity, D2State& state) const;
    Vec rhs(double t, const Vec& y, Eigen::Index multiplicity);
    // Attempts one step from (t, y) with derivative k1; on success fills y_new, k_new.
    double attempt(double t, const Vec& y, const Vec& k1, double h, Eigen::Index multiplicity, Vec& y_new,
                   Vec& k_new);

    BathSpec bath_;
    Protocol protocol_;
    IntegratorConfig config_;
    IntegratorStats stats_;
    std::vector<Vec> stages_;
};

// Free-function forms.
D2State step(const D2State& state, const BathSpec& bath, const Protocol& protocol, const IntegratorConfig& cfg,
             double dt_hint);
D2State adapt_basis(const D2State& state, const BathSpec& bath, const Protocol& protocol,
                    const IntegratorConfig& cfg, std::vector<BasisEvent>* events = nullptr,
                    long max_multiplicity = 0);
BlochTrace run_trajectory(const D2State& initial, const BathSpec& bath, const Protocol& protocol,
                          const IntegratorConfig& cfg, const std::vector<double>& sample_times);

// Uniform grid t0, t0 + dt, ..., t_end (t_end always included).
std::vector<double> sample_grid(double t0, double t_end, double dt);

// Least-squares re-expression of the state without configuration `drop`.
D2State remove_configuration(const D2State& state, Eigen::Index drop, double metric_reg = 1e-12);

}  // namespace spinmeas
