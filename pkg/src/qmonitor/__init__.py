"""Simulation toolkit for continuously monitored diffusive systems.

The package covers three regimes of a system whose position is read out
continuously:

* exact nonlinear filtering of a static observable from the integrated
  signal (`qnd`),
* monitored dissipative dynamics on a spatial grid and its strong-
  measurement classical limit (`lindblad`),
* collapsed Gaussian packets and the inertial Langevin equation they
  approach in the wide-separation limit (`packet`).

`stats` holds the reusable verification statistics, `acceptance` the
shipped pass/fail criteria, and `cli` the command-line front end.
"""

from .errors import (
    ConfigError,
    IntegrationError,
    MeasureDiedError,
    NumericalError,
    QmonitorError,
    StabilityError,
)
from .noise import NoisePath, RngStream, TimeGrid, noise_matrix, sample_noise
from .measure import (
    GridMeasure,
    TestFunction,
    mean_and_variance,
    measure_from_csv,
    measure_to_csv,
    moment,
    register_test_function,
    renormalize,
    sample_nodes,
    to_observable_units,
    to_position_units,
)
from .qnd import (
    DiscreteChainConfig,
    GirsanovResult,
    ObserverEnsemble,
    SignalPath,
    cheater_signal_batch,
    collapse_width,
    conditional_variance,
    filter_replay,
    girsanov_check,
    innovation_batch,
    innovation_path,
    observer_batch,
    posterior_closed_form,
    qnd_step,
    qnd_step_linear,
    run_discrete_chain,
    simulate_cheater,
    simulate_observer,
)
from .lindblad import (
    DiffusionEnsemble,
    FokkerPlanckOperator,
    LindbladSpec,
    MonitoredDiffusionConfig,
    SweepReport,
    classical_sde_oracle,
    diffusion_batch,
    fokker_planck_generator,
    monitored_diffusion_step,
    separated_kernel,
    separated_kernel_residual,
    simulate_monitored_diffusion,
    strong_limit_sweep,
)
from .packet import (
    DoubleScalingReport,
    GaussianPacket,
    PacketPath,
    PhysicalScales,
    Potential,
    a_drift,
    a_infinity,
    double_scaling_study,
    langevin_batch,
    langevin_harmonic_exact,
    packet_batch,
    packet_dispersions,
    simulate_langevin,
    simulate_packet,
    variance_closed_form,
)
from .stats import (
    DriftEstimate,
    EnsembleReport,
    KsResult,
    OrderFit,
    convergence_order_fit,
    ks_one_sample,
    ks_two_sample,
    martingale_drift,
    run_ensemble,
)

__version__ = "0.1.0"
