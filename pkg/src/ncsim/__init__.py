"""Simulation and analysis of networked control loops with delay and packet loss."""

from .channel import (
    ConstantDelay,
    CorrelatedDelay,
    DelaySample,
    DiscreteUniform,
    LossModel,
    RandomStream,
    SymmetricDelay,
    UncorrelatedDelay,
    Uniform,
    fork_stream,
    sample_delay,
    sample_loss,
)
from .errors import (
    ConfigurationError,
    ContractViolation,
    DesignError,
    DimensionError,
    DomainError,
    NcsError,
    ValidationError,
)
from .linalg import (
    ContinuousPlant,
    DelayDecomposition,
    DiscretizationTriple,
    LiftedSystem,
    build_lifted,
    decompose_delay,
    discretize,
    gamma_split,
    mat_exp,
    spectral_radius,
)
from .scenarios import CATALOG, ScenarioSpec, scenario_from_case, validate
from .sim import (
    LoopState,
    MonteCarloSummary,
    SimulationTrace,
    StepRecord,
    closed_loop_matrix,
    monte_carlo,
    run,
    step_compensated,
    step_delay_free,
    step_long_delay,
    step_naive_loss,
    step_short_delay,
)
from .strategies import (
    CompensationStrategy,
    EstimatorState,
    FixedGain,
    GainBucket,
    LQRGain,
    ScheduledGain,
    compensate_ca,
    compensate_sc,
    gain,
    lqr_design,
)

__version__ = "0.1.0"
