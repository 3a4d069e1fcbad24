"""Natural measures, deterministic Markov models and coupled map lattices on [0, 1]."""

from .errors import (
    ConvergenceError,
    ErgodynError,
    InvalidChainError,
    InvalidMapError,
    SpecError,
    UnsupportedMapError,
)
from .maps import (
    Affine,
    PiecewiseMap,
    branch_preimages,
    catalog,
    classify_fixed_points,
    eval_map,
    orbit,
    transitivity_scan,
)
from .markov import (
    MarkovMapModel,
    StochasticMatrix,
    build_markov_map,
    build_random_walk_map,
    lumped_action,
    verify_markov,
)
from .measures import (
    CellDensity,
    EmpiricalMeasure,
    MeasureEstimate,
    birkhoff,
    cesaro_natural,
    ergodicity_report,
    occupation_fraction,
    push_mc,
    pushforward,
    w1_distance,
)
from .ulam import stationary, ulam_invariant_density, ulam_matrix
from .lattice import (
    CouplingSpec,
    Fixed,
    LatticeSystem,
    Periodic,
    apply_coupling,
    diffusive,
    doubling_transform,
    project_marginals,
    step,
)
from .phase import attractor_census, phase_sweep, stability_diagnostics
from .pca import PcaSpec, compile_pca, equivalence_report, step_compiled

__version__ = "0.1.0"
