"""Numerical engine for the Kobayashi-Fuks metric on bounded planar domains.

Bergman kernel jets on model domains, the induced Kobayashi-Fuks metric,
geodesic integration, boundary asymptotics, and geodesic-loop / spiral
hunting on multiply connected domains.
"""

from .domains import (
    DefiningFunction,
    DomainError,
    PlanarDomain,
    RhoJet,
    annulus,
    boundary_point_at_depth,
    in_compact_sublevel,
    make_strictly_subharmonic,
    rho_jet,
    two_hole_domain,
    unit_disk,
)
from .kernels import (
    AnnulusKernel,
    BasisKernel,
    DiskKernel,
    KernelError,
    KernelJet,
    build_basis,
    load_basis,
    save_basis,
)
from .metric import (
    MetricError,
    MetricProvider,
    MetricSample,
    RadialMetricCache,
    bergman_metric,
    kf_metric,
    pullback_residual,
    ricci,
)
from .geodesics import (
    CollarEstimate,
    CriticalPoint,
    GeodesicState,
    Trajectory,
    critical_scan,
    estimate_epsilon,
    geodesic_rhs,
    integrate,
    rho_second_derivative,
    unit_speed_velocity,
)
from .asymptotics import (
    AsymptoticSample,
    ScanReport,
    asymptotic_sample,
    boundary_scan,
)
from .spirals import (
    LoopOptions,
    LoopSpec,
    NoLoopError,
    SpiralCertificate,
    SpiralError,
    confinement_check,
    construct_spiral,
    find_closed_geodesic,
    find_loop,
    winding_numbers,
)

__version__ = "0.1.0"
