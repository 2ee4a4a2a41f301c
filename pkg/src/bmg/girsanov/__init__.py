"""Processes under a vector measure, martingale checks and the change of measure."""

from .checks import (
    AssumptionReports,
    CheckReport,
    DensityEntry,
    Eq5Report,
    GirsanovBundle,
    RatioEntry,
    Theorem6Report,
    Theorem7Report,
    check_assumptions,
    check_eq5,
    girsanov_measure,
    girsanov_ratio,
    marginal_density,
    run_girsanov,
    under,
    verify_theorem6,
    verify_theorem7,
)
from .fixtures import (
    Fixture,
    closed_form_ratio,
    closed_form_tilt,
    coin_walk,
    explicit_walk,
    fixture_brownian_walk,
    fixture_exact_synthetic,
)
from .process import (
    Filtration,
    MartingaleReport,
    PathProcess,
    build_filtration,
    is_martingale,
    martingale_of,
)
from .walk import LatticeWalk, TiltedWalk
