"""Prescribed scalar and boundary mean curvature on the half 3-sphere.

Closed-form bubble energies, the Index degree count, a reduced
multi-bubble energy, an axisymmetric subcritical solver and blow-up
diagnostics.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvergenceError,
    DomainError,
    GenericityError,
    HalfSphereError,
    InfeasibleError,
    ParseError,
    SymmetryError,
    UsageError,
)
from .fields import as_field  # noqa: E402
from .energetics import (  # noqa: E402
    boundary_blowup_energy,
    comparison_margin,
    interior_blowup_energy,
    phi,
    phi_closed,
    psi,
    psi_closed,
)
from .morse_index import (  # noqa: E402
    check_genericity,
    find_critical_points,
    homotopy_Kt,
    index_formula,
    index_report,
)
from .reduced_energy import BubbleConfiguration, predict_concentration, reduced_energy, reduced_gradient  # noqa: E402
from .diagnostics import boundary_term_limit, kazdan_warner_check, pohozaev_identity  # noqa: E402
from .solver import blowup_scan, extract_blowup_data, solve_subcritical  # noqa: E402
