"""mdlab: a numerical laboratory for tail probabilities of self-normalized
random-walk maxima.

Subpackages by responsibility:

* :mod:`mdlab.distributions` - centered increment laws, moments, tilting
* :mod:`mdlab.theory` - moment functionals, regime flags, normal tails
* :mod:`mdlab.oracle` - exact enumeration and lattice dynamic programs
* :mod:`mdlab.mc` - reproducible (counter-based) Monte Carlo with
  exponential-tilting importance sampling
* :mod:`mdlab.experiments` - config-driven sweeps with resumable CSV output
* :mod:`mdlab.cli` - the ``mdlab`` command line
"""

__version__ = "0.1.0"

from .distributions import (  # noqa: F401
    CenteredExponential,
    Distribution,
    MomentQuery,
    Rademacher,
    StudentT,
    TiltedDistribution,
    TwoPoint,
    Uniform,
    from_literal,
    moment,
    sample,
    tilt,
)
from .errors import (  # noqa: F401
    BudgetExceededError,
    ConfigError,
    InfeasibleError,
    InfiniteMomentError,
    MdlabError,
    TiltUnsupportedError,
)
from .theory import (  # noqa: F401
    BlockPartition,
    SequenceSpec,
    TheoryQuantities,
    build_blocks,
    check_suffix_moment_ratios,
    check_tail_segment_ratio,
    compute_quantities,
    error_envelope,
    normal_tail,
    split_index,
)
