"""Value-of-information analysis over probabilistic sensitivity analysis output.

The heavy lifting lives in the compiled ``_core`` module; this package simply
re-exports it.
"""

from ._core import (  # noqa: F401
    AugmentedPsaDataset,
    PsaDataset,
    VoikitError,
    builtin_models,
    curves,
    enbs,
    ess_direct,
    evpi,
    evppi,
    evsi_ga,
    evsi_is,
    evsi_mm,
    evsi_oracle,
    evsi_rb,
    population_scale,
    run_psa,
)

__all__ = [
    "AugmentedPsaDataset",
    "PsaDataset",
    "VoikitError",
    "builtin_models",
    "curves",
    "enbs",
    "ess_direct",
    "evpi",
    "evppi",
    "evsi_ga",
    "evsi_is",
    "evsi_mm",
    "evsi_oracle",
    "evsi_rb",
    "population_scale",
    "run_psa",
]
