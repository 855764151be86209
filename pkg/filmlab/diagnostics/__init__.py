"""
FILMLAB Diagnostics — Runtime Quantities + Check Suite

  - quantities: energy/entropy records, dissipation integrands, Itô terms, Hölder quotient
  - checks:     every computable identity and inequality as a CheckResult
  - corpus:     random field generators and the parallel corpus run
"""

from filmlab.diagnostics.checks import CheckResult, SuiteReport, SuiteTolerances, lemma_suite
from filmlab.diagnostics.corpus import VerifyConfig, run_corpus
from filmlab.diagnostics.quantities import (
    QUANTITY_NAMES,
    DiagnosticsRecord,
    holder_quotient,
    ito_drift_terms,
    oscillation_check,
    record,
)

__all__ = [
    "CheckResult",
    "DiagnosticsRecord",
    "QUANTITY_NAMES",
    "SuiteReport",
    "SuiteTolerances",
    "VerifyConfig",
    "holder_quotient",
    "ito_drift_terms",
    "lemma_suite",
    "oscillation_check",
    "record",
    "run_corpus",
]
