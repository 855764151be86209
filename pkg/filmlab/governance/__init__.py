"""
FILMLAB Governance — Error Types + Hypothesis Enforcement

Every failure the library raises derives from FilmlabError. The
HypothesisEnforcer guards the standing assumptions of a run (regularization
large enough, admissible initial data) and refuses to start a run that
violates them unless explicitly overridden.
"""

from __future__ import annotations

from loguru import logger


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class FilmlabError(Exception):
    """Base class for all filmlab errors."""
    pass


class DimensionError(FilmlabError):
    """Raised when fields live on different grids or have the wrong length."""
    pass


class PositivityError(FilmlabError):
    """Raised when a strictly positive field is required and a node is <= 0."""
    pass


class DomainError(FilmlabError):
    """Raised when a closed form is queried outside its domain."""
    pass


class ConfigurationError(FilmlabError):
    """Raised when a run configuration cannot be loaded or is inconsistent."""
    pass


class HypothesisViolation(ConfigurationError):
    """Raised when a run would start outside the standing assumptions."""
    pass


class NoiseStreamError(FilmlabError):
    """Raised when a noise stream is closed or asked for the wrong modes."""
    pass


class SolverError(FilmlabError):
    """Raised when the implicit linear system is singular or not finite."""
    pass


class StepRejected(FilmlabError):
    """Signals that a tentative step left the admissible set; dt gets halved."""
    pass


class PersistError(FilmlabError):
    """Raised when report or plot files cannot be written or read."""
    pass


# ---------------------------------------------------------------------------
# Hypothesis Enforcement
# ---------------------------------------------------------------------------

class HypothesisEnforcer:
    """
    Checks run-level assumptions before any path is started.

    Each check returns the list of violations found. Empty = clean.
    Raises HypothesisViolation if violations are found and no override is set.
    """

    def __init__(self, s_min: float, e_max: float):
        self.s_min = s_min
        self.e_max = e_max

    def check_regularization(self, S: float, allow_small_s: bool = False) -> list[str]:
        violations = []
        if S < self.s_min:
            violations.append(f"S={S!r} is below s_min={self.s_min!r}")

        if violations and not allow_small_s:
            raise HypothesisViolation(
                f"Regularization too small: {violations[0]}\n"
                f"Set model.allow_small_s to override."
            )
        for v in violations:
            logger.warning(f"[GOVERNANCE] Override active: {v}")
        return violations

    def check_initial(self, energy: float, min_u: float, mean_u: float) -> list[str]:
        """Initial data must be positive, of positive mean and strictly below the threshold."""
        violations = []
        if not min_u > 0.0:
            violations.append(f"initial film not positive (min={min_u!r})")
        if not mean_u > 0.0:
            violations.append(f"initial mean not positive (mean={mean_u!r})")
        if not energy < self.e_max:
            violations.append(f"initial energy {energy!r} >= E_max_h {self.e_max!r}")

        if violations:
            raise HypothesisViolation(
                "Inadmissible initial data: " + "; ".join(violations)
            )
        return violations
