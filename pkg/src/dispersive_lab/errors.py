"""Exception and warning types with stable machine-readable codes."""

from __future__ import annotations


class LabError(Exception):
    """Base class. ``code`` is stable and appears in CLI error JSON."""

    code = "lab-error"

    def __init__(self, message: str, **data):
        super().__init__(message)
        self.data = data

    def to_payload(self) -> dict:
        payload = {"code": self.code, "message": str(self)}
        payload.update({k: _jsonable(v) for k, v in self.data.items()})
        return payload


def _jsonable(v):
    try:
        import numpy as np

        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except ImportError:  # pragma: no cover
        pass
    return v


class ConfigurationError(LabError, ValueError):
    code = "configuration"


class DomainOverflowError(LabError):
    """Dilation or propagation would leave the box (wrap guard)."""

    code = "domain-overflow"


class NumericalIntegrityError(LabError):
    code = "numerical-integrity"


class HorizonTooShortError(LabError):
    code = "horizon-too-short"


class ZeroModeError(LabError):
    code = "zero-mode"


class ThresholdEigenvalueError(LabError):
    """A discrete eigenvalue sits inside (-eps_gap, 0)."""

    code = "near-threshold-eigenvalue"


class RankDeficiencyError(LabError):
    code = "rank-deficiency"


class TruncationError(LabError):
    code = "truncation-too-small"


class AdmissibilityError(LabError):
    code = "inadmissible-pair"


class NonScatteringInputError(LabError):
    code = "non-scattering-input"


class EigenSolverError(LabError):
    code = "eigensolver"


class ScenarioError(LabError):
    code = "scenario-invalid"


class UnresolvedCutoffWarning(UserWarning):
    pass


class DivergenceWarning(UserWarning):
    pass


class TruncationWarning(UserWarning):
    pass
