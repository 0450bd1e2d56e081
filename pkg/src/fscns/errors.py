"""Exception hierarchy shared by all subpackages."""
from __future__ import annotations


class FscnsError(Exception):
    """Base class for all package errors."""


class ConfigError(FscnsError, ValueError):
    """Invalid configuration. ``fields`` lists every offending key."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        self.fields = [p.split(":", 1)[0].strip() for p in self.problems]
        super().__init__("; ".join(self.problems))


class ContractError(FscnsError, ValueError):
    """A caller broke an operation precondition."""


class HealthError(FscnsError, RuntimeError):
    """A runtime health monitor tripped.

    Parameters
    ----------
    kind : str
        Monitor name, e.g. ``"jacobian"``, ``"density"``, ``"nan"``.
    message : str
        Human readable description.
    state : object, optional
        Last good state, used by the harness to write a snapshot.
    location : tuple, optional
        Grid index where the violation was found.
    """

    def __init__(self, kind, message, state=None, location=None):
        self.kind = kind
        self.state = state
        self.location = location
        super().__init__(f"[{kind}] {message}")


class PhysicalValidityError(HealthError):
    """Boundary data outside the physically admissible range."""

    def __init__(self, message, state=None, location=None):
        super().__init__("physical", message, state=state, location=location)
