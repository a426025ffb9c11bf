"""Exception hierarchy shared by all modules."""


class HopfAvgError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(HopfAvgError, ValueError):
    """Arguments violate a documented precondition (span mismatch, bad shapes)."""


class RootFinderInconsistency(HopfAvgError):
    """Newton refinement and the argument-principle count disagree."""

    def __init__(self, winding, found):
        super().__init__(
            f"argument principle counts {winding} roots but Newton refined {found}"
        )
        self.winding = winding
        self.found = found


class RegionTooLarge(HopfAvgError):
    def __init__(self, count, max_roots):
        super().__init__(f"region holds {count} roots, more than max_roots={max_roots}")
        self.count = count
        self.max_roots = max_roots


class CriticalityError(HopfAvgError):
    """Base class for the three ways a kernel can fail the Hopf criticality test."""


class NotCriticalError(CriticalityError):
    pass


class UnstableError(CriticalityError):
    pass


class DegenerateCriticalityError(CriticalityError):
    pass


class DegenerateEigenvalueError(HopfAvgError):
    """The Gram matrix of the critical basis against cos/sin is singular."""


class HorizonTooSmall(HopfAvgError):
    pass


class NumericalBlowup(HopfAvgError, FloatingPointError):
    def __init__(self, time, seed=None):
        where = f" (seed {seed})" if seed is not None else ""
        super().__init__(f"non-finite state at slow time {time:.6g}{where}")
        self.time = time
        self.seed = seed


class UndefinedRotation(HopfAvgError, ValueError):
    pass


class GqConditionError(HopfAvgError):
    """The zero-average condition on the quadratic perturbation fails."""

    def __init__(self, violation, threshold):
        super().__init__(
            f"G_q zero-average condition violated: {violation:.3e} >= {threshold:.3e}"
        )
        self.violation = violation
        self.threshold = threshold


class GqConditionNotChecked(HopfAvgError):
    pass


class DegenerateDiffusionError(HopfAvgError):
    pass


class TrajectoryTooShort(HopfAvgError, ValueError):
    pass


class ConfigError(HopfAvgError, ValueError):
    def __init__(self, message, line=None, key=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if key is not None:
            loc.append(f"key {key!r}")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
