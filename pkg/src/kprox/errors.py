"""Exception and warning taxonomy shared across the package."""


class KproxError(Exception):
    """Base class for package-specific errors."""


# case file parsing


class MissingMatrix(KproxError):
    def __init__(self, name: str):
        super().__init__(f"case file has no 'mpc.{name}' block")
        self.name = name


class MalformedRow(KproxError):
    def __init__(self, line_number: int, detail: str):
        super().__init__(f"line {line_number}: {detail}")
        self.line_number = line_number
        self.detail = detail


class DanglingBranch(KproxError):
    def __init__(self, from_bus: int, to_bus: int):
        super().__init__(f"branch {from_bus}-{to_bus} references an unknown bus")
        self.from_bus = from_bus
        self.to_bus = to_bus


class ZeroReactance(KproxError):
    def __init__(self, branch_index: int):
        super().__init__(f"in-service branch {branch_index} has x = 0")
        self.branch_index = branch_index


class Unsupported(KproxError):
    """Input uses a feature outside the supported subset (e.g. off-nominal taps)."""


class MissingGenerator(KproxError):
    def __init__(self, bus: int):
        super().__init__(f"no dynamic parameters for generator at bus {bus}")
        self.bus = bus


class NonPositive(KproxError):
    def __init__(self, field: str, bus):
        super().__init__(f"{field} must be > 0 (bus {bus})")
        self.field = field
        self.bus = bus


# network reduction


class SingularBranch(KproxError):
    def __init__(self, from_bus: int, to_bus: int):
        super().__init__(f"branch {from_bus}-{to_bus} has r = x = 0")
        self.from_bus = from_bus
        self.to_bus = to_bus


class SingularInterior(KproxError):
    def __init__(self, rcond: float):
        super().__init__(f"interior admittance block numerically singular (rcond ~ {rcond:.2e})")
        self.rcond = rcond


class DegeneratePhase(KproxError):
    def __init__(self, i: int, j: int, value: float):
        super().__init__(f"phase shift ({i},{j}) = {value:.6g} rad outside [0, pi/2)")
        self.i = i
        self.j = j
        self.value = value


class UnknownBranch(KproxError):
    def __init__(self, branch_index: int):
        super().__init__(f"no branch with index {branch_index}")
        self.branch_index = branch_index


class AlreadyOut(KproxError):
    def __init__(self, branch_index: int):
        super().__init__(f"branch {branch_index} is already out of service")
        self.branch_index = branch_index


class DisconnectedNetworkWarning(UserWarning):
    """Removing a branch split the bus graph into islands."""


# dynamics and prox


class NonFinite(KproxError):
    def __init__(self, what: str, index: int):
        super().__init__(f"{what} became non-finite at particle {index}")
        self.what = what
        self.index = index


class NonConvergence(KproxError):
    """Fixed point hit the iteration cap under --strict."""

    def __init__(self, step: int, iterations: int, residual_y: float, residual_z: float):
        super().__init__(
            f"proximal fixed point did not converge at step {step} "
            f"({iterations} iterations, residuals {residual_y:.3e}/{residual_z:.3e})"
        )
        self.step = step
        self.iterations = iterations
        self.residual_y = residual_y
        self.residual_z = residual_z


class NonConvergenceWarning(UserWarning):
    """A prox step returned its best iterate after hitting the iteration cap."""


class NumericalUnderflow(KproxError):
    """Gibbs kernel mass vanished in floating point: epsilon too small for the cost scale."""


# analysis


class DegenerateWeightsWarning(UserWarning):
    """Importance weights collapsed: effective sample size below 1% of N."""


class NotPSD(KproxError):
    def __init__(self, min_eig: float):
        super().__init__(f"matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


class WeightMismatch(KproxError):
    def __init__(self, sum_a: float, sum_b: float):
        super().__init__(f"weight sums differ: {sum_a!r} vs {sum_b!r}")
        self.sum_a = sum_a
        self.sum_b = sum_b


class UnstableStep(KproxError):
    """Explicit scheme step size violates the stability bound."""


class MassLeak(KproxError):
    def __init__(self, lost: float):
        super().__init__(f"grid density lost {lost:.3e} probability mass")
        self.lost = lost


# cli


class ConfigError(KproxError):
    """Scenario configuration is missing, malformed, or inconsistent."""
