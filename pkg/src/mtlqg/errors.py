"""Exception types shared across the package."""


class MtlqgError(Exception):
    """Base class for all package-specific errors."""


class NonSymmetric(MtlqgError):
    """A matrix required to be symmetric is not (beyond tolerance)."""


class Unstable(MtlqgError):
    """A matrix required to be Schur stable has spectral radius >= 1."""


class RankDeficient(MtlqgError):
    """A matrix required to have full (row) rank does not."""


class NotStabilizable(MtlqgError):
    """The pair (A, B) has an unstabilizable mode."""


class RIndefinite(MtlqgError):
    """The input-cost matrix R is not positive definite."""


class AssumptionViolated(MtlqgError):
    """A sampled task fails the controllability/observability assumption."""


class FilterUnstable(MtlqgError):
    """The steady-state filter recursion matrix is not Schur stable."""


class SingularInnovation(MtlqgError):
    """The innovation covariance C Sigma C' + V is not positive definite."""


class NotStabilizing(MtlqgError):
    """The supplied controller does not stabilize the task."""


class MarginTooLarge(MtlqgError):
    """Contraction-rate margin leaves no feasible lambda in (0, 1)."""


class Diverged(MtlqgError):
    """A simulated trajectory exceeded the divergence threshold."""


class PerturbationDestabilizes(MtlqgError):
    """A zeroth-order probe controller destabilizes the task."""

    def __init__(self, sample_index, message=None):
        self.sample_index = sample_index
        super().__init__(message or f"perturbation sample {sample_index} destabilizes the task")


class NoCommonStabilizer(MtlqgError):
    """The candidate initial controller fails to stabilize some training task."""

    def __init__(self, failed_ids, message=None):
        self.failed_ids = list(failed_ids)
        super().__init__(message or f"controller destabilizes tasks: {self.failed_ids}")


class StepDestabilized(MtlqgError):
    """A policy-gradient step left the common stabilizing set."""


class ValidationError(MtlqgError):
    """Invalid configuration or input file."""
