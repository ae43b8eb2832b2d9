"""Exception hierarchy for singlab."""


class SinglabError(Exception):
    """Base class for all lab errors."""


class DomainError(SinglabError, ValueError):
    """A time lies outside ``[0, T]``."""


class SingularPointError(SinglabError, ValueError):
    """Evaluation requested too close to the singular time ``t0``."""


class NonConvergenceError(SinglabError, ArithmeticError):
    """Quadrature shells do not contract (non-integrable singularity)."""


class InconsistencyError(SinglabError):
    """Closed-form admissibility and numerical norms disagree."""


class DegenerateExponentError(SinglabError, ValueError):
    """An epsilon-rule denominator is not positive."""


class RegimeMismatchError(SinglabError, ValueError):
    """A regularization plan does not fit the model it is applied to."""


class IntegrationError(SinglabError, ArithmeticError):
    """The mode integrator failed (step underflow or non-finite state).

    ``t_reached`` records how far the integration got.
    """

    def __init__(self, msg, t_reached=None):
        super().__init__(msg)
        self.t_reached = t_reached


class CertificateViolation(SinglabError):
    """The Gronwall bound was exceeded beyond slack."""

    def __init__(self, msg, t_worst, ratio):
        super().__init__(msg)
        self.t_worst = t_worst
        self.ratio = ratio


class ConfigError(SinglabError, ValueError):
    """Invalid experiment configuration."""
