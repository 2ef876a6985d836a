"""FGSM, PGD and the Krylov second-order attack under an L-infinity budget.

Single-example functions return :class:`AttackOutcome`; the ``*_batch``
variants work on ``(B, d)`` arrays and are what training and evaluation use.
All iterates are projected into the epsilon box around the *original* input
intersected with the pixel range ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .hvp import DEFAULT_ETA, BatchHvpOperator
from .krylov import DEFAULT_M_MAX, DEFAULT_TAU, approximate_newton_direction, gmres_batched
from .tensor import NonFiniteError


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 8 / 255
    alpha: float = 1.0  # total SOAE step along the Newton direction
    iterations: int = 20
    step_size: float = 2 / 255  # per-step size for PGD
    eta: float = DEFAULT_ETA
    tau: float = DEFAULT_TAU
    m_max: int | None = DEFAULT_M_MAX  # None -> input dimension
    norm: str = "linf"
    normalize: bool = False  # L2-normalise the Krylov direction before stepping
    central: bool = False  # two-sided HVP differences

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if self.m_max is not None and self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.norm not in ("linf", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")

    @property
    def total_step(self) -> float:
        return self.alpha

    def krylov_cap(self, dimension: int) -> int:
        return dimension if self.m_max is None else min(self.m_max, dimension)

    def replace(self, **changes) -> "AttackConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AttackOutcome:
    adversarial: np.ndarray
    success: bool
    linf_distance: float
    iterations_used: int
    krylov_dims: list[int] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)


def project(candidate, origin, epsilon: float) -> np.ndarray:
    """Closest point (componentwise, hence in L-inf) of the box
    ``[origin - eps, origin + eps]`` intersected with ``[0, 1]``."""
    candidate = np.asarray(candidate, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    lo = np.maximum(origin - epsilon, 0.0)
    hi = np.minimum(origin + epsilon, 1.0)
    return np.minimum(np.maximum(candidate, lo), hi)


def _outcome(model, x, y, x_adv, iterations, dims=(), trace=()) -> AttackOutcome:
    return AttackOutcome(
        adversarial=x_adv,
        success=model.predict(x_adv) != int(y),
        linf_distance=float(np.max(np.abs(x_adv - x))) if x.size else 0.0,
        iterations_used=iterations,
        krylov_dims=list(dims),
        loss_trace=list(trace),
    )


def fgsm(model, x, y, epsilon: float) -> AttackOutcome:
    x = np.asarray(x, dtype=np.float64)
    x_adv = fgsm_batch(model, x[None, :], np.array([y]), epsilon)[0]
    return _outcome(model, x, y, x_adv, 1)


def pgd(model, x, y, config: AttackConfig) -> AttackOutcome:
    if config.norm != "linf":
        raise NotImplementedError("only the L-inf PGD variant is implemented")
    x = np.asarray(x, dtype=np.float64)
    x_adv, trace = _pgd_iterate(model, x[None, :], np.array([y]), config)
    return _outcome(model, x, y, x_adv[0], config.iterations, trace=trace[:, 0])


def soae(model, x, y, config: AttackConfig) -> AttackOutcome:
    """Second-order attack: ``N`` projected steps of size ``alpha / N`` along the
    GMRES approximation of ``H^{-1} g``, each solve restarted at the current
    iterate with ``delta0 = g``."""
    x = np.asarray(x, dtype=np.float64)
    n_steps = config.iterations
    step = config.total_step / n_steps
    m_max = config.krylov_cap(x.size)
    x_n = x.copy()
    dims, trace = [], [model.loss(x, y)]
    for _ in range(n_steps):
        if config.epsilon == 0.0:
            break
        direction, info = approximate_newton_direction(
            model, x_n, y, eta=config.eta, tau=config.tau, m_max=m_max, central=config.central
        )
        if config.normalize:
            direction = _unit_rows(direction[None, :])[0]
        x_n = project(x_n + step * direction, x, config.epsilon)
        dims.append(info.iterations)
        trace.append(model.loss(x_n, y))
    return _outcome(model, x, y, x_n, n_steps, dims, trace)


# -- batched kernels -----------------------------------------------------------


def fgsm_batch(model, X, Y, epsilon: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if epsilon == 0.0:
        return X.copy()
    g = model.input_gradient(X, Y)
    return np.clip(X + epsilon * np.sign(g), 0.0, 1.0)


def _pgd_iterate(model, X, Y, config: AttackConfig):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    trace = [model.loss(X, Y)]
    X_adv = X.copy()
    for _ in range(config.iterations):
        if config.epsilon == 0.0:
            break
        g = model.input_gradient(X_adv, Y)
        X_adv = project(X_adv + config.step_size * np.sign(g), X, config.epsilon)
        trace.append(model.loss(X_adv, Y))
    return X_adv, np.array(trace)


def pgd_batch(model, X, Y, config: AttackConfig) -> np.ndarray:
    if config.norm != "linf":
        raise NotImplementedError("only the L-inf PGD variant is implemented")
    return _pgd_iterate(model, X, Y, config)[0]


def _unit_rows(D: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", D, D))
    return D / np.where(norms > 0.0, norms, 1.0)[:, None]


def soae_batch(model, X, Y, config: AttackConfig) -> tuple[np.ndarray, np.ndarray]:
    """Batched SOAE; returns adversarial inputs and the ``(B, N)`` Krylov dims."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    n_steps = config.iterations
    step = config.total_step / n_steps
    m_max = config.krylov_cap(X.shape[1])
    dims = np.zeros((X.shape[0], n_steps), dtype=np.int64)
    X_n = X.copy()
    if config.epsilon == 0.0:
        return X_n, dims
    for n in range(n_steps):
        G = model.input_gradient(X_n, Y)
        op = BatchHvpOperator(model, X_n, Y, eta=config.eta, central=config.central, base_gradient=G)
        res = gmres_batched(op, G, G, tau=config.tau, m_max=m_max)
        D = _unit_rows(res.solution) if config.normalize else res.solution
        X_n = project(X_n + step * D, X, config.epsilon)
        dims[:, n] = res.iterations
    return X_n, dims


ATTACKS = ("fgsm", "pgd", "soae")


def run_attack_batch(name: str, model, X, Y, config: AttackConfig):
    """Dispatch by name; returns ``(X_adv, krylov_dims or None)``.

    Raises :class:`NonFiniteError` if the model produced NaN/inf along the way.
    """
    if name == "fgsm":
        out = fgsm_batch(model, X, Y, config.epsilon), None
    elif name == "pgd":
        out = pgd_batch(model, X, Y, config), None
    elif name == "soae":
        out = soae_batch(model, X, Y, config)
    else:
        raise KeyError(f"unknown attack {name!r}; choose from {', '.join(ATTACKS)}")
    if not np.isfinite(out[0]).all():
        raise NonFiniteError(f"{name} produced non-finite inputs; check the model weights")
    return out
