"""Per-component Laplace perturbation of projected matrices.

Sensitivities are the per-component score ranges over the researcher's public
reference projection, and the total budget is split across components in
proportion to sensitivity, which gives every perturbed component the same
Laplace scale ``sum(s) / epsilon_total``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pca import ProjectedMatrix


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ComponentSensitivity:
    s: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float).reshape(-1)
        if np.any(~np.isfinite(s)) or np.any(s < 0):
            raise PrivacyError("sensitivities must be finite and non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    def __len__(self):
        return self.s.shape[0]

    def __eq__(self, other):
        return isinstance(other, ComponentSensitivity) and np.array_equal(self.s, other.s)


@dataclass(frozen=True, eq=False)
class PrivacyBudget:
    epsilon_total: float
    epsilon_per_component: np.ndarray

    def __post_init__(self):
        eps = np.array(self.epsilon_per_component, dtype=float).reshape(-1)
        if not self.epsilon_total > 0:
            raise PrivacyError(f"epsilon_total must be positive, got {self.epsilon_total}")
        if np.any(eps < 0):
            raise PrivacyError("per-component epsilon must be non-negative")
        eps.setflags(write=False)
        object.__setattr__(self, "epsilon_per_component", eps)

    def noise_scales(self, s: ComponentSensitivity) -> np.ndarray:
        """Laplace scale ``s_i / eps_i`` per component; 0 where the component is released as-is."""
        out = np.zeros_like(s.s)
        live = s.s > 0
        out[live] = s.s[live] / self.epsilon_per_component[live]
        return out


class NoisyProjection(ProjectedMatrix):
    """A projected matrix after local Laplace perturbation."""


def compute_sensitivity(reference: ProjectedMatrix) -> ComponentSensitivity:
    """Per-component range (max - min) of the reference scores."""
    if reference.n == 0:
        raise PrivacyError("empty reference projection")
    scores = reference.scores
    return ComponentSensitivity(scores.max(axis=0) - scores.min(axis=0))


def allocate_budget(epsilon_total: float, s: ComponentSensitivity) -> PrivacyBudget:
    if not (epsilon_total > 0 and math.isfinite(epsilon_total)):
        raise PrivacyError(f"epsilon_total must be a positive finite number, got {epsilon_total}")
    total = s.s.sum()
    if total <= 0:
        raise PrivacyError("all component sensitivities are zero; nothing to allocate")
    return PrivacyBudget(float(epsilon_total), epsilon_total * s.s / total)


def _laplace_from_uniform(u, scale):
    # u in (-1/2, 1/2); inverse CDF of Laplace(0, scale)
    u = np.asarray(u, dtype=float)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_noise(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Vector of Laplace(0, scale) draws by inverse CDF."""
    if not scale > 0:
        raise PrivacyError(f"Laplace scale must be positive, got {scale}")
    u = rng.random(size) - 0.5
    # rng.random() can return exactly 0.0, which would map to -inf
    u = np.where(u == -0.5, np.nextafter(-0.5, 0.0), u)
    return _laplace_from_uniform(u, scale)


def sample_laplace(scale: float, rng: np.random.Generator) -> float:
    return float(laplace_noise(scale, None, rng))


def perturb(projected: ProjectedMatrix, s: ComponentSensitivity, budget: PrivacyBudget,
            rng: np.random.Generator) -> NoisyProjection:
    """Add Laplace(0, s_i/eps_i) to every cell of component i.

    Components with zero sensitivity pass through bit-identically.
    """
    r = projected.r
    if len(s) != r or budget.epsilon_per_component.shape[0] != r:
        raise PrivacyError(
            f"dimension mismatch: projection has {r} components, sensitivity {len(s)}, "
            f"budget {budget.epsilon_per_component.shape[0]}"
        )
    if np.any((s.s > 0) & (budget.epsilon_per_component <= 0)):
        raise PrivacyError("a component with positive sensitivity has no budget")
    scales = budget.noise_scales(s)
    out = np.array(projected.scores, dtype=float, copy=True)
    for i in range(r):
        if scales[i] > 0:
            out[:, i] = out[:, i] + laplace_noise(scales[i], projected.n, rng)
    return NoisyProjection(projected.pseudonyms, out)


@dataclass
class BinCheck:
    lo: float
    hi: float
    count_a: int
    count_b: int
    ratio: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.ratio <= self.bound


def empirical_ldp_check(epsilon: float, rng: np.random.Generator, draws: int = 1_000_000,
                        sensitivity: float = 1.0, bin_width: float | None = None,
                        min_hits: int = 1000, z: float = 5.0) -> list[BinCheck]:
    """Monte-Carlo check of the e^epsilon output-ratio bound for a scalar release.

    Inputs 0 and ``sensitivity`` are released ``draws`` times each. Outputs are
    histogrammed and every bin where both inputs have at least ``min_hits``
    hits is checked in both directions against
    ``e^epsilon * (1 + z * se)``, where ``se = sqrt(1/c_a + 1/c_b)`` is the
    relative standard error of the count ratio.
    """
    scale = sensitivity / epsilon
    a = laplace_noise(scale, draws, rng)
    b = sensitivity + laplace_noise(scale, draws, rng)
    width = bin_width if bin_width is not None else scale / 4
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    edges = np.arange(np.floor(lo / width) * width, hi + width, width)
    ca, _ = np.histogram(a, edges)
    cb, _ = np.histogram(b, edges)
    out = []
    for i in np.flatnonzero((ca >= min_hits) & (cb >= min_hits)):
        se = math.sqrt(1.0 / ca[i] + 1.0 / cb[i])
        ratio = max(ca[i] / cb[i], cb[i] / ca[i])
        out.append(BinCheck(edges[i], edges[i + 1], int(ca[i]), int(cb[i]), float(ratio),
                            math.exp(epsilon) * (1 + z * se)))
    return out
