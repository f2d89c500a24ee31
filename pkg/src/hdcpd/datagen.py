"""Seeded generators for the simulated scenarios.

Every generator takes either an integer seed or a ``numpy`` Generator.
Integer seeds are turned into a counter-based Philox stream, and each
segment of a scenario gets its own child stream, so segments can be produced
independently and in any order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .core import DataSequence, validate_sequence
from .exceptions import BadCovariance, BadParameter, BadRange, UnknownScenario

__all__ = [
    "make_rng",
    "gen_gaussian",
    "gen_uniform_cube",
    "gen_uniform_ball",
    "gen_uniform_annulus",
    "gen_iid_coordinates",
    "gen_geometric_skew_normal",
    "equal_volume_radius",
    "sparse_count",
    "ScenarioSpec",
    "Scenario",
    "SCENARIOS",
    "build_scenario",
]


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def gen_gaussian(n: int, mean, cov: str = "identity", *, d: int | None = None, sigma2: float = 1.0,
                 rho: float | None = None, diag=None, r: float | None = None, seed=0) -> np.ndarray:
    """``n`` i.i.d. normal rows.

    Parameters
    ----------
    mean
        Scalar (broadcast to ``d`` coordinates) or length-``d`` vector.
    cov
        ``identity`` (times ``sigma2``), ``ar1`` (``rho ** |i - j|``),
        ``diag`` (vector of variances) or ``block2`` (2x2 blocks with unit
        variances and correlation ``r``; an odd last coordinate stands alone).
    """
    rng = make_rng(seed)
    if d is None:
        if np.ndim(mean):
            d = len(mean)
        elif diag is not None:
            d = len(diag)
        else:
            raise BadParameter("dimension d is required for a scalar mean")
    Z = rng.standard_normal((n, d))
    if cov == "identity":
        if not sigma2 > 0:
            raise BadCovariance("sigma2 must be positive")
        X = math.sqrt(sigma2) * Z
    elif cov == "ar1":
        if rho is None or not abs(rho) < 1:
            raise BadCovariance("ar1 needs |rho| < 1")
        c = math.sqrt(1 - rho * rho)
        Z[:, 0] /= c  # the first coordinate keeps unit variance
        X = lfilter([c], [1.0, -rho], Z, axis=1)
    elif cov == "diag":
        v = np.asarray(diag, dtype=float)
        if v.shape != (d,) or not np.all(v > 0):
            raise BadCovariance("diag needs d positive variances")
        X = Z * np.sqrt(v)
    elif cov == "block2":
        if r is None or not abs(r) < 1:
            raise BadCovariance("block2 needs |r| < 1")
        X = Z.copy()
        m = d - d % 2
        X[:, 1:m:2] = r * Z[:, 0:m:2] + math.sqrt(1 - r * r) * Z[:, 1:m:2]
    else:
        raise BadCovariance(f"unknown covariance kind {cov!r}")
    return X + np.broadcast_to(np.asarray(mean, dtype=float), (d,))


def gen_uniform_cube(n: int, d: int, half_width: float = 1.0, seed=0) -> np.ndarray:
    if not half_width > 0:
        raise BadRange("half_width must be positive")
    return make_rng(seed).uniform(-half_width, half_width, size=(n, d))


def equal_volume_radius(d: int, half_width: float = 1.0) -> float:
    """Radius of the ``d``-ball with the volume of the cube ``[-h, h]^d``."""
    return half_width * 2 * math.exp(math.lgamma(d / 2 + 1) / d) / math.sqrt(math.pi)


def gen_uniform_annulus(n: int, d: int, a: float, b: float, seed=0) -> np.ndarray:
    """Uniform on ``{x : a <= ||x|| <= b}``."""
    if not 0 <= a < b:
        raise BadRange(f"annulus needs 0 <= a < b, got a={a}, b={b}")
    rng = make_rng(seed)
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    u = rng.random(n)
    # radius by inverse CDF; work relative to b to avoid overflow of b ** d
    ratio = (a / b) ** d
    radius = b * (ratio + u * (1 - ratio)) ** (1 / d)
    return direction * radius[:, None]


def gen_uniform_ball(n: int, d: int, radius: float | None = None, seed=0) -> np.ndarray:
    """Uniform in the ball of ``radius`` (default: same volume as ``[-1, 1]^d``)."""
    radius = equal_volume_radius(d) if radius is None else radius
    return gen_uniform_annulus(n, d, 0.0, radius, seed)


def gen_iid_coordinates(n: int, d: int, marginal: str = "normal", *, mu: float = 0.0, var: float = 1.0,
                        nu: float = 4.0, seed=0) -> np.ndarray:
    """I.i.d. entries from ``normal(mu, var)``, ``t(nu)``, ``cauchy`` or ``laplace``."""
    rng = make_rng(seed)
    if marginal == "normal":
        return mu + math.sqrt(var) * rng.standard_normal((n, d))
    if marginal == "t":
        if not nu > 0:
            raise BadParameter("t needs nu > 0")
        return rng.standard_t(nu, size=(n, d))
    if marginal == "cauchy":
        return rng.standard_cauchy(size=(n, d))
    if marginal == "laplace":
        return rng.laplace(0.0, 1.0, size=(n, d))
    raise BadParameter(f"unknown marginal {marginal!r}")


def gen_geometric_skew_normal(n: int, d: int, p: float = 0.1, seed=0) -> np.ndarray:
    """Sum of ``N ~ Geometric(p)`` (support 1, 2, ...) standard normal vectors."""
    if not 0 < p <= 1:
        raise BadParameter("p must lie in (0, 1]")
    rng = make_rng(seed)
    N = rng.geometric(p, size=n)
    return np.sqrt(N)[:, None] * rng.standard_normal((n, d))


def sparse_count(d: int) -> int:
    """``floor(d ** (2/3))`` computed in integers."""
    k = int(round(d ** (2 / 3)))
    while k ** 3 > d * d:
        k -= 1
    while (k + 1) ** 3 <= d * d:
        k += 1
    return k


# ---------------------------------------------------------------------------
# scenarios

Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def _normal(mean=0.0, sigma2=1.0) -> Sampler:
    return lambda rng, n, d: gen_gaussian(n, mean, "identity", d=d, sigma2=sigma2, seed=rng)


def _ar1(rho, mean=0.0, scale=1.0) -> Sampler:
    return lambda rng, n, d: math.sqrt(scale) * gen_gaussian(n, 0.0, "ar1", d=d, rho=rho, seed=rng) + mean


def _half_diag(first, rest) -> Sampler:
    def draw(rng, n, d):
        h = d // 2
        return gen_gaussian(n, 0.0, "diag", diag=np.r_[np.full(h, first), np.full(d - h, rest)], seed=rng)
    return draw


def _sparse(kind) -> Sampler:
    def draw(rng, n, d):
        k = sparse_count(d)
        if kind == "cauchy":
            X = rng.standard_normal((n, d))
            X[:, :k] = rng.standard_cauchy((n, k))
            return X
        mean = np.r_[np.ones(k), np.zeros(d - k)] if kind in ("loc", "locscale") else 0.0
        var = np.r_[np.full(k, 3.0), np.ones(d - k)] if kind in ("locscale", "scale") else np.ones(d)
        return gen_gaussian(n, mean, "diag", d=d, diag=var, seed=rng)
    return draw


def _annulus_mix(i) -> Sampler:
    def draw(rng, n, d):
        head = gen_uniform_annulus(n, 50, 2.0 * (i - 1), 2.0 * i - 1, seed=rng)
        tail = gen_uniform_ball(n, d - 50, radius=5.0, seed=rng)
        return np.hstack([head, tail])
    return draw


def _iid(marginal, **kw) -> Sampler:
    return lambda rng, n, d: gen_iid_coordinates(n, d, marginal, seed=rng, **kw)


# id -> (default d, default segment sizes, samplers, uses tau)
_TABLE: dict[str, tuple[int, tuple[int, ...], tuple[Sampler, ...], bool]] = {
    "A": (100, (20, 20), (_normal(), _normal(0.7, 1.0)), False),
    "B": (100, (20, 20), (_normal(), _normal(0.7, 2.0)), False),
    "C": (100, (20, 20), (_normal(), _normal(0.0, 2.0)), False),
    "D": (200, (20, 20), (_half_diag(1.0, 3.0), _half_diag(3.0, 1.0)), False),
    "E": (200, (20, 20), (_normal(0.0, 2.0), _iid("t", nu=4.0)), False),
    "sparse_loc": (200, (20, 20), (_normal(), _sparse("loc")), False),
    "sparse_locscale": (200, (20, 20), (_normal(), _sparse("locscale")), False),
    "sparse_scale": (200, (20, 20), (_normal(), _sparse("scale")), False),
    "sparse_cauchy": (200, (20, 20), (_normal(), _sparse("cauchy")), False),
    "Ex1": (250, (20, 20), (_ar1(0.9), _ar1(0.9, mean=1.0)), True),
    "Ex2": (250, (20, 20), (_ar1(0.9), _ar1(0.9, scale=3.0)), True),
    "Ex3": (250, (20, 20), (lambda rng, n, d: gen_geometric_skew_normal(n, d, 0.1, rng), _normal()), True),
    "Ex4": (250, (20, 20), (lambda rng, n, d: gen_uniform_cube(n, d, 1.0, rng),
                            lambda rng, n, d: gen_uniform_ball(n, d, seed=rng)), True),
    "Ex5": (250, (20, 20), (_half_diag(1.0, 3.0), _half_diag(3.0, 1.0)), True),
    "Ex6": (250, (20, 20), (_normal(0.0, 2.0), _iid("t", nu=4.0)), True),
    "Ex7": (250, (15, 15, 15, 15), (_normal(0.5), _normal(), _normal(0.5), _normal()), False),
    "Ex8": (250, (15, 15, 15, 15), tuple(_normal(0.0, (1 / 20) ** i) for i in range(4)), False),
    "Ex9": (250, (20, 20, 20), (_annulus_mix(1), _annulus_mix(2), _annulus_mix(3)), False),
    "Ex10": (250, (20, 20, 20), (_normal(0.0, 2.0), _iid("cauchy"), _iid("laplace")), False),
    "Ex11": (250, (80, 80), (_normal(), _ar1(0.9)), False),
    "Ex12": (250, (80, 80), (lambda rng, n, d: gen_gaussian(n, 0.0, "block2", d=d, r=0.9, seed=rng),
                             lambda rng, n, d: gen_gaussian(n, 0.0, "block2", d=d, r=-0.9, seed=rng)), False),
    "H0": (100, (40,), (_normal(),), False),
}

SCENARIOS = tuple(_TABLE)


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario id with optional overrides.

    ``n`` sets every segment length, ``tau`` moves the change-point of the
    two-segment examples with 40 observations, ``d`` sets the dimension.
    """

    scenario: str
    n: int | None = None
    d: int | None = None
    seed: int = 0
    tau: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    data: DataSequence
    truth: tuple[int, ...]
    sizes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "truth": list(self.truth), "sizes": list(self.sizes),
                "n": self.data.n, "d": self.data.d}


def build_scenario(spec: ScenarioSpec | str, **overrides) -> Scenario:
    """Generate a scenario and its true change-points."""
    if isinstance(spec, str):
        spec = ScenarioSpec(spec, **overrides)
    if spec.scenario not in _TABLE:
        raise UnknownScenario(f"unknown scenario {spec.scenario!r}; known: {', '.join(SCENARIOS)}")
    d_default, sizes, samplers, uses_tau = _TABLE[spec.scenario]
    d = spec.d or d_default
    if spec.n is not None:
        sizes = (spec.n,) * len(sizes)
    if spec.tau is not None:
        if not uses_tau:
            raise BadParameter(f"scenario {spec.scenario} has a fixed change-point")
        total = sum(sizes)
        if not 1 <= spec.tau < total:
            raise BadParameter(f"tau must lie in 1..{total - 1}")
        sizes = (spec.tau, total - spec.tau)
    if spec.scenario == "Ex9" and d <= 50:
        raise BadParameter("Ex9 needs d > 50")
    streams = np.random.SeedSequence(spec.seed).spawn(len(sizes))
    blocks = [draw(make_rng(ss), size, d) for draw, size, ss in zip(samplers, sizes, streams)]
    truth = tuple(int(t) for t in np.cumsum(sizes)[:-1])
    return Scenario(spec, validate_sequence(np.vstack(blocks)), truth, tuple(sizes))
