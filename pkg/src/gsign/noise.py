"""Impulsive noise models and their samplers.

All samplers draw from a caller-supplied :class:`numpy.random.Generator`.
Monte Carlo runs get independent counter-based (Philox) streams derived from
``(master_seed, run)``, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "NoiseModel",
    "NoiseError",
    "KINDS",
    "make_rng",
    "sample",
    "density_at_zero",
    "flom_inverse_moment",
    "fractional_inverse_moment",
]

KINDS = ("sas", "cauchy", "student_t", "laplace")
_ALIASES = {
    "sas": "sas",
    "salphas": "sas",
    "alpha_stable": "sas",
    "stable": "sas",
    "cauchy": "cauchy",
    "student_t": "student_t",
    "studentt": "student_t",
    "t": "student_t",
    "laplace": "laplace",
}


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Zero-skew noise law.

    ``sas``: characteristic function ``exp(-gamma |t|^alpha)`` (location 0).
    ``cauchy``: location ``mu``, scale ``gamma``.
    ``student_t``: ``nu`` degrees of freedom, unit scale.
    ``laplace``: location ``mu``, scale ``b``.
    """

    kind: str
    alpha: float | None = None
    gamma: float | None = None
    mu: float = 0.0
    nu: float | None = None
    b: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower().replace("-", "_").replace(" ", "_"))
        if kind is None:
            raise NoiseError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        required = {
            "sas": ("alpha", "gamma"),
            "cauchy": ("gamma",),
            "student_t": ("nu",),
            "laplace": ("b",),
        }[kind]
        for name in ("alpha", "gamma", "nu", "b"):
            value = getattr(self, name)
            if name in required:
                if value is None:
                    raise NoiseError(f"{kind} noise requires parameter {name!r}")
                object.__setattr__(self, name, float(value))
            elif value is not None:
                raise NoiseError(f"{kind} noise does not take parameter {name!r}")
        object.__setattr__(self, "mu", float(self.mu))
        if kind in ("sas", "student_t") and self.mu != 0.0:
            raise NoiseError(f"{kind} noise has location fixed at 0")
        if kind == "sas" and not 0.0 < self.alpha <= 2.0:
            raise NoiseError(f"alpha must be in (0, 2], got {self.alpha}")
        for name in ("gamma", "nu", "b"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise NoiseError(f"{name} must be positive and finite, got {value}")
        if not math.isfinite(self.mu):
            raise NoiseError("location must be finite")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        d = dict(d)
        if "kind" not in d:
            raise NoiseError("noise model needs a 'kind'")
        unknown = set(d) - {"kind", "alpha", "gamma", "mu", "nu", "b"}
        if unknown:
            raise NoiseError(f"unknown noise parameters {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def scale(self) -> float:
        """Characteristic width, used to place the near-origin cutoff."""
        if self.kind == "sas":
            return self.gamma ** (1.0 / self.alpha)
        if self.kind == "cauchy":
            return self.gamma
        if self.kind == "laplace":
            return self.b
        return 1.0

    def label(self) -> str:
        if self.kind == "sas":
            return f"SaS(alpha={self.alpha:g}, gamma={self.gamma:g})"
        if self.kind == "cauchy":
            return f"Cauchy(mu={self.mu:g}, gamma={self.gamma:g})"
        if self.kind == "student_t":
            return f"Student-t(nu={self.nu:g})"
        return f"Laplace(mu={self.mu:g}, b={self.b:g})"


def make_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream keyed by ``(master_seed, *stream)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # [0, 1) shifted by half an ulp-step: strictly inside (0, 1)
    return rng.random(size) + 2.0**-54


def sample(model: NoiseModel, size, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. noise of the given shape."""
    if np.prod(size) < 1:
        raise NoiseError("sample size must be at least 1")
    k = model.kind
    if k == "sas":
        # Chambers-Mallows-Stuck, symmetric case
        a = model.alpha
        v = np.pi * (_open_uniform(rng, size) - 0.5)
        w = rng.standard_exponential(size)
        if a == 1.0:
            x = np.tan(v)
        else:
            x = (np.sin(a * v) / np.cos(v) ** (1.0 / a)) * (
                np.cos((1.0 - a) * v) / w
            ) ** ((1.0 - a) / a)
        return model.gamma ** (1.0 / a) * x
    if k == "cauchy":
        u = _open_uniform(rng, size)
        return model.mu + model.gamma * np.tan(np.pi * (u - 0.5))
    if k == "student_t":
        z = rng.standard_normal(size)
        chi2 = 2.0 * rng.standard_gamma(model.nu / 2.0, size)
        return z / np.sqrt(chi2 / model.nu)
    u = _open_uniform(rng, size)
    return np.where(
        u < 0.5,
        model.mu + model.b * np.log(2.0 * u),
        model.mu - model.b * np.log(2.0 * (1.0 - u)),
    )


def density_at_zero(model: NoiseModel) -> float:
    """Probability density of the noise at the origin (closed form)."""
    k = model.kind
    if k == "sas":
        a = model.alpha
        return math.gamma(1.0 + 1.0 / a) / (math.pi * model.gamma ** (1.0 / a))
    if k == "cauchy":
        z = model.mu / model.gamma
        return 1.0 / (math.pi * model.gamma * (1.0 + z * z))
    if k == "student_t":
        nu = model.nu
        return math.exp(
            math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)
        ) / math.sqrt(nu * math.pi)
    return math.exp(-abs(model.mu) / model.b) / (2.0 * model.b)


def fractional_inverse_moment(samples, p_s: float = 0.99, f0=None, cutoff=None) -> float:
    """Estimate ``E|w|^(-p_s)`` from draws of ``w``.

    Without ``f0`` this is the plain sample mean. With the density at the
    origin ``f0`` and a ``cutoff``, draws with ``|w| <= cutoff`` are replaced
    by the exact local contribution ``2 f0 cutoff^(1-p_s) / (1-p_s)``;
    ``|w|^(-p_s)`` has infinite variance near 0 when ``p_s > 1/2``, so the
    plain mean converges far too slowly for ``p_s`` near 1.
    """
    if not 0.0 < p_s < 1.0:
        raise ValueError(f"p_s must be in (0, 1), got {p_s}")
    a = np.abs(np.asarray(samples, dtype=float)).ravel()
    if f0 is None:
        with np.errstate(divide="ignore"):
            est = float(np.mean(a ** -p_s))
    else:
        if cutoff is None or cutoff <= 0:
            raise ValueError("cutoff must be positive when f0 is given")
        far = a[a > cutoff]
        est = float(np.sum(far ** -p_s)) / a.size
        est += 2.0 * f0 * cutoff ** (1.0 - p_s) / (1.0 - p_s)
    if not math.isfinite(est):
        raise FloatingPointError("nonfinite fractional moment; sampler produced zeros or NaN")
    return est


def flom_inverse_moment(
    model: NoiseModel,
    p_s: float = 0.99,
    n_mc: int = 1_000_000,
    seed: int = 0,
    cutoff_rel: float = 1e-3,
) -> float:
    """Monte Carlo estimate of ``E|w|^(-p_s)`` for a noise model."""
    rng = make_rng(seed, 0x5F1)
    draws = sample(model, n_mc, rng)
    return fractional_inverse_moment(
        draws, p_s, f0=density_at_zero(model), cutoff=cutoff_rel * model.scale
    )
