"""Online Gaussian mixture over the perceptual space.

Each component keeps a diagonal Normal-Inverse-Gamma posterior. The
likelihood ``p(s | m)`` is the posterior predictive, a product of univariate
Student-t densities. Component storage is columnar so that all components can
be scored at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from bayesdrive.core import STATE_DIM, PriorConfig


@dataclass(frozen=True)
class NIGPrior:
    """Per-dimension Normal-Inverse-Gamma prior (mean, kappa, dof, variance)."""

    mean: np.ndarray
    kappa: float
    dof: float
    scale: np.ndarray
    scale_floor: float = 1e-8

    @classmethod
    def default(cls, dim: int = STATE_DIM, cfg: PriorConfig | None = None) -> "NIGPrior":
        cfg = cfg or PriorConfig()
        scale = (1.0 / dim) ** 2 if cfg.scale is None else cfg.scale
        return cls(
            mean=np.full(dim, 1.0 / dim),
            kappa=cfg.kappa,
            dof=cfg.dof,
            scale=np.full(dim, scale),
            scale_floor=cfg.scale_floor,
        )

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def student_t_logpdf(x, dof, loc, scale2):
    """Elementwise log density of a location-scale Student-t (``scale2`` is the squared scale)."""
    z = (x - loc) ** 2 / (dof * scale2)
    return (
        gammaln((dof + 1.0) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * np.log(dof * np.pi * scale2)
        - (dof + 1.0) / 2.0 * np.log1p(z)
    )


class Mixture:
    """Growing set of components in creation order.

    Component ``i`` is row ``i`` of :attr:`counts`, :attr:`means` and
    :attr:`scales`; ids are never reused because components are never removed.
    """

    def __init__(self, prior: NIGPrior | None = None):
        self.prior = prior if prior is not None else NIGPrior.default()
        d = self.prior.dim
        self._counts = np.zeros(0)
        self._means = np.zeros((0, d))
        self._scales = np.zeros((0, d))

    def __len__(self) -> int:
        return self._counts.shape[0]

    @property
    def dim(self) -> int:
        return self.prior.dim

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def scales(self) -> np.ndarray:
        return self._scales

    def _check(self, m: int) -> None:
        if not 0 <= m < len(self):
            raise IndexError(f"unknown component id {m} (mixture has {len(self)})")

    def _append(self, count: float, mean: np.ndarray, scale: np.ndarray) -> int:
        self._counts = np.append(self._counts, float(count))
        self._means = np.vstack([self._means, mean[None, :]])
        self._scales = np.vstack([self._scales, np.maximum(scale, self.prior.scale_floor)[None, :]])
        return len(self) - 1

    def add_prior_component(self) -> int:
        """Append a component that has seen no data (its posterior is the prior)."""
        return self._append(0.0, self.prior.mean.copy(), self.prior.scale.copy())

    def create_component(self, s) -> int:
        """Append a component centred at ``s`` with one observation and the prior scale."""
        s = np.asarray(s, dtype=float)
        if s.shape != (self.dim,):
            raise ValueError(f"state has shape {s.shape}, expected ({self.dim},)")
        return self._append(1.0, s.copy(), self.prior.scale.copy())

    def predictive_params(self):
        """Return ``(dof, loc, scale2)`` arrays of the Student-t predictive per component."""
        kappa = self.prior.kappa + self._counts
        dof = self.prior.dof + self._counts
        scale2 = self._scales * ((kappa + 1.0) / kappa)[:, None]
        return dof, self._means, scale2

    def loglik_all(self, s) -> np.ndarray:
        """Predictive log density of ``s`` under every component."""
        s = np.asarray(s, dtype=float)
        dof, loc, scale2 = self.predictive_params()
        return student_t_logpdf(s[None, :], dof[:, None], loc, scale2).sum(axis=1)

    def predictive_loglik(self, s, m: int) -> float:
        self._check(m)
        s = np.asarray(s, dtype=float)
        kappa = self.prior.kappa + self._counts[m]
        dof = self.prior.dof + self._counts[m]
        scale2 = self._scales[m] * (kappa + 1.0) / kappa
        return float(student_t_logpdf(s, dof, self._means[m], scale2).sum())

    def nearest_component(self, s) -> tuple[int, float]:
        """Component whose mean is closest to ``s`` in the max norm, and that distance.

        Ties go to the lowest id.
        """
        if len(self) == 0:
            raise ValueError("nearest_component on an empty mixture")
        dist = np.abs(self._means - np.asarray(s, dtype=float)[None, :]).max(axis=1)
        m = int(np.argmin(dist))
        return m, float(dist[m])

    def update_component(self, m: int, s, weight: float = 1.0) -> None:
        """Conjugate one-observation update of component ``m``.

        ``weight`` is accepted for interface symmetry with the Q update but the
        statistics always move with unit weight.
        """
        self._check(m)
        if not 0.0 <= weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {weight}")
        s = np.asarray(s, dtype=float)
        n = self._counts[m]
        kappa = self.prior.kappa + n
        dof = self.prior.dof + n
        mu = self._means[m]
        diff = s - mu
        new_mu = mu + diff / (kappa + 1.0)
        new_scale = (dof * self._scales[m] + kappa / (kappa + 1.0) * diff**2) / (dof + 1.0)
        self._counts[m] = n + 1.0
        self._means[m] = new_mu
        self._scales[m] = np.maximum(new_scale, self.prior.scale_floor)

    def copy(self) -> "Mixture":
        out = Mixture(self.prior)
        out._counts = self._counts.copy()
        out._means = self._means.copy()
        out._scales = self._scales.copy()
        return out

    def to_dict(self) -> dict:
        return {
            "prior": {
                "mean": self.prior.mean.tolist(),
                "kappa": self.prior.kappa,
                "dof": self.prior.dof,
                "scale": self.prior.scale.tolist(),
                "scale_floor": self.prior.scale_floor,
            },
            "counts": self._counts.tolist(),
            "means": self._means.tolist(),
            "scales": self._scales.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mixture":
        p = d["prior"]
        prior = NIGPrior(
            mean=np.asarray(p["mean"], dtype=float),
            kappa=float(p["kappa"]),
            dof=float(p["dof"]),
            scale=np.asarray(p["scale"], dtype=float),
            scale_floor=float(p["scale_floor"]),
        )
        out = cls(prior)
        dim = prior.dim
        out._counts = np.asarray(d["counts"], dtype=float).reshape(-1)
        out._means = np.asarray(d["means"], dtype=float).reshape(-1, dim)
        out._scales = np.asarray(d["scales"], dtype=float).reshape(-1, dim)
        return out
