"""Super-scale regularizers R, their scale functions c, lower bounds r and proxes.

    kind         R(theta)                      c(theta)      r(z)
    l1           ||theta||_1                   ||theta||_1   z
    tikhonov     ||theta||_2^2 + 1/4           ||theta||_2   z^2 + 1/4
    elastic_net  ||theta||_1 + ||theta||_2^2 + 1/4  ||theta||_1   z
    group_l12    sum_g ||theta_g||_2           same as R     z
    trace_norm   sum of singular values        same as R     z

Matrices use the Frobenius norm wherever a Euclidean norm appears.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeMismatchError
from .exp_family import Hypothesis

REGULARIZERS = ("l1", "tikhonov", "elastic_net", "group_l12", "trace_norm")

RATE_COLUMNS = {
    "l1": "l1",
    "elastic_net": "l1",
    "tikhonov": "tikhonov_or_l1inf",
    "group_l12": "multitask_l12",
    "trace_norm": "low_rank",
}


@dataclass(frozen=True)
class RegularizerSpec:
    """Regularizer kind; ``groups`` partitions coordinate indices for group_l12."""

    kind: str = "l1"
    groups: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        if self.kind not in REGULARIZERS:
            raise ValueError(f"Unknown regularizer: {self.kind}")
        if self.kind == "group_l12":
            if not self.groups:
                raise ValueError("group_l12 needs groups")
            groups = tuple(tuple(int(i) for i in g) for g in self.groups)
            flat = [i for g in groups for i in g]
            if any(len(g) == 0 for g in groups) or len(flat) != len(set(flat)):
                raise ValueError("groups must be nonempty and disjoint")
            object.__setattr__(self, "groups", groups)

    @property
    def norm_tag(self) -> str:
        return {"l1": "l1", "elastic_net": "l1", "tikhonov": "l2",
                "group_l12": "l2", "trace_norm": "nuclear"}[self.kind]


def _values(theta) -> np.ndarray:
    return theta.values if isinstance(theta, Hypothesis) else np.asarray(theta, dtype=float)


def _check(reg: RegularizerSpec, values: np.ndarray):
    if reg.kind == "trace_norm" and values.ndim != 2:
        raise ShapeMismatchError("trace_norm needs a matrix hypothesis")
    if reg.kind == "group_l12":
        covered = sorted(i for g in reg.groups for i in g)
        if covered != list(range(values.size)):
            raise ShapeMismatchError(
                f"groups must cover coordinates 0..{values.size - 1} exactly once"
            )


def _group_norms(reg: RegularizerSpec, flat: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(flat[list(g)]) for g in reg.groups])


def _nuclear(values: np.ndarray) -> float:
    return float(np.linalg.svd(values, compute_uv=False).sum())


def reg_value(reg: RegularizerSpec, theta) -> float:
    """R(theta)."""
    v = _values(theta)
    _check(reg, v)
    if reg.kind == "l1":
        return float(np.abs(v).sum())
    if reg.kind == "tikhonov":
        return float(np.sum(v * v)) + 0.25
    if reg.kind == "elastic_net":
        return float(np.abs(v).sum() + np.sum(v * v)) + 0.25
    if reg.kind == "group_l12":
        return float(_group_norms(reg, v.ravel()).sum())
    return _nuclear(v)


def scale(reg: RegularizerSpec, theta) -> float:
    """Scale function c(theta) paired with the regularizer."""
    v = _values(theta)
    _check(reg, v)
    if reg.kind in ("l1", "elastic_net"):
        return float(np.abs(v).sum())
    if reg.kind == "tikhonov":
        return float(np.linalg.norm(v.ravel()))
    if reg.kind == "group_l12":
        return float(_group_norms(reg, v.ravel()).sum())
    return _nuclear(v)


def lower_bound_r(reg: RegularizerSpec, z: float) -> float:
    """r(z) with r(c(theta)) <= R(theta) and r(z) >= z."""
    if reg.kind == "tikhonov":
        return z * z + 0.25
    return z


def dual_norm(reg: RegularizerSpec, u) -> float:
    """Dual of the norm inside R: l-inf, l2, max group l2 or spectral."""
    u = _values(u)
    _check(reg, u)
    if reg.kind in ("l1", "elastic_net"):
        return float(np.abs(u).max(initial=0.0))
    if reg.kind == "tikhonov":
        return float(np.linalg.norm(u.ravel()))
    if reg.kind == "group_l12":
        return float(_group_norms(reg, u.ravel()).max(initial=0.0))
    return float(np.linalg.norm(u, ord=2))


def rate_column(reg: RegularizerSpec) -> str:
    """Rate-table column whose formula covers this regularizer."""
    return RATE_COLUMNS[reg.kind]


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox(reg: RegularizerSpec, v, t: float):
    """argmin_theta t R(theta) + 1/2 ||theta - v||^2; returns the input's type."""
    if not t > 0:
        raise ValueError("prox step t must be positive")
    values = _values(v)
    _check(reg, values)
    if reg.kind == "l1":
        out = soft_threshold(values, t)
    elif reg.kind == "tikhonov":
        out = values / (1.0 + 2.0 * t)
    elif reg.kind == "elastic_net":
        out = soft_threshold(values, t) / (1.0 + 2.0 * t)
    elif reg.kind == "group_l12":
        flat = values.ravel().copy()
        for g in reg.groups:
            idx = list(g)
            norm = np.linalg.norm(flat[idx])
            flat[idx] = 0.0 if norm <= t else flat[idx] * (1.0 - t / norm)
        out = flat.reshape(values.shape)
    else:
        u, s, vt = np.linalg.svd(values, full_matrices=False)
        out = (u * np.maximum(0.0, s - t)) @ vt
    if isinstance(v, Hypothesis):
        return Hypothesis(out, v.norm_tag)
    return out


def groups_from_sizes(sizes: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    """Consecutive groups of the given sizes."""
    groups, start = [], 0
    for size in sizes:
        groups.append(tuple(range(start, start + size)))
        start += size
    return tuple(groups)
