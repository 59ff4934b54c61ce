"""Truncated SVD splitting, the numerical kernel behind every rewiring step."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ArgumentError
from .tensor import DenseTensor

MACHINE_EPS = float(np.finfo(np.float64).eps)


class TruncationPolicy(BaseModel):
    """
    How many singular values an SVD keeps.

    With neither field set the policy is exact: every singular value above the numerical rank floor is kept.

    Args:
        eps: Relative Frobenius cutoff. The discarded tail must satisfy `sqrt(sum of discarded s^2) <= eps * ||A||`.
        max_rank: Upper limit on the kept rank.
    """

    model_config = ConfigDict(frozen=True)

    eps: Optional[float] = Field(default=None, ge=0)
    max_rank: Optional[int] = Field(default=None, ge=1)

    @classmethod
    def exact(cls) -> "TruncationPolicy":
        return cls()

    @classmethod
    def cutoff(cls, eps: float, max_rank: Optional[int] = None) -> "TruncationPolicy":
        return cls(eps=eps, max_rank=max_rank)

    @classmethod
    def capped(cls, max_rank: int) -> "TruncationPolicy":
        return cls(max_rank=max_rank)

    @classmethod
    def parse(cls, text: str) -> "TruncationPolicy":
        """Parse `exact`, `eps:<float>`, `maxrank:<int>` or `eps:<float>,maxrank:<int>`."""
        text = text.strip().lower()
        if text == "exact":
            return cls()
        values = {}
        for part in text.split(","):
            key, sep, value = part.partition(":")
            key = key.strip()
            if not sep or key not in ("eps", "maxrank") or key in values:
                raise ArgumentError(
                    f"Invalid truncation policy {text!r}; expected exact, eps:<float> or maxrank:<int>."
                )
            try:
                values[key] = float(value) if key == "eps" else int(value)
            except ValueError:
                raise ArgumentError(f"Invalid value {value!r} for {key} in policy {text!r}.") from None
        try:
            return cls(eps=values.get("eps"), max_rank=values.get("maxrank"))
        except ValueError as e:
            raise ArgumentError(f"Invalid truncation policy {text!r}: {e}") from None

    @property
    def is_exact(self) -> bool:
        return self.eps is None and self.max_rank is None

    def __str__(self):
        if self.is_exact:
            return "exact"
        parts = []
        if self.eps is not None:
            parts.append(f"eps:{self.eps:g}")
        if self.max_rank is not None:
            parts.append(f"maxrank:{self.max_rank}")
        return ",".join(parts)


@dataclass(frozen=True)
class SvdSplit:
    """
    Result of `svd_split`: `left @ right` approximates the input matrix.

    `left` has orthonormal columns, `right` carries the kept singular values in its rows.
    `discarded_mass` is the Frobenius norm of the cut singular values above the numerical rank floor.
    """

    left: np.ndarray
    right: np.ndarray
    kept_rank: int
    discarded_mass: float
    singular_values: np.ndarray


def numerical_rank(singular_values: np.ndarray, shape: Tuple[int, int]) -> int:
    """Number of singular values above the floor `m * n * eps * s_1`, at least 1. Values below it are round-off."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0 or s[0] == 0.0:
        return 1
    floor = shape[0] * shape[1] * MACHINE_EPS * s[0]
    return max(1, int(np.count_nonzero(s > floor)))


def stable_rank_decision(
    singular_values: Sequence[float],
    policy: TruncationPolicy,
    shape: Optional[Tuple[int, int]] = None,
) -> int:
    """
    Number of singular values to keep under a policy.

    Args:
        singular_values: Non-increasing, nonnegative singular values of the full decomposition.
        policy: The truncation policy.
        shape: Shape of the decomposed matrix, used for the numerical rank floor `m * n * eps * s_1`.
            Defaults to a square matrix of the spectrum's length.

    Returns:
        The kept rank, at least 1.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ArgumentError("Singular value list must be a nonempty sequence.")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise ArgumentError("Singular values must be finite and nonnegative.")
    if np.any(np.diff(s) > 0):
        raise ArgumentError("Singular values must be sorted in non-increasing order.")
    if s[0] == 0.0:
        return 1

    m, n = shape if shape is not None else (s.size, s.size)
    rank = numerical_rank(s, (m, n))

    if policy.eps is not None:
        squares = s * s
        # tail[k] is the mass discarded when keeping k values
        tail = np.sqrt(np.append(np.cumsum(squares[::-1])[::-1], 0.0))
        threshold = policy.eps * np.sqrt(squares.sum())
        within = np.nonzero(tail[1:] <= threshold)[0]
        rank = min(rank, int(within[0]) + 1)
    if policy.max_rank is not None:
        rank = min(rank, policy.max_rank)
    return max(1, rank)


def _svd(a: np.ndarray):
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # the transposed problem occasionally converges when the direct one does not
        vt, s, u = np.linalg.svd(a.T, full_matrices=False)
        return u.T, s, vt.T


def svd_split(matrix: Union[DenseTensor, np.ndarray], policy: TruncationPolicy) -> SvdSplit:
    """
    Split a matrix into an orthonormal left factor and a weighted right factor.

    Args:
        matrix: The matrix to decompose, as a 2d array or a two-mode DenseTensor.
        policy: Decides the kept rank, see `stable_rank_decision`.

    Returns:
        An SvdSplit. The sign of each singular pair is fixed so that the largest-magnitude entry
        of the left vector is positive. A zero matrix gives rank 1 with a zero right factor.
    """
    a = matrix.data if isinstance(matrix, DenseTensor) else np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ArgumentError(f"svd_split expects a nonempty matrix, got shape {a.shape}.")
    if not np.all(np.isfinite(a)):
        raise ArgumentError("svd_split input contains non-finite entries.")

    u, s, vt = _svd(a)
    k = stable_rank_decision(s, policy, shape=a.shape)

    left = np.array(u[:, :k])
    vt_kept = np.array(vt[:k, :])
    pivots = np.argmax(np.abs(left), axis=0)
    signs = np.where(left[pivots, np.arange(k)] < 0, -1.0, 1.0)
    left *= signs
    vt_kept *= signs[:, None]

    kept = np.array(s[:k])
    right = kept[:, None] * vt_kept
    # round-off below the numerical rank floor is not counted as truncation
    discarded = float(np.sqrt(np.sum(s[k : numerical_rank(s, a.shape)] ** 2)))
    return SvdSplit(left=left, right=right, kept_rank=k, discarded_mass=discarded, singular_values=kept)
