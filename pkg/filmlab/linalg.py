"""
FILMLAB Linear Algebra — Cyclic Banded Operators

A periodic banded matrix is stored by diagonals: diagonals[k][i] = A[i, (i+k) mod N].
Solves go through scipy.linalg.solve_banded on the non-wrapping band and a
small dense correction for the corner entries (Sherman-Morrison-Woodbury):

  1. Solve the band without corners for b and for the unit vectors of the
     rows that carry corner entries, in a single solve_banded call.
  2. Combine with a dense (2w x 2w) solve so the corner contributions cancel.

Grids too small for the corners to be distinct from the band fall back to
a dense solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, solve, solve_banded

from filmlab.governance import SolverError


@dataclass(frozen=True)
class CyclicBanded:
    """N x N periodic band matrix with half-bandwidth max(|k|) over stored offsets."""
    size: int
    diagonals: dict[int, np.ndarray]

    @classmethod
    def identity(cls, size: int) -> CyclicBanded:
        return cls(size, {0: np.ones(size)})

    @property
    def half_bandwidth(self) -> int:
        return max((abs(k) for k in self.diagonals), default=0)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: CyclicBanded) -> CyclicBanded:
        out = {k: v.copy() for k, v in self.diagonals.items()}
        for k, v in other.diagonals.items():
            out[k] = out[k] + v if k in out else v.copy()
        return CyclicBanded(self.size, out)

    def scaled(self, factor: float) -> CyclicBanded:
        return CyclicBanded(self.size, {k: factor * v for k, v in self.diagonals.items()})

    def compose(self, other: CyclicBanded) -> CyclicBanded:
        """(A @ B)[i, i+a+b] collects A[i, i+a] B[i+a, i+a+b]."""
        out: dict[int, np.ndarray] = {}
        for a, da in self.diagonals.items():
            for b, db in other.diagonals.items():
                term = da * np.roll(db, -a)
                out[a + b] = out[a + b] + term if (a + b) in out else term
        return CyclicBanded(self.size, out)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.size)
        for k, d in self.diagonals.items():
            y += d * np.roll(x, -k)
        return y

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.size, self.size))
        rows = np.arange(self.size)
        for k, d in self.diagonals.items():
            np.add.at(a, (rows, (rows + k) % self.size), d)
        return a

    # -- solves -------------------------------------------------------------

    def solve(self, rhs: np.ndarray, refine: int = 1) -> np.ndarray:
        """Solve A x = rhs, with `refine` rounds of iterative refinement."""
        x = self._solve_once(rhs)
        for _ in range(refine):
            residual = rhs - self.matvec(x)
            x = x + self._solve_once(residual)
        if not np.all(np.isfinite(x)):
            raise SolverError("cyclic banded solve produced non-finite values")
        return x

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        w = self.half_bandwidth
        n = self.size
        try:
            if n < 2 * w + 2:
                return solve(self.to_dense(), rhs, check_finite=True)
            return self._solve_periodic(rhs, w)
        except (LinAlgError, ValueError) as e:
            logger.debug(f"[LINALG] solve failed for N={n}, w={w}: {e}")
            raise SolverError(f"singular cyclic banded system (N={n}): {e}") from e

    def _solve_periodic(self, rhs: np.ndarray, w: int) -> np.ndarray:
        n = self.size
        rows = np.arange(n)
        ab = np.zeros((2 * w + 1, n))
        corners: list[tuple[int, int, float]] = []

        for k, d in self.diagonals.items():
            cols = rows + k
            inside = (cols >= 0) & (cols < n)
            ab[w - k, cols[inside]] = d[inside]
            for i in rows[~inside]:
                corners.append((int(i), int(cols[i] % n), float(d[i])))

        if not corners:
            return solve_banded((w, w), ab, rhs)

        # rows carrying corner entries: the first w and the last w equations
        corner_rows = list(range(w)) + list(range(n - w, n))
        slot = {r: s for s, r in enumerate(corner_rows)}
        m = len(corner_rows)

        unit = np.zeros((n, m))
        unit[corner_rows, np.arange(m)] = 1.0
        solved = solve_banded((w, w), ab, np.column_stack([rhs, unit]))
        x0, y = solved[:, 0], solved[:, 1:]

        # C holds the corner entries: A = B + U C
        c = np.zeros((m, n))
        for i, j, v in corners:
            c[slot[i], j] += v
        capacitance = np.eye(m) + c @ y
        correction = solve(capacitance, c @ x0, check_finite=True)
        return x0 - y @ correction
