from dataclasses import dataclass

import numpy as np

from limset.errors import ParameterError


@dataclass(frozen=True, eq=False)
class AliasTable:
    """Vose alias table: O(1) draws from a finite discrete law."""

    prob: np.ndarray
    alias: np.ndarray

    @classmethod
    def from_weights(cls, weights) -> "AliasTable":
        """Weights are unnormalized probabilities; zeros are allowed and never drawn."""
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("alias weights must be finite, nonnegative and non-empty")
        total = float(w.sum())
        if total == 0.0:
            raise ParameterError("bad weights: total probability is zero")
        n = w.size
        scaled = list(w * n / total)

        small = [idx for idx, v in enumerate(scaled) if v < 1.0]
        large = [idx for idx, v in enumerate(scaled) if v >= 1.0]
        prob = np.zeros(n)
        alias = np.arange(n)
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for idx in large + small:
            prob[idx] = 1.0
            alias[idx] = idx

        prob.setflags(write=False)
        alias.setflags(write=False)
        return cls(prob=prob, alias=alias)

    def __len__(self) -> int:
        return int(self.prob.size)

    def draw(self, gen: np.random.Generator, count: int) -> np.ndarray:
        """
        Outcome indices. Each draw consumes one row of `gen.random((count, 2))`, so the
        first k draws of a batch equal a batch of size k from the same stream state.
        """
        u = gen.random((count, 2))
        n = len(self)
        col = np.minimum((u[:, 0] * n).astype(np.int64), n - 1)
        return np.where(u[:, 1] < self.prob[col], col, self.alias[col])

    def probabilities(self) -> np.ndarray:
        """Recover the normalized law from the table."""
        n = len(self)
        p = self.prob / n
        np.add.at(p, self.alias, (1.0 - self.prob) / n)
        return p
