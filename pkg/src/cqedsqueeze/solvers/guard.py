"""Fock-truncation monitor shared by the engines."""

from __future__ import annotations

import numpy as np

from ..fockspace import MODE_A, MODE_B, HilbertSpec

DEFAULT_LEAK_THRESHOLD = 1e-4


def mode_leakage(prob: np.ndarray, spec: HilbertSpec, n_levels: int = 2) -> dict[str, float]:
    """Population of the top ``n_levels`` Fock states of each mode, from basis probabilities."""
    p = np.asarray(prob).reshape(spec.dims)
    out = {}
    for label in (MODE_A, MODE_B):
        if label not in spec:
            continue
        axis = spec.index(label)
        marginal = p.sum(axis=tuple(i for i in range(p.ndim) if i != axis))
        out[label] = float(marginal[-n_levels:].sum() / marginal.sum())
    return out


class TruncationGuard:
    """Tracks the worst top-level leakage seen during a run."""

    def __init__(self, spec: HilbertSpec, threshold: float = DEFAULT_LEAK_THRESHOLD, n_levels: int = 2):
        self.spec = spec
        self.threshold = threshold
        self.n_levels = n_levels
        self.max_leak = {label: 0.0 for label in (MODE_A, MODE_B) if label in spec}
        self.messages: list[str] = []
        self._flagged: set[str] = set()

    def _record(self, leaks: dict[str, float], t: float) -> None:
        for label, leak in leaks.items():
            self.max_leak[label] = max(self.max_leak[label], leak)
            if leak > self.threshold and label not in self._flagged:
                self._flagged.add(label)
                self.messages.append(
                    f"truncation: mode {label} holds {leak:.2e} in its top {self.n_levels} Fock levels "
                    f"at t={t:.6g} (threshold {self.threshold:g})"
                )

    def check_ket(self, psi: np.ndarray, t: float) -> None:
        self._record(mode_leakage(np.abs(psi) ** 2, self.spec, self.n_levels), t)

    def check_probs(self, prob: np.ndarray, t: float) -> None:
        self._record(mode_leakage(prob, self.spec, self.n_levels), t)
