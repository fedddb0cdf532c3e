"""Sparse quadratic binary models and exact squared-penalty expansion.

Variables take values 0/1.  Quadratic terms are stored keyed by the
canonical ordered pair ``(min(i, j), max(i, j))``; diagonal contributions
are folded into the linear coefficients at insertion time (sigma^2 = sigma
for binary variables, so this is lossless).
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuboModel",
    "LinearForm",
    "PenaltyTerm",
    "DimensionError",
    "random_state",
    "state_to_hex",
    "state_from_hex",
]


class DimensionError(ValueError):
    """State length or variable index incompatible with the model."""


@dataclass
class LinearForm:
    """Integer linear expression sum_i coeffs[i]*sigma_i + constant."""

    coeffs: dict[int, int]
    constant: int = 0

    def value(self, state) -> int:
        s = np.asarray(state)
        return int(sum(a * int(s[i]) for i, a in self.coeffs.items()) + self.constant)


@dataclass
class PenaltyTerm:
    """Squared-linear penalty weight * (form)^2, kept unexpanded.

    Equivalent to the expanded quadratic terms but evaluated through the
    running value of the linear form, so large penalty cliques cost O(1)
    per variable instead of O(clique size).
    """

    form: LinearForm
    weight: float


class QuboModel:
    """Quadratic binary model: offset + sum h_i s_i + sum_{i<j} J_ij s_i s_j.

    Treat instances as immutable once an encoder has finished building
    them; they can then be shared freely across workers.
    """

    def __init__(self, num_vars: int):
        if num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        self.num_vars = num_vars
        self.linear: dict[int, float] = {}
        self.quadratic: dict[tuple[int, int], float] = {}
        self.penalties: list[PenaltyTerm] = []
        self.offset: float = 0.0
        self._dense: tuple[np.ndarray, np.ndarray] | None = None
        self._pen_dense: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    # -- construction ------------------------------------------------------

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.num_vars:
            raise DimensionError(f"variable index {i} out of range [0, {self.num_vars})")

    def add_linear(self, i: int, coeff: float) -> None:
        self._check_index(i)
        self._dense = None
        c = self.linear.get(i, 0.0) + coeff
        if c == 0.0:
            self.linear.pop(i, None)
        else:
            self.linear[i] = c

    def add_quadratic(self, i: int, j: int, coeff: float) -> None:
        self._check_index(i)
        self._check_index(j)
        self._dense = None
        if i == j:
            # s_i * s_i == s_i
            self.add_linear(i, coeff)
            return
        key = (i, j) if i < j else (j, i)
        c = self.quadratic.get(key, 0.0) + coeff
        if c == 0.0:
            self.quadratic.pop(key, None)
        else:
            self.quadratic[key] = c

    def add_offset(self, value: float) -> None:
        self.offset += value

    def add_squared_penalty(self, form: LinearForm, weight: float) -> "QuboModel":
        """Add weight * (sum_i a_i s_i + constant)^2, expanded exactly."""
        if weight < 0:
            raise ValueError("penalty weight must be non-negative")
        items = sorted(form.coeffs.items())
        for i, _ in items:
            self._check_index(i)
        c0 = form.constant
        self.add_offset(weight * c0 * c0)
        for idx, (i, a) in enumerate(items):
            # a^2 s_i^2 -> a^2 s_i,  2 a c0 s_i
            self.add_linear(i, weight * (a * a + 2 * a * c0))
            for j, b in items[idx + 1 :]:
                self.add_quadratic(i, j, weight * 2 * a * b)
        return self

    def add_penalty_form(self, form: LinearForm, weight: float) -> "QuboModel":
        """Add weight * (form)^2 without expanding the quadratic clique."""
        if weight < 0:
            raise ValueError("penalty weight must be non-negative")
        for i in form.coeffs:
            self._check_index(i)
        self.penalties.append(PenaltyTerm(form=form, weight=weight))
        self._pen_dense = None
        return self

    def expanded(self) -> "QuboModel":
        """Equivalent model with every penalty form expanded into h/J terms."""
        model = QuboModel(self.num_vars)
        model.offset = self.offset
        model.linear = dict(self.linear)
        model.quadratic = dict(self.quadratic)
        for term in self.penalties:
            model.add_squared_penalty(term.form, term.weight)
        return model

    # -- evaluation --------------------------------------------------------

    def penalty_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A, c, w): coefficient matrix (P, n), constants and weights."""
        if self._pen_dense is None:
            p = len(self.penalties)
            a = np.zeros((p, self.num_vars))
            c = np.zeros(p)
            w = np.zeros(p)
            for k, term in enumerate(self.penalties):
                for i, coeff in term.form.coeffs.items():
                    a[k, i] = coeff
                c[k] = term.form.constant
                w[k] = term.weight
            self._pen_dense = (a, c, w)
        return self._pen_dense

    def dense_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(h, M) with M symmetric, M[i, j] = M[j, i] = J_ij."""
        if self._dense is None:
            h = np.zeros(self.num_vars)
            for i, c in self.linear.items():
                h[i] = c
            m = np.zeros((self.num_vars, self.num_vars))
            for (i, j), c in self.quadratic.items():
                m[i, j] = c
                m[j, i] = c
            self._dense = (h, m)
        return self._dense

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(self.num_vars)}
        for (i, j), c in self.quadratic.items():
            adj[i].append((j, c))
            adj[j].append((i, c))
        return adj

    def evaluate(self, state) -> float:
        s = np.asarray(state)
        if s.shape != (self.num_vars,):
            raise DimensionError(
                f"state length {s.shape} does not match num_vars {self.num_vars}"
            )
        e = self.offset
        for i, c in self.linear.items():
            e += c * s[i]
        for (i, j), c in self.quadratic.items():
            e += c * s[i] * s[j]
        for term in self.penalties:
            e += term.weight * term.form.value(s) ** 2
        return float(e)

    def evaluate_batch(self, states: np.ndarray) -> np.ndarray:
        """Energies for a (n_states, num_vars) 0/1 array."""
        s = np.asarray(states, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.num_vars:
            raise DimensionError("states must have shape (n, num_vars)")
        h, m = self.dense_arrays()
        e = self.offset + s @ h + 0.5 * np.einsum("si,si->s", s @ m, s)
        if self.penalties:
            a, c, w = self.penalty_arrays()
            v = s @ a.T + c
            e = e + (v * v) @ w
        return e

    def delta_flip(self, state, i: int) -> float:
        """Energy change of flipping variable i, O(degree of i)."""
        self._check_index(i)
        s = np.asarray(state)
        if s.shape != (self.num_vars,):
            raise DimensionError("state length mismatch")
        acc = self.linear.get(i, 0.0)
        for j, c in self.adjacency()[i]:
            acc += c * s[j]
        step = 1 - 2 * int(s[i])
        delta = step * acc
        for term in self.penalties:
            a = term.form.coeffs.get(i)
            if a:
                v = term.form.value(s)
                delta += term.weight * (2 * a * v * step + a * a)
        return float(delta)

    def all_flip_deltas(self, state) -> np.ndarray:
        """Energy change of every single-variable flip, vectorized."""
        s = np.asarray(state, dtype=float)
        if s.shape != (self.num_vars,):
            raise DimensionError("state length mismatch")
        h, m = self.dense_arrays()
        step = 1.0 - 2.0 * s
        delta = step * (h + m @ s)
        if self.penalties:
            a, c, w = self.penalty_arrays()
            v = a @ s + c
            delta = delta + step * ((2.0 * w * v) @ a) + w @ (a * a)
        return delta

    # -- serialization -----------------------------------------------------

    def to_text(self, extra_header: list[str] | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"qubo {self.num_vars} {self.offset!r}\n")
        for line in extra_header or []:
            buf.write(line.rstrip("\n") + "\n")
        for i in sorted(self.linear):
            buf.write(f"l {i} {self.linear[i]!r}\n")
        for i, j in sorted(self.quadratic):
            buf.write(f"q {i} {j} {self.quadratic[(i, j)]!r}\n")
        for term in self.penalties:
            parts = [f"p {term.weight!r} {term.form.constant}"]
            for i in sorted(term.form.coeffs):
                parts.append(f"{i}:{term.form.coeffs[i]}")
            buf.write(" ".join(parts) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> tuple["QuboModel", list[str]]:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "qubo":
            raise ValueError("not a qubo model file")
        model = cls(int(head[1]))
        model.offset = float(head[2])
        extra: list[str] = []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "l":
                model.add_linear(int(parts[1]), float(parts[2]))
            elif parts[0] == "q":
                model.add_quadratic(int(parts[1]), int(parts[2]), float(parts[3]))
            elif parts[0] == "p":
                coeffs = {}
                for entry in parts[3:]:
                    i, a = entry.split(":")
                    coeffs[int(i)] = int(a)
                model.add_penalty_form(
                    LinearForm(coeffs, constant=int(parts[2])), float(parts[1])
                )
            else:
                extra.append(ln)
        return model, extra

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def random_state(num_vars: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=num_vars, dtype=np.int8)


def state_to_hex(state) -> str:
    bits = np.asarray(state, dtype=np.uint8)
    return bytes(np.packbits(bits)).hex()


def state_from_hex(text: str, num_vars: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    bits = np.unpackbits(raw)[:num_vars]
    return bits.astype(np.int8)
