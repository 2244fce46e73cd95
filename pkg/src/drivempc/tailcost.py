"""Quadratic tail cost: value-function container and artifact files.

Training produces a family of quadratic value functions ``V_i(x) = x'P_i x +
2 q_i'x + r_i`` on the 12-dimensional augmented state; iterate 0 is the tail
cost the controller plugs in behind its prediction horizon.  Artifacts are
plain-text files carrying every iterate plus a fingerprint of all parameters
the functions were trained against, so a controller can refuse a tail that
belongs to a different drive or cost configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .augment import NX, ControlConfig
from .params import DriveParams

_FORMAT = "drivempc-tail-v1"

# parameters whose change invalidates a trained tail
_FINGERPRINT_FIELDS = (
    ("rs", lambda p, c: p.rs),
    ("rr", lambda p, c: p.rr),
    ("xls", lambda p, c: p.xls),
    ("xlr", lambda p, c: p.xlr),
    ("xm", lambda p, c: p.xm),
    ("vdc", lambda p, c: p.vdc),
    ("omega_r", lambda p, c: p.omega_r),
    ("ts", lambda p, c: p.ts),
    ("omega_b", lambda p, c: p.omega_b),
    ("gamma", lambda p, c: c.gamma),
    ("delta", lambda p, c: c.delta),
    ("fsw_target", lambda p, c: c.fsw_target),
    ("r1", lambda p, c: c.r1),
    ("r2", lambda p, c: c.r2),
)


@dataclass(frozen=True)
class QuadraticValue:
    """One quadratic value function on the augmented state."""

    p: np.ndarray  # (12, 12), symmetric
    q: np.ndarray  # (12,)
    r: float

    def __call__(self, x: np.ndarray) -> float | np.ndarray:
        """Evaluate at one state (12,) or a batch (n, 12)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(x @ self.p @ x + 2.0 * self.q @ x + self.r)
        return np.einsum("ni,ij,nj->n", x, self.p, x) + 2.0 * x @ self.q + self.r

    def as_matrix(self) -> np.ndarray:
        """Homogeneous form ``[[P, q], [q', r]]`` on ``[x; 1]``."""
        out = np.zeros((NX + 1, NX + 1))
        out[:NX, :NX] = self.p
        out[:NX, NX] = self.q
        out[NX, :NX] = self.q
        out[NX, NX] = self.r
        return out


def fingerprint_values(params: DriveParams, config: ControlConfig) -> dict[str, float]:
    """Parameter values a tail cost is bound to."""
    return {name: float(get(params, config)) for name, get in _FINGERPRINT_FIELDS}


def fingerprint_hash(values: dict[str, float]) -> str:
    text = ",".join(f"{k}={values[k]:.12g}" for k in sorted(values))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class FingerprintMismatch(ValueError):
    """Tail-cost artifact belongs to a different parameter set."""


@dataclass(frozen=True)
class TailArtifact:
    """Trained tail cost with its Bellman iterates and provenance.

    ``iterates[0]`` is the controller tail; the chain satisfies (up to the
    training tolerance) ``V_{i-1} <= l + gamma * V_i(next state)`` for
    ``i = 1..M`` with ``V_M`` identified with ``V_0``.
    """

    iterates: tuple[QuadraticValue, ...]
    fingerprint: dict[str, float]
    objective: float
    solver_status: str = "solved"

    @property
    def tail(self) -> QuadraticValue:
        return self.iterates[0]

    @property
    def m_iters(self) -> int:
        return len(self.iterates)

    def check_fingerprint(self, params: DriveParams, config: ControlConfig) -> None:
        """Raise :class:`FingerprintMismatch` naming any differing values."""
        current = fingerprint_values(params, config)
        bad = [
            f"{k}: artifact {self.fingerprint.get(k)!r} vs run {v!r}"
            for k, v in current.items()
            if not _close(self.fingerprint.get(k), v)
        ]
        if bad:
            raise FingerprintMismatch(
                "tail cost was trained for different parameters:\n  "
                + "\n  ".join(bad)
            )


def _close(a: float | None, b: float, rel: float = 1e-9) -> bool:
    if a is None:
        return False
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def save_artifact(path: str, artifact: TailArtifact) -> None:
    """Write a tail artifact as plain text (stable across platforms)."""
    lines = [f"format {_FORMAT}"]
    lines.append(f"fingerprint {fingerprint_hash(artifact.fingerprint)}")
    for key in sorted(artifact.fingerprint):
        lines.append(f"param {key} {artifact.fingerprint[key]:.17g}")
    lines.append(f"objective {artifact.objective:.17g}")
    lines.append(f"status {artifact.solver_status}")
    lines.append(f"iterates {artifact.m_iters}")
    for i, v in enumerate(artifact.iterates):
        lines.append(f"iterate {i}")
        for row in v.p:
            lines.append("P " + " ".join(f"{x:.17g}" for x in row))
        lines.append("q " + " ".join(f"{x:.17g}" for x in v.q))
        lines.append(f"r {v.r:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_artifact(path) -> TailArtifact:
    """Read a tail artifact written by :func:`save_artifact`."""
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip()]
    if not tokens or tokens[0] != ["format", _FORMAT]:
        raise ValueError(f"{path}: not a {_FORMAT} file")
    fingerprint: dict[str, float] = {}
    stored_hash = ""
    objective = float("nan")
    status = "unknown"
    iterates: list[QuadraticValue] = []
    rows: list[list[float]] = []
    q: np.ndarray | None = None
    r: float | None = None

    def flush() -> None:
        nonlocal rows, q, r
        if rows or q is not None:
            if len(rows) != NX or q is None or r is None:
                raise ValueError(f"{path}: truncated iterate block")
            p = np.array(rows)
            iterates.append(QuadraticValue(p=0.5 * (p + p.T), q=np.array(q), r=r))
        rows, q, r = [], None, None

    for tok in tokens[1:]:
        key = tok[0]
        if key == "fingerprint":
            stored_hash = tok[1]
        elif key == "param":
            fingerprint[tok[1]] = float(tok[2])
        elif key == "objective":
            objective = float(tok[1])
        elif key == "status":
            status = tok[1]
        elif key == "iterates":
            pass
        elif key == "iterate":
            flush()
        elif key == "P":
            rows.append([float(x) for x in tok[1:]])
        elif key == "q":
            q = np.array([float(x) for x in tok[1:]])
        elif key == "r":
            r = float(tok[1])
        else:
            raise ValueError(f"{path}: unknown record {key!r}")
    flush()
    if not iterates:
        raise ValueError(f"{path}: no iterates")
    if stored_hash and stored_hash != fingerprint_hash(fingerprint):
        raise ValueError(f"{path}: fingerprint hash does not match parameters")
    return TailArtifact(
        iterates=tuple(iterates),
        fingerprint=fingerprint,
        objective=objective,
        solver_status=status,
    )
