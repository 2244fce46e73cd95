"""Tail-cost training by iterated Bellman inequalities.

The controller's infinite-horizon cost is approximated from below by a
quadratic ``V_0``.  Training maximizes the expected value of ``V_0`` under a
state measure subject to the chained inequalities

    V_{i-1}(z)  <=  l(z) + gamma * V_i(A z + B u)      for i = 1..M,

required for every reachable switch transition; ``V_M`` is identified with
``V_0`` so the chain closes on itself.  Each inequality is quadratic in the
state, so it becomes one semidefinite constraint per (previous position,
next position) pair -- 343 blocks per chain link.

Because three state coordinates are not free (the constant 1 and the three
previous switch positions take finitely many values), each 13x13 homogeneous
quadratic form is reduced by a congruence onto the 8 free coordinates plus an
affine offset, leaving 9x9 blocks.  The reduction is exact; a test pins the
quadratic-form identity.

Blocks are imposed with a small positive margin (``M >= sigma*I``) so that
the first-order conic solver's finite accuracy cannot leave a block slightly
indefinite; downstream checks verify eigenvalues of the margin-free blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .augment import (
    ALL_SWITCH,
    CONST,
    NX,
    AugmentedModel,
    ControlConfig,
    assemble_augmented,
    feasible_inputs,
    p_from_inputs,
)
from .conic import ConicProblem, solve, svec, svec_indices
from .motor import steady_state
from .params import DriveParams
from .tailcost import QuadraticValue, TailArtifact, fingerprint_values

N_FREE = 8  # physical (4) + oscillator (2) + estimator (2) coordinates
N_RED = N_FREE + 1  # reduced block size: free coordinates + affine offset
N_THETA = NX * (NX + 1) // 2 + NX + 1  # 78 + 12 + 1 variables per iterate

# lower-triangle (a >= b) pairs of P in column-major order
_LTRI_A, _LTRI_B = (
    np.array([a for b in range(NX) for a in range(b, NX)]),
    np.array([b for b in range(NX) for a in range(b, NX)]),
)
_SVEC_I, _SVEC_J, _SVEC_SCALE = svec_indices(N_RED)


# -- transition enumeration ------------------------------------------------


@dataclass(frozen=True)
class Transitions:
    """All feasible (previous position, next position) pairs."""

    u_prev: np.ndarray  # (n, 3) int
    u_sw: np.ndarray  # (n, 3) int
    u_full: np.ndarray  # (n, 6) float, change flags filled in

    def __len__(self) -> int:
        return len(self.u_prev)


def enumerate_transitions() -> Transitions:
    """Every one-step switch transition obeying the level-jump limit (343)."""
    prev_rows, sw_rows = [], []
    for u_prev in ALL_SWITCH:
        for u_sw in feasible_inputs(u_prev):
            prev_rows.append(u_prev)
            sw_rows.append(u_sw)
    u_prev = np.array(prev_rows)
    u_sw = np.array(sw_rows)
    p = np.abs(u_sw - u_prev)
    return Transitions(
        u_prev=u_prev, u_sw=u_sw, u_full=np.hstack([u_sw, p]).astype(float)
    )


# -- dense Bellman forms (reference path) ----------------------------------


def stage_cost_form(model: AugmentedModel) -> np.ndarray:
    """Homogeneous 13x13 form of the stage cost on ``[x; 1]``."""
    out = np.zeros((NX + 1, NX + 1))
    out[:NX, :NX] = model.c.T @ model.c
    return out


def bellman_form(
    model: AugmentedModel,
    gamma: float,
    v_cur: QuadraticValue,
    v_prev: QuadraticValue,
    u_sw: np.ndarray,
    u_prev: np.ndarray,
) -> np.ndarray:
    """Homogeneous form of ``l(z) + gamma*V_cur(Az+Bu) - V_prev(z)``.

    Nonnegativity of this 13x13 form over states (with the bookkeeping
    coordinates at their actual values) is one link of the Bellman chain
    for one switch transition.
    """
    u6 = np.concatenate([u_sw, p_from_inputs(u_sw, u_prev)]).astype(float)
    j = np.zeros((NX + 1, NX + 1))
    j[:NX, :NX] = model.a
    j[:NX, NX] = model.b @ u6
    j[NX, NX] = 1.0
    return (
        stage_cost_form(model)
        + gamma * j.T @ v_cur.as_matrix() @ j
        - v_prev.as_matrix()
    )


def embed_free(u_prev: np.ndarray) -> np.ndarray:
    """Map ``[z_free; 1]`` (9) to ``[z; 1]`` (13) at fixed switch positions."""
    e = np.zeros((NX + 1, N_RED))
    e[:N_FREE, :N_FREE] = np.eye(N_FREE)
    e[CONST, N_FREE] = 1.0
    e[CONST + 1 : NX, N_FREE] = u_prev
    e[NX, N_FREE] = 1.0
    return e


def reduce_free(m_full: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """Congruence of a homogeneous form onto the free coordinates (9x9)."""
    e = embed_free(u_prev)
    return e.T @ m_full @ e


def embed_state(z_free: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """Full 12-state from free coordinates and switch positions."""
    z = np.zeros(NX)
    z[:N_FREE] = z_free
    z[CONST] = 1.0
    z[CONST + 1 :] = u_prev
    return z


# -- sparse canonicalization ----------------------------------------------


def _quadratic_coefficients(t: np.ndarray) -> np.ndarray:
    """Coefficients of ``T'PT + sym(T'q e9') + r e9 e9'`` in the iterate
    variables ``theta = [ltri(P), q, r]``.

    Returns an array of shape (45, 91): scaled-svec rows by variables.
    """
    c1 = np.einsum("ai,bj->abij", t, t)
    coef_p = c1[_LTRI_A, _LTRI_B]
    off = _LTRI_A != _LTRI_B
    coef_p[off] += c1[_LTRI_B[off], _LTRI_A[off]]
    coef_q = np.zeros((NX, N_RED, N_RED))
    coef_q[:, :, N_FREE] += t
    coef_q[:, N_FREE, :] += t
    coef_r = np.zeros((1, N_RED, N_RED))
    coef_r[0, N_FREE, N_FREE] = 1.0
    stacked = np.concatenate([coef_p, coef_q, coef_r], axis=0)
    return (stacked[:, _SVEC_I, _SVEC_J] * _SVEC_SCALE).T


def transition_maps(
    model: AugmentedModel, transitions: Transitions
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-transition affine maps of the reduced Bellman blocks.

    For transition ``m`` the reduced block is

        M~_m(theta) = k_m + gamma * D_cur_m theta_cur - D_prev_m theta_prev

    in scaled-svec coordinates (gamma applied by the assembler).  Returns
    ``(d_cur, d_prev, k)`` with shapes (n, 45, 91), (n, 45, 91), (n, 45).
    """
    n = len(transitions)
    d_cur = np.empty((n, len(_SVEC_I), N_THETA))
    d_prev = np.empty_like(d_cur)
    k = np.empty((n, len(_SVEC_I)))
    ctc = model.c.T @ model.c
    for m in range(n):
        e12 = np.zeros((NX, N_RED))
        e12[:N_FREE, :N_FREE] = np.eye(N_FREE)
        e12[CONST, N_FREE] = 1.0
        e12[CONST + 1 :, N_FREE] = transitions.u_prev[m]
        a12 = model.a @ e12
        a12[:, N_FREE] += model.b @ transitions.u_full[m]
        d_cur[m] = _quadratic_coefficients(a12)
        d_prev[m] = _quadratic_coefficients(e12)
        k[m] = svec(e12.T @ ctc @ e12)
    return d_cur, d_prev, k


def default_measure_moments(model: AugmentedModel) -> tuple[np.ndarray, np.ndarray]:
    """First and second moments of the training measure.

    The measure concentrates where the closed loop lives: physical and
    reference states averaged over the rated-torque orbit (which makes the
    weights rotation-balanced and keeps the current/reference correlation),
    plus diagonal spread for current ripple, flux variation and estimator
    wander; previous switch positions uniform over the 27 combinations.
    """
    params = model.params
    thetas = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    orbit = np.empty((len(thetas), N_FREE))
    for i, th in enumerate(thetas):
        orbit[i, :4] = steady_state(params, 1.0, phase=th)
        orbit[i, 4:6] = [np.sin(th), -np.cos(th)]
        orbit[i, 6:8] = [1.0, 1.0]
    mu8 = orbit.mean(axis=0)
    spread = np.array([0.15, 0.15, 0.05, 0.05, 0.0, 0.0, 0.2, 0.2])
    m2 = orbit.T @ orbit / len(thetas) + np.diag(spread**2)
    mu = np.zeros(NX)
    mu[:N_FREE] = mu8
    mu[CONST] = 1.0
    sigma2 = np.zeros((NX, NX))
    sigma2[:N_FREE, :N_FREE] = m2
    sigma2[:N_FREE, CONST] = mu8
    sigma2[CONST, :N_FREE] = mu8
    sigma2[CONST, CONST] = 1.0
    sigma2[CONST + 1 :, CONST + 1 :] = (2.0 / 3.0) * np.eye(3)
    return mu, sigma2


def objective_weights(mu: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Expected value of a quadratic under the measure, as theta weights."""
    w_p = sigma2[_LTRI_A, _LTRI_B].copy()
    w_p[_LTRI_A != _LTRI_B] *= 2.0
    return np.concatenate([w_p, 2.0 * mu, [1.0]])


def assemble_training_problem(
    model: AugmentedModel,
    m_iters: int,
    psd_margin: float = 1e-5,
    moments: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[ConicProblem, Transitions]:
    """Standard-form conic program for the iterated Bellman training."""
    if m_iters < 1:
        raise ValueError("need at least one Bellman iterate")
    gamma = model.config.gamma
    transitions = enumerate_transitions()
    d_cur, d_prev, k = transition_maps(model, transitions)
    n_tr = len(transitions)
    rows_per_iter = n_tr * len(_SVEC_I)

    slab_cur = sp.csr_matrix(d_cur.reshape(rows_per_iter, N_THETA))
    slab_prev = sp.csr_matrix(d_prev.reshape(rows_per_iter, N_THETA))
    margin = psd_margin * np.tile(svec(np.eye(N_RED)), n_tr)
    b_slab = k.reshape(-1) - margin

    blocks = []
    for i in range(1, m_iters + 1):
        row = [None] * m_iters
        cur, prev = i % m_iters, i - 1
        if cur == prev:
            row[cur] = slab_prev - gamma * slab_cur
        else:
            row[cur] = -gamma * slab_cur
            row[prev] = slab_prev
        blocks.append(row)
    a = sp.bmat(blocks, format="csc")
    b = np.tile(b_slab, m_iters)

    if moments is None:
        moments = default_measure_moments(model)
    c = np.zeros(m_iters * N_THETA)
    c[:N_THETA] = -objective_weights(*moments)

    problem = ConicProblem(
        a=a, b=b, c=c, psd_dims=[N_RED] * (n_tr * m_iters)
    )
    return problem, transitions


def unpack_iterates(x: np.ndarray, m_iters: int) -> tuple[QuadraticValue, ...]:
    """Decode the stacked solver variables into value functions."""
    out = []
    for i in range(m_iters):
        theta = x[i * N_THETA : (i + 1) * N_THETA]
        p = np.zeros((NX, NX))
        p[_LTRI_A, _LTRI_B] = theta[: len(_LTRI_A)]
        p[_LTRI_B, _LTRI_A] = theta[: len(_LTRI_A)]
        q = theta[len(_LTRI_A) : len(_LTRI_A) + NX]
        out.append(QuadraticValue(p=p, q=q.copy(), r=float(theta[-1])))
    return tuple(out)


def train_tail(
    params: DriveParams,
    config: ControlConfig,
    m_iters: int = 50,
    psd_margin: float = 1e-5,
    moments: tuple[np.ndarray, np.ndarray] | None = None,
    model: AugmentedModel | None = None,
    **solver_settings,
) -> TailArtifact:
    """Train a tail cost for the given drive and control configuration.

    ``m_iters`` trades approximation quality against training time (more
    Bellman compositions tighten the underestimator).  Extra keyword
    arguments go to the conic solver.
    """
    if model is None:
        model = assemble_augmented(params, config)
    problem, _ = assemble_training_problem(
        model, m_iters, psd_margin=psd_margin, moments=moments
    )
    x, info = solve(problem, **solver_settings)
    return TailArtifact(
        iterates=unpack_iterates(x, m_iters),
        fingerprint=fingerprint_values(params, config),
        objective=-float(problem.c @ x),
        solver_status=str(info.get("status", "unknown")),
    )


# -- verification ----------------------------------------------------------


def bellman_block_eigs(
    model: AugmentedModel, artifact: TailArtifact, transitions: Transitions | None = None
) -> np.ndarray:
    """Minimum eigenvalue of every reduced Bellman block, shape (M, n_tr).

    Nonnegative entries (up to tolerance) certify that each trained
    iterate is a pointwise underestimator of the Bellman update of its
    successor for every reachable transition.
    """
    if transitions is None:
        transitions = enumerate_transitions()
    gamma = model.config.gamma
    its = artifact.iterates
    m_iters = len(its)
    out = np.empty((m_iters, len(transitions)))
    for i in range(1, m_iters + 1):
        v_prev, v_cur = its[i - 1], its[i % m_iters]
        for m in range(len(transitions)):
            red = reduce_free(
                bellman_form(
                    model,
                    gamma,
                    v_cur,
                    v_prev,
                    transitions.u_sw[m],
                    transitions.u_prev[m],
                ),
                transitions.u_prev[m],
            )
            out[i - 1, m] = np.linalg.eigvalsh(red)[0]
    return out


def sampled_bellman_slack(
    model: AugmentedModel,
    artifact: TailArtifact,
    n_states: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bellman-inequality slack at random states, one random chain link each.

    For each sampled state ``z`` and link ``i``, returns

        min over feasible u of [ l(z) + gamma*V_i(Az+Bu) ]  -  V_{i-1}(z),

    which the training constraints force to be nonnegative (up to solver
    tolerance).  States are drawn around the rated orbit with wide spread;
    previous switch positions uniform over all 27 combinations.
    """
    gamma = model.config.gamma
    its = artifact.iterates
    m_iters = len(its)
    a, b, c = model.a, model.b, model.c

    z = np.zeros((n_states, NX))
    z[:, :4] = rng.normal(0.0, 0.7, size=(n_states, 4))
    phase = rng.uniform(0.0, 2.0 * np.pi, n_states)
    amp = rng.uniform(0.0, 1.2, n_states)
    z[:, 4] = amp * np.sin(phase)
    z[:, 5] = -amp * np.cos(phase)
    z[:, 6:8] = rng.normal(1.0, 0.3, size=(n_states, 2))
    z[:, CONST] = 1.0
    up_idx = rng.integers(0, len(ALL_SWITCH), n_states)
    z[:, CONST + 1 :] = ALL_SWITCH[up_idx]
    link = rng.integers(1, m_iters + 1, n_states)

    stage = np.einsum("ni,ni->n", z @ c.T, z @ c.T)
    az = z @ a.T
    slack = np.empty(n_states)
    for i in np.unique(link):
        v_prev, v_cur = its[i - 1], its[i % m_iters]
        for k in np.unique(up_idx[link == i]):
            sel = np.flatnonzero((link == i) & (up_idx == k))
            u_sw = feasible_inputs(ALL_SWITCH[k])
            p = np.abs(u_sw - ALL_SWITCH[k])
            bu = np.hstack([u_sw, p]).astype(float) @ b.T  # (nf, 12)
            x_next = az[sel][:, None, :] + bu[None, :, :]
            v_next = v_cur(x_next.reshape(-1, NX)).reshape(len(sel), -1)
            slack[sel] = stage[sel] + gamma * v_next.min(axis=1) - v_prev(z[sel])
    return slack
