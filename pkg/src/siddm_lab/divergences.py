"""Exact divergences on finite discrete distributions and a numeric verifier
for the joint-distribution bound

    JSD(Q_XY, P_XY) <= 2 c1 sqrt(2 JSD(Q_X, P_X)) + 2 c2 sqrt(2 KL(P_{Y|X} || Q_{Y|X}))

together with the total-variation chain it rests on (triangle split,
Pinsker, and the TV/JSD sandwich).  Everything uses natural logarithms.

The abstract dominating measure is instantiated as the counting measure,
which makes the constants computable: c1 = nx/2, c2 = 1/2, and the
conditional KL is the unweighted sum of row KLs.  Reports always record
the constants used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LN2 = float(np.log(2.0))
_ATOL = 1e-12


class SupportError(ValueError):
    """KL is infinite: P has mass where Q has none."""


def _as_dist(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if (p < -_ATOL).any():
        raise ValueError("negative probability entry")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    return np.maximum(p, 0.0)


def tv_distance(p, q) -> float:
    """Total variation distance, in [0, 1]."""
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def kl(p, q) -> float:
    """KL(p || q) in nats; raises SupportError where it would be infinite."""
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch {p.shape} vs {q.shape}")
    bad = (q == 0.0) & (p > 0.0)
    if bad.any():
        raise SupportError(f"KL infinite: q has no mass at index {int(np.argmax(bad))}")
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats, in [0, ln 2]."""
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    out = 0.0
    for dist in (p, q):
        mask = dist > 0.0
        out += 0.5 * float(np.sum(dist[mask] * np.log(dist[mask] / m[mask])))
    return out


@dataclass(frozen=True)
class DiscreteJoint:
    """Exact probability table over a finite product space X x Y."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError(f"joint table must be 2-D, got shape {p.shape}")
        if (p < 0.0).any():
            raise ValueError("joint table has a negative entry")
        if abs(p.sum() - 1.0) > _ATOL:
            raise ValueError(f"joint table sums to {p.sum()}, not 1 (tol {_ATOL})")
        object.__setattr__(self, "p", p)

    @property
    def nx(self) -> int:
        return self.p.shape[0]

    @property
    def ny(self) -> int:
        return self.p.shape[1]


def marginal_x(joint: DiscreteJoint) -> np.ndarray:
    return joint.p.sum(axis=1)


def conditional_y_given_x(joint: DiscreteJoint) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized conditionals; rows with zero marginal mass get the
    uniform conditional and are flagged in the returned boolean mask."""
    px = marginal_x(joint)
    zero = px == 0.0
    safe = np.where(zero, 1.0, px)
    cond = joint.p / safe[:, None]
    cond[zero] = 1.0 / joint.ny
    return cond, zero


def random_joint(nx: int, ny: int, rng) -> DiscreteJoint:
    """Dirichlet(1)-distributed table via normalized exponentials."""
    u = np.maximum(rng.uniform((nx * ny,)), 2.0**-53)
    e = -np.log(u)
    return DiscreteJoint((e / e.sum()).reshape(nx, ny))


@dataclass
class TheoremReport:
    """Verifier output for one pair of joint tables.

    ``holds`` is None when the conditional KL is infinite (support
    violation), in which case the bound is vacuous rather than checked.
    """

    lhs_jsd_joint: float
    rhs_total: float
    c1: float
    c2: float
    jsd_marginal: float
    kl_conditional: float
    tv_joint: float
    tv_split_marginal: float
    tv_split_conditional: float
    triangle_ok: bool
    marginal_factor_ok: bool
    conditional_factor_ok: bool
    pinsker_ok: bool
    sandwich_ok: bool
    holds: bool | None
    slack: float
    zero_mass_rows: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["notes"] = list(self.notes)
        return out


def verify_theorem1(Q: DiscreteJoint, P: DiscreteJoint) -> TheoremReport:
    """Check the composite bound and its supporting chain on one table pair.

    Q plays the data-side joint, P the model-side joint.  The chain, all on
    the counting measure:

    * triangle: tv(Q_XY, P_XY) <= tv(Q_XY, Q_{Y|X} P_X) + tv(Q_{Y|X} P_X, P_XY)
    * marginal factor: tv(Q_XY, Q_{Y|X} P_X) <= c1 tv(Q_X, P_X), c1 = nx/2
    * conditional factor: tv(Q_{Y|X} P_X, P_XY) <= c2 tv(Q_{Y|X}, P_{Y|X}), c2 = 1/2
    * per-pair Pinsker: tv <= sqrt(KL/2), and the sandwich tv^2/2 <= JSD <= 2 tv
    * composite: JSD(Q_XY, P_XY) <= 2 c1 sqrt(2 JSD(Q_X, P_X))
                                   + 2 c2 sqrt(2 KL(P_{Y|X} || Q_{Y|X}))
    """
    if Q.p.shape != P.p.shape:
        raise ValueError(f"support mismatch {Q.p.shape} vs {P.p.shape}")
    nx = Q.nx
    notes: list[str] = []

    q, p = Q.p, P.p
    qx, px = marginal_x(Q), marginal_x(P)
    q_cond, q_zero = conditional_y_given_x(Q)
    p_cond, p_zero = conditional_y_given_x(P)
    zero_rows = int(q_zero.sum() + p_zero.sum())
    if zero_rows:
        notes.append("zero-mass rows replaced by uniform conditionals")

    lhs = jsd(q, p)
    jsd_marg = jsd(qx, px)
    c1 = nx / 2.0
    c2 = 0.5

    # Unweighted conditional KL (counting measure): sum over rows of row-KL.
    bad = (q_cond == 0.0) & (p_cond > 0.0)
    if bad.any():
        kl_cond = float("inf")
        notes.append("conditional KL infinite: model conditional leaves data support")
    else:
        mask = p_cond > 0.0
        kl_cond = float(np.sum(p_cond[mask] * np.log(p_cond[mask] / q_cond[mask])))

    tv_joint = tv_distance(q, p)
    mix = q_cond * px[:, None]  # Q_{Y|X} P_X
    tv_a = 0.5 * float(np.abs(q - mix).sum())
    tv_b = 0.5 * float(np.abs(mix - p).sum())
    tv_cond = 0.5 * float(np.abs(q_cond - p_cond).sum())

    triangle_ok = tv_joint <= tv_a + tv_b + _ATOL
    marginal_factor_ok = tv_a <= c1 * tv_distance(qx, px) + _ATOL
    conditional_factor_ok = tv_b <= c2 * tv_cond + _ATOL

    pinsker_ok = True
    for a, b in ((q, p), (p, q), (qx, px), (px, qx)):
        try:
            pinsker_ok &= tv_distance(a, b) <= np.sqrt(kl(a, b) / 2.0) + _ATOL
        except SupportError:
            pass  # infinite KL: inequality vacuous
    sandwich_ok = (0.5 * tv_joint**2 <= lhs + _ATOL) and (lhs <= 2.0 * tv_joint + _ATOL)

    if np.isinf(kl_cond):
        rhs = float("inf")
        holds = None
        slack = float("inf")
    else:
        rhs = 2.0 * c1 * np.sqrt(2.0 * jsd_marg) + 2.0 * c2 * np.sqrt(2.0 * kl_cond)
        slack = rhs - lhs
        holds = bool(slack >= -_ATOL)

    return TheoremReport(
        lhs_jsd_joint=lhs, rhs_total=float(rhs), c1=c1, c2=c2,
        jsd_marginal=jsd_marg, kl_conditional=kl_cond, tv_joint=tv_joint,
        tv_split_marginal=tv_a, tv_split_conditional=tv_b,
        triangle_ok=bool(triangle_ok), marginal_factor_ok=bool(marginal_factor_ok),
        conditional_factor_ok=bool(conditional_factor_ok),
        pinsker_ok=bool(pinsker_ok), sandwich_ok=bool(sandwich_ok),
        holds=holds, slack=float(slack), zero_mass_rows=zero_rows, notes=notes,
    )


def run_trials(n_trials: int, max_support: int, seed: int, rng_cls) -> tuple[list[TheoremReport], dict]:
    """Random-pair verification sweep; support sizes cycle over
    [2, max_support]^2 combinations."""
    rng = rng_cls(seed)
    reports = []
    violations = 0
    min_slack = float("inf")
    for _ in range(n_trials):
        nx = rng.integers(2, max_support + 1)
        ny = rng.integers(2, max_support + 1)
        Q = random_joint(nx, ny, rng)
        P = random_joint(nx, ny, rng)
        rep = verify_theorem1(Q, P)
        reports.append(rep)
        if rep.holds is False or not (rep.triangle_ok and rep.pinsker_ok and rep.sandwich_ok):
            violations += 1
        if np.isfinite(rep.slack):
            min_slack = min(min_slack, rep.slack)
    summary = {
        "trials": n_trials,
        "violations": violations,
        "min_slack": min_slack if n_trials else None,
    }
    return reports, summary
