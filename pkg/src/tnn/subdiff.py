"""Subdifferential of the tensor nuclear norm: membership checks, dual
witnesses, inclusion families, stretch-constant probing, a closed-form
example gallery, and the low-dimensional sphere programs behind the
stretch bounds.

The subdifferential of any norm at ``T`` is
``{G : <G, T> = ||T||, ||G||_dual <= 1}``; for the nuclear norm the dual
norm is the spectral norm.  Every subgradient splits as ``Z + X`` where
``Z`` lives in the span subspace ``T(T)`` (the tensors whose mode-k spans
lie inside those of ``T``) and ``X`` in its orthogonal complement, the
direct sum of the remaining basic subspaces.  The admissible stretch
``||X||_sigma`` depends on which basic subspaces ``X`` occupies; the
``tau`` probes below collect numerical evidence for those stretch
constants.  Both norms involved are NP-hard, so every verdict here is
three-way (pass / fail / inconclusive) and is backed by certified bounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import LookupError_, ParameterError, PreconditionError
from .norms import (
    nuclear_sandwich,
    spectral_certified_upper,
    spectral_hopm,
)
from .subspace import (
    Selector,
    basic,
    direct_sum,
    family_from_tensor,
    project,
    upper_u,
)
from .tensor_core import (
    asarray,
    holder_norm,
    inner,
    mode_matricize,
    outer_atom,
)

__all__ = [
    "SubgradientReport",
    "TauEstimate",
    "SphereProgram",
    "SPHERE_PROGRAMS",
    "GALLERY_NAMES",
    "is_subgradient",
    "find_z_witness",
    "z_membership",
    "build_inclusion_member",
    "probe_tau",
    "solve_sphere_program",
    "sphere_program",
    "gallery",
]


# ---------------------------------------------------------------------------
# Subgradient membership.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubgradientReport:
    """Evidence for or against ``G`` being a subgradient at ``T``."""

    verdict: str                 # "pass" | "fail" | "inconclusive"
    pairing: float               # <G, T>
    nuclear_interval: tuple      # certified sandwich for ||T||_*
    spectral_interval: tuple     # bounds for ||G||_sigma
    tol: float
    notes: tuple = ()

    @property
    def ok(self):
        return self.verdict == "pass"


def _spectral_decision(G, tol, max_evals=600_000):
    """Bounds for ||G||_sigma sharp enough to compare against 1 + tol."""
    lo_h = spectral_hopm(G).value
    try:
        lo, up = spectral_certified_upper(
            G, tol=tol / 2, threshold=1.0 + tol / 2, max_evals=max_evals
        )
        return max(lo, lo_h), up, True
    except ParameterError:
        return lo_h, np.inf, False


def is_subgradient(G, T, tol=1e-3, net=None, sandwich=None):
    """Three-way check of ``G`` being a subgradient of the nuclear norm at
    ``T``: requires ``<G, T> = ||T||_*`` and ``||G||_sigma <= 1`` within
    certified bounds."""
    G, T = asarray(G), asarray(T)
    if G.shape != T.shape:
        raise ParameterError("shape mismatch between candidate and base point")
    if holder_norm(T, 2) == 0.0:
        raise ParameterError("base point must be nonzero")
    if sandwich is None:
        sandwich = nuclear_sandwich(T, net=net)
    pairing = inner(G, T)
    sig_lo, sig_up, certified = _spectral_decision(G, tol)
    notes = [] if certified else ["spectral_upper_uncertified"]

    pairing_ok = pairing >= sandwich.lower - tol
    pairing_bad = pairing < sandwich.lower - sandwich.gap - tol
    sigma_ok = sig_up <= 1.0 + tol
    sigma_bad = sig_lo > 1.0 + tol

    if pairing_bad or sigma_bad:
        verdict = "fail"
    elif pairing_ok and sigma_ok:
        verdict = "pass"
    else:
        verdict = "inconclusive"
    return SubgradientReport(
        verdict, pairing, (sandwich.lower, sandwich.upper),
        (sig_lo, sig_up), tol, tuple(notes),
    )


def _matricization_sigma_upper(X):
    """Certified spectral upper bound valid at any size: the smallest
    flattening operator norm across modes."""
    A = asarray(X)
    return min(
        float(np.linalg.norm(mode_matricize(A, k), 2)) for k in range(A.ndim)
    )


def find_z_witness(T, sandwich=None, return_info=False):
    """Dual certificate in the span subspace of ``T``: a tensor ``Z`` with
    ``sp_k(Z) <= sp_k(T)``, certified ``||Z||_sigma <= 1``, and
    ``<Z, T>`` close to ``||T||_*``."""
    A = asarray(T)
    if holder_norm(A, 2) == 0.0:
        raise ParameterError("base point must be nonzero")
    if sandwich is None:
        sandwich = nuclear_sandwich(A)
    family = family_from_tensor(A)
    Zp = project(basic(()), family, sandwich.dual_witness)
    flags = []
    try:
        # A loose-but-valid upper bound is fine here: dividing by it keeps
        # the witness certifiably inside the unit spectral ball, at worst
        # giving up a little pairing quality.
        _, up = spectral_certified_upper(Zp, tol=1e-4, max_evals=60_000)
        up = min(up, _matricization_sigma_upper(Zp))
    except ParameterError:
        up = _matricization_sigma_upper(Zp)
    Z = Zp / up if up > 0 else Zp
    pairing = inner(Z, A)
    if pairing < sandwich.lower * (1.0 - 1e-6):
        sig = spectral_hopm(A).value
        try:
            _, sig_up = spectral_certified_upper(A, tol=1e-6,
                                                 max_evals=60_000)
            sig_up = min(sig_up, _matricization_sigma_upper(A))
        except ParameterError:
            sig_up = _matricization_sigma_upper(A)
        Z = A / sig_up
        flags.append("fallback_scaled_base")
    if return_info:
        return Z, tuple(flags)
    return Z


def z_membership(Z, T, tol=1e-3, sandwich=None):
    """Check that ``Z`` is an extreme dual certificate for ``T``: it lies in
    the span subspace, pairs to the nuclear norm, and has unit spectral norm
    (all within ``tol`` and certified bounds).  Returns a report dict with a
    three-way verdict."""
    Z, T = asarray(Z), asarray(T)
    if Z.shape != T.shape:
        raise ParameterError("shape mismatch")
    family = family_from_tensor(T)
    resid = holder_norm(Z - project(basic(()), family, Z), 2)
    scale = max(1.0, holder_norm(Z, 2))
    subspace_ok = resid <= tol * scale

    if sandwich is None:
        sandwich = nuclear_sandwich(T)
    pairing = inner(Z, T)
    pairing_ok = sandwich.lower - tol <= pairing <= sandwich.upper + tol
    pairing_bad = (pairing < sandwich.lower - sandwich.gap - tol
                   or pairing > sandwich.upper + sandwich.gap + tol)

    sig_lo, sig_up, certified = _spectral_decision(Z, tol)
    sigma_ok = sig_up <= 1.0 + tol and sig_lo >= 1.0 - tol
    sigma_bad = sig_lo > 1.0 + tol or sig_up < 1.0 - tol

    if not subspace_ok or pairing_bad or sigma_bad:
        verdict = "fail"
    elif pairing_ok and sigma_ok:
        verdict = "pass"
    else:
        verdict = "inconclusive"
    return {
        "verdict": verdict,
        "subspace_residual": resid,
        "pairing": pairing,
        "nuclear_interval": (sandwich.lower, sandwich.upper),
        "spectral_interval": (sig_lo, sig_up),
        "certified": certified,
        "tol": tol,
    }


# ---------------------------------------------------------------------------
# Inclusion families.
# ---------------------------------------------------------------------------

def _family_radius(kind, d, index_set):
    if kind == "D1":
        if d != 3:
            raise ParameterError("the half-radius family is specific to d=3")
        return 0.5
    if kind == "D2":
        return 2.0 / (d * (d - 1))
    if kind == "DI":
        if index_set is None or len(index_set) < 2:
            raise ParameterError("DI needs an index set with at least 2 modes")
        return 1.0
    raise ParameterError(f"unknown family kind {kind!r}")


def _order_ge2_selector(d):
    sets = [frozenset(c) for r in range(2, d + 1)
            for c in itertools.combinations(range(d), r)]
    return direct_sum(sets)


def build_inclusion_member(T, family_kind, Z, X, index_set=None, tol=1e-3):
    """Assemble ``G = Z + X`` for one of the subdifferential inclusion
    families and verify it.

    Families: ``D1`` (d=3, X in the direct sum of the order->=2 basic
    subspaces, ``||X||_sigma <= 1/2``), ``D2`` (same subspace, radius
    ``2/(d(d-1))``), ``DI`` (X in ``U^I`` for ``|I| >= 2``, a full spectral
    ball), and ``Dfull`` (a convex combination of ``DI`` members: pass ``X``
    as a list of ``(index_set, weight, tensor)`` triples).  Radius or
    subspace violations raise a precondition error naming the rule.
    """
    A = asarray(T)
    d = A.ndim
    family = family_from_tensor(A)

    def check_piece(Xp, selector, radius, rule):
        Xp = asarray(Xp)
        resid = holder_norm(Xp - project(selector, family, Xp), 2)
        if resid > 1e-10 * max(1.0, holder_norm(Xp, 2)):
            raise PreconditionError(
                f"{rule}: direction leaves its subspace (residual {resid:.3e})"
            )
        lo, up, _ = _spectral_decision(Xp, tol)
        if lo > radius + tol:
            raise PreconditionError(
                f"{rule}: spectral norm at least {lo:.6f} exceeds radius {radius}"
            )
        return Xp

    if family_kind == "Dfull":
        pieces = list(X)
        total = sum(w for _, w, _ in pieces)
        if abs(total - 1.0) > 1e-10 or any(w < -1e-12 for _, w, _ in pieces):
            raise PreconditionError(
                "Dfull: weights must be a convex combination"
            )
        Xsum = np.zeros(A.shape)
        for I, w, Xp in pieces:
            I = frozenset(int(i) for i in I)
            if len(I) < 2:
                raise PreconditionError("Dfull: each piece needs |I| >= 2")
            Xsum = Xsum + w * check_piece(
                Xp, upper_u(I), 1.0, f"Dfull piece I={sorted(I)}"
            )
        Xd = Xsum
    elif family_kind == "DI":
        I = frozenset(int(i) for i in index_set)
        radius = _family_radius("DI", d, I)
        Xd = check_piece(X, upper_u(I), radius, f"DI I={sorted(I)}")
    else:
        radius = _family_radius(family_kind, d, index_set)
        Xd = check_piece(X, _order_ge2_selector(d), radius, family_kind)

    G = asarray(Z) + Xd
    report = is_subgradient(G, A, tol=tol)
    return G, report


# ---------------------------------------------------------------------------
# Stretch-constant probing.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauEstimate:
    """Empirical evidence for the admissible stretch over a subspace.

    ``feasible_max`` is the largest certified-feasible ``||X||_sigma``
    observed (a lower witness for the upper stretch constant);
    ``infeasible_min`` is the smallest ``||X||_sigma`` that already broke
    feasibility for some direction (an upper witness for the lower
    constant).  Each is backed by a stored ``(T, Z, X)`` triple."""

    selector: Selector
    shape: tuple
    feasible_max: float
    infeasible_min: float
    trials: int
    feasible_witness: tuple | None
    infeasible_witness: tuple | None
    notes: tuple = ()


def _feasible(Zs, slack=5e-4, max_evals=120_000):
    """Certified decision of ||Zs||_sigma <= 1 (within slack)."""
    lo, up = spectral_certified_upper(
        Zs, tol=slack / 2, threshold=1.0 + slack, max_evals=max_evals
    )
    if up <= 1.0 + slack:
        return True
    if lo > 1.0 + slack:
        return False
    return None


def _gallery_directions(selector, shape):
    """Known extreme directions, included alongside the random trials."""
    out = []
    d = len(shape)
    if selector.kind == "sum" and all(n == 2 for n in shape):
        full = {frozenset(c) for r in range(2, d + 1)
                for c in itertools.combinations(range(d), r)}
        if set(selector.sets) == full:
            if d == 3:
                g = gallery("yuan3", t=1.0)
                for sgn in (-1.0, 1.0):
                    out.append((g["T"], g["Z"], sgn * g["X"]))
            if d == 4:
                g = gallery("yuan4", t=1.0)
                for sgn in (-1.0, 1.0):
                    out.append((g["T"], g["Z"], sgn * g["X"]))
    if selector.kind == "upperU" and len(selector.sets) == 1:
        I = selector.sets[0]
        vecs = []
        for k, n in enumerate(shape):
            v = np.zeros(n)
            v[1 if (k in I and n > 1) else 0] = 1.0
            vecs.append(v)
        T = outer_atom([_e(n, 0) for n in shape])
        out.append((T, T, outer_atom(vecs)))
    return out


def _e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def probe_tau(selector, shape, trials=8, seed=0, bisect_tol=1e-3, s_max=2.0,
              slack=5e-4):
    """Per-direction bisection for the largest stretch ``s`` keeping
    ``||Z + s U||_sigma <= 1``, over random instances plus the known extreme
    gallery directions.  ``U`` is normalized to unit spectral norm, so the
    recorded radii are spectral norms of the additive part."""
    shape = tuple(int(n) for n in shape)
    if trials < 1:
        raise ParameterError("need at least one trial")
    if any(len(I) == 0 for I in selector.sets):
        raise ParameterError("selector must be orthogonal to the span part")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), *shape]))
    candidates = list(_gallery_directions(selector, shape))
    notes = []
    while len(candidates) < trials + len(_gallery_directions(selector, shape)):
        T = outer_atom([_unitv(rng.standard_normal(n)) for n in shape])
        family = family_from_tensor(T)
        U = project(selector, family, rng.standard_normal(shape))
        if holder_norm(U, 2) < 1e-9:
            continue
        Z = find_z_witness(T)
        candidates.append((T, Z, U))

    feasible_max = 0.0
    infeasible_min = np.inf
    feas_wit = None
    infeas_wit = None
    for T, Z, U in candidates:
        sig_u = spectral_hopm(U).value
        if sig_u <= 0:
            continue
        U = U / sig_u
        lo, hi = 0.0, float(s_max)
        top = _feasible(Z + hi * U, slack)
        if top is None:
            notes.append("ambiguous_at_smax")
            continue
        if top:
            feasible = hi
            first_bad = None
        else:
            # An undecidable midpoint (true value within the certification
            # slack of the boundary) is treated as not provably feasible:
            # the bisection keeps shrinking toward the last certain point.
            certain_bad = hi
            while hi - lo > bisect_tol:
                mid = 0.5 * (lo + hi)
                dec = _feasible(Z + mid * U, slack)
                if dec is None:
                    notes.append("ambiguous_midpoint")
                    hi = mid
                elif dec:
                    lo = mid
                else:
                    hi = mid
                    certain_bad = mid
            feasible = lo
            first_bad = certain_bad
        if feasible > feasible_max:
            feasible_max = feasible
            feas_wit = (T, Z, feasible * U)
        if first_bad is not None and first_bad < infeasible_min:
            infeasible_min = first_bad
            infeas_wit = (T, Z, first_bad * U)
    return TauEstimate(selector, shape, float(feasible_max),
                       float(infeasible_min), len(candidates), feas_wit,
                       infeas_wit, tuple(notes))


def _unitv(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


# ---------------------------------------------------------------------------
# Sphere programs.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereProgram:
    """Maximize a sum of monomials over quarter-circle variables subject to
    ``objective <= 1 + coupling``.

    Each variable is a pair ``(a_1, a_2)`` with ``a_1^2 + a_2^2 = 1`` and
    ``a >= 0``.  Monomials are tuples of ``(variable, component)`` index
    pairs; components are 0-based."""

    n_vars: int
    objective: tuple   # tuple of monomials; each monomial: ((var, comp), ...)
    coupling: tuple    # a single monomial

    def __post_init__(self):
        for mono in self.objective + (self.coupling,):
            for var, comp in mono:
                if not (0 <= var < self.n_vars and comp in (0, 1)):
                    raise ParameterError(
                        f"monomial index ({var}, {comp}) out of range"
                    )


SPHERE_PROGRAMS = {
    # max x1*y2*z2 + x2  s.t.  obj <= 1 + x1*y1*z1   -> (1+sqrt(2))/2
    "opt-b1": SphereProgram(
        3,
        (((0, 0), (1, 1), (2, 1)), ((0, 1),)),
        ((0, 0), (1, 0), (2, 0)),
    ),
    # max x1*y1*z2 + x1*y2 + x2  s.t.  obj <= 1 + x1*y1*z1   -> 3/2
    "opt-b2": SphereProgram(
        3,
        (((0, 0), (1, 0), (2, 1)), ((0, 0), (1, 1)), ((0, 1),)),
        ((0, 0), (1, 0), (2, 0)),
    ),
    # max x1*y1*z2*w2 + x1*y2 + x2  s.t.  obj <= 1 + x1*y1*z1*w1
    #   -> (1+sqrt(3))/2
    "opt-d4-a": SphereProgram(
        4,
        (((0, 0), (1, 0), (2, 1), (3, 1)), ((0, 0), (1, 1)), ((0, 1),)),
        ((0, 0), (1, 0), (2, 0), (3, 0)),
    ),
    # max x1*y1*z1*w2 + x1*y1*z2 + x1*y2 + x2  s.t.  obj <= 1 + x1*y1*z1*w1
    #   -> 8/5
    "opt-d4-b": SphereProgram(
        4,
        (((0, 0), (1, 0), (2, 0), (3, 1)), ((0, 0), (1, 0), (2, 1)),
         ((0, 0), (1, 1)), ((0, 1),)),
        ((0, 0), (1, 0), (2, 0), (3, 0)),
    ),
}


def sphere_program(name):
    try:
        return SPHERE_PROGRAMS[name]
    except KeyError:
        raise LookupError_(f"unknown sphere program {name!r}") from None


def _program_values(P, angles):
    """Objective and coupling values for a batch of angle vectors."""
    comps = np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # (B, v, 2)

    def mono(m):
        out = np.ones(angles.shape[0])
        for var, comp in m:
            out = out * comps[:, var, comp]
        return out

    obj = np.zeros(angles.shape[0])
    for m in P.objective:
        obj += mono(m)
    return obj, mono(P.coupling)


def solve_sphere_program(P, grid_density=2000, polish_iters=200):
    """Global maximum of the program via a dense angular product grid plus
    constrained polish from the best feasible grid points.

    ``grid_density`` is the per-angle target; the joint grid is capped at
    about two million points, so 3- and 4-variable programs use the largest
    per-angle count whose product stays under the cap."""
    v = P.n_vars
    per = min(int(grid_density), max(8, int(round(2_000_000 ** (1.0 / v)))))
    axes = [np.linspace(0.0, np.pi / 2.0, per)] * v
    grids = np.meshgrid(*axes, indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=1)
    obj, coup = _program_values(P, angles)
    feas = obj <= 1.0 + coup + 1e-12
    obj_feas = np.where(feas, obj, -np.inf)
    order = np.argsort(-obj_feas)[:8]
    best = float(obj_feas[order[0]])

    def neg_obj(x):
        o, _ = _program_values(P, x[None])
        return -float(o[0])

    def constraint(x):
        o, c = _program_values(P, x[None])
        return 1.0 + float(c[0]) - float(o[0])

    for idx in order:
        if not np.isfinite(obj_feas[idx]):
            continue
        res = minimize(
            neg_obj, angles[idx], method="SLSQP",
            constraints=[{"type": "ineq", "fun": constraint}],
            bounds=[(0.0, np.pi / 2.0)] * v,
            options={"maxiter": int(polish_iters), "ftol": 1e-14},
        )
        if res.success and constraint(res.x) >= -1e-9:
            best = max(best, -float(res.fun))
    return best


# ---------------------------------------------------------------------------
# Gallery of closed-form examples.
# ---------------------------------------------------------------------------

GALLERY_NAMES = ("notsingle", "oneperp", "yuan3", "yuan33", "yuan4",
                 "limitation")


def _diag_tensor(n_diag, shape):
    T = np.zeros(shape)
    for i in range(n_diag):
        T[(i,) * len(shape)] = 1.0
    return T


def gallery(name, t=None):
    """Closed-form example tensors with their oracle values.

    Returns a dict with the base point ``T``, the certificate ``Z``, the
    directions ``X``/``Y`` (when the example has them, evaluated at ``t``),
    and ``oracles`` mapping value names to exact closed forms.
    """
    tval = 0.0 if t is None else float(t)
    s2 = np.sqrt(2.0)
    s3 = np.sqrt(3.0)
    if name == "notsingle":
        T = _diag_tensor(3, (3, 3, 3))
        X = outer_atom([_e(3, 0), _e(3, 1), _e(3, 2)])
        Z = T + tval * X
        return {
            "T": T, "Z": Z, "X": X, "t": tval,
            "oracles": {
                "sigma_Z": max(1.0, abs(tval)),
                "nuclear_T": 3.0,
                "member_range": (-1.0, 1.0),
            },
        }
    if name == "oneperp":
        T = _diag_tensor(2, (2, 2, 3))
        X = tval * outer_atom([_e(2, 0), _e(2, 1), _e(3, 2)])
        Y = tval * outer_atom([_e(2, 0), _e(2, 0), _e(3, 2)])
        return {
            "T": T, "Z": T, "X": X, "Y": Y, "t": tval,
            "oracles": {
                "sigma_Z_plus_X": 1.0 if abs(tval) <= 1.0 else None,
                "sigma_Z_plus_Y": float(np.sqrt(1.0 + tval * tval)),
                "nuclear_T": 2.0,
                "member_range": (-1.0, 1.0),
            },
        }
    if name in ("yuan3", "yuan33"):
        T = outer_atom([_e(2, 0)] * 3)
        X = tval * (
            outer_atom([_e(2, 0), _e(2, 1), _e(2, 1)])
            + outer_atom([_e(2, 1), _e(2, 0), _e(2, 1)])
            + outer_atom([_e(2, 1), _e(2, 1), _e(2, 0)])
        )
        if -1.0 <= tval <= 0.5:
            szx = 1.0
        else:
            szx = float(2.0 * np.sqrt(tval ** 3 / (3.0 * tval - 1.0)))
        out = {
            "T": T, "Z": T, "X": X, "t": tval,
            "oracles": {
                "sigma_X": 2.0 * abs(tval) / s3,
                "sigma_Z_plus_X": szx,
                "nuclear_T": 1.0,
                "member_range": (-1.0, 0.5),
            },
        }
        if name == "yuan33":
            out["Y"] = -tval * T
            out["oracles"]["sigma_X_plus_Y"] = abs(tval)
        return out
    if name == "yuan4":
        T = outer_atom([_e(2, 0)] * 4)
        X = np.zeros((2, 2, 2, 2))
        for pattern in set(itertools.permutations((0, 0, 1, 1))):
            X += outer_atom([_e(2, i) for i in pattern])
        X = tval * X
        return {
            "T": T, "Z": T, "X": X, "t": tval,
            "oracles": {
                "sigma_X": 3.0 * abs(tval) / 2.0,
                "nuclear_T": 1.0,
                "member_range": (-(1.0 + s2) / 3.0, 1.0 / 3.0),
            },
        }
    if name == "limitation":
        T = outer_atom([_e(2, 0)] * 3)
        S = (
            outer_atom([_e(2, 0), _e(2, 1), _e(2, 1)])
            + outer_atom([_e(2, 1), _e(2, 0), _e(2, 1)])
            + outer_atom([_e(2, 1), _e(2, 1), _e(2, 0)])
            + outer_atom([_e(2, 1)] * 3)
        )
        return {
            "T": T, "S": S,
            "oracles": {
                "nuclear_T": 1.0,
                "nuclear_S_approx": 3.162,
                "nuclear_sum_approx": 3.078,
            },
        }
    raise LookupError_(f"unknown gallery entry {name!r}")
