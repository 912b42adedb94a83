"""Discrete-time system model x+ = f(x,u), its extension map (f,g), the
inverse map psi, and the forward/backward shift operators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    EvalError, Expr, Par, Var, evaluate, substitute, to_text, vars_of,
    params_of,
)
from .numeric import ProbeSet, eval_matrix, numeric_rank
from .solve import SolveError, solve_equations

__all__ = [
    "SystemModel", "ModelError", "ValidationReport", "ExtensionChoice",
    "validate", "choose_extension", "invert_extension",
    "forward_shift", "backward_shift",
]

PI = Par("pi")


class ModelError(Exception):
    pass


@dataclass
class SystemModel:
    """Transition map plus (optionally) the extension map and its inverse.

    States and inputs are explicit variable lists so that extended systems
    (whose states include chain variables like zetabar1[-2] or ubar1[0]) are
    ordinary models; shift operators and all analyses work on them unchanged.
    psi_x/psi_u are stored in applied form: backward-shifted states/inputs as
    expressions over the current state and the g-value history leaves
    <gvalue_family>j[-1]. Treat instances as immutable after construction.
    """

    n: int
    m: int
    f: tuple
    state_vars: tuple
    input_vars: tuple
    g: tuple | None = None
    psi_x: tuple | None = None
    psi_u: tuple | None = None
    gvalue_family: str = "zeta"
    params: dict = field(default_factory=dict)
    point: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if len(self.f) != self.n or len(self.state_vars) != self.n:
            raise ModelError("state dimension mismatch")
        if len(self.input_vars) != self.m:
            raise ModelError("input dimension mismatch")
        if self.g is not None and len(self.g) != self.m:
            raise ModelError(f"extension map must have {self.m} components")
        self.params = dict(self.params)
        self.params.setdefault("pi", math.pi)
        self._input_base = {
            (v.family, v.component): (v.shift, j)
            for j, v in enumerate(self.input_vars)
        }
        self._state_index = {v: i for i, v in enumerate(self.state_vars)}
        self._shift_cache = {}

    # -- points ------------------------------------------------------------

    def param_bindings(self) -> dict:
        return {Par(k): float(v) for k, v in self.params.items()}

    def analysis_point(self) -> dict:
        pt = self.param_bindings()
        pt.update(self.point)
        return pt

    def seed_value(self, v: Var) -> float:
        """Deterministic jet-space value for a leaf outside the base point:
        input forward-shifts inherit the input value, g-value histories the
        value of g at the point."""
        pt = self.analysis_point()
        if v in pt:
            return pt[v]
        key = (v.family, v.component)
        if key in self._input_base and v.shift >= self._input_base[key][0]:
            base, j = self._input_base[key]
            return pt[self.input_vars[j]]
        if v.family == self.gvalue_family and v.shift < 0:
            if self.g is None:
                raise ModelError("no extension map g declared")
            return evaluate(self.g[v.component - 1], pt)
        raise ModelError(f"cannot seed a value for leaf {to_text(v)}")

    def jet_center(self, leaves) -> dict:
        pt = self.analysis_point()
        for v in leaves:
            if isinstance(v, Var) and v not in pt:
                pt[v] = self.seed_value(v)
        return pt

    def probes(self, leaves=(), radius: float = 1e-2, count: int = 10,
               seed: int = 2023) -> ProbeSet:
        extra = set(leaves)
        for e in list(self.f) + list(self.g or ()):
            extra |= vars_of(e)
        return ProbeSet(center=self.jet_center(extra), radius=radius,
                        count=count, seed=seed)

    # -- shift operators ----------------------------------------------------

    def _delta_image(self, v: Var) -> Expr:
        if v in self._state_index:
            return self.f[self._state_index[v]]
        key = (v.family, v.component)
        if key in self._input_base and v.shift >= self._input_base[key][0]:
            return v.shifted(1)
        if v.family == self.gvalue_family and v.shift <= -1:
            if v.shift == -1:
                if self.g is None:
                    raise ModelError("forward shift needs the extension map g")
                return self.g[v.component - 1]
            return v.shifted(1)
        raise ModelError(f"leaf {to_text(v)} is not a coordinate of this model")

    def _delta_inv_image(self, v: Var) -> Expr:
        if v in self._state_index:
            if self.psi_x is None:
                raise ModelError("backward shift needs the inverse map psi")
            return self.psi_x[self._state_index[v]]
        key = (v.family, v.component)
        if key in self._input_base:
            base, j = self._input_base[key]
            if v.shift == base:
                if self.psi_u is None:
                    raise ModelError("backward shift needs the inverse map psi")
                return self.psi_u[j]
            if v.shift > base:
                return v.shifted(-1)
        if v.family == self.gvalue_family and v.shift <= -1:
            return v.shifted(-1)
        raise ModelError(f"leaf {to_text(v)} is not a coordinate of this model")

    def shift(self, e: Expr, k: int) -> Expr:
        """delta^k for k > 0, delta^-|k| for k < 0, identity for k = 0."""
        if k == 0:
            return e
        step = 1 if k > 0 else -1
        for _ in range(abs(k)):
            e = self._shift_once(e, step)
        return e

    def _shift_once(self, e: Expr, step: int) -> Expr:
        key = (e, step)
        hit = self._shift_cache.get(key)
        if hit is not None:
            return hit
        image = self._delta_image if step > 0 else self._delta_inv_image
        mapping = {v: image(v) for v in vars_of(e)}
        out = substitute(e, mapping)
        self._shift_cache[key] = out
        return out

    def with_psi(self, psi_x, psi_u) -> "SystemModel":
        return SystemModel(
            n=self.n, m=self.m, f=self.f, state_vars=self.state_vars,
            input_vars=self.input_vars, g=self.g, psi_x=tuple(psi_x),
            psi_u=tuple(psi_u), gvalue_family=self.gvalue_family,
            params=self.params, point=self.point, name=self.name)

    def with_g(self, g) -> "SystemModel":
        return SystemModel(
            n=self.n, m=self.m, f=self.f, state_vars=self.state_vars,
            input_vars=self.input_vars, g=None if g is None else tuple(g),
            psi_x=None, psi_u=None, gvalue_family=self.gvalue_family,
            params=self.params, point=self.point, name=self.name)


def forward_shift(e: Expr, sys: SystemModel, k: int = 1) -> Expr:
    if k < 0:
        raise ModelError("k must be positive; use backward_shift")
    return sys.shift(e, k)


def backward_shift(e: Expr, sys: SystemModel, k: int = 1) -> Expr:
    if k < 0:
        raise ModelError("k must be positive")
    return sys.shift(e, -k)


# ---------------------------------------------------------------------------
# Standing-assumption validation.

@dataclass
class ValidationReport:
    input_rank: int
    submersivity_rank: int
    extension_rank: int | None
    n: int
    m: int
    equilibrium_residual: float
    psi_residual: float | None
    is_fixed_point: bool
    messages: list

    @property
    def passed(self) -> bool:
        ok = self.input_rank == self.m and self.submersivity_rank == self.n
        if self.extension_rank is not None:
            ok = ok and self.extension_rank == self.n + self.m
        if self.psi_residual is not None:
            ok = ok and self.psi_residual <= 1e-9
        return ok

    def to_json(self):
        return {
            "ranks": {
                "d_u_f": [self.input_rank, self.m],
                "d_xu_f": [self.submersivity_rank, self.n],
                "d_xu_fg": ([self.extension_rank, self.n + self.m]
                            if self.extension_rank is not None else None),
            },
            "pass": self.passed,
            "equilibrium_residual": self.equilibrium_residual,
            "is_fixed_point": self.is_fixed_point,
            "psi_residual": self.psi_residual,
            "messages": self.messages,
        }


def _check_leaves(sys: SystemModel, exprs, where: str):
    allowed = set(sys.state_vars) | set(sys.input_vars)
    for e in exprs:
        for v in vars_of(e):
            if v not in allowed:
                raise ModelError(f"{where}: leaf {to_text(v)} is not a declared "
                                 "state or input")
        for p in params_of(e):
            if p.name not in sys.params:
                raise ModelError(f"{where}: undeclared parameter {p.name}")


def validate(sys: SystemModel, tol_rank: float = 1e-8) -> ValidationReport:
    """Check independent inputs, submersivity, the (f,g) diffeomorphism rank,
    the fixed-point property of the declared point, and psi consistency."""
    _check_leaves(sys, sys.f, "dynamics")
    if sys.g is not None:
        _check_leaves(sys, sys.g, "extension")
    messages = []
    pt = sys.analysis_point()
    for v in list(sys.state_vars) + list(sys.input_vars):
        if v not in pt:
            raise ModelError(f"analysis point does not bind {to_text(v)}")

    J_u = [[e for e in row] for row in _jac(sys.f, sys.input_vars)]
    input_rank = numeric_rank(eval_matrix(J_u, pt), tol_rank)
    cols_xu = list(sys.state_vars) + list(sys.input_vars)
    sub_rank = numeric_rank(eval_matrix(_jac(sys.f, cols_xu), pt), tol_rank)
    ext_rank = None
    if sys.g is not None:
        stacked = list(sys.f) + list(sys.g)
        ext_rank = numeric_rank(eval_matrix(_jac(stacked, cols_xu), pt), tol_rank)

    fx = [evaluate(fi, pt) for fi in sys.f]
    resid = max(abs(a - pt[v]) for a, v in zip(fx, sys.state_vars))
    fixed = resid <= 1e-10
    if not fixed:
        messages.append(
            f"declared point is not a fixed point (|f(x0,u0)-x0| = {resid:.3g}); "
            "it is used as the analysis chart center")

    psi_resid = None
    if sys.psi_x is not None:
        psi_resid = _psi_residual(sys)
    return ValidationReport(
        input_rank=input_rank, submersivity_rank=sub_rank,
        extension_rank=ext_rank, n=sys.n, m=sys.m,
        equilibrium_residual=resid, psi_residual=psi_resid,
        is_fixed_point=fixed, messages=messages)


def _jac(rows, cols):
    from .expr import differentiate
    return [[differentiate(r, v) for v in cols] for r in rows]


def _psi_residual(sys: SystemModel, count: int = 10, radius: float = 1e-2,
                  seed: int = 11) -> float:
    """Two-sided composition residual of psi against (f,g) at the analysis
    point and `count` perturbed points."""
    import random
    rng = random.Random(seed)
    worst = 0.0
    base = sys.analysis_point()
    for trial in range(count + 1):
        pt = dict(base)
        if trial:
            for v in list(sys.state_vars) + list(sys.input_vars):
                pt[v] += rng.uniform(-radius, radius)
        xplus = [evaluate(fi, pt) for fi in sys.f]
        zeta = [evaluate(gj, pt) for gj in sys.g]
        back = dict(sys.param_bindings())
        for v, val in zip(sys.state_vars, xplus):
            back[v] = val
        for j, val in enumerate(zeta):
            back[Var(sys.gvalue_family, j + 1, -1)] = val
        try:
            xs = [evaluate(e, back) for e in sys.psi_x]
            us = [evaluate(e, back) for e in sys.psi_u]
        except EvalError:
            if trial == 0:
                raise
            continue
        worst = max(worst, max(abs(a - pt[v]) for a, v in zip(xs, sys.state_vars)))
        worst = max(worst, max(abs(a - pt[v]) for a, v in zip(us, sys.input_vars)))
        # forward direction: (f,g) applied to psi reproduces the slot values
        fwd = dict(sys.param_bindings())
        for v, val in zip(sys.state_vars, xs):
            fwd[v] = val
        for v, val in zip(sys.input_vars, us):
            fwd[v] = val
        worst = max(worst, max(abs(evaluate(fi, fwd) - a)
                               for fi, a in zip(sys.f, xplus)))
        worst = max(worst, max(abs(evaluate(gj, fwd) - a)
                               for gj, a in zip(sys.g, zeta)))
    return worst


# ---------------------------------------------------------------------------
# Extension map selection and inversion.

@dataclass
class ExtensionChoice:
    source: str                  # "user_supplied" | "auto_selected"
    g: tuple
    selected_coordinates: tuple | None
    psi_x: tuple
    psi_u: tuple


def _solve_psi(sys: SystemModel, g, probes_count: int = 6, seed: int = 5):
    """Solve (f,g)(x,u) = (next, gslot) for (x,u); return applied-form psi."""
    slots_x = [Var("nxt", i + 1, 0) for i in range(sys.n)]
    slots_z = [Var("gsl", j + 1, 0) for j in range(sys.m)]
    from .expr import sub as esub
    eqs = [esub(fi, s) for fi, s in zip(sys.f, slots_x)]
    eqs += [esub(gj, s) for gj, s in zip(g, slots_z)]
    unknowns = list(sys.state_vars) + list(sys.input_vars)

    import random
    rng = random.Random(seed)
    base = sys.analysis_point()
    probe_points = []
    for trial in range(probes_count):
        pt = dict(base)
        if trial:
            for v in unknowns:
                pt[v] += rng.uniform(-1e-2, 1e-2)
        for s, fi in zip(slots_x, sys.f):
            pt[s] = evaluate(fi, pt)
        for s, gj in zip(slots_z, g):
            pt[s] = evaluate(gj, pt)
        probe_points.append(pt)

    sol = solve_equations(eqs, unknowns, probe_points)
    applied = {s: v for s, v in zip(slots_x, sys.state_vars)}
    applied.update({s: Var(sys.gvalue_family, j + 1, -1)
                    for j, s in enumerate(slots_z)})
    psi_x = tuple(substitute(sol[v], applied) for v in sys.state_vars)
    psi_u = tuple(substitute(sol[v], applied) for v in sys.input_vars)
    return psi_x, psi_u


def invert_extension(sys: SystemModel) -> SystemModel:
    """Solve for psi given the declared g; verify the composition numerically.

    Returns a copy of the model carrying psi. Raises ModelError when the
    restricted solver fails (the caller may supply psi in the DSL instead) or
    when the verification residual exceeds 1e-9.
    """
    if sys.g is None:
        raise ModelError("no extension map g to invert")
    if sys.psi_x is not None:
        out = sys
    else:
        try:
            psi_x, psi_u = _solve_psi(sys, sys.g)
        except SolveError as ex:
            raise ModelError(
                f"restricted solver cannot invert (f, g): {ex}; "
                "supply psi in the [inverse] section") from ex
        out = sys.with_psi(psi_x, psi_u)
    resid = _psi_residual(out)
    if resid > 1e-9:
        raise ModelError(f"psi verification residual {resid:.3g} exceeds 1e-9")
    return out


def choose_extension(sys: SystemModel, tol_rank: float = 1e-8) -> ExtensionChoice:
    """Pick m coordinate functions g from (x, u) making (f,g) a local
    diffeomorphism with a rationally solvable inverse.

    Depth-first over the coordinate pool in declaration order (states first,
    then inputs), keeping rank-increasing prefixes; the first complete
    selection whose psi the restricted solver can produce wins. Deterministic.
    """
    pool = list(sys.state_vars) + list(sys.input_vars)
    cols = pool
    pt = sys.analysis_point()
    base_rows = eval_matrix(_jac(sys.f, cols), pt)
    target = sys.n + sys.m

    def rank_with(selection):
        rows = [base_rows]
        sel = np.zeros((len(selection), len(cols)))
        for r, v in enumerate(selection):
            sel[r, cols.index(v)] = 1.0
        rows.append(sel)
        return numeric_rank(np.vstack(rows), tol_rank)

    best_rank_only = None

    def dfs(start, selection):
        nonlocal best_rank_only
        if len(selection) == sys.m:
            if rank_with(selection) != target:
                return None
            g = tuple(selection)
            if best_rank_only is None:
                best_rank_only = g
            try:
                psi_x, psi_u = _solve_psi(sys, g)
            except SolveError:
                return None
            return g, psi_x, psi_u
        current = rank_with(selection)
        for i in range(start, len(pool)):
            v = pool[i]
            if rank_with(selection + [v]) <= current:
                continue
            hit = dfs(i + 1, selection + [v])
            if hit:
                return hit
        return None

    hit = dfs(0, [])
    if hit is None:
        if best_rank_only is not None:
            raise ModelError(
                "every rank-valid extension map has a non-solvable inverse; "
                "supply g and psi in the DSL "
                f"(first rank-valid choice was {[to_text(v) for v in best_rank_only]})")
        raise ModelError(
            "no m-subset of coordinates completes (f,g) to rank n+m at the "
            "analysis point; the point may be degenerate — supply g explicitly")
    g, psi_x, psi_u = hit
    names = tuple(to_text(v) for v in g)
    return ExtensionChoice(source="auto_selected", g=g,
                           selected_coordinates=names, psi_x=psi_x, psi_u=psi_u)
