"""Flatness analysis of two-input candidates: shift indices, the tower of
backward/forward output shifts, its inversion into the parameterizing map,
and the forward/backward/general classification via rank conditions.

The pipeline mirrors the constructive proofs: transform the first output
component's relevant shift into a new input (ubar1) and/or a new g-function
history (zetabar1), rebuild the system in the transformed coordinates, and
read the index structure off the shifts of the second component. Forward
detection runs first (it needs no inverse map), then backward, then the
combined case; component and input permutations are tried deterministically.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    EvalError, Expr, Par, Var, differentiate, evaluate, shift_vars,
    sub as esub, substitute, to_text, vars_of,
)
from .model import ModelError, SystemModel, invert_extension, choose_extension
from .numeric import (
    ProbeSet, RankProbe, depends_on, eval_matrix, newton_solve, numeric_rank,
    probe_rank, simulate,
)
from .solve import SolveError, solve_equations

__all__ = [
    "AnalysisError", "ClassificationError", "FlatCandidate", "ShiftIndices",
    "Tower", "Parameterization", "Classification", "AnalyzeOptions",
    "relative_degrees", "backward_depths", "build_tower", "invert_tower",
    "classify", "normalize_inputs", "analyze", "AnalysisReport",
]

SHIFT_CAP_FACTOR = 2


class AnalysisError(Exception):
    pass


class ClassificationError(AnalysisError):
    """A rank assertion contradicted the classification."""


@dataclass
class FlatCandidate:
    """Candidate flat output: m expressions over (zeta histories, x, u)."""

    phi: tuple
    user_F: tuple | None = None          # (F_x tuple, F_u tuple) over y-shifts
    declared_indices: tuple | None = None

    def __post_init__(self):
        self.phi = tuple(self.phi)

    def is_xu_flat(self, sys: SystemModel) -> bool:
        allowed = set(sys.state_vars) | set(sys.input_vars)
        return all(vars_of(p) <= allowed for p in self.phi)


@dataclass
class AnalyzeOptions:
    input_boxes: dict = field(default_factory=dict)  # 1-based input index -> (lo, hi)
    seed: int = 2023
    tol_rank: float = 1e-8
    tol_verify: float = 1e-8
    probe_radius: float = 1e-2
    probe_count: int = 10
    verify_steps: int = 12
    skip_verification: bool = False


@dataclass
class ShiftIndices:
    """All index data in the original output-component order."""

    rho: tuple
    gamma: tuple | None
    r1: tuple
    r2: tuple
    d1: int
    d2: int
    sigma_y: tuple   # role order: sigma_y[0] is the chain-defining component (0-based)

    @property
    def d(self) -> int:
        return self.d1 + self.d2

    @property
    def size_R(self) -> int:
        return sum(self.r1) + sum(self.r2)

    def to_json(self):
        return {
            "rho": list(self.rho),
            "gamma": list(self.gamma) if self.gamma is not None else None,
            "R1": list(self.r1),
            "R2": list(self.r2),
            "d1": self.d1, "d2": self.d2, "d": self.d,
        }


@dataclass
class TowerContext:
    mode: str                      # "forward" | "backward" | "combined"
    sys_bar: SystemModel           # transformed system the rows live in
    base_model: SystemModel        # the analyzed model (psi resolved if used)
    sigma_y: tuple
    sigma_u: tuple | None          # (index of u solved for ubar1, the other)
    sigma_z: tuple | None
    u_transform: tuple | None      # new-input definitions over (x, u)
    u_inverse: dict | None         # {original u leaf: expr over (x, ubar)}
    zeta_inverse: dict | None      # {zeta_j[-1]: expr over (x, zetabar[-1])}
    gbar: tuple | None             # transformed g (over sys_bar coordinates)
    diagnostics: list = field(default_factory=list)


@dataclass
class Tower:
    rows: dict                     # (orig component 1-based j, shift s) -> Expr
    variables: tuple
    indices: ShiftIndices
    context: TowerContext
    rank_probe: RankProbe

    def ordered_rows(self):
        return [((j, s), self.rows[(j, s)])
                for j in (1, 2) for s in sorted(k[1] for k in self.rows if k[0] == j)]

    def row_exprs(self):
        return [e for _, e in self.ordered_rows()]

    def target_vars(self):
        return [Var("y", j, s) for (j, s), _ in self.ordered_rows()]


@dataclass
class ImplicitParameterization:
    """Parameterization evaluated by Newton inversion of the tower map."""

    tower: Tower
    u_recovery: dict               # {original u leaf: expr over tower vars}
    state_vars: tuple
    input_vars: tuple
    params: dict
    seed_center: np.ndarray
    _jac: list = None

    def __post_init__(self):
        rows = self.tower.row_exprs()
        cols = list(self.tower.variables)
        self._jac = [[differentiate(r, v) for v in cols] for r in rows]

    def _point(self, w):
        pt = dict(self.params)
        for v, val in zip(self.tower.variables, w):
            pt[v] = float(val)
        return pt

    def trajectory_seed(self, y_bindings: dict, x_values, u_values):
        """Newton seed from measured data: chain variables of the tower equal
        specific output measurements (the pure-chain rows), states and the
        untouched input come from the trajectory point itself."""
        idx = self.tower.indices
        ctx = self.tower.context
        j_first = ctx.sigma_y[0] + 1
        rho1 = idx.rho[ctx.sigma_y[0]]
        gamma1 = idx.gamma[ctx.sigma_y[0]] if idx.gamma is not None else None
        vals = []
        state_pos = {v: i for i, v in enumerate(self.state_vars)}
        for v in self.tower.variables:
            if v in state_pos:
                vals.append(x_values[state_pos[v]])
            elif v.family == "ubar" and v.component == 1:
                vals.append(y_bindings[Var("y", j_first, rho1 + v.shift)])
            elif v.family == "ubar" and v.component == 2:
                vals.append(u_values[ctx.sigma_u[1]])
            elif v.family == "zetabar" and v.component == 1:
                # zetabar1[-q] is the pure-chain row y_first[-(gamma1 + q - 1)]
                vals.append(y_bindings[Var("y", j_first, v.shift + 1 - gamma1)])
            elif v.family == "u":
                vals.append(u_values[self.input_vars.index(v)])
            else:
                raise EvalError(f"cannot seed tower variable {to_text(v)}")
        return np.array(vals, dtype=float)

    def recover(self, y_bindings: dict, seed=None):
        """Solve tower(w) = y for w; return (x values, u values, w)."""
        targets = np.array([y_bindings[t] for t in self.tower.target_vars()])

        def residual(w):
            pt = self._point(w)
            return np.array([evaluate(r, pt) for r in self.tower.row_exprs()]) - targets

        def jac(w):
            return eval_matrix(self._jac, self._point(w))

        seeds = [self.seed_center] if seed is None else [seed]
        last = None
        for s in seeds:
            try:
                w = newton_solve(residual, jac, s)
                break
            except EvalError as ex:
                last = ex
        else:
            raise last
        pt = self._point(w)
        xs = [pt[v] for v in self.state_vars]
        us = [evaluate(self.u_recovery[v], pt) for v in self.input_vars]
        return xs, us, w

    def jacobian_blocks(self, w):
        """(dF_x, dF_u, w-rows) as arrays over all tower targets, computed from
        the inverse of the tower Jacobian at the variable point w."""
        pt = self._point(w)
        DT = eval_matrix(self._jac, pt)
        M = np.linalg.inv(DT)  # vars x targets
        vars_ = list(self.tower.variables)
        state_rows = [vars_.index(v) for v in self.state_vars]
        dFx = M[state_rows, :]
        # chain rule for u = Phi_u(vars)
        dU = np.array([[evaluate(differentiate(self.u_recovery[v], w_), pt)
                        for w_ in vars_] for v in self.input_vars])
        dFu = dU @ M
        return dFx, dFu, M


@dataclass
class Parameterization:
    F_x: tuple | None
    F_u: tuple | None
    implicit: ImplicitParameterization | None
    indices: ShiftIndices
    source: str                    # "tower_inverted" | "user_supplied" | "tower_implicit"
    tower: Tower
    diagnostics: list = field(default_factory=list)

    @property
    def symbolic(self) -> bool:
        return self.F_x is not None


@dataclass
class Classification:
    kind: str                      # linearizing | forward_flat | backward_flat | general
    rank_Fu_at_R2: int
    rank_Fx_at_minusR1: int
    rank_g_of_F: int | None
    diagnostics: list = field(default_factory=list)

    def to_json(self):
        return {
            "kind": self.kind,
            "rank_Fu_at_R2": self.rank_Fu_at_R2,
            "rank_Fx_at_minusR1": self.rank_Fx_at_minusR1,
            "rank_g_of_F": self.rank_g_of_F,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Shift indices.

def _shift_cap(sys: SystemModel) -> int:
    return SHIFT_CAP_FACTOR * (sys.n + sys.m)


def relative_degrees(sys: SystemModel, cand: FlatCandidate,
                     opts: AnalyzeOptions | None = None):
    """rho_j: minimal alpha >= 0 with delta^alpha phi_j depending on the
    current input, certified numerically at the analysis point or nearby."""
    opts = opts or AnalyzeOptions()
    cap = sys.n + sys.m
    out = []
    for j, phi in enumerate(cand.phi):
        e = phi
        rho = None
        for alpha in range(cap + 1):
            leaves = vars_of(e)
            probes = _jet_probes(sys, leaves | set(sys.input_vars), opts)
            if depends_on(e, list(sys.input_vars), probes):
                rho = alpha
                break
            e = sys.shift(e, 1)
        if rho is None:
            raise AnalysisError(
                f"output component {j + 1} shows no input dependence up to "
                f"shift {cap}; defective candidate")
        out.append(rho)
    return tuple(out)


def backward_depths(sys: SystemModel, cand: FlatCandidate,
                    opts: AnalyzeOptions | None = None):
    """gamma_j: minimal beta >= 1 with delta^-beta phi_j depending on some
    g-value history zeta[-1]."""
    opts = opts or AnalyzeOptions()
    if sys.psi_x is None:
        raise ModelError("backward depths need the inverse map psi")
    cap = sys.n + sys.m
    hist = [Var(sys.gvalue_family, j + 1, -1) for j in range(sys.m)]
    out = []
    for j, phi in enumerate(cand.phi):
        e = phi
        gamma = None
        for beta in range(1, cap + 1):
            e = sys.shift(e, -1)
            probes = _jet_probes(sys, vars_of(e) | set(hist), opts)
            if depends_on(e, hist, probes):
                gamma = beta
                break
        if gamma is None:
            raise AnalysisError(
                f"output component {j + 1} shows no history dependence up to "
                f"backward shift {cap}")
        out.append(gamma)
    return tuple(out)


def _jet_probes(sys: SystemModel, leaves, opts: AnalyzeOptions,
                radius=None) -> ProbeSet:
    center = sys.jet_center(leaves)
    return ProbeSet(center=center, radius=radius or opts.probe_radius,
                    count=opts.probe_count, seed=opts.seed)


# ---------------------------------------------------------------------------
# Transforms.

def _solve_single(sys: SystemModel, definition: Expr, target: Var, unknowns,
                  opts: AnalyzeOptions):
    """Solve definition == target for one of the unknowns, tried in order;
    returns (unknown, solution expr over remaining coordinates + target)."""
    leaves = vars_of(definition) | set(unknowns)
    probes = list(_jet_probes(sys, leaves, opts).points())
    for pt in probes:
        pt[target] = evaluate(definition, pt)
    last = None
    for u in unknowns:
        try:
            sol = solve_equations([esub(definition, target)], [u], probes)
            return u, sol[u]
        except SolveError as ex:
            last = ex
    raise AnalysisError(f"transform {to_text(target)} = {to_text(definition)} "
                        f"is not solvable for any of "
                        f"{[to_text(u) for u in unknowns]}: {last}")


def _input_transform(sys: SystemModel, cand: FlatCandidate, sigma_y, rho,
                     opts: AnalyzeOptions):
    """ubar1 = delta^rho1 phi_first solved for one input component; the other
    input becomes ubar2. Returns (u_inverse map, transform exprs, sigma_u)."""
    first = cand.phi[sigma_y[0]]
    rho1 = rho[sigma_y[0]]
    ubar1, ubar2 = Var("ubar", 1, 0), Var("ubar", 2, 0)
    definition = sys.shift(first, rho1)
    solved_u, sol = _solve_single(sys, definition, ubar1,
                                  list(sys.input_vars), opts)
    other = next(v for v in sys.input_vars if v != solved_u)
    # ubar2 stands for the untouched input; substitute it into the solution
    u_inverse = {other: ubar2, solved_u: substitute(sol, {other: ubar2})}
    sigma_u = (sys.input_vars.index(solved_u), sys.input_vars.index(other))
    return u_inverse, (definition, other), sigma_u


def _zeta_transform(sys: SystemModel, cand: FlatCandidate, sigma_y, gamma,
                    opts: AnalyzeOptions):
    """zetabar1[-1] = delta^-gamma1 phi_first solved for one zeta component;
    the other history becomes zetabar2[-1]. Also builds gbar1 over (x, u)."""
    first = cand.phi[sigma_y[0]]
    gamma1 = gamma[sigma_y[0]]
    zb1, zb2 = Var("zetabar", 1, -1), Var("zetabar", 2, -1)
    definition = sys.shift(first, -gamma1)
    hist = [Var(sys.gvalue_family, j + 1, -1) for j in range(sys.m)]
    solved_z, sol = _solve_single(sys, definition, zb1, hist, opts)
    other = next(v for v in hist if v != solved_z)
    zeta_inverse = {other: zb2, solved_z: substitute(sol, {other: zb2})}
    sigma_z = (hist.index(solved_z), hist.index(other))
    gbar1 = sys.shift(first, -(gamma1 - 1))  # = phi_first shifted by -(gamma1-1): over (x,u)
    bad = [v for v in vars_of(gbar1) if v.family == sys.gvalue_family]
    if bad:
        raise AnalysisError(
            "gbar1 still contains history leaves "
            f"{[to_text(v) for v in bad]}; inconsistent backward depth")
    gbar2 = sys.g[sigma_z[1]]
    return zeta_inverse, (definition, other), sigma_z, (gbar1, gbar2)


def _make_sys_bar(sys: SystemModel, mode: str, u_inverse, transform_def,
                  gbar, opts: AnalyzeOptions, name_suffix: str):
    """Transformed system per mode; inputs become (ubar1, ubar2) unless the
    mode is 'backward' (which keeps the original inputs, per the
    prelongation construction)."""
    if mode == "backward":
        f_bar = sys.f
        inputs = sys.input_vars
        point = dict(sys.point)
    else:
        f_bar = tuple(substitute(fi, u_inverse) for fi in sys.f)
        inputs = (Var("ubar", 1, 0), Var("ubar", 2, 0))
        point = dict(sys.point)
        base = sys.analysis_point()
        definition, other = transform_def
        point[Var("ubar", 1, 0)] = evaluate(definition, base)
        point[Var("ubar", 2, 0)] = base[other]
        for v in sys.input_vars:
            point.pop(v, None)
    g_bar = None
    if gbar is not None:
        g_bar = tuple(gbar if mode == "backward"
                      else (substitute(gj, u_inverse) for gj in gbar))
    bar = SystemModel(
        n=sys.n, m=sys.m, f=f_bar, state_vars=sys.state_vars,
        input_vars=inputs, g=g_bar,
        gvalue_family="zetabar" if g_bar is not None else sys.gvalue_family,
        params=sys.params, point=point, name=sys.name + name_suffix)
    if g_bar is not None:
        bar = invert_extension(bar)
    return bar


# ---------------------------------------------------------------------------
# Tower construction.

def build_tower(sys: SystemModel, cand: FlatCandidate,
                opts: AnalyzeOptions | None = None,
                rho=None, gamma=None) -> Tower:
    """Construct the stacked shift tower of Props. 2-4 and its index data.

    Tries forward detection first (both component orders), then backward,
    then the combined construction; the first permutation passing every
    structural check and the functional-independence rank probe wins.
    """
    opts = opts or AnalyzeOptions()
    if sys.m != 2:
        raise AnalysisError("towers are defined for two-input systems (m = 2)")
    if not cand.is_xu_flat(sys):
        raise AnalysisError("tower construction needs an (x,u)-flat candidate")
    rho = rho if rho is not None else relative_degrees(sys, cand, opts)
    diags = []

    for sigma_y in ((0, 1), (1, 0)):
        t = _try_forward(sys, cand, rho, sigma_y, opts, diags)
        if t is not None:
            return t

    # backward machinery needs g and psi
    sysb = sys
    if sysb.g is None:
        choice = choose_extension(sysb)
        sysb = sysb.with_g(choice.g).with_psi(choice.psi_x, choice.psi_u)
        diags.append(f"auto-selected extension map g = {choice.selected_coordinates}")
    elif sysb.psi_x is None:
        sysb = invert_extension(sysb)
    gamma = gamma if gamma is not None else backward_depths(sysb, cand, opts)

    for sigma_y in ((0, 1), (1, 0)):
        t = _try_backward(sysb, cand, rho, gamma, sigma_y, opts, diags)
        if t is not None:
            return t
    for sigma_y in ((0, 1), (1, 0)):
        t = _try_combined(sysb, cand, rho, gamma, sigma_y, opts, diags)
        if t is not None:
            return t
    raise AnalysisError(
        "no permutation admits the Prop. 2-4 tower structure:\n  - "
        + "\n  - ".join(diags))


def _bar_phi(cand, sigma_y, u_inverse):
    phi = [cand.phi[sigma_y[0]], cand.phi[sigma_y[1]]]
    if u_inverse:
        phi = [substitute(p, u_inverse) for p in phi]
    return phi


def _search_r22(sys_bar: SystemModel, phi2_bar: Expr, rho2: int, cap: int,
                opts: AnalyzeOptions):
    """Smallest s >= rho2 where the s-th forward shift depends on ubar2."""
    ubar2_fam = [sys_bar.input_vars[1]]
    e = sys_bar.shift(phi2_bar, rho2)
    for s in range(rho2, cap + 1):
        leaves = vars_of(e) | set(ubar2_fam)
        probes = _jet_probes(sys_bar, leaves, opts)
        dep_vars = [v for v in leaves | set(ubar2_fam)
                    if (v.family, v.component) == (ubar2_fam[0].family,
                                                   ubar2_fam[0].component)
                    and v.shift >= ubar2_fam[0].shift]
        if depends_on(e, dep_vars, probes):
            return s, e
        e = sys_bar.shift(e, 1)
    return None, None


def _independent_of(sys_bar, e, fam_comp_list, opts) -> bool:
    leaves = vars_of(e)
    targets = [v for v in leaves
               if any((v.family, v.component) == fc for fc in fam_comp_list)]
    if not targets:
        return True
    probes = _jet_probes(sys_bar, leaves, opts)
    return not depends_on(e, targets, probes)


def _depends(sys_bar, e, target_vars, opts) -> bool:
    leaves = vars_of(e) | set(target_vars)
    probes = _jet_probes(sys_bar, leaves, opts)
    return depends_on(e, list(target_vars), probes)


def _rows_and_vars(sys_bar, phi_bar, sigma_y, r_first, r_second, d1, d2, mode):
    """Tower rows keyed by (original component, shift) plus the variable list."""
    rows = {}
    j_first, j_second = sigma_y[0] + 1, sigma_y[1] + 1
    lo1, hi1 = r_first
    for s in range(-lo1, hi1 + 1):
        rows[(j_first, s)] = sys_bar.shift(phi_bar[0], s)
    lo2, hi2 = r_second
    for s in range(-lo2, hi2 + 1):
        rows[(j_second, s)] = sys_bar.shift(phi_bar[1], s)
    variables = []
    variables += [Var("zetabar", 1, -k) for k in range(d1, 0, -1)]
    variables += list(sys_bar.state_vars)
    if mode == "backward":
        variables += list(sys_bar.input_vars)
    else:
        variables += [Var("ubar", 1, k) for k in range(0, d2 + 1)]
        variables += [Var("ubar", 2, 0)]
    return rows, tuple(variables)


def _tower_probe(sys_bar, rows, variables, opts):
    leaves = set(variables)
    for e in rows.values():
        leaves |= vars_of(e)
    probes = _jet_probes(sys_bar, leaves, opts)
    return probe_rank(list(rows.values()), list(variables), probes,
                      tol_rel=opts.tol_rank, required=len(variables))


def _rank_ok(rp: RankProbe) -> bool:
    # generic full rank: every perturbed probe that evaluated must be full
    perturbed = rp.per_point[1:] if rp.at_point is not None else rp.per_point
    return rp.generic == rp.required and perturbed and all(
        r == rp.required for r in perturbed)


def _try_forward(sys, cand, rho, sigma_y, opts, diags):
    tag = f"forward sigma_y={sigma_y}"
    try:
        u_inverse, tdef, sigma_u = _input_transform(sys, cand, sigma_y, rho, opts)
        sys_bar = _make_sys_bar(sys, "forward", u_inverse, tdef, None, opts, "~fwd")
    except (AnalysisError, ModelError, SolveError, EvalError) as ex:
        diags.append(f"{tag}: {ex}")
        return None
    phi_bar = _bar_phi(cand, sigma_y, u_inverse)
    rho1, rho2 = rho[sigma_y[0]], rho[sigma_y[1]]
    cap = _shift_cap(sys)
    r22, top = _search_r22(sys_bar, phi_bar[1], rho2, cap, opts)
    if r22 is None:
        diags.append(f"{tag}: no ubar2 dependence up to shift {cap}")
        return None
    if rho1 + r22 != sys.n:
        diags.append(f"{tag}: square count rho1 + r22 = {rho1 + r22} != n = {sys.n}")
        return None
    d2 = r22 - rho2
    r21 = rho1 + d2
    ok, why = _forward_checks(sys_bar, phi_bar, rho1, rho2, r21, r22, opts)
    if not ok:
        diags.append(f"{tag}: {why}")
        return None
    rows, variables = _rows_and_vars(sys_bar, phi_bar, sigma_y,
                                     (0, r21), (0, r22), 0, d2, "forward")
    rp = _tower_probe(sys_bar, rows, variables, opts)
    if not _rank_ok(rp):
        diags.append(f"{tag}: tower rank {rp.generic} < required {rp.required}")
        return None
    r1 = (0, 0)
    r2 = _unpermute(sigma_y, r21, r22)
    idx = ShiftIndices(rho=rho, gamma=None, r1=r1, r2=r2, d1=0, d2=d2,
                       sigma_y=sigma_y)
    ctx = TowerContext(mode="forward", sys_bar=sys_bar, base_model=sys,
                       sigma_y=sigma_y, sigma_u=sigma_u, sigma_z=None,
                       u_transform=tdef, u_inverse=u_inverse,
                       zeta_inverse=None, gbar=None, diagnostics=list(diags))
    return Tower(rows=rows, variables=variables, indices=idx, context=ctx,
                 rank_probe=rp)


def _forward_checks(sys_bar, phi_bar, rho1, rho2, r21, r22, opts):
    ub1 = Var("ubar", 1, 0)
    for s in range(rho1):
        e = sys_bar.shift(phi_bar[0], s)
        if not _independent_of(sys_bar, e, [("ubar", 1), ("ubar", 2)], opts):
            return False, f"phi1_[{s}] already depends on an input"
    e = sys_bar.shift(phi_bar[0], rho1)
    if e != ub1 and _numeric_differs(sys_bar, e, ub1, opts):
        return False, f"phi1_[{rho1}] != ubar1 (got {to_text(e)})"
    for s in range(rho2, r22):
        e = sys_bar.shift(phi_bar[1], s)
        if not _independent_of(sys_bar, e, [("ubar", 2)], opts):
            return False, f"phi2_[{s}] depends on ubar2 below r22"
    if r22 > rho2:
        # with a nonempty chain the top row must reach its deepest ubar1 shift
        top = sys_bar.shift(phi_bar[1], r22)
        if not _depends(sys_bar, top, [Var("ubar", 1, r22 - rho2)], opts):
            return False, f"phi2_[{r22}] does not reach ubar1[{r22 - rho2}]"
    return True, ""


def _numeric_differs(sys_bar, a, b, opts, tol=1e-9) -> bool:
    leaves = vars_of(a) | vars_of(b)
    probes = _jet_probes(sys_bar, leaves, opts)
    for pt in probes.points():
        try:
            if abs(evaluate(a, pt) - evaluate(b, pt)) > tol:
                return True
        except EvalError:
            continue
    return False


def _unpermute(sigma_y, first_val, second_val):
    out = [0, 0]
    out[sigma_y[0]] = first_val
    out[sigma_y[1]] = second_val
    return tuple(out)


def _try_backward(sys, cand, rho, gamma, sigma_y, opts, diags):
    tag = f"backward sigma_y={sigma_y}"
    # Prop. 3 hypothesis: the outputs jointly regular in u
    rp = probe_rank(list(cand.phi), list(sys.input_vars),
                    _jet_probes(sys, set().union(*[vars_of(p) for p in cand.phi])
                                | set(sys.input_vars), opts),
                    tol_rel=opts.tol_rank, required=sys.m)
    if rp.generic != sys.m:
        diags.append(f"{tag}: rank d_u phi = {rp.generic} < m "
                     "(candidate routed to the combined construction)")
        return None
    try:
        zeta_inverse, zdef, sigma_z, gbar = _zeta_transform(
            sys, cand, sigma_y, gamma, opts)
        sys_bar = _make_sys_bar(sys, "backward", None, None, gbar, opts, "~bwd")
    except (AnalysisError, ModelError, SolveError, EvalError) as ex:
        diags.append(f"{tag}: {ex}")
        return None
    phi_bar = _bar_phi(cand, sigma_y, None)
    gamma1, gamma2 = gamma[sigma_y[0]], gamma[sigma_y[1]]
    r12 = sys.n + 1 - gamma1
    if r12 < max(gamma2, 1):
        diags.append(f"{tag}: r12 = n+1-gamma1 = {r12} < gamma2 = {gamma2}")
        return None
    r11 = gamma1 + (r12 - gamma2)
    d1 = r11 + 1 - gamma1
    ok, why = _backward_checks(sys_bar, phi_bar, gamma1, gamma2, r11, r12, opts)
    if not ok:
        diags.append(f"{tag}: {why}")
        return None
    rows, variables = _rows_and_vars(sys_bar, phi_bar, sigma_y,
                                     (r11, 0), (r12, 0), d1, 0, "backward")
    rp = _tower_probe(sys_bar, rows, variables, opts)
    if not _rank_ok(rp):
        diags.append(f"{tag}: tower rank {rp.generic} < required {rp.required}")
        return None
    idx = ShiftIndices(rho=rho, gamma=gamma,
                       r1=_unpermute(sigma_y, r11, r12), r2=(0, 0),
                       d1=d1, d2=0, sigma_y=sigma_y)
    ctx = TowerContext(mode="backward", sys_bar=sys_bar, base_model=sys,
                       sigma_y=sigma_y, sigma_u=None, sigma_z=sigma_z,
                       u_transform=None, u_inverse=None,
                       zeta_inverse=zeta_inverse, gbar=gbar,
                       diagnostics=list(diags))
    return Tower(rows=rows, variables=variables, indices=idx, context=ctx,
                 rank_probe=rp)


def _backward_checks(sys_bar, phi_bar, gamma1, gamma2, r11, r12, opts):
    zb1 = Var("zetabar", 1, -1)
    for s in range(1, gamma1):
        e = sys_bar.shift(phi_bar[0], -s)
        if not _independent_of(sys_bar, e, [("zetabar", 1), ("zetabar", 2)], opts):
            return False, f"phi1_[-{s}] depends on a history before gamma1"
    e = sys_bar.shift(phi_bar[0], -gamma1)
    if e != zb1 and _numeric_differs(sys_bar, e, zb1, opts):
        return False, f"phi1_[-{gamma1}] != zetabar1[-1] (got {to_text(e)})"
    for s in range(gamma2, r12 + 1):
        e = sys_bar.shift(phi_bar[1], -s)
        if not _independent_of(sys_bar, e, [("zetabar", 2)], opts):
            return False, f"phi2_[-{s}] depends on zetabar2"
    bottom = sys_bar.shift(phi_bar[1], -r12)
    if not _depends(sys_bar, bottom, [Var("zetabar", 1, -(r12 - gamma2 + 1))], opts):
        return False, (f"phi2_[-{r12}] does not reach "
                       f"zetabar1[{-(r12 - gamma2 + 1)}]")
    return True, ""


def _try_combined(sys, cand, rho, gamma, sigma_y, opts, diags):
    tag = f"combined sigma_y={sigma_y}"
    try:
        u_inverse, tdef, sigma_u = _input_transform(sys, cand, sigma_y, rho, opts)
        zeta_inverse, zdef, sigma_z, gbar = _zeta_transform(
            sys, cand, sigma_y, gamma, opts)
        sys_bar = _make_sys_bar(sys, "combined", u_inverse, tdef, gbar, opts, "~cmb")
    except (AnalysisError, ModelError, SolveError, EvalError) as ex:
        diags.append(f"{tag}: {ex}")
        return None
    phi_bar = _bar_phi(cand, sigma_y, u_inverse)
    rho1, rho2 = rho[sigma_y[0]], rho[sigma_y[1]]
    gamma1, gamma2 = gamma[sigma_y[0]], gamma[sigma_y[1]]
    cap = _shift_cap(sys)
    r22, _ = _search_r22(sys_bar, phi_bar[1], rho2, cap, opts)
    if r22 is None:
        diags.append(f"{tag}: no ubar2 dependence up to shift {cap}")
        return None
    d2 = r22 - rho2
    r21 = rho1 + d2
    r12 = sys.n + 1 - gamma1 - rho1 - r22
    if r12 < max(gamma2, 1):
        diags.append(f"{tag}: region identity gives r12 = {r12} < gamma2 = {gamma2}")
        return None
    r11 = gamma1 + (r12 - gamma2)
    d1 = r11 + 1 - gamma1
    okf, whyf = _forward_checks(sys_bar, phi_bar, rho1, rho2, r21, r22, opts)
    if not okf:
        diags.append(f"{tag}: {whyf}")
        return None
    okb, whyb = _backward_checks(sys_bar, phi_bar, gamma1, gamma2, r11, r12, opts)
    if not okb:
        diags.append(f"{tag}: {whyb}")
        return None
    rows, variables = _rows_and_vars(sys_bar, phi_bar, sigma_y,
                                     (r11, r21), (r12, r22), d1, d2, "combined")
    rp = _tower_probe(sys_bar, rows, variables, opts)
    if not _rank_ok(rp):
        diags.append(f"{tag}: tower rank {rp.generic} < required {rp.required}")
        return None
    idx = ShiftIndices(rho=rho, gamma=gamma,
                       r1=_unpermute(sigma_y, r11, r12),
                       r2=_unpermute(sigma_y, r21, r22),
                       d1=d1, d2=d2, sigma_y=sigma_y)
    ctx = TowerContext(mode="combined", sys_bar=sys_bar, base_model=sys,
                       sigma_y=sigma_y, sigma_u=sigma_u, sigma_z=sigma_z,
                       u_transform=tdef, u_inverse=u_inverse,
                       zeta_inverse=zeta_inverse, gbar=gbar,
                       diagnostics=list(diags))
    return Tower(rows=rows, variables=variables, indices=idx, context=ctx,
                 rank_probe=rp)


# ---------------------------------------------------------------------------
# Tower inversion.

def _tower_probe_points(tower: Tower, opts: AnalyzeOptions, count=6):
    """Consistent probe points binding tower variables and y-leaf targets."""
    sys_bar = tower.context.sys_bar
    leaves = set(tower.variables)
    for e in tower.rows.values():
        leaves |= vars_of(e)
    base = sys_bar.jet_center(leaves)
    rng = random.Random(opts.seed + 7)
    pts = []
    for trial in range(count):
        pt = dict(base)
        if trial:
            for v in tower.variables:
                pt[v] += rng.uniform(-opts.probe_radius, opts.probe_radius)
        for (j, s), e in tower.rows.items():
            pt[Var("y", j, s)] = evaluate(e, pt)
        pts.append(pt)
    return pts


def invert_tower(sys: SystemModel, cand: FlatCandidate, tower: Tower,
                 opts: AnalyzeOptions | None = None) -> Parameterization:
    """Solve the tower equations for the parameterizing map.

    Stage A solves states and chain variables from the rows below the top
    shifts (so F_x only sees y_[-R1, R2-1], the Eq.-(7) zero-block shape);
    stage B recovers the inputs from the top rows. Falls back to the
    user-supplied map, then to the implicit (Newton) parameterization."""
    opts = opts or AnalyzeOptions()
    idx = tower.indices
    rows_cnt = len(tower.rows)
    if rows_cnt != len(tower.variables):
        raise AnalysisError(
            f"tower is not square: {rows_cnt} rows, {len(tower.variables)} variables")
    diags = list(tower.context.diagnostics)
    probe_pts = _tower_probe_points(tower, opts)

    mode = tower.context.mode
    top_shift = {j: idx.r2[j - 1] for j in (1, 2)}
    eq_low, eq_top = [], []
    for (j, s), e in sorted(tower.rows.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        resid = esub(e, Var("y", j, s))
        (eq_top if s == top_shift[j] else eq_low).append(resid)

    if mode == "backward":
        low_unknowns = list(tower.variables[:-sys.m])
        top_unknowns = list(tower.variables[-sys.m:])
    else:
        low_unknowns = [v for v in tower.variables
                        if not (v.family == "ubar" and
                                ((v.component == 1 and v.shift == idx.d2)
                                 or v.component == 2))]
        top_unknowns = [v for v in tower.variables if v not in low_unknowns]

    F_x = F_u = None
    implicit = None
    source = "tower_inverted"
    try:
        sol_low = solve_equations(eq_low, low_unknowns, probe_pts)
        eq_top_sub = [substitute(e, sol_low) for e in eq_top]
        sol_top = solve_equations(eq_top_sub, top_unknowns, probe_pts)
        sol = dict(sol_low)
        sol.update(sol_top)
        F_x = tuple(sol[v] for v in sys.state_vars)
        F_u = _recover_inputs(sys, tower, sol)
    except SolveError as ex:
        diags.append(f"restricted solver could not invert the tower: {ex}")
        if cand.user_F is not None:
            F_x, F_u = tuple(cand.user_F[0]), tuple(cand.user_F[1])
            source = "user_supplied"
        else:
            implicit = _implicit_param(sys, tower)
            source = "tower_implicit"

    param = Parameterization(F_x=F_x, F_u=F_u, implicit=implicit, indices=idx,
                             source=source, tower=tower, diagnostics=diags)
    if F_x is not None:
        _check_shapes(param, sys)
        if cand.user_F is not None and source == "tower_inverted":
            _cross_check_user_F(sys, cand, param, probe_pts, diags)
    if not opts.skip_verification:
        _quick_verify(sys, cand, param, opts)
    return param


def _recover_inputs(sys, tower: Tower, sol):
    ctx = tower.context
    if ctx.mode == "backward":
        return tuple(sol[v] for v in sys.input_vars)
    out = []
    chain_sub = dict(sol)
    for v in sys.input_vars:
        expr = ctx.u_inverse[v]
        out.append(substitute(expr, chain_sub))
    return tuple(out)


def _implicit_param(sys, tower: Tower) -> ImplicitParameterization:
    ctx = tower.context
    sys_bar = ctx.sys_bar
    if ctx.mode == "backward":
        u_recovery = {v: v for v in sys.input_vars}
    else:
        u_recovery = dict(ctx.u_inverse)
    center = sys_bar.jet_center(set(tower.variables))
    seed = np.array([center[v] for v in tower.variables])
    return ImplicitParameterization(
        tower=tower, u_recovery=u_recovery, state_vars=sys.state_vars,
        input_vars=sys.input_vars, params=sys_bar.param_bindings(),
        seed_center=seed)


def _check_shapes(param: Parameterization, sys: SystemModel):
    """Eq. (5)/(6) leaf windows, including the Eq. (7) zero block."""
    idx = param.indices
    for name, exprs, hi_off in (("F_x", param.F_x, -1), ("F_u", param.F_u, 0)):
        for e in exprs:
            for v in vars_of(e):
                if v.family != "y":
                    raise AnalysisError(
                        f"{name} contains a non-output leaf {to_text(v)}")
                j = v.component
                if not (-idx.r1[j - 1] <= v.shift <= idx.r2[j - 1] + hi_off):
                    raise AnalysisError(
                        f"{name} leaf {to_text(v)} outside the window "
                        f"[-{idx.r1[j - 1]}, {idx.r2[j - 1] + hi_off}]")


def _cross_check_user_F(sys, cand, param, probe_pts, diags, tol=1e-8):
    worst = 0.0
    for pt in probe_pts:
        try:
            for mine, theirs in ((param.F_x, cand.user_F[0]),
                                 (param.F_u, cand.user_F[1])):
                for a, b in zip(mine, theirs):
                    worst = max(worst, abs(evaluate(a, pt) - evaluate(b, pt)))
        except EvalError:
            continue
    if worst > tol:
        raise AnalysisError(
            f"user-supplied parameterization disagrees with the inverted tower "
            f"(max deviation {worst:.3g}); the parameterization is unique")
    diags.append(f"user_F cross-checked against the inverted tower ({worst:.3g})")


def _quick_verify(sys, cand, param, opts: AnalyzeOptions):
    from .numeric import verify_parameterization
    traj, window = _default_trajectory(sys, param.indices, opts,
                                       steps=opts.verify_steps)
    report = verify_parameterization(sys, cand, param, traj, window,
                                     tol=opts.tol_verify)
    if not report.passed:
        raise AnalysisError(
            f"parameterization failed trajectory verification: max residual "
            f"{max(report.max_residual_x, report.max_residual_u):.3g} at "
            f"k = {report.worst_k}")


def _default_trajectory(sys, idx: ShiftIndices, opts: AnalyzeOptions,
                        steps: int, seed_offset: int = 0):
    rng = random.Random(opts.seed + seed_offset)
    H = max(idx.r1) + 1
    K = steps + max(idx.r2) + 1
    pt = sys.analysis_point()
    u0 = [pt[v] for v in sys.input_vars]
    us = []
    for _ in range(H + K):
        u = []
        for j in range(sys.m):
            lo, hi = opts.input_boxes.get(j + 1, (u0[j] - 0.2, u0[j] + 0.2))
            u.append(rng.uniform(lo, hi))
        us.append(u)
    x0 = [pt[v] for v in sys.state_vars]
    traj = simulate(sys, x0, us, H, K)
    window = range(0, steps)
    return traj, window


# ---------------------------------------------------------------------------
# Classification.

def classify(sys: SystemModel, cand: FlatCandidate, param: Parameterization,
             opts: AnalyzeOptions | None = None) -> Classification:
    """Decide the flatness class from the index data and certify the rank
    conditions of the Jacobian submatrices at probe points near the
    analysis-point image."""
    opts = opts or AnalyzeOptions()
    idx = param.indices
    diags = list(param.diagnostics)

    cols_R2 = [Var("y", j + 1, idx.r2[j]) for j in range(2)]
    cols_mR1 = [Var("y", j + 1, -idx.r1[j]) for j in range(2)]
    rank_fu, rank_fx, rank_gf = _param_ranks(sys, param, cols_R2, cols_mR1, opts)

    if idx.size_R == sys.n:
        kind = "linearizing"
    elif idx.r1 == (0, 0):
        kind = "forward_flat"
    elif idx.r2 == (0, 0):
        kind = "backward_flat"
    else:
        kind = "general"

    if kind in ("forward_flat", "linearizing") and idx.r1 == (0, 0):
        if rank_fx != sys.m:
            raise ClassificationError(
                f"forward-flat candidate but rank d_y[-R1] F_x = {rank_fx} != m")
    if kind in ("backward_flat", "linearizing") and idx.r2 == (0, 0):
        if rank_fu != sys.m:
            raise ClassificationError(
                f"backward-flat candidate but rank d_y[R2] F_u = {rank_fu} != m")
    if kind == "general":
        if rank_fu >= sys.m or rank_fx >= sys.m:
            raise ClassificationError(
                "general classification contradicted: rank d_y[R2] F_u = "
                f"{rank_fu}, rank d_y[-R1] F_x = {rank_fx} (one is full)")
    return Classification(kind=kind, rank_Fu_at_R2=rank_fu,
                          rank_Fx_at_minusR1=rank_fx, rank_g_of_F=rank_gf,
                          diagnostics=diags)


def _param_ranks(sys, param, cols_R2, cols_mR1, opts):
    if param.F_x is not None:
        pts = _image_probe_points(sys, param, opts)
        rank_fu = probe_rank(list(param.F_u), cols_R2, pts,
                             tol_rel=opts.tol_rank).generic
        rank_fx = probe_rank(list(param.F_x), cols_mR1, pts,
                             tol_rel=opts.tol_rank).generic
        rank_gf = None
        if sys.g is not None:
            gF = [substitute(gj, _param_substitution(sys, param))
                  for gj in sys.g]
            rank_gf = probe_rank(gF, cols_mR1, pts, tol_rel=opts.tol_rank).generic
        return rank_fu, rank_fx, rank_gf
    return _implicit_ranks(sys, param, cols_R2, cols_mR1, opts)


def _param_substitution(sys, param):
    mapping = {v: e for v, e in zip(sys.state_vars, param.F_x)}
    mapping.update({v: e for v, e in zip(sys.input_vars, param.F_u)})
    return mapping


def _image_probe_points(sys, param, opts, count=11):
    """y-jet probes taken as images of tower-variable probes (always in the
    chart; the exact analysis-point image may sit on the singular locus)."""
    pts = _tower_probe_points(param.tower, opts, count=count)
    out = []
    for pt in pts:
        ypt = {k: v for k, v in pt.items()
               if isinstance(k, Par) or (isinstance(k, Var) and k.family == "y")}
        out.append(ypt)
    return out


def _implicit_ranks(sys, param, cols_R2, cols_mR1, opts):
    imp = param.implicit
    tower = param.tower
    targets = tower.target_vars()
    col_idx_R2 = [targets.index(c) for c in cols_R2]
    col_idx_mR1 = [targets.index(c) for c in cols_mR1]
    rng = random.Random(opts.seed + 13)
    ranks_fu, ranks_fx, ranks_gf = [], [], []
    base = imp.seed_center
    for trial in range(opts.probe_count + 1):
        w = np.array(base)
        if trial:
            w = w + np.array([rng.uniform(-opts.probe_radius, opts.probe_radius)
                              for _ in w])
        try:
            dFx, dFu, _ = imp.jacobian_blocks(w)
        except (EvalError, np.linalg.LinAlgError):
            continue
        ranks_fu.append(numeric_rank(dFu[:, col_idx_R2], opts.tol_rank))
        ranks_fx.append(numeric_rank(dFx[:, col_idx_mR1], opts.tol_rank))
        if sys.g is not None:
            pt = imp._point(w)
            xs = [pt[v] for v in sys.state_vars]
            us = [evaluate(imp.u_recovery[v], pt) for v in imp.input_vars]
            gpt = dict(imp.params)
            for v, val in zip(sys.state_vars, xs):
                gpt[v] = val
            for v, val in zip(sys.input_vars, us):
                gpt[v] = val
            Dg = eval_matrix(
                [[differentiate(gj, v) for v in
                  list(sys.state_vars) + list(sys.input_vars)]
                 for gj in sys.g], gpt)
            dG = Dg @ np.vstack([dFx, dFu])
            ranks_gf.append(numeric_rank(dG[:, col_idx_mR1], opts.tol_rank))
    if not ranks_fu:
        raise AnalysisError("no probe point admitted a tower Jacobian inverse")
    return (max(ranks_fu), max(ranks_fx),
            max(ranks_gf) if ranks_gf else None)


# ---------------------------------------------------------------------------
# Lemma-1 input normalization.

@dataclass
class NormalizedInputs:
    rows: tuple                 # 1-based indices of the normalized equations
    v_transform: tuple          # v_k = f^{j_k}(x, u)
    u_from_v: dict              # {u leaf: expr over (x, ubar)}
    system: SystemModel         # transformed system with x^{j_k,+} = v_k
    F_v: tuple | None           # v over y-shifts, when a symbolic F is given


def normalize_inputs(sys: SystemModel, param: Parameterization | None = None,
                     opts: AnalyzeOptions | None = None) -> NormalizedInputs:
    """Lemma-1 input transform: pick m transition rows jointly regular in u,
    set v_k = f^{j_k}, and rewrite the system with u expressed through v.

    Rows already in normalized form (f^j literally an input) are claimed
    first; a greedy ascending scan fills the rest by rank increase at the
    analysis point."""
    opts = opts or AnalyzeOptions()
    pt = sys.analysis_point()
    chosen = []
    for i, fi in enumerate(sys.f):
        if isinstance(fi, Var) and fi in sys.input_vars and len(chosen) < sys.m:
            if all(sys.f[c] != fi for c in chosen):
                chosen.append(i)
    J = [[differentiate(fi, v) for v in sys.input_vars] for fi in sys.f]

    def rank_of(rows):
        if not rows:
            return 0
        return numeric_rank(eval_matrix([J[i] for i in rows], pt), opts.tol_rank)

    for i in range(sys.n):
        if len(chosen) == sys.m:
            break
        if i in chosen:
            continue
        if rank_of(chosen + [i]) > rank_of(chosen):
            chosen.append(i)
    if len(chosen) < sys.m or rank_of(chosen) < sys.m:
        raise AnalysisError(
            "no m-subset of the transition rows is regular in u at the "
            "analysis point")
    chosen.sort()

    v_vars = [Var("ubar", k + 1, 0) for k in range(sys.m)]
    eqs = [esub(sys.f[i], v) for i, v in zip(chosen, v_vars)]
    probes = []
    base = sys.analysis_point()
    rng = random.Random(opts.seed + 3)
    for trial in range(6):
        p = dict(base)
        if trial:
            for v in list(sys.state_vars) + list(sys.input_vars):
                p[v] += rng.uniform(-opts.probe_radius, opts.probe_radius)
        for i, v in zip(chosen, v_vars):
            p[v] = evaluate(sys.f[i], p)
        probes.append(p)
    try:
        sol = solve_equations(eqs, list(sys.input_vars), probes)
    except SolveError as ex:
        raise AnalysisError(
            f"restricted solver cannot express u from v = (f^j): {ex}") from ex

    f_v = tuple(substitute(fi, sol) for fi in sys.f)
    point = dict(sys.point)
    for v in sys.input_vars:
        point.pop(v, None)
    for i, v in zip(chosen, v_vars):
        point[v] = evaluate(sys.f[i], base)
    sys_v = SystemModel(
        n=sys.n, m=sys.m, f=f_v, state_vars=sys.state_vars,
        input_vars=tuple(v_vars), g=None, gvalue_family=sys.gvalue_family,
        params=sys.params, point=point, name=sys.name + "~norm")

    F_v = None
    if param is not None and param.F_x is not None:
        F_v = tuple(shift_vars(param.F_x[i], 1) for i in chosen)
    return NormalizedInputs(rows=tuple(i + 1 for i in chosen),
                            v_transform=tuple(sys.f[i] for i in chosen),
                            u_from_v=sol, system=sys_v, F_v=F_v)


def zero_block_check(norm: NormalizedInputs, param: Parameterization,
                     sys: SystemModel, opts: AnalyzeOptions | None = None):
    """Lemma 1 / Eq. (8): d_{y_[-R1]} F_v must vanish structurally and
    numerically. Returns (structural_ok, max_abs_numeric)."""
    opts = opts or AnalyzeOptions()
    idx = param.indices
    cols = [Var("y", j + 1, -idx.r1[j]) for j in range(2) if idx.r1[j] > 0]
    if not cols or norm.F_v is None:
        return True, 0.0
    structural = all(
        v not in vars_of(e) for e in norm.F_v for v in cols)
    worst = 0.0
    pts = _image_probe_points(sys, param, opts)
    for e in norm.F_v:
        for c in cols:
            d = differentiate(e, c)
            for pt in pts:
                try:
                    worst = max(worst, abs(evaluate(d, pt)))
                except EvalError:
                    continue
    return structural, worst


# ---------------------------------------------------------------------------
# Full pipeline.

@dataclass
class AnalysisReport:
    system: str
    indices: ShiftIndices
    classification: Classification
    tower: Tower
    parameterization: Parameterization
    validation: object
    residuals: dict
    model: SystemModel | None = None  # the analyzed model, psi resolved

    def to_json(self):
        tower_txt = {f"y{j}[{s}]": to_text(e)
                     for (j, s), e in self.tower.ordered_rows()}
        return {
            "schema": "1",
            "system": self.system,
            **self.indices.to_json(),
            "classification": self.classification.kind,
            "ranks": {
                "Fu_at_R2": self.classification.rank_Fu_at_R2,
                "Fx_at_minusR1": self.classification.rank_Fx_at_minusR1,
                "g_of_F": self.classification.rank_g_of_F,
                "tower": {
                    "at_point": self.tower.rank_probe.at_point,
                    "generic": self.tower.rank_probe.generic,
                    "required": self.tower.rank_probe.required,
                },
            },
            "tower": tower_txt,
            "F_x": ([to_text(e) for e in self.parameterization.F_x]
                    if self.parameterization.F_x is not None else None),
            "F_u": ([to_text(e) for e in self.parameterization.F_u]
                    if self.parameterization.F_u is not None else None),
            "parameterization_source": self.parameterization.source,
            "residuals": self.residuals,
            "validation": self.validation.to_json() if self.validation else None,
            "diagnostics": self.classification.diagnostics,
        }


def analyze(sys: SystemModel, cand: FlatCandidate,
            opts: AnalyzeOptions | None = None) -> AnalysisReport:
    """validate -> indices -> tower -> parameterization -> classification."""
    from dataclasses import replace
    from .model import validate as validate_model
    opts = opts or AnalyzeOptions()
    if sys.g is not None and sys.psi_x is None:
        sys = invert_extension(sys)
    vrep = validate_model(sys, opts.tol_rank)
    if not vrep.passed:
        raise AnalysisError(f"standing assumptions fail: {vrep.to_json()}")
    tower = build_tower(sys, cand, opts)
    sys = tower.context.base_model
    if cand.declared_indices is not None:
        r1d, r2d = (tuple(r) for r in cand.declared_indices)
        if (r1d, r2d) != (tower.indices.r1, tower.indices.r2):
            raise AnalysisError(
                f"declared shift orders R1={r1d}, R2={r2d} disagree with the "
                f"computed R1={tower.indices.r1}, R2={tower.indices.r2}")
    if tower.indices.gamma is None and sys.psi_x is not None:
        gamma = backward_depths(sys, cand, opts)
        tower.indices = replace(tower.indices, gamma=gamma)
    param = invert_tower(sys, cand, tower, opts)
    cls = classify(sys, cand, param, opts)
    residuals = {}
    if not opts.skip_verification:
        traj, window = _default_trajectory(sys, param.indices, opts,
                                           steps=opts.verify_steps, seed_offset=1)
        from .numeric import verify_parameterization
        rep = verify_parameterization(sys, cand, param, traj, window,
                                      tol=opts.tol_verify)
        residuals = rep.to_json()
    return AnalysisReport(system=sys.name, indices=param.indices,
                          classification=cls, tower=tower,
                          parameterization=param, validation=vrep,
                          residuals=residuals, model=sys)
