"""Experiment runners behind the command line.

Every runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` with CSV tables, a gnuplot script and the list of
contract verdicts.  Nothing here touches the filesystem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .algebra import blade_labels
from .config import ExperimentConfig
from .dirac import (
    Bump,
    Grid,
    MinimalNormDiracSolver,
    energy_identity_check,
    grid_norm_sq,
    solvability_checks,
    verify_l2_bound,
)
from .estimates import (
    diagonal_profile,
    harmonic_bound_check,
    lower_bound_witness,
    moser_chain,
    mvi_check,
    offdiagonal_decay,
    sample_pairs,
)
from .kernel import BergmanKernel
from .polynomials import harmonic_basis, monogenic_basis
from .quadrature import weighted_inner

# O(h^2) error budgets of the stencil checks, relative, per unit h^2
ENERGY_BUDGET = 0.5
CHAIN_BUDGET = 10.0


@dataclass
class Contract:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    name: str
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)
    plots: dict = field(default_factory=dict)  # filename -> script text
    contracts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.contracts)

    def check(self, name: str, passed, detail: str = "") -> None:
        self.contracts.append(Contract(f"{self.name}.{name}", bool(passed), detail))


def _coord_names(n: int) -> list[str]:
    return [f"x{j}" for j in range(n + 1)]


def _ball_points(n: int, count: int, radius: float, rng) -> np.ndarray:
    g = rng.normal(size=(count, n + 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random(count)[:, None] ** (1 / (n + 1))


def _plot(csvname: str, xcol: int, ycol: int, title: str, xlabel: str, ylabel: str, logy: bool = False) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logy:
        lines.append("set logscale y")
    lines.append(f"plot '{csvname}' using {xcol}:{ycol} with points pt 7")
    return "\n".join(lines) + "\n"


class ModelCache:
    """Fitted kernels shared between experiments of one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._models = {}

    def get(self, kind: str = "monogenic", degree: int | None = None) -> BergmanKernel:
        cfg = self.cfg
        degree = cfg.degree if degree is None else int(degree)
        key = (kind, degree)
        if key not in self._models:
            self._models[key] = BergmanKernel(
                n=cfg.n, degree=degree, kind=kind, weight=cfg.weight(), quad_order=cfg.quad_order,
                cond_cap=cfg.cond_cap, tol_repro=cfg.tol_repro,
            ).fit()
        return self._models[key]


# ---------------------------------------------------------------------------

def reproducing_residuals(model: BergmanKernel, X) -> np.ndarray:
    """``|(B(., x), r) - r(x)| / (1 + |r(x)|)`` for every element r and point x, by quadrature."""
    V = model.basis_values(X)
    out = np.empty((len(X), len(model.elements_)))
    kind = model.kind
    n = int(model.n)
    for i, x in enumerate(X):
        field_x = model.kernel_field(x)
        for m in range(len(model.elements_)):
            def element(Y, m=m):
                vals = model.basis_values(Y)[:, m, :]
                return vals if kind == "monogenic" else vals[:, 0]

            got = weighted_inner(field_x, element, model.rule_, n=n).coeffs
            want = V[i, m] if kind == "monogenic" else np.concatenate([V[i, m], np.zeros((1 << n) - 1)])
            out[i, m] = np.linalg.norm(got - want) / (1 + np.linalg.norm(want))
    return out


def run_kernel(cfg: ExperimentConfig, cache: ModelCache | None = None) -> ExperimentResult:
    cache = cache or ModelCache(cfg)
    res = ExperimentResult("kernel")
    model = cache.get()
    rng = np.random.default_rng(cfg.seed)
    X = _ball_points(cfg.n, cfg.kernel_points, cfg.sample_radius, rng)
    repro = reproducing_residuals(model, X)
    B = model.diagonal(X)
    sup = model.sup_eigenvalue(X)
    lhs = np.linalg.norm(B, axis=1)
    rel = np.abs(lhs - sup) / sup
    off = np.sum(B[:, 1:] ** 2, axis=1) / B[:, 0] ** 2
    header = _coord_names(cfg.n) + blade_labels(cfg.n) + ["sup", "relerr"]
    rows = [list(x) + list(b) + [s, r] for x, b, s, r in zip(X, B, sup, rel)]
    res.tables["kernel_diag.csv"] = (header, rows)
    from .kernel import kernel_csv_rows

    Y = np.roll(X, 1, axis=0)
    res.tables["kernel_eval.csv"] = kernel_csv_rows(model, X, Y)
    res.plots["kernel.gp"] = _plot("kernel_diag.csv", 1, cfg.n + 2, "kernel diagonal", "x0", "B0", logy=True)
    res.check("reproducing", repro.max() <= cfg.tol_repro, f"max residual {repro.max():.3e} over {repro.size} pairs")
    res.check("sup_identity", rel.max() <= 1e-8, f"max relative gap {rel.max():.3e}")
    res.check("diagonal_scalar", off.max() <= 1e-16 and B[:, 0].min() > 0, f"max non-scalar share {off.max():.3e}")
    res.check("pruning", len(model.pruned_) == 0 or len(model.elements_) > 0,
              f"{len(model.elements_)} elements, {len(model.pruned_)} pruned, condition {model.condition_number_:.3e}")
    return res


def random_solution_field(grid: Grid, rng, width=(0.6, 0.9), degree: int = 1) -> np.ndarray:
    """Gaussian bump times a random monogenic polynomial of degree <= ``degree``."""
    from .kernel import right_module_closure

    n = grid.n
    elements, _ = right_module_closure(monogenic_basis(n, degree))
    coeffs = rng.normal(size=len(elements))
    s = rng.uniform(*width)
    center = rng.uniform(-0.7, 0.7, n + 1)
    X = grid.coords
    poly = sum(c * P(X) for c, P in zip(coeffs, elements))
    return np.exp(-np.sum((X - center) ** 2, axis=1) / s**2)[:, None] * poly


@dataclass
class MinimalNormTrial:
    ratio: float
    ratio_doubled: float
    residual: float
    norm_u2: float
    norm_g2: float
    drift: float = float("nan")
    f: np.ndarray | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    fine_f: np.ndarray | None = field(default=None, repr=False)
    fine_u: np.ndarray | None = field(default=None, repr=False)


def minimal_norm_study(w, coarse: Grid, count: int, seed: int, drift_trials: int = 0, max_iter: int = 10_000,
               rtol: float = 1e-8, keep: int = 1) -> list[MinimalNormTrial]:
    """Minimal-norm solves of ``D_h u = D_h g`` for ``count`` random fields g.

    The first ``drift_trials`` fields are also solved on the grid with half
    the spacing; the first ``keep`` trials retain their fields.
    """
    fine = Grid(coarse.n, coarse.half_width, coarse.spacing / 2)
    solver = MinimalNormDiracSolver(coarse.n, coarse.half_width, coarse.spacing, w, max_iter, rtol)
    fsolver = MinimalNormDiracSolver(fine.n, fine.half_width, fine.spacing, w, max_iter, rtol)
    solver._setup()
    out = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        g = random_solution_field(coarse, np.random.default_rng(child))
        f = solver.operator_.apply(g)
        solver.fit(f)
        t2 = verify_l2_bound(solver.solution_, f, w, coarse)
        trial = MinimalNormTrial(t2.ratio, t2.ratio_doubled, solver.residual_, t2.norm_u2, grid_norm_sq(g, coarse, w))
        if i < keep:
            trial.f, trial.u = f, solver.solution_
        if i < drift_trials:
            fsolver._setup()
            gf = random_solution_field(fine, np.random.default_rng(child))
            ff = fsolver.operator_.apply(gf)
            fsolver.fit(ff)
            trial.drift = abs(verify_l2_bound(fsolver.solution_, ff, w, fine).ratio / t2.ratio - 1)
            if i < keep:
                trial.fine_f, trial.fine_u = ff, fsolver.solution_
        out.append(trial)
    return out


def energy_study(w, coarse: Grid) -> list[list[float]]:
    """Energy identity for a centred cos^2 bump at spacing h and h/2."""
    fine = Grid(coarse.n, coarse.half_width, coarse.spacing / 2)
    bump = Bump(np.zeros(coarse.n + 1), min(1.5, coarse.half_width - 3 * coarse.spacing), power=2)
    rows = []
    for grid in (coarse, fine):
        lhs, rhs = energy_identity_check(bump, w, grid)
        rows.append([grid.spacing, lhs, rhs, abs(lhs - rhs) / rhs])
    return rows


def run_dirac(cfg: ExperimentConfig, cache=None, drift_trials: int | None = None) -> ExperimentResult:
    res = ExperimentResult("dirac")
    if drift_trials is None:
        drift_trials = 2 if cfg.n == 1 else 1
    drift_trials = max(1, min(drift_trials, cfg.trials))
    w = cfg.weight()
    coarse = Grid.fitted(cfg.n, cfg.half_width, cfg.spacing)
    fine = Grid(cfg.n, coarse.half_width, coarse.spacing / 2)
    study = minimal_norm_study(w, coarse, cfg.trials, cfg.seed, drift_trials, cfg.max_iter, cfg.rtol)
    rows = [[i, t.ratio, t.ratio_doubled, t.residual, t.norm_u2, t.norm_g2, t.drift] for i, t in enumerate(study)]
    res.tables["l2_bound.csv"] = (["trial", "ratio", "ratio_doubled", "residual", "norm_u2", "norm_g2", "drift"], rows)
    res.plots["l2_bound.gp"] = _plot("l2_bound.csv", 1, 2, "L2 bound ratio", "trial", "ratio")
    ratios = [t.ratio for t in study]
    drifts = [t.drift for t in study if np.isfinite(t.drift)]
    res.check("l2_bound", max(ratios) <= 1 + cfg.tol_disc,
              f"max ratio {max(ratios):.4f} (with doubled Laplacian {max(t.ratio_doubled for t in study):.4f})")
    res.check("minimal_norm", all(t.norm_u2 <= t.norm_g2 * (1 + 1e-12) for t in study), "||u|| <= ||g|| for every trial")
    res.check("residual", max(t.residual for t in study) <= 10 * cfg.rtol,
              f"max relative residual {max(t.residual for t in study):.2e}")
    res.check("l2_drift", max(drifts) < 0.05, f"max drift under refinement {max(drifts):.4f}")

    erows = energy_study(w, coarse)
    res.tables["energy.csv"] = (["h", "lhs", "rhs", "relative_mismatch"], erows)
    shrink = erows[0][3] / erows[1][3] if erows[1][3] > 0 else float("inf")
    budget = ENERGY_BUDGET * coarse.spacing**2
    res.check("energy_identity", erows[0][3] <= budget and 3 <= shrink <= 5,
              f"mismatch {erows[0][3]:.2e} at h (budget {budget:.2e}), shrink factor {shrink:.2f}")

    trials = bump_test_fields(coarse, np.random.default_rng([cfg.seed, 1]), 20)
    first = study[0]
    rep = solvability_checks(first.f, first.u, trials, w, coarse, cfg.tol_disc)
    rep_f = solvability_checks(first.fine_f, first.fine_u, trials, w, fine, cfg.tol_disc)
    mc, mf = rep.relative_mismatch, rep_f.relative_mismatch
    shrink1 = float(np.median(mc / mf))
    res.tables["solvability.csv"] = (
        ["trial", "mismatch_h", "mismatch_h2", "lhs", "rhs"],
        [[i, a, b, l, r] for i, (a, b, l, r) in enumerate(zip(mc, mf, rep.lhs, rep.rhs))],
    )
    res.check("necessity", rep.necessity_passed and rep_f.necessity_passed,
              f"max lhs/rhs {max(l / r for l, r in zip(rep.lhs, rep.rhs)):.3e}")
    res.check("adjoint_chain", mc.max() <= CHAIN_BUDGET * coarse.spacing**2 and 3 <= shrink1 <= 5,
              f"max relative mismatch {mc.max():.2e}, median shrink {shrink1:.2f}")
    return res


def bump_test_fields(grid: Grid, rng, count: int) -> list:
    """Random A_n-valued test fields built from bumps with margin inside the box."""
    n = grid.n
    dim = 1 << n
    trials = []
    for _ in range(count):
        comps = []
        for A in rng.choice(dim, size=min(dim, 1 + rng.integers(dim)), replace=False):
            rad = rng.uniform(0.6, 1.2)
            reach = max(grid.half_width - 2 * grid.spacing - rad, 0.0) / np.sqrt(n + 1)
            comps.append((int(A), Bump(rng.uniform(-1, 1, n + 1) * min(1.0, reach), rad, power=4,
                                       amp=rng.normal())))
        trials.append(comps)
    return trials


# ---------------------------------------------------------------------------

def mvi_samples(cfg: ExperimentConfig, rng):
    """A random monogenic module combination and a random harmonic combination (callables)."""
    n = cfg.n
    mono = monogenic_basis(n, min(cfg.degree, 3))
    harm = harmonic_basis(n, min(cfg.degree, 3))
    cm = rng.normal(size=len(mono))
    ch = rng.normal(size=len(harm))

    def monogenic(X):
        return sum(c * P(X) for c, P in zip(cm, mono.elements))

    def harmonic(X):
        return sum(c * P(X)[:, 0] for c, P in zip(ch, harm.elements))

    return {"monogenic": monogenic, "harmonic": harmonic}


def run_mvi(cfg: ExperimentConfig, cache=None) -> ExperimentResult:
    res = ExperimentResult("mvi")
    w = cfg.weight()
    rng = np.random.default_rng(cfg.seed)
    samples = mvi_samples(cfg, rng)
    X = _ball_points(cfg.n, cfg.sample_count, cfg.sample_radius, rng)
    lam = rng.normal(size=1 << cfg.n)
    from .algebra import product_arrays

    summary = []
    for kind, u in samples.items():
        for R in cfg.mvi_radii:
            rep = mvi_check(u, w, R, X, cfg.ball_order, seed=cfg.seed)
            name = f"mvi_{kind}_R{R:g}.csv"
            res.tables[name] = (
                _coord_names(cfg.n) + ["lhs", "rhs", "ratio"],
                [list(x) + [a, b, r] for x, a, b, r in zip(X, rep.lhs, rep.rhs, rep.ratios)],
            )
            scale_gap = float("nan")
            if kind == "monogenic":
                def scaled(Y, u=u):
                    vals = u(Y)
                    return product_arrays(np.broadcast_to(lam, vals.shape), vals, cfg.n)

                rep2 = mvi_check(scaled, w, R, X, cfg.ball_order, seed=cfg.seed)
                scale_gap = float(np.max(np.abs(rep2.ratios - rep.ratios) / np.maximum(rep.ratios, 1e-300)))
                if cfg.n <= 2:
                    res.check(f"scale_invariance_{kind}_R{R:g}", scale_gap <= 1e-10, f"max relative change {scale_gap:.2e}")
            summary.append([kind, R, rep.constant, rep.constant_refined, scale_gap])
            res.check(f"{kind}_R{R:g}", rep.passed,
                      f"C_R {rep.constant:.6g}, refined {rep.constant_refined:.6g}")
    res.tables["mvi_summary.csv"] = (["kind", "R", "C_R", "C_R_refined", "scale_gap"], summary)
    res.plots["mvi.gp"] = _plot("mvi_summary.csv", 2, 3, "mean value constant", "R", "C_R")
    return res


def run_moser(cfg: ExperimentConfig, cache=None) -> ExperimentResult:
    res = ExperimentResult("moser")
    w = cfg.weight()
    rng = np.random.default_rng(cfg.seed)
    base = mvi_samples(cfg, rng)["harmonic"]
    probe = base(_ball_points(cfg.n, 512, 0.5, rng))
    sign = 1.0 if probe.max() >= -probe.min() else -1.0

    def v(X):
        return sign * base(X)

    table = moser_chain(v, w, cfg.moser_k0, order=cfg.moser_order)
    res.tables["moser.csv"] = (
        ["i", "gamma", "radius", "norm", "log_space"],
        [[i, g, r, nm, int(f)] for i, (g, r, nm, f) in
         enumerate(zip(table.gammas, table.radii, table.norms, table.log_space))],
    )
    res.plots["moser.gp"] = _plot("moser.csv", 1, 4, "chain norms", "step", "norm")
    res.check("final_vs_sup", table.passed,
              f"final {table.norms[-1]:.6g} vs sup {table.sup:.6g} (log space {'used' if table.log_space_used else 'not needed'})")
    return res


def run_diagonal(cfg: ExperimentConfig, cache: ModelCache | None = None) -> ExperimentResult:
    cache = cache or ModelCache(cfg)
    res = ExperimentResult("diagonal")
    prof = diagonal_profile(cache.get(), cfg.diag_radius, cfg.diag_step)
    res.tables["diagonal.csv"] = (
        _coord_names(cfg.n) + ["B0", "ratio"],
        [list(x) + [b, r] for x, b, r in zip(prof.points, prof.diagonal, prof.ratio)],
    )
    res.plots["diagonal.gp"] = _plot("diagonal.csv", 1, cfg.n + 3, "diagonal ratio", "x0", "ratio")
    res.check("positive", prof.ratio_min > 0, f"min ratio {prof.ratio_min:.6g}")
    res.check("bounded", prof.spread <= 3,
              f"max/min {prof.spread:.4f} on radius {prof.radius:g} (2/pi = {2 / pi:.6f}, max {prof.ratio_max:.6g})")
    return res


def decay_directions(n: int, count: int, rng) -> np.ndarray:
    d = rng.normal(size=(count, n + 1))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def run_decay(cfg: ExperimentConfig, cache: ModelCache | None = None) -> ExperimentResult:
    cache = cache or ModelCache(cfg)
    res = ExperimentResult("decay")
    rng = np.random.default_rng(cfg.seed)
    fit = offdiagonal_decay(cache.get(), np.zeros(cfg.n + 1), decay_directions(cfg.n, cfg.decay_directions, rng),
                            cfg.decay_distances)
    res.tables["decay.csv"] = (["dist", "loggap"], [[d, g] for d, g in zip(fit.distances, fit.loggap)])
    q = fit.quad_coeffs
    res.tables["decay_fit.csv"] = (
        ["alpha", "intercept", "r2", "quad_a", "quad_b", "quad_c", "quad_r2", "excluded"],
        [[fit.alpha, fit.intercept, fit.r2, q[0], q[1], q[2], fit.quad_r2, fit.excluded]],
    )
    res.plots["decay.gp"] = _plot("decay.csv", 1, 2, "off-diagonal log gap", "distance", "log gap")
    res.check("linear_fit", fit.passed, f"alpha {fit.alpha:.4f}, R2 {fit.r2:.4f}, quadratic R2 {fit.quad_r2:.4f}")
    return res


def run_witness(cfg: ExperimentConfig, cache=None) -> ExperimentResult:
    res = ExperimentResult("witness")
    w = cfg.witness_weight()
    table = lower_bound_witness(w, cfg.witness_k, cfg.witness_tau, cfg.witness_spacing_scale,
                                max_iter=cfg.max_iter, rtol=cfg.rtol)
    res.tables["witness.csv"] = (
        ["k", "norm_g2", "norm_u2", "r"], [[r.k, r.norm_g2, r.norm_u2, r.r] for r in table.rows]
    )
    res.plots["witness.gp"] = _plot("witness.csv", 1, 4, "normalised diagonal witness", "k", "r")
    q = table.energy_ratios
    res.check("energy_decreasing", table.decreasing, "u/g energy ratios " + ", ".join(f"{v:.3e}" for v in q))
    res.check("floor", table.above_floor, f"r(top k) {table.rows[-1].r:.6f} vs floor {table.floor:.6f}")
    return res


def run_harmonic(cfg: ExperimentConfig, cache: ModelCache | None = None) -> ExperimentResult:
    cache = cache or ModelCache(cfg)
    res = ExperimentResult("harmonic")
    X, Y = sample_pairs(cfg.n, cfg.sample_count, cfg.sample_radius, cfg.seed)
    rows = []
    for d in cfg.harmonic_degrees:
        rep = harmonic_bound_check(cache.get("harmonic", int(d)), X, Y)
        rows.append([int(d), rep.constant])
    res.tables["harmonic.csv"] = (["degree", "C_hat"], rows)
    res.plots["harmonic.gp"] = _plot("harmonic.csv", 1, 2, "harmonic kernel constant", "degree", "C")
    consts = [r[1] for r in rows]
    change = abs(consts[-1] / consts[-2] - 1) if len(consts) > 1 else 0.0
    res.check("finite", all(np.isfinite(consts)) and min(consts) > 0, f"constants {', '.join(f'{c:.6g}' for c in consts)}")
    res.check("stable", change <= 0.05, f"relative change over the last refinement {change:.2e}")
    return res


RUNNERS = {
    "kernel": run_kernel,
    "dirac": run_dirac,
    "mvi": run_mvi,
    "moser": run_moser,
    "diagonal": run_diagonal,
    "decay": run_decay,
    "witness": run_witness,
    "harmonic": run_harmonic,
}


def run(name: str, cfg: ExperimentConfig) -> list[ExperimentResult]:
    cache = ModelCache(cfg)
    names = list(RUNNERS) if name == "all" else [name]
    return [RUNNERS[k](cfg, cache) for k in names]
