"""Experiment registry, configuration and table output.

Every experiment is a function ``(params) -> (ResultTable, ok)`` registered
under a CLI name together with its default parameters. ``ok`` is False when
a solve that the experiment depends on did not converge.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from paradiag import spectral
from paradiag.direct import (chebyshev_eigen, closed_form_eigen, cond2, direct_solve_geometric,
                             direct_solve_hybrid, direct_solve_wave_hybrid)
from paradiag.iterative import (assemble_theta_nonlinear, contraction_bound, nonlinear_newton_solve,
                                wr_solve)
from paradiag.optctrl import optctrl_solve
from paradiag.parareal import classical_parareal, pint_cgc_parareal
from paradiag.problems import laplacian_1d_dirichlet, make_problem
from paradiag.spectral import AlphaCirculantPair, alpha_circulant_spectrum, shifted_block_solve
from paradiag.timedisc import (assemble_hybrid_second_order, assemble_hybrid_system,
                               assemble_leapfrog_system, assemble_optctrl_system, assemble_theta_system,
                               geometric_grid, hybrid_matrix, sequential_solve, uniform_grid)
from paradiag.wave import check_spectrum_theorem, linf_l2_error, spectrum_probe, wave_gmres_solve

COMMON_DEFAULTS = {"threads": 1, "seed": 0, "out": "results", "plot": True}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# tables


@dataclass
class ResultTable:
    """Row-major table with a fixed column list."""

    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append([values.get(c, "") for c in self.columns])

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def add_order(self, error: str = "error", order: str = "order", group: tuple = ()):
        """Fill ``order`` with ``log2(e_prev / e)`` between consecutive rows of a group."""
        ie, io_ = self.columns.index(error), self.columns.index(order)
        gi = [self.columns.index(g) for g in group]
        last = {}
        for r in self.rows:
            key = tuple(r[i] for i in gi)
            e = r[ie]
            prev = last.get(key)
            r[io_] = math.log2(prev / e) if prev and e and prev > 0 and e > 0 else ""
            last[key] = e

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        columns = next(reader, [])
        return cls(list(columns), [[_parse_cell(v) for v in row] for row in reader])

    def __str__(self) -> str:
        cells = [self.columns] + [[_fmt(v) for v in r] for r in self.rows]
        widths = [max(len(str(row[i])) for row in cells) for i in range(len(self.columns))]
        return "\n".join("  ".join(str(v).rjust(w) for v, w in zip(row, widths)) for row in cells)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))   # shortest round-trip form
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _parse_cell(s: str):
    if s in ("true", "false"):
        return s == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict

    @property
    def threads(self) -> int:
        return self.params["threads"]

    @property
    def seed(self) -> int:
        return self.params["seed"]

    @property
    def out(self) -> str:
        return self.params["out"]


def _convert(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    try:
        if isinstance(default, bool):
            if s.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(s)
            return s.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        if isinstance(default, tuple):
            items = [x.strip() for x in s.split(",") if x.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(x) for x in items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return s


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def make_config(experiment: str, overrides: dict | None = None) -> ExperimentConfig:
    if experiment not in REGISTRY:
        raise ConfigError(f"experiment: unknown {experiment!r}; expected one of {sorted(REGISTRY)}")
    defaults = {**COMMON_DEFAULTS, **REGISTRY[experiment].defaults}
    params = dict(defaults)
    for k, v in (overrides or {}).items():
        if k not in defaults:
            raise ConfigError(f"{k}: unknown key for {experiment}")
        params[k] = _convert(k, v, defaults[k])
    if params["threads"] < 1:
        raise ConfigError("threads: must be >= 1")
    for k, v in params.items():
        if isinstance(v, tuple) and not v and defaults[k]:
            raise ConfigError(f"{k}: empty list")
    return ExperimentConfig(experiment, params)


# ---------------------------------------------------------------------------
# plotting


def _plot(path: str, series: list, xlabel: str, ylabel: str, logx=False, logy=True, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for x, y, label, style in series:
        ax.plot(x, y, style, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(s[2] for s in series):
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class Experiment:
    name: str
    fn: Callable
    defaults: dict
    doc: str


REGISTRY: dict[str, Experiment] = {}


def experiment(name: str, **defaults):
    def deco(fn):
        REGISTRY[name] = Experiment(name, fn, defaults, (fn.__doc__ or "").strip().splitlines()[0])
        return fn

    return deco


def _plot_path(p, name):
    return os.path.join(p["out"], f"{name}.svg") if p["plot"] else None


@experiment("ade-direct", nu=1e-2, dx=1 / 64, nt=16, tau=1.2, dt_last=1e-2, thetas=(1.0, 0.5))
def _ade_direct(p):
    """Geometric-step ParaDiag-I on the 1D advection-diffusion equation vs sequential stepping."""
    t = ResultTable(["theta", "nt", "tau", "rel_error", "cond_V", "cond_V_scaled", "time"])
    prob = make_problem("ade1d", nu=p["nu"], dx=p["dx"])
    grid = geometric_grid(p["tau"], p["dt_last"], p["nt"])
    for theta in p["thetas"]:
        s = assemble_theta_system(theta, grid, prob.operator, prob.u0)
        eig = closed_form_eigen(theta, p["tau"], p["nt"], grid)
        u, rep = direct_solve_geometric(s, eig, workers=p["threads"])
        ref = sequential_solve(s)
        t.add(theta=theta, nt=p["nt"], tau=p["tau"], rel_error=float(np.linalg.norm(u - ref) / np.linalg.norm(ref)),
              cond_V=cond2(eig.V()), cond_V_scaled=cond2(eig.V(True)), time=rep.wall_time)
    return t, True


@experiment("ade-hybrid", nu=1e-2, dx=1 / 64, T=2.0, nts=(32, 256))
def _ade_hybrid(p):
    """Hybrid midpoint/backward-Euler ParaDiag-I on the 1D advection-diffusion equation."""
    t = ResultTable(["nt", "rel_error", "cond_V", "imag_residue", "time"])
    prob = make_problem("ade1d", nu=p["nu"], dx=p["dx"], T=p["T"])
    for nt in p["nts"]:
        dt = p["T"] / nt
        s = assemble_hybrid_system(nt, dt, prob.operator, prob.u0)
        eig = chebyshev_eigen(nt, dt)
        u, rep = direct_solve_hybrid(s, eig, workers=p["threads"])
        ref = sequential_solve(s)
        t.add(nt=nt, rel_error=float(np.linalg.norm(u - ref) / np.linalg.norm(ref)), cond_V=eig.cond,
              imag_residue=rep.info.get("imag_residue", 0.0), time=rep.wall_time)
    return t, True


@experiment("wave-hybrid-order", meshes=(16, 32, 64), T=2.0)
def _wave_hybrid_order(p):
    """Second-order hybrid ParaDiag-I for the 2D wave equation: error and observed order."""
    t = ResultTable(["mesh", "nt", "error", "order", "time"])
    for n in p["meshes"]:
        prob = make_problem("wave2d_hybrid", n=n, T=p["T"])
        nt = 2 * n
        dt = p["T"] / nt
        s = assemble_hybrid_second_order(nt, dt, prob.operator, prob.u0, prob.u1, prob.forcing)
        u, rep = direct_solve_wave_hybrid(s, chebyshev_eigen(nt, dt), workers=p["threads"])
        err = max(float(np.abs(u[k] - prob.exact((k + 1) * dt)).max()) for k in range(nt))
        t.add(mesh=f"({n},{n},{nt})", nt=nt, error=err, time=rep.wall_time)
    t.add_order()
    return t, True


@experiment("ade-wr", nus=(1e-2, 1e-4), dx=1 / 64, T=2.0, theta=0.5, alpha=1e-2, tol=1e-13, maxit=15,
            initial="random")
def _ade_wr(p):
    """Waveform-relaxation ParaDiag-II on the 1D advection-diffusion equation: error per iteration."""
    t = ResultTable(["nu", "iteration", "error", "contraction", "bound"])
    nt = int(round(p["T"] / p["dx"]))
    scheme = "tr" if p["theta"] == 0.5 else "be"
    bound = contraction_bound(scheme, p["alpha"]).rho
    series = []
    for nu in p["nus"]:
        prob = make_problem("ade1d", nu=nu, dx=p["dx"], T=p["T"])
        s = assemble_theta_system(p["theta"], uniform_grid(p["T"] / nt, nt), prob.operator, prob.u0)
        _, rep = wr_solve(s, p["alpha"], tol=p["tol"], maxit=p["maxit"], initial_guess=p["initial"],
                          seed=p["seed"], reference="sequential", workers=p["threads"])
        e = rep.error_history
        for k, ek in enumerate(e):
            t.add(nu=nu, iteration=k, error=ek, contraction=(ek / e[k - 1] if k and e[k - 1] > 0 else ""),
                  bound=bound)
        series.append((range(len(e)), e, f"nu={nu:g}", "o-"))
    t.meta["bound"] = bound
    if _plot_path(p, "ade-wr"):
        _plot(_plot_path(p, "ade-wr"), series, "iteration", "max error")
    return t, True


@experiment("ade2d-wr", nus=(1.0, 1e-2, 1e-4), dx=1 / 64, nt=128, thetas=(1.0, 0.5), alpha=0.02, tol=1e-6,
            maxit=30, stop="increment")
def _ade2d_wr(p):
    """Iteration counts of ParaDiag-II (B-E and TR) on the 2D advection-diffusion equation."""
    t = ResultTable(["nu", "scheme", "iterations", "converged", "time"])
    ok = True
    for nu in p["nus"]:
        prob = make_problem("ade2d", nu=nu, dx=p["dx"])
        for theta in p["thetas"]:
            s = assemble_theta_system(theta, uniform_grid(p["dx"], p["nt"]), prob.operator, prob.u0)
            _, rep = wr_solve(s, p["alpha"], tol=p["tol"], maxit=p["maxit"], stop=p["stop"],
                              workers=p["threads"])
            ok &= rep.converged
            t.add(nu=nu, scheme="B-E" if theta == 1 else "TR", iterations=rep.iterations,
                  converged=rep.converged, time=rep.wall_time)
    return t, ok


@experiment("parareal-compare", nu=0.1, T=4.0, dx=1 / 64, dT=1 / 16, J=32, F="radau_iia3",
            alphas=(0.05, 0.1, 0.2, 0.3), tol=1e-10, maxit=40, initial="random")
def _parareal_compare(p):
    """Classical parareal against parareal with the parallel coarse-grid correction."""
    t = ResultTable(["variant", "alpha", "iterations", "final_error", "time"])
    prob = make_problem("ade1d", nu=p["nu"], dx=p["dx"], T=p["T"])
    kw = dict(F=p["F"], tol=p["tol"], maxit=p["maxit"], initial=p["initial"], seed=p["seed"],
              workers=p["threads"])
    _, rep = classical_parareal(prob, p["dT"], p["J"], **kw)
    ok = rep.converged
    t.add(variant="classical", alpha="", iterations=rep.iterations, final_error=rep.error_history[-1],
          time=rep.wall_time)
    series = [(range(len(rep.error_history)), rep.error_history, "classical", "k-o")]
    for a in p["alphas"]:
        _, r = pint_cgc_parareal(prob, p["dT"], p["J"], a, **kw)
        t.add(variant="pint_cgc", alpha=a, iterations=r.iterations, final_error=r.error_history[-1],
              time=r.wall_time)
        series.append((range(len(r.error_history)), r.error_history, f"alpha={a:g}", "--"))
    if _plot_path(p, "parareal-compare"):
        _plot(_plot_path(p, "parareal-compare"), series, "iteration", "max error")
    return t, ok


@experiment("wave-gmres", meshes=(32, 64), alphas=(0.1, 1.0), T=2.0, tol=1e-10, maxit=100,
            exploit_symmetry=False)
def _wave_gmres(p):
    """GMRES with the alpha-circulant preconditioner for the 2D leap-frog wave equation."""
    t = ResultTable(["mesh", "alpha", "iterations", "error", "order", "time"])
    ok = True
    for a in p["alphas"]:
        for n in p["meshes"]:
            prob = make_problem("wave2d_leapfrog", n=n, T=p["T"])
            nt = n + 1
            dt = p["T"] / nt
            s = assemble_leapfrog_system(nt, dt, prob.operator, prob.u0, prob.u1, prob.forcing)
            u, rep = wave_gmres_solve(s, a, tol=p["tol"], maxit=p["maxit"],
                                      exploit_symmetry=p["exploit_symmetry"], workers=p["threads"])
            ok &= rep.converged
            t.add(mesh=f"({n},{n},{nt})", alpha=a, iterations=rep.iterations,
                  error=linf_l2_error(u, prob.exact, dt, prob.dx), time=rep.wall_time)
    t.add_order(group=("alpha",))
    return t, ok


@experiment("optctrl", meshes=(16, 32), gammas=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10), T=2.0, tol=1e-7, maxit=100)
def _optctrl(p):
    """Preconditioned GMRES for the wave optimal-control problem."""
    t = ResultTable(["mesh", "gamma", "iterations", "state_error", "adjoint_error", "time"])
    ok = True
    for n in p["meshes"]:
        for g in p["gammas"]:
            prob = make_problem("optctrl2d", n=n, gamma=g, T=p["T"])
            nt = n + 1
            dt = p["T"] / nt
            s = assemble_optctrl_system(nt, dt, prob.operator, g, prob.u0, prob.u1, prob.forcing, prob.target)
            u, adj, _, rep = optctrl_solve(s, tol=p["tol"], maxit=p["maxit"], workers=p["threads"])
            ok &= rep.converged
            eu = max(float(np.abs(u[k] - prob.exact((k + 1) * dt)).max()) for k in range(nt))
            ep = max(float(np.abs(adj[k] - prob.exact_adjoint(k * dt)).max()) for k in range(nt))
            t.add(mesh=f"({n},{n},{nt})", gamma=g, iterations=rep.iterations, state_error=eu,
                  adjoint_error=ep, time=rep.wall_time)
    return t, ok


@experiment("cond-study", nts=(8, 16, 32, 64, 128, 256, 512), dt=0.1)
def _cond_study(p):
    """Condition number of the hybrid-scheme eigenvector matrix against nt."""
    t = ResultTable(["nt", "cond", "eig_residual"])
    for nt in p["nts"]:
        eig = chebyshev_eigen(nt, p["dt"])
        B = hybrid_matrix(nt, p["dt"]).toarray()
        res = np.linalg.norm(B @ eig.V - eig.V * eig.eigvals) / np.linalg.norm(B)
        t.add(nt=nt, cond=eig.cond, eig_residual=float(res))
    nts = np.array(t.column("nt"), dtype=float)
    conds = np.array(t.column("cond"))
    t.meta["slope"] = float(np.polyfit(np.log(nts), np.log(conds), 1)[0]) if len(nts) > 1 else float("nan")
    if _plot_path(p, "cond-study"):
        _plot(_plot_path(p, "cond-study"), [(nts, conds, "Cond2(V)", "o-"), (nts, nts**2, "nt^2", "k:")],
              "nt", "condition number", logx=True)
    return t, True


@experiment("spectrum-probe", nx=16, nt=12, alphas=(0.1, 0.3, 0.5))
def _spectrum_probe(p):
    """Dense spectrum of the preconditioned 1D leap-frog system against the closed form."""
    t = ResultTable(["alpha", "n_unit", "expected_unit", "min_dist", "max_dist", "annulus_lo", "annulus_hi",
                     "match_error", "holds"])
    A = laplacian_1d_dirichlet(p["nx"])
    s = assemble_leapfrog_system(p["nt"], 1.0 / p["nt"], A, np.zeros(p["nx"]), np.zeros(p["nx"]))
    series = []
    for a in p["alphas"]:
        ev = spectrum_probe(s, a)
        chk = check_spectrum_theorem(s, a, ev)
        d = np.abs(ev - 1)
        rest = d[d > 1e-9]
        t.add(alpha=a, n_unit=chk.n_unit, expected_unit=chk.expected_unit,
              min_dist=float(rest.min()) if rest.size else "", max_dist=float(rest.max()) if rest.size else "",
              annulus_lo=chk.annulus[0], annulus_hi=chk.annulus[1], match_error=chk.max_match_error,
              holds=chk.holds)
        series.append((ev.real, ev.imag, f"alpha={a:g}", "."))
    if _plot_path(p, "spectrum-probe"):
        _plot(_plot_path(p, "spectrum-probe"), series, "Re", "Im", logy=False)
    return t, True


@experiment("nonlinear-demo", nt=32, T=1.0, u0=1.0, alpha=1e-2, theta=1.0, newton_tol=1e-12, maxit=50)
def _nonlinear_demo(p):
    """Simplified Newton with averaged Jacobians for u' = -u^3."""
    t = ResultTable(["averaging", "iterations", "converged", "error_vs_sequential"])
    grid = uniform_grid(p["T"] / p["nt"], p["nt"])
    s = assemble_theta_nonlinear(p["theta"], grid, lambda u: u**3, lambda u: np.diag(3 * u**2), [p["u0"]])
    ref = sequential_newton_reference(p["theta"], p["T"] / p["nt"], p["nt"], p["u0"])
    ok = True
    for av in ("mean_jacobian", "jacobian_of_mean"):
        u, rep = nonlinear_newton_solve(s, av, alpha=p["alpha"], newton_tol=p["newton_tol"], maxit=p["maxit"])
        ok &= rep.converged
        t.add(averaging=av, iterations=rep.iterations, converged=rep.converged,
              error_vs_sequential=float(np.abs(u.ravel() - ref).max()))
    return t, ok


def sequential_newton_reference(theta, dt, nt, u0, tol=1e-15, maxit=100) -> np.ndarray:
    """Step-by-step theta method for ``u' = -u^3`` with a full Newton solve per step."""
    out = np.zeros(nt)
    v = float(u0)
    for n in range(nt):
        w = v
        for _ in range(maxit):
            g = (w - v) / dt + theta * w**3 + (1 - theta) * v**3
            dw = g / (1 / dt + 3 * theta * w**2)
            w -= dw
            if abs(dw) <= tol * max(1.0, abs(w)):
                break
        out[n] = v = w
    return out


@experiment("scaling-bench", nt=256, n=64, thread_counts=(1, 2, 4), repeats=1, nu=1e-2)
def _scaling_bench(p):
    """Wall time of the independent shifted solves at several thread counts."""
    return scaling_bench(p), True


def scaling_bench(p) -> ResultTable:
    """Time the shifted-solve stage of the diagonalization (factor and solve
    ``nt`` shifted systems of size ``n^2``) for each thread count. Speedup is ``CT(1)/CT(s)``;
    ``max_diff`` compares each solution with the single-thread one.
    """
    prob = make_problem("ade2d", nu=p["nu"], dx=1.0 / p["n"])
    nt, nx = p["nt"], prob.nx
    dt = 1.0 / p["n"]
    c1 = np.zeros(nt)
    c2 = np.zeros(nt)
    c1[0], c1[1], c2[0] = 1 / dt, -1 / dt, 1.0
    spec = alpha_circulant_spectrum(AlphaCirculantPair(c1, c2, 0.02))
    rng = np.random.default_rng(p["seed"])
    rhs = rng.standard_normal((nt, nx)) + 1j * rng.standard_normal((nt, nx))
    t = ResultTable(["threads", "time", "speedup", "max_diff"])
    base_time, base = None, None
    for s in p["thread_counts"]:
        best = np.inf
        for _ in range(max(1, p["repeats"])):
            t0 = time.perf_counter()
            x = shifted_block_solve(spec, None, prob.operator, rhs, workers=s)
            best = min(best, time.perf_counter() - t0)
        if base is None:
            base_time, base = best, x
        t.add(threads=s, time=best, speedup=base_time / best,
              max_diff=float(np.abs(x - base).max() / np.abs(base).max()))
    t.meta.update(nt=nt, nx=nx, cpus=os.cpu_count())
    return t


# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> tuple[ResultTable, bool]:
    """Run one experiment; write ``<out>/<name>.csv`` (and a plot) when ``write``."""
    exp = REGISTRY[cfg.experiment]
    params = dict(cfg.params)
    if write:
        os.makedirs(params["out"], exist_ok=True)
    else:
        params["plot"] = False
    old = spectral.get_num_workers()
    spectral.set_num_workers(params["threads"])
    try:
        table, ok = exp.fn(params)
    finally:
        spectral.set_num_workers(old)
    table.meta.setdefault("seed", params["seed"])
    if write:
        table.write_csv(os.path.join(params["out"], f"{cfg.experiment}.csv"))
    return table, ok


def run_experiments(cfgs: list) -> tuple[ResultTable, bool]:
    """Run several experiments; the summary table lists each with its status."""
    summary = ResultTable(["experiment", "rows", "ok"])
    all_ok = True
    for cfg in cfgs:
        table, ok = run_experiment(cfg)
        summary.add(experiment=cfg.experiment, rows=len(table), ok=ok)
        all_ok &= ok
    return summary, all_ok


def describe() -> str:
    lines = ["common: " + ", ".join(f"{k}={_fmt_default(v)}" for k, v in COMMON_DEFAULTS.items())]
    for name, exp in REGISTRY.items():
        lines.append(f"\n{name}: {exp.doc}")
        for k, v in exp.defaults.items():
            lines.append(f"  {k} = {_fmt_default(v)}")
    return "\n".join(lines)


def _fmt_default(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return _fmt(v)
