"""Scenario runner: synthesis, simulation, fitting, comparison and file output."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controller import BoundaryFeedbackController
from .eigenbasis import (
    enumerate_modes,
    eigen_residual,
    eval_eigenfunction,
    gram_condition,
    gram_matrix,
    mass_matrix,
    normal_derivative_trace,
)
from .exceptions import DegenerateController, GBHError
from .fitting import fit_decay_rate
from .lifting import duality_target, verify_duality
from .memory_pde import IMEXIntegrator, manufactured_steady_state, solve_steady_state
from .mode_analysis import mode_table, predict_decay, simulate_mode_ode, spectral_abscissa
from .params import RunConfig, build_grid, load_config

log = logging.getLogger(__name__)

KINDS = ("synthesize", "simulate-linear", "simulate-nonlinear", "analyze-modes", "validate",
         "compare")


@dataclass
class Scenario:
    kind: str
    config: Path
    out: Path
    seed: int = 0
    target: str = "all"
    nonlinear: bool = False


@dataclass
class RunArtifacts:
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    report: str = ""
    ok: bool = True


# helpers -------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def random_field(g, seed, n_modes=6, normalize=True):
    """Seeded truncated eigen-expansion."""
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(n_modes)
    w = sum(c * eval_eigenfunction(m, g) for c, m in zip(coef, enumerate_modes(g.domain, n_modes)))
    return w / g.norm(w) if normalize else w


def initial_field(cfg: RunConfig, g, seed):
    sim = cfg.simulation
    kind = sim.get("initial", "random")
    amp = sim.get("amplitude", 1.0)
    if kind == "random":
        return amp * random_field(g, seed)
    if kind.startswith("phi"):
        rank = int(kind[3:] or 1)
        return amp * eval_eigenfunction(enumerate_modes(g.domain, rank)[-1], g)
    raise GBHError(f"unknown initial field '{kind}' (use random or phiN)")


def controller_from(cfg: RunConfig, g):
    c = cfg.controller
    ctrl = BoundaryFeedbackController(
        omega=c.get("omega", 6.0),
        epsilon=c.get("epsilon", 0.1),
        k=c.get("k", None),
        n_modes=c.get("n_modes"),
        gram_cond_max=c.get("gram_cond_max", 1e8),
    )
    return ctrl.fit(g, cfg.params)


def trajectory_rows(tr):
    cols = tr.columns()
    return list(cols), list(zip(*cols.values()))


def fit_window(cfg, t_end):
    sim = cfg.simulation
    return (sim.get("fit_start", 0.2 * t_end), sim.get("fit_end", t_end))


# operations ----------------------------------------------------------------


def compare_open_closed(cfg: RunConfig, g=None, seed=0, nonlinear=False, w0=None):
    """Fit decay rates of the open loop (u = 0) and of the feedback loop from the same data."""
    g = g or build_grid(cfg.domain, cfg.nx, cfg.ny)
    notes = []
    try:
        ctrl = controller_from(cfg, g)
    except DegenerateController:
        # nothing needs control at this omega; still run with the fundamental mode
        cfg = replace(cfg, controller={**cfg.controller, "n_modes": 1})
        ctrl = controller_from(cfg, g)
        notes.append("no mode requires control; running with the fundamental mode only")
    p = cfg.params
    dt = cfg.simulation.get("dt", 1e-3)
    t_end = cfg.simulation.get("t_end", 3.0)
    every = max(1, int(round(0.01 / dt)))
    w0 = initial_field(cfg, g, seed) if w0 is None else w0
    window = fit_window(cfg, t_end)
    open_tr = IMEXIntegrator(p, g, dt, None, nonlinear=nonlinear).run(w0, t_end, every, n_amplitudes=3)
    closed_tr = IMEXIntegrator(p, g, dt, ctrl, shifted=True, nonlinear=nonlinear).run(w0, t_end, every)
    open_fit = fit_decay_rate(open_tr.t, open_tr.l2, window)
    closed_fit = fit_decay_rate(closed_tr.t, closed_tr.l2, window)
    free_rate = p.eta * ctrl.lambda1_ + p.beta * p.gamma
    if ctrl.spec_.omega <= free_rate:
        notes.append(f"controller unnecessary at this omega (open-loop mode rate {free_rate:.4g})")
    return {
        "controller": ctrl,
        "open": open_fit,
        "closed": closed_fit,
        "open_trajectory": open_tr,
        "closed_trajectory": closed_tr,
        "closed_exceeds_open": closed_fit.rate > open_fit.rate,
        "notes": notes,
    }


def is_stable_run(p, g, ctrl, w0, dt, t_end, window, min_rate, y_inf=None, check_dt=False):
    """True when the scaled nonlinear closed loop finishes and decays at ``min_rate`` or faster.

    With ``check_dt=False`` the run is attempted even above the explicit step
    ceiling, so failure means the computed trajectory itself lost decay.
    """
    try:
        tr = IMEXIntegrator(p, g, dt, ctrl, shifted=True, nonlinear=True, y_inf=y_inf).run(
            w0, t_end, max(1, int(round(0.01 / dt))), check_dt=check_dt
        )
        fit = fit_decay_rate(tr.t, tr.l2, window)
    except (GBHError, ValueError) as exc:
        log.info("run with |w0|=%.3g failed: %s", g.norm(w0), exc)
        return False
    return fit.rate >= min_rate


def smallness_threshold(p, g, ctrl, direction, lo, hi, dt=1e-3, t_end=2.0, window=(0.4, 2.0),
                        min_rate=None, iters=8, check_dt=False):
    """Bisect on ||w0|| along ``direction`` for the loss of nonlinear decay.

    Requires ``lo`` stable and ``hi`` unstable; returns ``(lo, hi)`` after
    ``iters`` halvings (geometric midpoints).
    """
    direction = direction / g.norm(direction)
    min_rate = 0.9 * ctrl.spec_.omega if min_rate is None else min_rate

    def stable(a):
        return is_stable_run(p, g, ctrl, a * direction, dt, t_end, window, min_rate,
                             check_dt=check_dt)

    if not stable(lo):
        raise GBHError(f"lower bracket {lo:g} is not stable")
    if stable(hi):
        raise GBHError(f"upper bracket {hi:g} is still stable")
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def validation_suite(cfg: RunConfig, g=None):
    """Run the module-level checks; returns a list of (name, passed, detail)."""
    g = g or build_grid(cfg.domain, cfg.nx, cfg.ny)
    p = cfg.params
    results = []
    modes = enumerate_modes(g.domain, 8)
    res = [eigen_residual(m, g) / m.lam for m in modes]
    results.append(("eigen residual <= 1e-2 lambda", max(res) <= 1e-2, f"max {max(res):.3g}"))
    orth = np.abs(mass_matrix(modes, g) - np.eye(len(modes))).max()
    h2 = max(g.h) ** 2
    results.append(("orthonormality within 10 h^2", orth <= 10 * h2, f"{orth:.3g}"))
    ctrl = controller_from(cfg, g)
    bio = np.array([[phi.inner(dn) for dn in ctrl.dn_traces_] for phi in ctrl.phi_traces_])
    bdef = np.abs(bio - np.eye(ctrl.n_modes_)).max()
    results.append(("biorthogonality within 10 h^2", bdef <= 10 * h2, f"{bdef:.3g}"))
    M = verify_duality(ctrl)
    ddef = np.abs(M - duality_target(ctrl)).max()
    results.append(("duality defect <= 5e-3", ddef <= 5e-3, f"{ddef:.3g}"))
    results.append(("gain conditions", ctrl.conditions_.passed, f"omega0 {ctrl.omega0_:.6g}"))
    pred = predict_decay(ctrl, p)
    results.append(("all mode abscissas negative", pred.alpha > 0, f"alpha {pred.alpha:.4g}"))
    worst = 0.0
    for ms in pred.systems:
        t, z, _ = simulate_mode_ode(ms, 1.0, 1e-3, 5.0)
        from .fitting import fit_envelope_rate
        fit = fit_envelope_rate(t, z, (1.0, 5.0))
        worst = max(worst, abs(fit.rate + spectral_abscissa(ms)) / abs(spectral_abscissa(ms)))
    results.append(("mode ODE rates match abscissas within 2%", worst <= 0.02, f"{worst:.3g}"))
    return results


# scenario dispatch ---------------------------------------------------------


def run_scenario(s: Scenario) -> RunArtifacts:
    if s.kind not in KINDS:
        raise GBHError(f"unknown scenario '{s.kind}'")
    cfg = load_config(s.config)
    out = Path(s.out)
    out.mkdir(parents=True, exist_ok=True)
    g = build_grid(cfg.domain, cfg.nx, cfg.ny)
    art = RunArtifacts()
    lines = [f"scenario: {s.kind}", f"config: {s.config}", f"seed: {s.seed}", f"grid: {g}"]
    handler = _HANDLERS[s.kind]
    handler(s, cfg, g, out, art, lines)
    report = out / "report.txt"
    report.write_text("\n".join(lines) + "\n")
    art.files.append(report)
    art.report = "\n".join(lines)
    return art


def _synthesize(s, cfg, g, out, art, lines):
    ctrl = controller_from(cfg, g)
    p = cfg.params
    systems = mode_table(ctrl, p)[: ctrl.n_modes_]
    rows = [
        (j + 1, ctrl.lambdas_[j], ctrl.mu_[j], ms.A, ms.B, ctrl.omega0_, ctrl.gram_cond_)
        for j, ms in enumerate(systems)
    ]
    art.files.append(write_csv(out / "controller.csv",
                               ["j", "lambda", "mu", "A", "B", "omega0", "gram_condition"], rows))
    lines += [
        f"omega = {ctrl.spec_.omega:g}, epsilon = {ctrl.spec_.epsilon:g}, k = {ctrl.spec_.k:g}",
        f"N_omega = {ctrl.n_omega_}, controlled modes = {ctrl.n_modes_}",
        f"modes (m, n): {[(m.m, m.n) for m in ctrl.modes_]}",
        f"mu = {np.array2string(ctrl.mu_, precision=6)}",
        f"gram condition = {ctrl.gram_cond_:.6g}",
        ctrl.conditions_.describe(),
        "controller.csv columns: j, lambda, mu, A, B, omega0, gram_condition",
    ]
    art.summary.update(n_modes=ctrl.n_modes_, omega0=ctrl.omega0_, k=ctrl.spec_.k)


def _simulate(s, cfg, g, out, art, lines, nonlinear):
    ctrl = controller_from(cfg, g)
    p = cfg.params
    dt = cfg.simulation.get("dt", 1e-3)
    t_end = cfg.simulation.get("t_end", 3.0)
    every = cfg.simulation.get("record_every", max(1, int(round(0.01 / dt))))
    y_inf = None
    if nonlinear and cfg.steady_amplitude:
        y_star, f_s = manufactured_steady_state(cfg.steady_amplitude, p, g)
        steady = solve_steady_state(f_s, p, g)
        y_inf = steady.y_inf
        lines.append(f"steady state: Newton residual {steady.residual:.3g} in {steady.iterations} "
                     f"iterations, |y_inf - y*|_max = {np.abs(y_inf - y_star).max():.3g}")
    w0 = initial_field(cfg, g, s.seed)
    tr = IMEXIntegrator(p, g, dt, ctrl, shifted=True, nonlinear=nonlinear, y_inf=y_inf).run(
        w0, t_end, every)
    header, rows = trajectory_rows(tr)
    art.files.append(write_csv(out / "trajectory.csv", header, rows))
    fit = fit_decay_rate(tr.t, tr.l2, fit_window(cfg, t_end))
    target = ctrl.spec_.omega
    lines += [
        f"{'nonlinear' if nonlinear else 'linear'} closed loop, omega = {target:g}, dt = {dt:g}",
        f"fitted rate = {fit.rate:.6g} over {fit.window}, r2 = {fit.r2:.6f}",
        f"rate >= 0.95 omega: {fit.rate >= 0.95 * target}",
        "trajectory.csv columns: " + ", ".join(header)
        + " (norms of the unscaled fluctuation; l2_shifted is the integrated exp(omega t) variable)",
    ]
    art.summary.update(rate=fit.rate, r2=fit.r2)


def _analyze(s, cfg, g, out, art, lines):
    ctrl = controller_from(cfg, g)
    pred = predict_decay(ctrl, cfg.params)
    rows = [
        (ms.i, ms.lam, ms.A, ms.B, a, "controlled" if ms.controlled else "tail")
        for ms, a in zip(pred.systems, pred.abscissas)
    ]
    art.files.append(write_csv(out / "modes.csv",
                               ["i", "lambda", "A", "B", "abscissa", "kind"], rows))
    lines += [
        f"predicted shifted decay alpha = {pred.alpha:.6g} (limiting mode {pred.limiting_mode.i})",
        f"predicted total rate omega + alpha = {pred.total_rate:.6g}",
        "modes.csv columns: i, lambda, A, B, abscissa, kind",
    ]
    art.summary.update(alpha=pred.alpha)


def _validate(s, cfg, g, out, art, lines):
    if s.target in ("eigen", "all"):
        modes = enumerate_modes(g.domain, 8)
        traces = []
        rows = []
        for m in modes:
            traces.append(normal_derivative_trace(m, g))
            rows.append((m.rank, m.m, m.n, m.lam, eigen_residual(m, g),
                         gram_condition(gram_matrix(traces))))
        art.files.append(write_csv(out / "eigen.csv",
                                   ["rank", "m", "n", "lambda", "residual", "gram_condition"], rows))
        lines.append("eigen.csv: gram_condition is that of modes 1..rank")
    if s.target in ("lift", "all"):
        ctrl = controller_from(cfg, g)
        M = verify_duality(ctrl)
        T = duality_target(ctrl)
        rows = [(i + 1, j + 1, M[i, j], T[i, j]) for i in range(len(M)) for j in range(len(M))]
        art.files.append(write_csv(out / "duality.csv", ["i", "j", "value", "target"], rows))
        defect = float(np.abs(M - T).max())
        lines.append(f"duality defect (max norm) = {defect:.6g}")
        art.summary["duality_defect"] = defect
    if s.target == "all":
        results = validation_suite(cfg, g)
        for name, ok, detail in results:
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        art.ok = all(ok for _, ok, _ in results)
        art.files.append(write_csv(out / "validation.csv", ["check", "passed", "detail"], results))


def _compare(s, cfg, g, out, art, lines):
    res = compare_open_closed(cfg, g, s.seed, nonlinear=s.nonlinear)
    for name in ("open", "closed"):
        header, rows = trajectory_rows(res[f"{name}_trajectory"])
        art.files.append(write_csv(out / f"{name}.csv", header, rows))
    lines += [
        f"open-loop fitted rate = {res['open'].rate:.6g} (r2 {res['open'].r2:.4f})",
        f"closed-loop fitted rate = {res['closed'].rate:.6g} (r2 {res['closed'].r2:.4f})",
        f"closed exceeds open: {res['closed_exceeds_open']}",
        *res["notes"],
    ]
    art.ok = res["closed_exceeds_open"]
    art.summary.update(open=res["open"].rate, closed=res["closed"].rate)


_HANDLERS = {
    "synthesize": _synthesize,
    "simulate-linear": lambda *a: _simulate(*a, nonlinear=False),
    "simulate-nonlinear": lambda *a: _simulate(*a, nonlinear=True),
    "analyze-modes": _analyze,
    "validate": _validate,
    "compare": _compare,
}
