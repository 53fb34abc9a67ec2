"""Acceptance suites: property checks and scaled-down reproductions of the reference runs.

Every check is fail-soft: exceptions become failed report entries.
"""
import logging
import tempfile
from dataclasses import asdict, dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .config import RunConfig, Settings, load_settings
from .diagnostics import find_peaks, fit_lump, gradient_ratio
from .errors import ConfigurationError
from .harness import RunResult, run_experiment
from .integrator import integrate, zero_nonlinearity
from .model import (
    KPParams, a_sech2, gaussian_dxx, l2_norm, linear_propagate, lump, perturbation_pair,
    project_constraint, sw_residual, zaitsev,
)
from .presets import get_preset, zaitsev_ly
from .spectral import Field, make_grid, to_physical, to_spectral
from .storage import load_snapshot, save_snapshot

logger = logging.getLogger("kp_spectral.verify")


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    limit: Optional[str] = None
    detail: str = ""
    seconds: float = 0.0


@dataclass
class VerifyContext:
    """Where run-based checks write their outputs."""
    out_dir: Path
    settings: Settings

    def run(self, cfg: RunConfig) -> RunResult:
        target = self.out_dir / (cfg.preset or "run")
        return run_experiment(replace(cfg, output_dir=target, write_snapshots=False), self.settings)


Check = Callable[[VerifyContext], CheckResult]


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a)))


# ============================================
# PART A: FAST PROPERTY CHECKS
# ============================================

def check_parseval(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(2.0, 1.0, 64, 32)
    u = np.random.default_rng(7).standard_normal(grid.shape)
    f = to_spectral(Field.from_physical(grid, u))
    physical = np.sum(u * u) * grid.cell_area
    spectral = np.sum(np.abs(f.spectral) ** 2) * grid.spectral_weight
    err = abs(physical - spectral) / physical
    return CheckResult("parseval", err <= 1e-12, err, "<= 1e-12")


def check_transform_round_trip(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(3.0, 2.0, 128, 64)
    u = gaussian_dxx(grid, 1.0).values()
    back = to_physical(Field.from_spectral(grid, to_spectral(Field.from_physical(grid, u)).spectral)).values()
    err = _max_abs(back - u) / _max_abs(u)
    return CheckResult("transform_round_trip", err <= 1e-13, err, "<= 1e-13")


def check_snapshot_round_trip(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(8.0, 8.0, 64, 32)
    f = a_sech2(grid, 12.0, 4.0, -5.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_snapshot(f, 1.25, Path(tmp) / "snap.kplb")
        g, t = load_snapshot(path)
    same = bool(np.array_equal(f.values(), g.values())) and t == 1.25 and g.grid == grid
    return CheckResult("snapshot_round_trip", same, detail="bit-exact payload and header")


def check_linear_exactness(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(4.0, 4.0, 64, 64)
    params = KPParams(p=1, epsilon=-1)
    u0 = project_constraint(gaussian_dxx(grid, 1.0, 1.0))
    exact = to_physical(linear_propagate(u0, 1.0, params)).values()
    errors = []
    for N_t in (10, 40):
        state = integrate(u0, 1.0, N_t, params, nonlinear=zero_nonlinearity).state
        errors.append(_max_abs(to_physical(state.u_hat).values() - exact))
    worst = max(errors)
    return CheckResult("linear_exactness", worst <= 1e-11, worst, "<= 1e-11",
                       detail=f"errors for N_t=10, 40: {errors}")


def convergence_order(stepper: str = "etdrk4", steps=(80, 160, 320)) -> float:
    """Observed order from three runs with halved dt (differences of successive solutions)."""
    grid = make_grid(6.0, 1.0, 256, 4)
    params = KPParams(p=1, epsilon=1)
    u0 = project_constraint(a_sech2(grid, 6.0, 2.0, -6.0))
    finals = [to_physical(integrate(u0, 1.0, n, params, stepper=stepper).state.u_hat).values() for n in steps]
    e1 = _max_abs(finals[0] - finals[1])
    e2 = _max_abs(finals[1] - finals[2])
    return float(np.log2(e1 / e2))


def check_convergence_order(ctx: VerifyContext) -> CheckResult:
    order = convergence_order()
    return CheckResult("convergence_order", abs(order - 4.0) <= 0.3, order, "4 +- 0.3")


def check_zero_modes(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(4.0, 4.0, 64, 64)
    params = KPParams(p=1, epsilon=-1)
    u0 = project_constraint(a_sech2(grid, 12.0, 4.0, -4.0) + perturbation_pair(grid, -4.0))
    worst = 0.0

    def watch(state) -> None:
        nonlocal worst
        u_hat = state.u_hat.coefficients()
        worst = max(worst, _max_abs(u_hat[grid.xi1 == 0, :]) / _max_abs(u_hat))

    integrate(u0, 0.2, 200, params, on_step=watch)
    return CheckResult("zero_modes_projected", worst <= 1e-12, worst, "<= 1e-12 relative")


def check_fit_lump(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(20.0, 20.0, 256, 256)
    c = 1.5
    x0, y0 = float(grid.x_nodes[140]), float(grid.y_nodes[100])
    f = lump(grid, c, x0, y0)
    fit = fit_lump(f, find_peaks(f)[0])
    err = abs(fit.c_fit - c) / c
    return CheckResult("fit_lump_recovers_c", err <= 1e-12, err, "<= 1e-12 relative")


def check_two_lump_peaks(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(20.0, 20.0, 256, 256)
    f = lump(grid, 1.0, float(grid.x_nodes[90]), float(grid.y_nodes[128])) \
        + lump(grid, 1.2, float(grid.x_nodes[170]), float(grid.y_nodes[128]))
    count = len(find_peaks(f, 0.3))
    return CheckResult("two_lump_peaks", count == 2, float(count), "== 2")


def check_kdv_residual(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(16.0, 1.0, 512, 4)
    c = 1.0
    psi = a_sech2(grid, 3.0 * c, c)
    rel = sw_residual(psi, c, KPParams(p=1, epsilon=-1)) / l2_norm(psi)
    return CheckResult("kdv_residual", rel <= 1e-10, rel, "<= 1e-10 relative")


# ============================================
# PART B: REFERENCE RUNS
# ============================================

def soliton_error(result: RunResult, amplitude: float = 12.0, c: float = 4.0) -> float:
    """
    L-infinity distance between the final field and the translated soliton.

    The run starts from the soliton minus its x-mean m; by Galilean
    invariance that state travels at c - m and keeps the offset -m.
    """
    cfg = result.config
    grid = cfg.grid
    x0 = float(cfg.initial[0].params["x0"])
    raw = a_sech2(grid, amplitude, c, x0).values()
    m = float(raw.mean())
    exact = project_constraint(a_sech2(grid, amplitude, c, x0 + (c - m) * result.final_time))
    return _max_abs(result.final.values() - to_physical(exact).values())


def zaitsev_error(result: RunResult) -> float:
    """
    L-infinity distance between the final field and the translated Zaitsev wave.

    The x-mean m of the wave is the same on every y line, so the projected
    state travels at c - m like the line soliton.
    """
    cfg = result.config
    term = cfg.initial[0].params
    alpha, beta, x0 = float(term["alpha"]), float(term["beta"]), float(term.get("x0", 0.0))
    grid = cfg.grid
    raw, c = zaitsev(grid, alpha, beta, x0)
    m = float(raw.values().mean())
    exact, _ = zaitsev(grid, alpha, beta, x0 + (c - m) * result.final_time)
    return _max_abs(result.final.values() - to_physical(project_constraint(exact)).values())


def _soliton_check(preset_name: str) -> Check:
    def check(ctx: VerifyContext) -> CheckResult:
        result = ctx.run(get_preset(preset_name))
        last = result.records[-1]
        err = soliton_error(result)
        ok = result.stop is None and last.delta <= 1e-6 and err <= 1e-5
        return CheckResult(f"{preset_name}", ok, last.delta, "delta <= 1e-6, linf error <= 1e-5",
                           detail=f"delta={last.delta:.3e}, linf error={err:.3e}, t={last.t:g}")
    check.__name__ = f"check_{preset_name.replace('-', '_')}"
    return check


def check_kp2_perturbed(ctx: VerifyContext) -> CheckResult:
    result = ctx.run(get_preset("kp2-perturbed-aligned"))
    last = result.records[-1]
    ok = result.stop is None and last.delta <= 1e-6
    return CheckResult("kp2_perturbed_aligned", ok, last.delta, "<= 1e-6", detail=f"t={last.t:g}")


def check_blowup(ctx: VerifyContext) -> CheckResult:
    result = ctx.run(get_preset("blowup-p2-reduced"))
    if result.stop is None:
        return CheckResult("blowup_p2_reduced", False, detail="run did not stop")
    t_stop = result.stop.t_stop
    ratio = gradient_ratio(result.final)
    ok = 0.040 <= t_stop <= 0.055 and ratio > 10.0
    return CheckResult("blowup_p2_reduced", ok, t_stop, "t_stop in [0.040, 0.055], gradient ratio > 10",
                       detail=f"stop={result.stop.kind.value}, t_stop={t_stop:.5f}, max|u_y|/max|u_x|={ratio:.2f}")


def _second_half(values: List[float]) -> List[float]:
    return values[len(values) // 2:]


def check_subcritical(ctx: VerifyContext) -> CheckResult:
    result = ctx.run(get_preset("subcritical-p1"))
    records = result.records
    last = records[-1]
    decays = [r.fourier_decay for r in records if r.fourier_decay is not None]
    linf = _second_half([r.linf for r in records])
    l2_uy = _second_half([r.l2_uy for r in records])
    decreasing = bool(np.all(np.diff(linf) <= 0) and np.all(np.diff(l2_uy) <= 0))
    ok = result.stop is None and last.delta <= 1e-5 and decays[-1] <= 1e-4 and decreasing
    return CheckResult("subcritical_p1", ok, last.delta, "delta <= 1e-5, decay <= 1e-4, norms decreasing",
                       detail=f"delta={last.delta:.3e}, fourier_decay={decays[-1]:.3e}, decreasing={decreasing}")


def check_critical(ctx: VerifyContext) -> CheckResult:
    result = ctx.run(get_preset("critical-p43"))
    records = result.records
    linf = np.array([r.linf for r in records])
    l2_uy = np.array([r.l2_uy for r in records])
    linf_down = bool(linf[-1] < linf[0])
    uy_up = bool(np.all(np.diff(l2_uy) >= 0))
    ok = result.stop is None and linf_down and uy_up
    return CheckResult("critical_p43", ok, float(l2_uy[-1] / l2_uy[0]), "no stop, linf down, l2_uy increasing",
                       detail=f"linf {linf[0]:.4g} -> {linf[-1]:.4g}, l2_uy {l2_uy[0]:.4g} -> {l2_uy[-1]:.4g}")


def check_lump_residual(ctx: VerifyContext) -> CheckResult:
    params = KPParams(p=1, epsilon=-1)
    residuals = []
    for L, N in ((20.0, 256), (40.0, 512), (80.0, 1024)):
        grid = make_grid(L, L, N, N)
        psi = lump(grid, 1.0, check_tails=False)
        residuals.append(sw_residual(psi, 1.0, params) / l2_norm(psi))
    ok = residuals[0] > residuals[1] > residuals[2]
    return CheckResult("lump_residual_decreasing", ok, residuals[-1], "strictly decreasing with L",
                       detail=f"relative residuals for L=20, 40, 80: {residuals}")


def check_zaitsev_residual(ctx: VerifyContext) -> CheckResult:
    grid = make_grid(10.0, zaitsev_ly(5), 2 ** 10, 2 ** 8)
    psi, c = zaitsev(grid, 1.0, 0.5)
    rel = sw_residual(psi, c, KPParams(p=1, epsilon=-1)) / l2_norm(psi)
    return CheckResult("zaitsev_residual", rel <= 1e-6, rel, "<= 1e-6 relative")


def check_zaitsev_propagation(ctx: VerifyContext) -> CheckResult:
    result = ctx.run(get_preset("zaitsev-propagation", T=1.0, N_t=2000, snapshot_times=()))
    last = result.records[-1]
    err = zaitsev_error(result)
    ok = result.stop is None and last.delta <= 1e-6 and err <= 1e-4
    return CheckResult("zaitsev_propagation", ok, last.delta, "delta <= 1e-6, linf error <= 1e-4",
                       detail=f"delta={last.delta:.3e}, linf error={err:.3e}, t={last.t:g}")


# ============================================
# PART C: SUITES AND REPORT
# ============================================

SUITES: Dict[str, List[Check]] = {
    "fast": [
        check_parseval, check_transform_round_trip, check_snapshot_round_trip, check_linear_exactness,
        check_convergence_order, check_zero_modes, check_fit_lump, check_two_lump_peaks, check_kdv_residual,
    ],
    "paper-soliton": [_soliton_check("soliton-propagation"), _soliton_check("soliton-propagation-kp1")],
    "paper-perturbed": [check_kp2_perturbed],
    "paper-blowup": [check_blowup],
    "paper-regularity": [check_subcritical, check_critical],
    "paper-residuals": [check_lump_residual, check_zaitsev_residual, check_zaitsev_propagation],
}
SUITES["all"] = [check for name, checks in SUITES.items() for check in checks]


def run_check(check: Check, ctx: VerifyContext) -> CheckResult:
    started = datetime.now()
    try:
        result = check(ctx)
    except Exception as e:
        logger.error(f"{check.__name__} raised: {e}", exc_info=True)
        result = CheckResult(check.__name__.removeprefix("check_"), False, detail=f"{type(e).__name__}: {e}")
    result.seconds = (datetime.now() - started).total_seconds()
    status = "PASS" if result.passed else "FAIL"
    logger.info(f"[{status}] {result.name} value={result.value} limit={result.limit} {result.detail}")
    return result


def verify(suite: str, out_dir: Optional[Path] = None, settings: Optional[Settings] = None) -> Dict:
    """
    Run a named suite and return a machine-readable report.

    Raises:
        ConfigurationError: unknown suite
    """
    if suite not in SUITES:
        raise ConfigurationError(f"Unknown suite: {suite}. Supported: {', '.join(SUITES.keys())}")
    settings = settings or load_settings()
    started = datetime.now()
    out_dir = Path(out_dir) if out_dir is not None else \
        Path(settings.output_dir) / f"verify-{suite}-{started.strftime('%Y%m%d-%H%M%S')}"
    ctx = VerifyContext(out_dir, settings)

    logger.info("=" * 60)
    logger.info(f"verify: suite '{suite}' ({len(SUITES[suite])} checks)")
    results = [run_check(check, ctx) for check in SUITES[suite]]
    elapsed = (datetime.now() - started).total_seconds()
    passed = all(r.passed for r in results)
    logger.info(f"verify completed in {elapsed:.3f}s: {sum(r.passed for r in results)}/{len(results)} passed")
    logger.info("=" * 60)

    return {
        "suite": suite,
        "passed": passed,
        "started": started.isoformat(timespec="seconds"),
        "wall_time": elapsed,
        "checks": [asdict(r) for r in results],
    }
