"""Acceptance suite shared by ``gaussmon validate`` and the test-suite.

Each ``criterion_*`` function returns a list of :class:`CheckResult`. The
expensive integrations are cached on a :class:`Suite` instance so criteria
that look at the same runs do not repeat them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dynamics import evolve_noise_cov, riccati_pass
from .gaussian_core import logdet_spd
from .measurement import PRESETS, MonitoringMatrices
from .runner import ensemble_scenario, run_scenario
from .scenario import bundled_text, parse_scenario
from .thermo import info_integrated, mutual_information
from .validation import em_weak_order, finite_difference, riccati_steady_state, rk4_order, solve_lyapunov

KINDS = ("quench", "opo")
PRESET_NAMES = tuple(sorted(PRESETS))
TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] C{self.criterion} {self.name}: {self.detail}"


@dataclass
class Suite:
    """Lazily computed runs of both scenarios under every preset.

    Long runs record every ``record_every`` steps at ``dt``; the horizons are
    the scenario defaults unless ``horizons`` overrides them.
    """

    record_every: int = 10
    horizons: dict = field(default_factory=dict)
    _runs: dict = field(default_factory=dict, repr=False)
    _uncond: dict = field(default_factory=dict, repr=False)

    def scenario(self, kind, preset="heterodyne", **changes):
        sc = parse_scenario(bundled_text(kind))
        t_final = self.horizons.get(kind, sc.integrator.t_final)
        params = dict(preset=preset, t_final=t_final, record_every=self.record_every)
        params.update(changes)
        return sc.replace(**params)

    def run(self, kind, preset):
        key = (kind, preset)
        if key not in self._runs:
            sc = self.scenario(kind, preset)
            res = run_scenario(sc, self._uncond.get(kind))
            self._uncond[kind] = res.uncond
            model, mm, _ = sc.build()
            v = evolve_noise_cov(model, mm, res.sigma, sc.integrator).v_series
            self._runs[key] = (res, v)
        return self._runs[key]

    def all_runs(self):
        for kind, preset in itertools.product(KINDS, PRESET_NAMES):
            yield kind, preset, self.run(kind, preset)

    @cached_property
    def ensembles(self):
        return {kind: ensemble_scenario(self.scenario(kind)) for kind in KINDS}


def criterion_1(suite):
    out = []
    for kind, preset, (res, _) in suite.all_runs():
        lo = float(res.ledger.Pi_uc.min())
        out.append(CheckResult(1, f"Pi_uc >= 0 [{kind}/{preset}]", lo >= -TOL, f"min Pi_uc = {lo:.3e}"))
    return out


def criterion_2(suite):
    out = []
    for kind, preset, (res, _) in suite.all_runs():
        lo = float((res.ledger.Pi - res.ledger.Idot).min())
        out.append(CheckResult(2, f"Pi >= Idot [{kind}/{preset}]", lo >= -TOL, f"min(Pi - Idot) = {lo:.3e}"))
    return out


def criterion_3(suite, quench_horizon=60.0):
    out = []
    for kind, preset, (res, _) in suite.all_runs():
        info = res.ledger.I
        ok = info.max() <= TOL and info[0] == 0.0
        out.append(
            CheckResult(3, f"I <= 0, I(0) = 0 [{kind}/{preset}]", bool(ok), f"max I = {info.max():.3e}, I(0) = {info[0]:.1e}")
        )
    for preset in PRESET_NAMES:
        sc = suite.scenario("quench", preset, t_final=quench_horizon)
        final = float(run_scenario(sc).ledger.I[-1])
        out.append(
            CheckResult(
                3, f"quench |I(t={quench_horizon:g})| < 1e-3 [{preset}]", abs(final) < 1e-3, f"I = {final:.4e}"
            )
        )
    finals = {p: float(suite.run("opo", p)[0].ledger.I[-1]) for p in PRESET_NAMES}
    gap = min(abs(finals[a] - finals[b]) for a, b in itertools.combinations(PRESET_NAMES, 2))
    t_end = suite.run("opo", PRESET_NAMES[0])[0].ledger.times[-1]
    desc = ", ".join(f"{p}={v:.5f}" for p, v in finals.items())
    out.append(CheckResult(3, f"opo I(t={t_end:g}) pairwise distinct", gap > 1e-3, f"{desc}; min gap {gap:.3e}"))
    return out


def criterion_4(suite):
    out = []
    for kind, preset, (res, _) in suite.all_runs():
        idot = res.ledger.Idot
        positive = bool((idot[1:] > 0).any())
        ok = idot[0] < 0 and positive and abs(idot[-1]) < 1e-6
        detail = f"Idot(0) = {idot[0]:.3e}, max Idot = {idot.max():.3e}, Idot(t_final) = {idot[-1]:.3e}"
        out.append(CheckResult(4, f"Idot sign structure [{kind}/{preset}]", bool(ok), detail))
    return out


def criterion_5(suite):
    out = []
    for kind, preset, (res, v) in suite.all_runs():
        err = float(np.abs(res.sigma + v - res.uncond.cov_series).max())
        out.append(CheckResult(5, f"sigma + V = sigma_uc [{kind}/{preset}]", err < 1e-6, f"max error {err:.3e}"))
    return out


def criterion_6(suite):
    out = []
    for kind, res in suite.ensembles.items():
        worst = max(res.zscores, key=lambda r: abs(r[2].z))
        n_fail = sum(not z.passed for _, _, z in res.zscores)
        detail = (
            f"{len(res.zscores)} z-scores at t = {sorted({t for t, _, _ in res.zscores})}, "
            f"{n_fail} with |z| >= 3; worst {worst[1]} at t = {worst[0]:g}: z = {worst[2].z:+.2f}"
        )
        out.append(CheckResult(6, f"ensemble averages, n_traj = {res.cfg.n_traj} [{kind}]", n_fail == 0, detail))
    return out


#: (dt, horizon, first scored time) of the finite-difference grids. Second-order
#: differences need a fine step while the squeezed OPO start relaxes.
FD_WINDOWS = ((1e-5, 2.0, 0.0), (1e-3, 20.0, 1.0))


def criterion_7(suite, windows=FD_WINDOWS):
    out = []
    for kind, preset in itertools.product(KINDS, PRESET_NAMES):
        e_s = e_i = 0.0
        for dt, t_final, t_from in windows:
            sc = suite.scenario(kind, preset, t_final=t_final, dt=dt, record_every=1)
            res = run_scenario(sc)
            led = res.ledger
            keep = led.times >= t_from
            fd_s = finite_difference(0.5 * logdet_spd(res.sigma), dt)
            fd_i = finite_difference(led.I, dt)
            e_s = max(e_s, float(np.abs(fd_s - led.dSdt)[keep].max()))
            e_i = max(e_i, float(np.abs(fd_i - led.Idot)[keep].max()))
        out.append(CheckResult(7, f"dS/dt vs FD [{kind}/{preset}]", e_s < 1e-6, f"max error {e_s:.3e}"))
        out.append(CheckResult(7, f"Idot vs FD of I [{kind}/{preset}]", e_i < 1e-6, f"max error {e_i:.3e}"))
    return out


def criterion_8(suite):
    out = []
    expected = {"quench": 50.0 * np.eye(2), "opo": np.diag([0.25006, 1000.5])}
    for kind in KINDS:
        sc = suite.scenario(kind)
        model, _, state0 = sc.build()
        lyap = solve_lyapunov(model.drift, model.diffusion)
        rel = float(np.abs(lyap - expected[kind]).max() / np.abs(expected[kind]).max())
        out.append(CheckResult(8, f"Lyapunov steady state [{kind}]", rel < 1e-4, f"relative deviation {rel:.2e}"))
        rep = riccati_steady_state(
            model, MonitoringMatrices.unmonitored(), state0.cov, tol=2e-12, dt=0.1, max_time=1e5
        )
        diff = float(np.abs(rep.sigma_ss - lyap).max())
        out.append(
            CheckResult(
                8,
                f"Lyapunov vs long-time integration [{kind}]",
                rep.converged and diff < 1e-8,
                f"max |diff| = {diff:.2e} after t = {rep.horizon:g}",
            )
        )
        cfg_sc = suite.scenario(kind, t_final=20.0)
        cfg = cfg_sc.integrator
        sigma_uc, _ = riccati_pass(model, MonitoringMatrices.unmonitored(), state0, cfg, keep_gains=False)
        gaps = []
        for delta in (1e2, 1e4, 1e6):
            mm = cfg_sc.replace(**{"measurement.excess_noise": delta}).measurement.matrices(model)
            sigma, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
            gaps.append(float(np.abs(sigma - sigma_uc).max()))
        ok = gaps[0] > gaps[1] > gaps[2]
        detail = "max_t |sigma - sigma_uc| on [0, 20]: " + ", ".join(f"{g:.3e}" for g in gaps)
        out.append(CheckResult(8, f"unmonitored limit, excess noise 1e2/1e4/1e6 [{kind}]", ok, detail))
    return out


def criterion_9(suite):
    model, mm, state0 = suite.scenario("quench").build()
    p = rk4_order(model, mm, state0)
    q = em_weak_order(model, mm, state0)
    return [
        CheckResult(9, "RK4 order on sigma (dt = 4e-3, 2e-3, 1e-3)", abs(p - 4) <= 1.2, f"slope {p:.3f}"),
        CheckResult(9, "Euler-Maruyama weak order on E[x x^T]", abs(q - 1) <= 0.3, f"slope {q:.3f}"),
    ]


def random_pair(rng, dim=2):
    """Random ``sigma > 0`` (physical) and ``V >= 0`` (possibly rank-deficient)."""
    g = rng.normal(size=(dim, dim))
    sigma = g @ g.T + 0.5 * np.eye(dim)
    h = rng.normal(size=(dim, rng.integers(1, dim + 1)))
    return sigma, h @ h.T * rng.uniform(0.01, 10.0)


def criterion_10(suite, n_pairs=25, seed=2024):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        sigma, v = random_pair(rng)
        worst = max(worst, abs(info_integrated(sigma, sigma + v) + mutual_information(sigma, v)))
    return [CheckResult(10, f"I = -MI on {n_pairs} random pairs", worst < 1e-10, f"max |I + MI| = {worst:.2e}")]


CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
)


def run_all(suite=None, only=None, echo=None):
    """Evaluate every criterion (or the numbers in ``only``); returns all results."""
    suite = suite or Suite()
    results = []
    for number, fn in enumerate(CRITERIA, start=1):
        if only and number not in only:
            continue
        for r in fn(suite):
            results.append(r)
            if echo:
                echo(r.line())
    return results
