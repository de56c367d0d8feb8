"""Scenario execution and serialization of ledgers and ensemble summaries."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
from dataclasses import dataclass

import numpy as np

from . import __version__
from .dynamics import IntegratorConfig, evolve_noise_cov, evolve_unconditional, riccati_pass, run_ensemble
from .errors import InvalidArgument
from .thermo import ThermoLedger, ensemble_rates, thermo_ledger
from .validation import mc_tester, riccati_steady_state, solve_lyapunov

FLOAT_FMT = "%.12g"


@dataclass(frozen=True, eq=False)
class RunResult:
    sigma: np.ndarray
    uncond: object
    ledger: ThermoLedger


def run_scenario(sc, uncond=None):
    """Deterministic conditional/unconditional pass and the entropy ledger.

    ``uncond`` may supply a precomputed unconditional record on the same grid
    (it does not depend on the measurement).
    """
    model, mm, state0 = sc.build()
    cfg = sc.integrator
    sigma, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
    if uncond is None:
        uncond = evolve_unconditional(model, state0, cfg)
    return RunResult(sigma, uncond, thermo_ledger(model, mm, sigma, uncond))


def _versions():
    import numba
    import scipy

    return {
        "gaussmon": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, rows, fmt=FLOAT_FMT, delimiter=",")


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def metadata(sc, command, **extra):
    """Everything needed to repeat a run: the canonical scenario text plus versions."""
    return {
        "command": command,
        "scenario": sc.to_dict(),
        "scenario_text": sc.to_text(),
        "seed": sc.integrator.seed,
        "dt": sc.integrator.dt,
        "versions": _versions(),
        **extra,
    }


def write_run(result, sc, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "ledger.csv"), ThermoLedger.COLUMNS, result.ledger.table())
    final = dict(zip(ThermoLedger.COLUMNS, map(float, result.ledger.table()[-1])))
    write_json(os.path.join(out_dir, "run.json"), metadata(sc, "run", final_row=final))


def read_ledger(path):
    """``ledger.csv`` back into a dict of column arrays."""
    with open(path, encoding="ascii") as fh:
        header = next(csv.reader(fh))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def ensemble_config(sc, t_final=None):
    """Grid of an ensemble run: horizon ``max(probe_times)`` unless overridden."""
    cfg = sc.integrator
    horizon = max(sc.output.probe_times) if t_final is None else t_final
    return dataclasses.replace(cfg, t_final=horizon, record_every=sc.output.ensemble_every)


def _probe_indices(cfg, probes):
    h = cfg.dt * cfg.record_every
    out = []
    for t in probes:
        if t > cfg.t_final + 1e-12:
            continue
        i = int(round(t / h))
        if abs(i * h - t) > 1e-9 * max(1.0, t):
            raise InvalidArgument(f"probe time {t} is not on the ensemble grid (spacing {h})")
        out.append(i)
    if not out:
        raise InvalidArgument("no probe time falls inside the ensemble horizon")
    return out


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    cfg: IntegratorConfig
    ensemble: object
    uncond: object
    v_series: np.ndarray
    rates: object
    zscores: list  # (t, quantity, ZReport)

    @property
    def passed(self):
        return all(z.passed for _, _, z in self.zscores)


def ensemble_scenario(sc, t_final=None):
    """Monte Carlo check of the averaged flux/production and of ``Cov(x) = V``.

    At every probe time the z-gate compares: mean ``dphi/dt`` with ``Phi_uc``;
    mean ``dpi/dt`` with ``Pi_uc + Idot``; the mean of each component of the
    filtered mean with the unconditional mean; and each entry of the
    covariance of the filtered mean (centred on the exactly known mean) with
    ``V``.
    """
    model, mm, state0 = sc.build()
    cfg = ensemble_config(sc, t_final)
    ens = run_ensemble(model, mm, state0, cfg)
    uncond = evolve_unconditional(model, state0, cfg)
    v = evolve_noise_cov(model, mm, ens.cov_series, cfg).v_series
    rates = ensemble_rates(model, mm, ens, uncond)
    means = ens.means[ens.ok]
    reports = []
    names = ("q", "p")
    for i in _probe_indices(cfg, sc.output.probe_times):
        t = float(cfg.times[i])
        reports.append((t, "dphi", mc_tester(rates.dphi[:, i], rates.Phi_uc[i])))
        reports.append((t, "dpi", mc_tester(rates.dpi[:, i], rates.Pi_target[i])))
        dev = means[:, i] - uncond.mean_series[i]
        for a in range(dev.shape[1]):
            reports.append((t, f"mean_{names[a]}", mc_tester(means[:, i, a], uncond.mean_series[i, a])))
        for a in range(dev.shape[1]):
            for b in range(a, dev.shape[1]):
                reports.append((t, f"V_{names[a]}{names[b]}", mc_tester(dev[:, a] * dev[:, b], v[i, a, b])))
    return EnsembleResult(cfg, ens, uncond, v, rates, reports)


def write_ensemble(res, sc, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    r = res.rates
    cols = ("t", "dphi_mean", "dphi_se", "Phi_uc", "dpi_mean", "dpi_se", "Pi_uc_plus_Idot")
    rows = np.column_stack([res.cfg.times, r.dphi_mean, r.dphi_se, r.Phi_uc, r.dpi_mean, r.dpi_se, r.Pi_target])
    _write_csv(os.path.join(out_dir, "ensemble.csv"), cols, rows)

    n_keep = min(sc.output.save_trajectories, r.dphi.shape[0])
    ok = np.flatnonzero(res.ensemble.ok)[:n_keep]
    parts = []
    for j, idx in enumerate(ok):
        x = res.ensemble.means[idx]
        parts.append(np.column_stack([np.full(len(x), idx), res.cfg.times, x, r.dphi[j], r.dpi[j]]))
    traj = np.concatenate(parts) if parts else np.empty((0, 6))
    _write_csv(os.path.join(out_dir, "trajectories.csv"), ("traj", "t", "q", "p", "dphi", "dpi"), traj)

    with open(os.path.join(out_dir, "zscores.csv"), "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "quantity", "mean", "se", "target", "z", "pass"))
        for t, name, z in res.zscores:
            w.writerow([FLOAT_FMT % t, name] + [FLOAT_FMT % v for v in (z.mean, z.se, z.target, z.z)] + [int(z.passed)])
    failed = {str(k): v for k, v in res.ensemble.failed.items()}
    write_json(
        os.path.join(out_dir, "run.json"),
        metadata(
            sc,
            "ensemble",
            ensemble_grid={"t_final": res.cfg.t_final, "record_every": res.cfg.record_every},
            n_traj=res.cfg.n_traj,
            failed_trajectories=failed,
            all_z_passed=res.passed,
        ),
    )


def steady_state(sc, tol=1e-8, max_time=1e5):
    """Conditional steady state by integration and the unconditional one by Lyapunov solve."""
    model, mm, state0 = sc.build()
    rep = riccati_steady_state(model, mm, state0.cov, tol=tol, max_time=max_time)
    sigma_uc = solve_lyapunov(model.drift, model.diffusion)
    sign, logdet = np.linalg.slogdet(rep.sigma_ss)
    _, logdet_uc = np.linalg.slogdet(sigma_uc)
    return {
        "sigma_ss": rep.sigma_ss.tolist(),
        "residual": rep.residual,
        "horizon": rep.horizon,
        "converged": rep.converged,
        "sigma_uc_ss": sigma_uc.tolist(),
        "I_ss": 0.5 * (logdet - logdet_uc),
    }
