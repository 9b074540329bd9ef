"""
Command-line scenario runner.

Exit codes: 0 success, 2 configuration error, 3 statistical sanity failure,
4 numerical validity failure.

Seed splitting: trajectory ``i`` of channel ``m`` draws from the Philox
stream keyed by the config seed with counter ``(0, i, m, 0)``; optimizer
start ``k`` uses the stream ``(seed, k, 0)``.  One seed therefore fixes
every output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config, preset_names
from .correlations import TimeGrid, build_kernel, integrated_rates, write_kernel_csv
from .entanglement import dephased_density, mean_entanglement_bound, wootters_concurrence, write_report
from .noise import CorrelationAccumulator, NoiseTrajectory, write_stats, write_trajectory_csv
from .optimize import horizon_bound_curve, search_squeezing
from .oracle import (
    CompositeState,
    FockBath,
    OracleReport,
    evolve_composite,
    independent_boson_coherence,
    quadrature_average,
    verify_sse_residual,
)
from .sse import (
    DephasingChannel,
    DephasingSystem,
    SIGMA_Z,
    default_threads,
    dump_states,
    run_ensemble,
    sample_states,
    write_norm_csv,
    write_rho_csv,
    RelativeStateTrajectory,
)

EXIT_OK, EXIT_CONFIG, EXIT_STATS, EXIT_NUMERIC = 0, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.outputs.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _modes_for(cfg: ScenarioConfig, spec, rule):
    try:
        return spec.modes(rule)
    except ValueError as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from exc


def _channels(cfg: ScenarioConfig, rule):
    grid = cfg.grid.grid()
    out = []
    for spec in cfg.baths():
        if spec.kind == "markov":
            raise _Exit(EXIT_CONFIG, "a Markov bath has no sampleable noise on a grid; use a structured bath")
        try:
            out.append(DephasingChannel.from_modes(_modes_for(cfg, spec, rule), grid))
        except ValueError as exc:
            raise _Exit(EXIT_CONFIG, str(exc)) from exc
    return out


def _kernels(cfg: ScenarioConfig, rule):
    grid = cfg.grid.grid()
    out = []
    for spec in cfg.baths():
        if spec.kind == "markov":
            try:
                out.append(cfg.markov_kernel(spec, rule))
            except ValueError as exc:
                raise _Exit(EXIT_CONFIG, str(exc)) from exc
        else:
            try:
                out.append(build_kernel(_modes_for(cfg, spec, rule), grid))
            except ValueError as exc:
                raise _Exit(EXIT_CONFIG, str(exc)) from exc
    return out


def run_correlations(cfg: ScenarioConfig) -> int:
    out = _out_dir(cfg)
    rule = cfg.rule()
    grid = cfg.grid.grid()
    for m, spec in enumerate(cfg.baths()):
        if spec.kind == "markov":
            k = cfg.markov_kernel(spec, rule)
            A, E, gamma = integrated_rates(k)
            path = out / f"rates_ch{m}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "re_A", "im_A", "re_E", "im_E", "gamma"])
                for j, t in enumerate(grid.times):
                    w.writerow([float(t), float(A[j].real), float(A[j].imag), float(E[j].real), float(E[j].imag), float(gamma[j])])
            print(f"channel {m}: Markov kernel is a delta function and is not materialized; wrote integrated rates to {path}")
        else:
            k = build_kernel(_modes_for(cfg, spec, rule), grid)
            rows = write_kernel_csv(k, out / f"kernel_ch{m}.csv")
            print(f"channel {m}: wrote {rows} kernel rows")
    return EXIT_OK


def run_sample(cfg: ScenarioConfig) -> int:
    out = _out_dir(cfg)
    rule = cfg.rule()
    grid = cfg.grid.grid()
    summary = {}
    for m, ch in enumerate(_channels(cfg, rule)):
        acc = CorrelationAccumulator(grid)
        first = None
        for lo in range(0, cfg.ensemble.n_samples, cfg.ensemble.chunk):
            size = min(cfg.ensemble.chunk, cfg.ensemble.n_samples - lo)
            z = ch.draw(cfg.seed, size, lo, m)
            if first is None:
                first = z[0]
            acc.add(z)
        write_trajectory_csv(NoiseTrajectory(grid, first, cfg.seed, 0), out / f"noise_ch{m}_traj0.csv")
        if cfg.ensemble.n_samples > 1:
            stats = acc.stats(ch.kernel)
            write_stats(stats, grid, out / f"noise_stats_ch{m}.csv", out / f"noise_stats_ch{m}.json")
            summary[f"channel_{m}"] = stats.summary()
    _write_json(out / "sample_summary.json", summary)
    for name, s in summary.items():
        print(f"{name}: n={s['n_samples']} max|alpha dev|={s['max_alpha_dev']:.3e} max|eta dev|={s['max_eta_dev']:.3e}")
    return EXIT_OK


def _exact_ratio(cfg: ScenarioConfig, times: np.ndarray, rule) -> np.ndarray | None:
    """Concurrence ratio of the exact reduced state, when it is available in closed form."""
    if cfg.system.n_qubits != 2 or cfg.system.splittings:
        return None
    psi0 = cfg.system.state()
    c0 = wootters_concurrence(np.outer(psi0, psi0.conj()))
    if c0 < 1e-12:
        return None
    gammas = []
    for spec in cfg.baths():
        if spec.kind == "markov":
            gammas.append(2.0 * spec.strength * times)
        else:
            gammas.append(_modes_for(cfg, spec, None).dephasing_exponent(times))
    out = np.empty(times.size)
    for k in range(times.size):
        rho = dephased_density(psi0, 2, cfg.system.coupled, [np.exp(-g[k]) for g in gammas])
        out[k] = wootters_concurrence(rho) / c0
    return out


def _curve(cfg: ScenarioConfig, kind: str) -> np.ndarray:
    grid = cfg.grid.grid()
    eps = cfg.squeezing.epsilon
    c = {"zero": 0.0, "optimal": 1.0 - eps, "restore": -(1.0 - eps)}[kind]
    total = np.ones(len(grid))
    for spec in cfg.baths():
        if spec.kind == "markov":
            total *= np.exp(-(1.0 + c) * spec.strength * grid.times)
        else:
            total *= horizon_bound_curve(_modes_for(cfg, spec, None), grid, kind, eps)
    return total


def run_unraveling(cfg: ScenarioConfig, threads: int | None = None) -> int:
    out = _out_dir(cfg)
    rule = cfg.rule()
    grid = cfg.grid.grid()
    kernels = _kernels(cfg, rule)
    report = mean_entanglement_bound(kernels, rule.descriptor)
    exact = _exact_ratio(cfg, grid.times, rule)
    report.exact_reference = exact
    write_report(report, out / "bound.csv", out / "bound.json", cfg.scenario)

    xbar_opt, xbar_zero = _curve(cfg, "optimal"), _curve(cfg, "zero")
    with open(out / "fig1_data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "xbar_opt", "xbar_zero", "exact"])
        for k, t in enumerate(grid.times):
            w.writerow([float(t), float(xbar_opt[k]), float(xbar_zero[k]), "" if exact is None else float(exact[k])])

    summary = {
        "scenario": cfg.scenario,
        "time_unit": cfg.time_unit,
        "squeezing_rule": rule.descriptor,
        "xbar_final": float(report.xbar[-1]),
    }
    code = EXIT_OK
    if all(s.kind != "markov" for s in cfg.baths()):
        try:
            system = DephasingSystem(cfg.system.n_qubits, cfg.system.coupled, cfg.system.state(), cfg.system.hamiltonians())
        except ValueError as exc:
            raise _Exit(EXIT_CONFIG, str(exc)) from exc
        channels = _channels(cfg, rule)
        avg = run_ensemble(system, channels, cfg.seed, cfg.ensemble.n_samples, cfg.ensemble.chunk, threads)
        write_rho_csv(avg, out / "rho.csv")
        states = sample_states(system, channels, cfg.seed, 1, 0)[0]
        traj0 = RelativeStateTrajectory(grid, states, np.sum(np.abs(states) ** 2, axis=1))
        write_norm_csv(traj0, out / "norm_traj0.csv")
        if "bin" in cfg.outputs.formats:
            dump_states(traj0, out / "states_traj0.bin")
        bad = avg.trace_deviation > 5.0 * avg.norm_sq_se + 1e-12
        summary.update(
            n_samples=avg.n_samples,
            max_trace_deviation=float(np.max(avg.trace_deviation)),
            trace_sanity_passed=not bool(np.any(bad)),
        )
        if np.any(bad):
            code = EXIT_STATS
    else:
        summary["monte_carlo"] = "skipped: Markov channels carry only integrated rates"
    _write_json(out / "summary.json", summary)
    print(f"scenario {cfg.scenario}: xbar(T) = {summary['xbar_final']:.6g}", end="")
    if "max_trace_deviation" in summary:
        print(f", max trace deviation {summary['max_trace_deviation']:.3e} over {summary['n_samples']} trajectories")
    else:
        print(" (Monte Carlo skipped for Markov channels)")
    if code == EXIT_STATS:
        print("trace deviation exceeds 5 standard errors", file=sys.stderr)
    return code


def run_oracle(cfg: ScenarioConfig) -> int:
    spec = cfg.oracle
    if spec is None:
        raise _Exit(EXIT_CONFIG, "oracle runs need an [oracle] section")
    if cfg.system.n_qubits != 1 or list(cfg.system.coupled) != [0] or len(cfg.bath) != 1:
        raise _Exit(EXIT_CONFIG, "oracle runs take one coupled qubit and one bath")
    modes = _modes_for(cfg, cfg.bath[0], None)
    if len(modes) > 2:
        raise _Exit(EXIT_CONFIG, "oracle quadrature checks are limited to 2 modes")
    out = _out_dir(cfg)
    h = cfg.system.hamiltonians()
    H = h[0] if h else np.zeros((2, 2), dtype=complex)
    psi0 = cfg.system.state()
    bath = FockBath(modes, spec.n_max, spec.leakage_threshold)
    evo = evolve_composite(H, SIGMA_Z, bath, cfg.grid.grid(), CompositeState.product(psi0, bath))
    xis = [complex(*x) for x in spec.xi_values]
    if any(abs(x) >= 1 for x in xis):
        raise _Exit(EXIT_CONFIG, "oracle xi values need |xi| < 1")
    final = evo.states[-1]
    ident = ptr = 0.0
    for x in xis:
        q = quadrature_average(final, x, spec.n_nodes)
        ident = max(ident, abs(q.identity_residual))
        ptr = max(ptr, q.partial_trace_residual)
    fine = TimeGrid(spec.residual_dt, spec.residual_steps)
    evo_fine = evolve_composite(H, SIGMA_Z, bath, fine, CompositeState.product(psi0, bath))
    nodes = [np.broadcast_to(np.array([complex(*c) for c in node]), (len(modes),)) for node in spec.residual_nodes]
    sse = 0.0
    for x in xis:
        r = verify_sse_residual(evo_fine, H, SIGMA_Z, nodes, x)
        sse = max(sse, r.max_residual)
    splitting = float(cfg.system.splittings[0]) if cfg.system.splittings else 0.0
    coh = independent_boson_coherence(modes, cfg.grid.grid().times, splitting)
    rho01 = np.array([s.reduced()[0, 1] for s in evo.states])
    coh_err = float(np.max(np.abs(rho01 - coh * psi0[0] * np.conj(psi0[1]))))
    leak_ok = evo.valid
    passed = (
        leak_ok
        and ident < spec.identity_tolerance
        and ptr < spec.partial_trace_tolerance
        and sse < spec.sse_tolerance
    )
    rep = OracleReport(
        cfg.scenario,
        spec.n_max,
        evo.leakage,
        ident,
        ptr,
        sse,
        xis,
        passed,
        extra={"leakage_flag": not leak_ok, "coherence_error": coh_err, "norm_drift": evo.norm_drift},
    )
    rep.write(out / "oracle_report.json")
    print(
        f"oracle {cfg.scenario}: leakage {evo.leakage:.2e}, identity {ident:.2e}, "
        f"partial trace {ptr:.2e}, sse {sse:.2e} -> {'pass' if passed else 'FAIL'}"
    )
    if not leak_ok:
        print("Fock truncation leakage above threshold; increase n_max", file=sys.stderr)
    return EXIT_OK if passed else EXIT_NUMERIC


def run_optimize(cfg: ScenarioConfig) -> int:
    spec = cfg.optimize
    if spec is None:
        raise _Exit(EXIT_CONFIG, "optimize runs need an [optimize] section")
    if len(cfg.bath) != 1 or cfg.bath[0].kind == "markov":
        raise _Exit(EXIT_CONFIG, "optimize runs take one structured bath")
    modes = _modes_for(cfg, cfg.bath[0], None)
    if len(modes) > 16:
        raise _Exit(EXIT_CONFIG, "phase search is limited to 16 modes")
    out = _out_dir(cfg)
    res = search_squeezing(
        modes,
        cfg.grid.grid(),
        maximize=spec.objective == "maximize",
        epsilon=spec.epsilon,
        n_starts=spec.n_starts,
        budget=spec.budget,
        seed=cfg.seed,
        n_channels=len(cfg.system.coupled),
    )
    res.write(out / "search_trace.csv", out / "search_result.json")
    ok = abs(res.analytic_gap) < spec.gap_threshold
    flag = " (budget exhausted, best so far)" if res.budget_exhausted else ""
    print(
        f"optimize {cfg.scenario}: xbar(T) = {res.best_value:.9g}, analytic {res.analytic_value:.9g}, "
        f"gap {res.analytic_gap:.2e}, phase error {res.phase_error:.2e}{flag}"
    )
    return EXIT_OK if ok else EXIT_NUMERIC


def run_acceptance(only: list[int] | None = None) -> int:
    from .acceptance import run_all

    results = run_all(only)
    return EXIT_OK if all(r.passed for r in results) else EXIT_STATS


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML/JSON config path or preset name")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed (u64)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: available CPUs)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override the output directory")

    p = argparse.ArgumentParser(prog="gaussunravel", parents=[common], description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("correlations", "write correlation kernels (or integrated Markov rates)"),
        ("sample", "draw noise trajectories and their empirical correlations"),
        ("unravel", "run a trajectory ensemble, the entanglement bound and figure data"),
        ("oracle", "verify the unraveling against a truncated Fock-space evolution"),
        ("optimize", "search per-mode squeezing phases"),
        ("presets", "list shipped scenario presets"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    acc = sub.add_parser("acceptance", parents=[common], help="run the acceptance suite")
    acc.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")], default=None, help="comma-separated criteria")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    opts = vars(args)
    try:
        if args.command == "presets":
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.command == "acceptance":
            return run_acceptance(args.only)
        if "config" not in opts:
            raise _Exit(EXIT_CONFIG, f"'{args.command}' needs --config")
        cfg = load_config(opts["config"], opts.get("seed"))
        if "out" in opts:
            cfg = cfg.model_copy(update={"outputs": cfg.outputs.model_copy(update={"dir": opts["out"]})})
        threads = opts.get("threads") or default_threads()
        if threads < 1:
            raise _Exit(EXIT_CONFIG, "--threads must be positive")
        out = _out_dir(cfg)
        _write_json(out / "resolved_config.json", cfg.resolved())
        if args.command == "correlations":
            return run_correlations(cfg)
        if args.command == "sample":
            return run_sample(cfg)
        if args.command == "unravel":
            return run_unraveling(cfg, threads)
        if args.command == "oracle":
            return run_oracle(cfg)
        return run_optimize(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Exit as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
