"""Command-line interface: ``thermocascade <command> [options]``.

Configuration precedence is flags over ``--config`` file values over built-in
defaults. Human summaries go to stdout, progress to stderr and machine outputs
to files.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from .config import ConfigError, RunConfig, config_from_dict, load_config
from .engine import run_cascade
from .grid import CaseError, Network, bundled_case_path, parse_case
from .montecarlo import (
    CSV_FIELDS,
    RunRecord,
    default_workers,
    record_row,
    run_batch,
    sweep,
    top_overlap,
    vulnerability_scan,
    write_json,
)

EXIT_CONFIG = 2
EXIT_INTERRUPT = 130
FLUSH_EVERY = 25


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _load_case(path: str | None) -> Network:
    if path is None:
        _fail("--case: a case file is required (use 'rts96' for the bundled case)")
    p = Path(path)
    if not p.exists() and path in ("rts96", "rts96.json"):
        p = bundled_case_path("rts96")
    try:
        return parse_case(p)
    except FileNotFoundError:
        _fail(f"--case: no such file {path}")
    except CaseError as exc:
        _fail(f"--case: {exc}")


def _float_list(text: str, key: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        _fail(f"{key}: expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        _fail(f"{key}: empty list")
    return vals


def resolve_config(opts: dict[str, Any]) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(opts["config"]) if opts.get("config") else RunConfig()
    over: dict[str, Any] = {}
    for flag, key in (("gamma", "gamma"), ("delta_t", "delta_t"), ("direction", "scenario_direction"),
                      ("rating_basis", "rating_basis")):
        if opts.get(flag) is not None:
            over[key] = opts[flag]
    if opts.get("center_bus") is not None:
        over["center_bus"] = opts["center_bus"]
    if opts.get("random_center"):
        over["center_bus"] = None
    if opts.get("no_redispatch"):
        over["redispatch"] = False
    if opts.get("p_floor") is not None:
        over["p1"] = over["p4"] = opts["p_floor"]
    if opts.get("seed") is not None:
        over["seed"] = opts["seed"]
    return config_from_dict(over, cfg)


def _config_options(fn: Callable) -> Callable:
    opts = [
        click.option("--config", "config", type=click.Path(dir_okay=False), help="JSON configuration file."),
        click.option("--case", "case", type=str, help="Case file (JSON); 'rts96' selects the bundled case."),
        click.option("--seed", type=int, help="Run seed (simulate) or master seed (batch commands)."),
        click.option("--center-bus", type=int, help="Bus at the center of the weather disturbance."),
        click.option("--random-center", is_flag=True, help="Draw the center uniformly among load buses."),
        click.option("--direction", type=click.Choice(["heat", "cool"]), help="Scenario direction."),
        click.option("--no-redispatch", is_flag=True, help="Disable corrective re-dispatch."),
        click.option("--rating-basis", type=click.Choice(["initial", "dynamic"]),
                     help="Rating that triggers re-dispatch."),
        click.option("--p-floor", type=float, help="Accidental trip probability for lines and generators."),
        click.option("--print-config", "print_config", is_flag=True,
                     help="Print the resolved configuration as JSON and exit."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _disturbance_options(fn: Callable) -> Callable:
    fn = click.option("--delta-t", type=float, help="Temperature change at the center (degC).")(fn)
    fn = click.option("--gamma", type=float, help="Normalized radius of the disturbance.")(fn)
    return fn


def _workers_option(fn: Callable) -> Callable:
    return click.option("--workers", type=int, default=None,
                        help="Worker processes (default: $CASCADE_SIM_WORKERS or 1).")(fn)


def _guarded(fn: Callable) -> Callable:
    """Map configuration errors to exit 2 and interrupts to exit 130."""

    @functools.wraps(fn)
    def wrapper(**kw):
        try:
            return fn(**kw)
        except ConfigError as exc:
            _fail(str(exc))
        except KeyboardInterrupt:
            click.echo("interrupted", err=True)
            sys.exit(EXIT_INTERRUPT)

    return wrapper


def _maybe_print_config(opts: dict) -> RunConfig:
    cfg = resolve_config(opts)
    if opts.get("print_config"):
        click.echo(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
        sys.exit(0)
    return cfg


class _CsvSink:
    """Streams run records to CSV, flushing periodically so partial output survives."""

    def __init__(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(CSV_FIELDS)
        self.count = 0

    def __call__(self, rec: RunRecord) -> None:
        self.writer.writerow(record_row(rec))
        self.count += 1
        if self.count % FLUSH_EVERY == 0:
            self.fh.flush()

    def close(self) -> None:
        self.fh.flush()
        self.fh.close()


def _progress(label: str) -> Callable[[int, int], None]:
    step = {"next": 0}

    def report(done: int, total: int) -> None:
        pct = 100 * done // total
        if pct >= step["next"] or done == total:
            click.echo(f"{label}: {done}/{total}", err=True)
            step["next"] = pct + 10

    return report


def _workers(n: int | None) -> int:
    w = default_workers() if n is None else n
    if w < 1:
        _fail("--workers: must be >= 1")
    return w


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main() -> None:
    """Weather-driven cascading-outage simulator."""


@main.command()
@_config_options
@_disturbance_options
@click.option("--out", type=click.Path(dir_okay=False), default="trace.json", show_default=True)
@_guarded
def simulate(out: str, **opts) -> None:
    """Run one cascade and write its trace as JSON."""
    cfg = _maybe_print_config(opts)
    net = _load_case(opts["case"])
    if cfg.center_bus is not None and cfg.center_bus not in net.bus_index:
        _fail(f"center_bus: bus {cfg.center_bus} is not in the case")
    trace = run_cascade(net, cfg)
    Path(out).write_text(trace.to_json(), encoding="utf-8")
    first = trace.events[0] if trace.events else None
    head = f"first={first.kind}@{first.t_s:.1f}s{first.elements}" if first else "first=none"
    click.echo(f"center={trace.center_bus} events={len(trace.events)} lines={trace.lines_tripped} "
               f"gens={trace.gens_tripped} shed_mw={trace.shed_mw:.1f} "
               f"termination={trace.termination} {head}")


@main.command()
@_config_options
@_disturbance_options
@_workers_option
@click.option("--runs", type=int, default=1000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="batch.csv", show_default=True)
@click.option("--summary", type=click.Path(dir_okay=False), default=None,
              help="Summary JSON path (default: alongside --out).")
@_guarded
def batch(runs: int, out: str, summary: str | None, workers: int | None, **opts) -> None:
    """Independent runs; per-run CSV plus a summary JSON."""
    cfg = _maybe_print_config(opts)
    if runs < 1:
        _fail("--runs: must be >= 1")
    net = _load_case(opts["case"])
    sink = _CsvSink(Path(out))
    try:
        res = run_batch(net, cfg, runs, cfg.seed, _workers(workers), _progress("batch"), sink)
    finally:
        sink.close()
    s = res.stats
    write_json({"config": cfg.to_dict(), "master_seed": cfg.seed, "stats": s.to_dict()},
               summary or Path(out).with_suffix(".summary.json"))
    click.echo(f"runs={s.n} mean_outages={s.mean_outages:.3f} std={s.std_outages:.3f} "
               f"mean_shed_mw={s.mean_shed_mw:.1f}")


@main.command("sweep")
@_config_options
@_disturbance_options
@_workers_option
@click.option("--param", type=click.Choice(["delta-t", "gamma"]), required=True)
@click.option("--values", "values_", required=True, help="Comma-separated grid, strictly increasing.")
@click.option("--runs", type=int, default=1000, show_default=True, help="Runs per grid value.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="sweep", show_default=True)
@_guarded
def sweep_cmd(param: str, values_: str, runs: int, out_dir: str, workers: int | None, **opts) -> None:
    """Batch per grid value with common seeds; writes summary JSON and runs CSV."""
    cfg = _maybe_print_config(opts)
    values = _float_list(values_, "--values")
    if runs < 1:
        _fail("--runs: must be >= 1")
    key = param.replace("-", "_")
    try:
        for v in values:
            cfg.with_(**{key: v})
    except ConfigError as exc:
        _fail(f"--values: {exc}")
    if any(b <= a for a, b in zip(values, values[1:])):
        _fail("--values: grid must be strictly increasing")
    net = _load_case(opts["case"])
    od = Path(out_dir)
    sink = _CsvSink(od / "runs.csv")
    try:
        res, _ = sweep(net, cfg, key, values, runs, cfg.seed, _workers(workers), _progress("sweep"), sink)
    finally:
        sink.close()
    write_json({"config": cfg.to_dict(), "master_seed": cfg.seed, **res.to_dict()}, od / "summary.json")
    for v, s in zip(res.values, res.stats):
        click.echo(f"{key}={v:g} mean_outages={s.mean_outages:.3f} sem={s.sem_outages:.3f}")
    click.echo(f"knee={res.knee}")


@main.command()
@_config_options
@_workers_option
@click.option("--dt", "dt_", default="8,10,11,15", show_default=True, help="delta_t grid.")
@click.option("--gamma", "gamma_", default="0.05,0.06,0.07,0.08", show_default=True, help="gamma grid.")
@click.option("--runs", type=int, default=50, show_default=True, help="Runs per (bus, cell).")
@click.option("--top", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="ranking.json", show_default=True)
@click.option("--runs-csv", type=click.Path(dir_okay=False), default=None, help="Optional per-run CSV.")
@_guarded
def rank(dt_: str, gamma_: str, runs: int, top: int, out: str, runs_csv: str | None,
         workers: int | None, **opts) -> None:
    """Rank load buses by mean outages and by shed fraction."""
    cfg = _maybe_print_config(opts)
    dts, gammas = _float_list(dt_, "--dt"), _float_list(gamma_, "--gamma")
    try:
        for d in dts:
            for g in gammas:
                cfg.with_(delta_t=d, gamma=g)
    except ConfigError as exc:
        _fail(f"grid: {exc}")
    if runs < 1:
        _fail("--runs: must be >= 1")
    net = _load_case(opts["case"])
    sink = _CsvSink(Path(runs_csv)) if runs_csv else None
    try:
        ranking = vulnerability_scan(net, cfg, dts, gammas, runs, cfg.seed, workers=_workers(workers),
                                     progress=_progress("rank"), on_record=sink)
    finally:
        if sink:
            sink.close()
    rows = ranking.to_rows()
    write_json({"config": cfg.to_dict(), "master_seed": cfg.seed, "delta_t": dts, "gamma": gammas,
                "runs_per_cell": runs, "rows": rows,
                "top_overlap": top_overlap(ranking.rank_by_outages(), ranking.rank_by_shed(), top)}, out)
    click.echo(f"{'bus':>5} {'outages':>8} {'shed':>7} {'r_out':>5} {'r_shed':>6}")
    for r in sorted(rows, key=lambda r: r["rank_outages"]):
        click.echo(f"{r['bus']:>5} {r['mean_outages']:>8.3f} {r['mean_shed_fraction']:>7.4f} "
                   f"{r['rank_outages']:>5} {r['rank_shed']:>6}")


@main.command("validate-case")
@click.option("--case", "case", type=str, help="Case file (JSON); 'rts96' selects the bundled case.")
def validate_case(case: str | None) -> None:
    """Parse a case, solve its base power flow and report key figures."""
    from .powerflow import compute_vsi
    from .state import SystemState, refresh_topology, solve_state, total_served_load

    net = _load_case(case)
    st = SystemState.initial(net)
    refresh_topology(net, st)
    sol = solve_state(net, st, warm=False)
    if not sol.converged:
        click.echo("base power flow: diverged")
        sys.exit(1)
    click.echo(f"buses={net.n_bus} branches={net.n_branch} generators={net.n_gen}")
    click.echo(f"base power flow: converged mismatch={sol.max_mismatch:.2e} pu")
    click.echo(f"served_load_mw={total_served_load(net, st):.2f} vsi={compute_vsi(sol):.3f} "
               f"vm_min={float(np.min(sol.vm)):.4f} vm_max={float(np.max(sol.vm)):.4f}")


@main.command("print-config")
@click.option("--config", "config", type=click.Path(dir_okay=False))
@_guarded
def print_config(config: str | None) -> None:
    """Print the resolved configuration (defaults overlaid by --config) as JSON."""
    cfg = load_config(config) if config else RunConfig()
    click.echo(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))


if __name__ == "__main__":  # pragma: no cover
    main()
