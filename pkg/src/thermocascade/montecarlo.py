"""Monte Carlo batches, parameter sweeps and the vulnerable-bus scan."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .config import RunConfig
from .engine import run_cascade
from .grid import Network

CSV_FIELDS = ("seed", "center_bus", "gamma", "delta_t", "lines_tripped", "gens_tripped",
              "shed_mw", "termination")
SWEEP_PARAMS = ("delta_t", "gamma")


def run_seed(master_seed: int, *key: int) -> int:
    """Per-run seed from (master seed, run key) via numpy's SeedSequence spawn keys."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class RunRecord:
    seed: int
    center_bus: int
    gamma: float
    delta_t: float
    lines_tripped: int
    gens_tripped: int
    shed_mw: float
    termination: str

    @property
    def outages(self) -> int:
        return self.lines_tripped + self.gens_tripped


def simulate_one(net: Network, cfg: RunConfig, seed: int) -> RunRecord:
    tr = run_cascade(net, cfg, seed=seed)
    return RunRecord(seed, tr.center_bus, cfg.gamma, cfg.delta_t, tr.lines_tripped,
                     tr.gens_tripped, float(tr.shed_mw), tr.termination)


# ---------------------------------------------------------------------------
# Worker pool plumbing
# ---------------------------------------------------------------------------

_WORKER_NET: Network | None = None


def _init_worker(net: Network) -> None:
    global _WORKER_NET
    _WORKER_NET = net


def _work(job: tuple[RunConfig, int]) -> RunRecord:
    cfg, seed = job
    return simulate_one(_WORKER_NET, cfg, seed)


def default_workers() -> int:
    env = os.environ.get("CASCADE_SIM_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def iter_runs(net: Network, jobs: Sequence[tuple[RunConfig, int]], workers: int = 1) -> Iterator[RunRecord]:
    """Yield records in job order whatever the worker count."""
    if workers <= 1 or len(jobs) <= 1:
        for cfg, seed in jobs:
            yield simulate_one(net, cfg, seed)
        return
    chunk = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(net,)) as pool:
        yield from pool.map(_work, jobs, chunksize=chunk)


def collect(
    net: Network,
    jobs: Sequence[tuple[RunConfig, int]],
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> list[RunRecord]:
    """Run ``jobs`` in order, reporting each finished record as it arrives."""
    records = []
    for rec in iter_runs(net, jobs, workers):
        records.append(rec)
        if on_record:
            on_record(rec)
        if progress:
            progress(len(records), len(jobs))
    return records


def batch_jobs(cfg: RunConfig, n_runs: int, master_seed: int, offset: int = 0) -> list[tuple[RunConfig, int]]:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    return [(cfg, run_seed(master_seed, offset + i)) for i in range(n_runs)]


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class BatchStats:
    n: int
    mean_lines: float
    std_lines: float
    mean_gens: float
    std_gens: float
    mean_outages: float
    std_outages: float
    mean_shed_mw: float
    std_shed_mw: float
    shed_bin_mw: float
    shed_hist: list[int]
    terminations: dict[str, int]
    outages: list[int] = field(default_factory=list)

    @property
    def sem_outages(self) -> float:
        """Standard error of the mean outage count."""
        return self.std_outages / np.sqrt(self.n)

    def to_dict(self, include_samples: bool = False) -> dict:
        d = asdict(self)
        if not include_samples:
            d.pop("outages")
        return d


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1))


def summarize(records: Sequence[RunRecord], bin_width: float = 100.0) -> BatchStats:
    if not records:
        raise ValueError("cannot summarize an empty batch")
    lines = np.array([r.lines_tripped for r in records], dtype=float)
    gens = np.array([r.gens_tripped for r in records], dtype=float)
    shed = np.array([r.shed_mw for r in records], dtype=float)
    total = lines + gens
    nbins = int(np.floor(shed.max() / bin_width)) + 1
    hist = np.bincount(np.floor(shed / bin_width).astype(int), minlength=nbins)
    terms: dict[str, int] = {}
    for r in records:
        terms[r.termination] = terms.get(r.termination, 0) + 1
    return BatchStats(
        len(records), *_mean_std(lines), *_mean_std(gens), *_mean_std(total), *_mean_std(shed),
        float(bin_width), [int(h) for h in hist], dict(sorted(terms.items())),
        [int(v) for v in total],
    )


@dataclass
class BatchResult:
    records: list[RunRecord]
    stats: BatchStats


def run_batch(
    net: Network,
    cfg: RunConfig,
    n_runs: int,
    master_seed: int,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> BatchResult:
    """n independent runs; a fixed ``cfg.center_bus`` or a random load bus per run."""
    jobs = batch_jobs(cfg, n_runs, master_seed)
    records = collect(net, jobs, workers, progress, on_record)
    return BatchResult(records, summarize(records))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def knee(values: Sequence[float], means: Sequence[float]) -> float | None:
    """Value at which the discrete second difference of the mean curve peaks."""
    if len(values) < 3:
        return None
    m = np.asarray(means, dtype=float)
    d2 = m[2:] - 2.0 * m[1:-1] + m[:-2]
    return float(values[1 + int(np.argmax(d2))])


@dataclass
class SweepResult:
    parameter: str
    values: list[float]
    stats: list[BatchStats]

    @property
    def means(self) -> list[float]:
        return [s.mean_outages for s in self.stats]

    @property
    def knee(self) -> float | None:
        return knee(self.values, self.means)

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "values": self.values, "knee": self.knee,
                "stats": [s.to_dict() for s in self.stats]}


def sweep(
    net: Network,
    cfg: RunConfig,
    parameter: str,
    values: Sequence[float],
    n_per_value: int,
    master_seed: int,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> tuple[SweepResult, list[RunRecord]]:
    """One batch per grid value; every value reuses the same run seeds."""
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMS}")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep grid is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep grid must be strictly increasing")
    jobs = []
    for v in values:
        c = cfg.with_(**{parameter: v})
        jobs.extend(batch_jobs(c, n_per_value, master_seed))
    records = collect(net, jobs, workers, progress, on_record)
    stats = [summarize(records[i * n_per_value:(i + 1) * n_per_value]) for i in range(len(values))]
    return SweepResult(parameter, values, stats), records


# ---------------------------------------------------------------------------
# Vulnerable buses
# ---------------------------------------------------------------------------

@dataclass
class VulnerabilityRanking:
    buses: list[int]
    mean_outages: list[float]
    mean_shed_fraction: list[float]

    def rank_by_outages(self) -> list[int]:
        order = sorted(range(len(self.buses)), key=lambda i: (-self.mean_outages[i], self.buses[i]))
        return [self.buses[i] for i in order]

    def rank_by_shed(self) -> list[int]:
        order = sorted(range(len(self.buses)), key=lambda i: (-self.mean_shed_fraction[i], self.buses[i]))
        return [self.buses[i] for i in order]

    def to_rows(self) -> list[dict]:
        by_out = {b: i + 1 for i, b in enumerate(self.rank_by_outages())}
        by_shed = {b: i + 1 for i, b in enumerate(self.rank_by_shed())}
        return [{"bus": b, "mean_outages": o, "mean_shed_fraction": s,
                 "rank_outages": by_out[b], "rank_shed": by_shed[b]}
                for b, o, s in zip(self.buses, self.mean_outages, self.mean_shed_fraction)]


def top_overlap(a: Sequence[int], b: Sequence[int], k: int = 8) -> float:
    return len(set(a[:k]) & set(b[:k])) / float(k)


def vulnerability_scan(
    net: Network,
    cfg: RunConfig,
    dt_values: Sequence[float],
    gamma_values: Sequence[float],
    n_per_cell: int,
    master_seed: int,
    buses: Sequence[int] | None = None,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> VulnerabilityRanking:
    """Runs centered on every load bus over the (delta_t, gamma) grid."""
    if not dt_values or not gamma_values:
        raise ValueError("scan grids must be nonempty")
    if n_per_cell < 1:
        raise ValueError("n_per_cell must be >= 1")
    buses = list(net.load_bus_ids if buses is None else buses)
    jobs = []
    for b in buses:
        for ci, (dt, g) in enumerate((dt, g) for dt in dt_values for g in gamma_values):
            c = cfg.with_(center_bus=int(b), delta_t=float(dt), gamma=float(g))
            jobs.extend((c, run_seed(master_seed, b, ci, i)) for i in range(n_per_cell))
    per_bus = len(dt_values) * len(gamma_values) * n_per_cell
    total_load = net.total_nominal_load()
    outs, sheds = [], []
    records = collect(net, jobs, workers, progress, on_record)
    for k, b in enumerate(buses):
        chunk = records[k * per_bus:(k + 1) * per_bus]
        outs.append(float(np.mean([r.outages for r in chunk])))
        sheds.append(float(np.mean([min(r.shed_mw / total_load, 1.0) for r in chunk])))
    return VulnerabilityRanking([int(b) for b in buses], outs, sheds)


# ---------------------------------------------------------------------------
# IO
# ---------------------------------------------------------------------------

def record_row(rec: RunRecord) -> list:
    return [rec.seed, rec.center_bus, repr(float(rec.gamma)), repr(float(rec.delta_t)),
            rec.lines_tripped, rec.gens_tripped, repr(float(rec.shed_mw)), rec.termination]


def records_to_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in records:
        w.writerow(record_row(rec))
    return buf.getvalue()


def read_records_csv(path: str | Path) -> list[RunRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [RunRecord(int(r["seed"]), int(r["center_bus"]), float(r["gamma"]), float(r["delta_t"]),
                      int(r["lines_tripped"]), int(r["gens_tripped"]), float(r["shed_mw"]),
                      r["termination"]) for r in rows]


def write_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
