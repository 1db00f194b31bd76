"""Experiment orchestration: single runs, noise sweeps and plot-data export.

Every run directory holds::

    config.txt          the exact RunConfig, key = value
    runlog.jsonl        a header record (version + config), then one record per episode
    certification.json  certify() outcome with config and version
    checkpoints/        actor/critic snapshots every ``checkpoint_every`` episodes

Nothing written here carries a timestamp, so a rerun with the same config is
byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import learners as L
from . import nn
from . import oracle as O
from .config import RunConfig

log = logging.getLogger(__name__)

EXIT_OPTIMAL = 0
EXIT_SUBOPTIMAL = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

SMOOTHING_WINDOW = 200
DEFAULT_LEVELS = tuple(round(0.05 * k, 2) for k in range(11))
LATE_EPISODES = 1000


def version_string() -> str:
    return f"orgmarl {__version__}"


def _dump(obj) -> str:
    # repr-precision floats, stable key order
    return json.dumps(obj, sort_keys=True)


def worker_count(requested: int | None = None) -> int:
    """Requested workers, capped by ``ORGMARL_WORKERS`` and the CPU count."""
    cap = os.environ.get("ORGMARL_WORKERS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


# --- single run ---------------------------------------------------------------------


@dataclass
class RunOutcome:
    directory: Path | None
    status: str  # converged / budget / diverged
    certification: O.CertifyReport | None
    episodes: int
    converged_at: int | None
    late_accuracy: float
    message: str = ""

    @property
    def exit_code(self) -> int:
        if self.status == "diverged":
            return EXIT_DIVERGED
        return EXIT_OPTIMAL if self.certification and self.certification.optimal else EXIT_SUBOPTIMAL

    @property
    def gap(self) -> float:
        return self.certification.gap if self.certification else float("nan")


def run_directory(cfg: RunConfig) -> Path:
    return Path(cfg.out or "runs") / cfg.name


def _late_accuracy(records, n_late=LATE_EPISODES) -> float:
    vals = [a for r in records[-n_late:] for a in r.accuracy if a is not None]
    return float(np.mean(vals)) if vals else float("nan")


def _write_checkpoint(directory: Path, episode: int, learners):
    ck = directory / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    for i, lr in enumerate(learners):
        (ck / f"ep{episode:07d}_agent{i}_actor.txt").write_text(nn.dumps(lr.actor))
        (ck / f"ep{episode:07d}_agent{i}_critic.txt").write_text(nn.dumps(lr.critic))
        if lr.uses_filter:
            # beliefs restart from the uniform prior every episode
            prior = np.full(len(lr.model_ids), 1.0 / len(lr.model_ids))
            (ck / f"ep{episode:07d}_agent{i}_belief.txt").write_text(
                "".join(f"{w!r}\n" for w in prior.tolist()))


def run(cfg: RunConfig, write: bool = True, best: O.BestResult | None = None) -> RunOutcome:
    """Train, certify and (optionally) write a run directory."""
    params = cfg.domain()
    directory = run_directory(cfg) if write else None
    learners = L.make_learners(cfg)
    fh = None
    if directory is not None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.txt").write_text(cfg.to_text())
        fh = open(directory / "runlog.jsonl", "w")
        fh.write(_dump({"type": "header", "version": version_string(), "config": cfg.to_dict()}) + "\n")

    def on_episode(rec):
        if fh is not None:
            fh.write(_dump({"type": "episode", **rec.to_dict()}) + "\n")
            if cfg.checkpoint_every and (rec.episode + 1) % cfg.checkpoint_every == 0:
                fh.flush()
                _write_checkpoint(directory, rec.episode + 1, learners)

    try:
        result = L.train(cfg, callback=on_episode, learners=learners)
    finally:
        if fh is not None:
            fh.close()

    report = None
    if result.status != "diverged":
        best = best or O.enumerate_best(params, cfg.eval_horizon)
        report, _ = L.certify_learners(result.learners, params, cfg.eval_horizon, best)
    outcome = RunOutcome(directory, result.status, report, result.episodes, result.converged_at,
                         _late_accuracy(result.records), result.message)
    if directory is not None:
        doc = {
            "version": version_string(),
            "config": cfg.to_dict(),
            "training_status": result.status,
            "episodes": result.episodes,
            "converged_at": result.converged_at,
            "late_prediction_accuracy": outcome.late_accuracy,
            "message": result.message,
            "certification": report.to_dict() if report else None,
        }
        (directory / "certification.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return outcome


def read_runlog(path) -> tuple[dict, list[dict]]:
    """Header and episode records of a run log; raises ValueError on malformed content."""
    header, records = None, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.msg}") from None
            if rec.get("type") == "header":
                header = rec
            elif rec.get("type") == "episode":
                records.append(rec)
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type")
    if header is None:
        raise ValueError(f"{path}: missing header record")
    return header, records


# --- noise sweep ------------------------------------------------------------------------


@dataclass
class SweepRun:
    level: float
    seed: int
    gap: float
    optimal: bool
    status: str
    converged_at: int | None
    late_accuracy: float


@dataclass
class SweepResult:
    levels: list
    runs_per_level: int
    runs: list = field(default_factory=list)

    def successes(self, level) -> int:
        return sum(r.optimal for r in self.runs if r.level == level)

    def mean_gap(self, level) -> float:
        gaps = [r.gap for r in self.runs if r.level == level and np.isfinite(r.gap)]
        return float(np.mean(gaps)) if gaps else float("nan")

    def counts(self) -> list[int]:
        return [self.successes(lv) for lv in self.levels]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "successes", "runs", "mean_gap"])
        for lv in self.levels:
            w.writerow([repr(float(lv)), self.successes(lv), self.runs_per_level, repr(self.mean_gap(lv))])
        return buf.getvalue()

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "seed", "gap", "optimal", "status", "converged_at", "late_accuracy"])
        for r in self.runs:
            w.writerow([repr(float(r.level)), r.seed, repr(float(r.gap)), int(r.optimal), r.status,
                        "" if r.converged_at is None else r.converged_at, repr(float(r.late_accuracy))])
        return buf.getvalue()


def _sweep_task(args) -> SweepRun:
    cfg, level, seed = args
    out = run(cfg.replace(private_noise=level, seed=seed), write=False)
    return SweepRun(level, seed, out.gap, bool(out.certification and out.certification.optimal), out.status,
                    out.converged_at, out.late_accuracy)


def sweep_noise(base: RunConfig, levels=DEFAULT_LEVELS, runs: int = 5, workers: int | None = None,
                out_dir=None) -> SweepResult:
    """Train ``runs`` seeds per private-noise level and count certified-optimal outcomes.

    Seeds are ``base.seed .. base.seed + runs - 1`` at every level. Results are
    merged in (level, seed) order, so the worker count never changes the output.
    """
    levels = [float(lv) for lv in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("noise levels must be strictly increasing")
    for lv in levels:
        base.replace(private_noise=lv)  # validates the range
    tasks = [(base, lv, base.seed + k) for lv in levels for k in range(runs)]
    n_workers = min(worker_count(workers), len(tasks)) if tasks else 1
    if n_workers <= 1:
        results = [_sweep_task(t) for t in tasks]
    else:
        with multiprocessing.get_context("spawn").Pool(n_workers) as pool:
            results = pool.map(_sweep_task, tasks, chunksize=1)
    results.sort(key=lambda r: (r.level, r.seed))
    result = SweepResult(levels, runs, results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(result.summary_csv())
        (out / "sweep_runs.csv").write_text(result.runs_csv())
        (out / "provenance.json").write_text(json.dumps(
            {"version": version_string(), "config": base.to_dict(), "levels": levels, "runs_per_level": runs},
            indent=2, sort_keys=True) + "\n")
    return result


# --- plot-data export ------------------------------------------------------------------


def smooth(values: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average; the first entries average over what is available."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    c = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _group_key(config: dict) -> str:
    seats = config.get("algo", "")
    return f"{seats}|n={config.get('n_agents')}|eta={config.get('private_noise')}"


def _curve_rows(group: str, curves: list[np.ndarray]):
    length = min(len(c) for c in curves)
    stack = np.stack([smooth(c[:length]) for c in curves])
    mean, std = stack.mean(axis=0), stack.std(axis=0)
    for ep in range(length):
        yield [group, ep, repr(float(mean[ep])), repr(float(std[ep])), len(curves)]


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def emit_plot_data(run_dirs, out_dir, crossover_H: int = 4, d: float = 9 / 4) -> dict:
    """Write one CSV per figure from run directories; returns {figure: path}.

    reward_vs_episode.csv / loss_vs_episode.csv: group, episode, mean, std, runs
    (per-episode team return and mean critic loss, smoothed over 200 episodes,
    then mean and std across seeds). success_vs_noise.csv concatenates sweep
    summaries found in the inputs. crossover.csv is the oracle's sign grid.
    Unreadable logs are skipped with a warning.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rewards, losses, configs, sweeps = {}, {}, [], []
    for d_ in sorted(str(p) for p in run_dirs):
        path = Path(d_)
        sweep_csv = path / "sweep.csv"
        if sweep_csv.exists():
            try:
                with open(sweep_csv) as fh:
                    rows = list(csv.DictReader(fh))
                sweeps.extend([path.name, r["level"], r["successes"], r["runs"], r["mean_gap"]] for r in rows)
            except (OSError, KeyError, csv.Error) as exc:
                log.warning("skipping %s: %s", sweep_csv, exc)
        logfile = path / "runlog.jsonl"
        if not logfile.exists():
            if not sweep_csv.exists():
                log.warning("skipping %s: no runlog.jsonl", path)
            continue
        try:
            header, records = read_runlog(logfile)
            team = np.array([sum(r["returns"]) for r in records], dtype=float)
            loss = np.array([np.mean(r["critic_loss"]) for r in records], dtype=float)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("skipping %s: %s", logfile, exc)
            continue
        if len(records) == 0:
            log.warning("skipping %s: no episodes", logfile)
            continue
        key = _group_key(header["config"])
        rewards.setdefault(key, []).append(team)
        losses.setdefault(key, []).append(loss)
        configs.append({"run": path.name, "config": header["config"], "version": header.get("version")})

    curve_header = ["group", "episode", "mean", "std", "runs"]
    paths = {
        "reward_vs_episode": out / "reward_vs_episode.csv",
        "loss_vs_episode": out / "loss_vs_episode.csv",
        "success_vs_noise": out / "success_vs_noise.csv",
        "crossover": out / "crossover.csv",
    }
    _write_csv(paths["reward_vs_episode"], curve_header,
               [row for g in sorted(rewards) for row in _curve_rows(g, rewards[g])])
    _write_csv(paths["loss_vs_episode"], curve_header,
               [row for g in sorted(losses) for row in _curve_rows(g, losses[g])])
    _write_csv(paths["success_vs_noise"], ["source", "level", "successes", "runs", "mean_gap"], sweeps)
    grid = O.policy_crossover(CROSSOVER_BETAS, CROSSOVER_PHIS, crossover_H, d)
    _write_csv(paths["crossover"], ["beta", "phi", "H", "winner"],
               [[repr(b), repr(p), h, w] for b, p, h, w in grid.rows()])
    (out / "provenance.json").write_text(json.dumps(
        {"version": version_string(), "runs": configs, "smoothing_window": SMOOTHING_WINDOW},
        indent=2, sort_keys=True) + "\n")
    return paths


CROSSOVER_BETAS = tuple(round(2.5 + 0.1 * k, 2) for k in range(76))
CROSSOVER_PHIS = tuple(round(0.05 * k, 2) for k in range(1, 20))
