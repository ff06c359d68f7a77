"""Experiment orchestration: training runs, the four-variant sweep, and
trace-based metric evaluation, with deterministic CSV/JSON artifacts.

Every run is fully determined by (config, seed): parameter initialization,
the per-step data stream, and the generator map each draw from disjoint
streams keyed by the run seed, so results are independent of scheduling.
Output files are written only after a run completes (aborted runs emit
nothing), and all floats are serialized with ``repr`` so reruns reproduce
artifacts byte-for-byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import tape
from .chunker import (
    BoundaryMask,
    CosineChunkerParams,
    SigmoidChunkerParams,
    confidences,
    cosine_scores,
    enforce_min_boundaries,
    sigmoid_scores,
    threshold_boundaries,
)
from .expansion import byte_smooth_expand, chunk_smooth_expand, fuse_confidence_ste, fuse_residual
from .losses import ratio_loss, total_loss
from .metrics import CSV_COLUMNS, MetricsReport, aggregate, compute_report
from .optim import AdamWState, adamw_step
from .rng import SeededRng
from .synthetic import (
    EncoderParams,
    GeneratorInstance,
    SynthConfig,
    SynthSample,
    boundary_accuracy,
    encode,
    oracle_subsample,
)
from .synthetic import sample as draw_sample
from .tape import DenseArray, NonFiniteError, Tape
from .traceio import TraceFormatError, read_traces

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "RunAborted",
    "LogRow",
    "TrainLog",
    "SWEEP_VARIANTS",
    "init_params",
    "forward",
    "train_step",
    "run_experiment",
    "sweep",
    "trace_eval",
    "report",
    "worker_count",
    "write_train_log",
    "write_metrics_csv",
    "write_manifest",
]

WORKERS_ENV = "CHUNKLAB_WORKERS"

SWEEP_VARIANTS = (
    ("cosine", "chunk"),
    ("cosine", "byte"),
    ("sigmoid", "chunk"),
    ("sigmoid", "byte"),
)

_CHUNKERS = ("cosine", "sigmoid")
_SMOOTHINGS = ("chunk", "byte")
_FUSIONS = ("none", "residual", "confidence_ste")


class ConfigError(ValueError):
    """Bad configuration file, flag value, or flag/key combination."""


class RunAborted(RuntimeError):
    """A training run hit non-finite numbers; carries seed and step."""

    def __init__(self, seed: int, step: int, reason: str):
        super().__init__(f"run aborted (seed={seed}, step={step}): {reason}")
        self.seed = seed
        self.step = step


@dataclass
class ExperimentConfig:
    """All knobs of a synthetic training experiment.

    The generator's boundary rate is tied to the target compression
    (rate = 1 / c_tar). Defaults are the desk-scale study; the full-scale
    protocol used steps=1500 and 25 seeds.
    """

    chunker: str = "sigmoid"
    smoothing: str = "byte"
    fusion: str = "none"
    c_tar: float = 4.0
    c_max: float = 8.0
    steps: int = 1500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    w_mse: float = 1.0
    w_ratio: float = 1.0
    w_cab: float = 0.0
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    T: int = 4096
    d_z: int = 64
    d_x: int = 16
    d_h: int = 128
    sigma: float = 0.1

    def __post_init__(self):
        if self.chunker not in _CHUNKERS:
            raise ConfigError(f"chunker must be one of {_CHUNKERS}, got {self.chunker!r}")
        if self.smoothing not in _SMOOTHINGS:
            raise ConfigError(f"smoothing must be one of {_SMOOTHINGS}, got {self.smoothing!r}")
        if self.fusion not in _FUSIONS:
            raise ConfigError(f"fusion must be one of {_FUSIONS}, got {self.fusion!r}")
        if self.fusion != "none" and self.d_h != self.d_z:
            raise ConfigError("fusion requires matching encoder and latent widths (d_h == d_z)")
        if self.c_tar <= 1:
            raise ConfigError("c_tar must be > 1")
        if self.c_max <= 1:
            raise ConfigError("c_max must be > 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if isinstance(self.seeds, list):
            self.seeds = tuple(self.seeds)

    @property
    def variant(self) -> str:
        return f"{self.chunker}_{self.smoothing}"

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(
            T=self.T, d_z=self.d_z, d_x=self.d_x,
            boundary_rate=1.0 / self.c_tar, sigma=self.sigma, seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELD_KINDS = {
    "chunker": str, "smoothing": str, "fusion": str,
    "c_tar": float, "c_max": float, "steps": int, "lr": float,
    "beta1": float, "beta2": float, "eps": float, "weight_decay": float,
    "w_mse": float, "w_ratio": float, "w_cab": float,
    "seeds": "seeds", "T": int, "d_z": int, "d_x": int, "d_h": int, "sigma": float,
}


def _coerce(name: str, raw: str) -> object:
    kind = _FIELD_KINDS[name]
    if kind == "seeds":
        return tuple(int(s) for s in raw.split(",") if s.strip())
    return kind(raw)


def parse_config_file(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from key=value lines; unknown keys fail fast.

    ``overrides`` (typically CLI flags, same key names) take precedence over
    file values.
    """
    values: dict[str, object] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {e}") from e
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELD_KINDS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# Training


@dataclass
class LogRow:
    step: int
    l_mse: float
    l_ratio: float
    c_emp: float
    accuracy: float
    f1: float

    def csv_row(self) -> list[str]:
        return [str(self.step)] + [repr(v) for v in (self.l_mse, self.l_ratio, self.c_emp, self.accuracy, self.f1)]


TRAIN_COLUMNS = ["step", "l_mse", "l_ratio", "c_emp", "accuracy", "f1"]


@dataclass
class TrainLog:
    """Per-step rows plus a summary row (means over the final 10% of steps)."""

    variant: str
    seed: int
    rows: list[LogRow]
    summary: LogRow = field(init=False)

    def __post_init__(self):
        tail = self.rows[-max(1, len(self.rows) // 10):]
        n = len(tail)
        self.summary = LogRow(
            step=self.rows[-1].step,
            l_mse=sum(r.l_mse for r in tail) / n,
            l_ratio=sum(r.l_ratio for r in tail) / n,
            c_emp=sum(r.c_emp for r in tail) / n,
            accuracy=sum(r.accuracy for r in tail) / n,
            f1=sum(r.f1 for r in tail) / n,
        )


def init_params(cfg: ExperimentConfig, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Deterministic parameter initialization; the encoder draw is shared
    across chunker variants (it comes first on the parameter stream)."""
    rng = SeededRng(seed, stream=1)
    enc = EncoderParams.init(cfg.d_x, cfg.d_h, rng, dtype=dtype)
    params = {k: v.astype(dtype) for k, v in enc.as_dict().items()}
    if cfg.chunker == "cosine":
        cp = CosineChunkerParams.init(cfg.d_h, rng)
        params["chk_Wq"] = cp.W_q.astype(dtype)
        params["chk_Wk"] = cp.W_k.astype(dtype)
    else:
        sp = SigmoidChunkerParams.init(cfg.d_h, rng)
        params["chk_w"] = sp.w.astype(dtype)
        params["chk_bias"] = np.asarray(sp.bias, dtype=dtype)
    return params


@dataclass
class ForwardResult:
    loss: DenseArray
    l_mse: DenseArray
    l_ratio: DenseArray
    mask: BoundaryMask


def forward(cfg: ExperimentConfig, leaves: dict[str, DenseArray], s: SynthSample) -> ForwardResult:
    """The synthetic pipeline: encode, score, threshold (+ guard), smooth-expand
    against oracle chunk states, then MSE + ratio objective."""
    dtype = leaves["enc_U"].data.dtype
    x = tape.constant(s.x, dtype=dtype)
    xE = encode(x, leaves["enc_U"], leaves["enc_V"], leaves["enc_gate_bias"], leaves["enc_O"])
    if cfg.chunker == "cosine":
        scores = cosine_scores(xE, leaves["chk_Wq"], leaves["chk_Wk"])
    else:
        scores = sigmoid_scores(xE, leaves["chk_w"], leaves["chk_bias"])
    mask = enforce_min_boundaries(scores, threshold_boundaries(scores), cfg.c_max)
    conf = confidences(scores)
    chunks = oracle_subsample(s.z.astype(dtype), mask)
    expand = chunk_smooth_expand if cfg.smoothing == "chunk" else byte_smooth_expand
    states = expand(chunks, mask, conf)
    recon = states.xb
    if cfg.fusion == "residual":
        recon = fuse_residual(xE, recon)
    elif cfg.fusion == "confidence_ste":
        recon = fuse_confidence_ste(xE, recon, conf)
    l_mse = tape.mse(recon, tape.constant(s.z, dtype=dtype))
    l_ratio = ratio_loss(scores, mask, cfg.c_tar)
    loss = total_loss(l_mse, l_ratio, 0.0, cfg.w_mse, cfg.w_ratio, cfg.w_cab)
    return ForwardResult(loss=loss, l_mse=l_mse, l_ratio=l_ratio, mask=mask)


def train_step(
    cfg: ExperimentConfig,
    params: dict[str, np.ndarray],
    opt: AdamWState,
    s: SynthSample,
    step: int,
) -> LogRow:
    """One optimization step on a fresh sample; returns the log row."""
    t = Tape()
    leaves = {name: t.leaf(arr) for name, arr in params.items()}
    result = forward(cfg, leaves, s)
    t.backward(result.loss)
    grads = {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(params[name]))
        for name, leaf in leaves.items()
    }
    adamw_step(params, grads, opt)
    acc, _, _, f1 = boundary_accuracy(result.mask.b, s.b_star)
    return LogRow(
        step=step,
        l_mse=result.l_mse.item(),
        l_ratio=result.l_ratio.item(),
        c_emp=result.mask.T / result.mask.K,
        accuracy=acc,
        f1=f1,
    )


def run_single_seed(cfg: ExperimentConfig, seed: int) -> TrainLog:
    """Train one seed to completion; fully deterministic from (cfg, seed)."""
    params = init_params(cfg, seed)
    opt = AdamWState(lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps, weight_decay=cfg.weight_decay)
    gen = GeneratorInstance(cfg.d_z, cfg.d_x, SeededRng(seed, stream=2))
    data_rng = SeededRng(seed, stream=0)
    synth_cfg = cfg.synth_config(seed)
    rows = []
    for step in range(1, cfg.steps + 1):
        s = draw_sample(synth_cfg, gen, data_rng)
        try:
            rows.append(train_step(cfg, params, opt, s, step))
        except NonFiniteError as e:
            raise RunAborted(seed, step, str(e)) from e
    return TrainLog(variant=cfg.variant, seed=seed, rows=rows)


def worker_count() -> int:
    """Worker processes for seed/variant parallelism, from the environment."""
    raw = os.environ.get(WORKERS_ENV, "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError as e:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def _run_seed_task(args: tuple[dict, int]) -> TrainLog:
    cfg_dict, seed = args
    cfg_dict = dict(cfg_dict)
    cfg_dict["seeds"] = tuple(cfg_dict["seeds"])
    return run_single_seed(ExperimentConfig(**cfg_dict), seed)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[TrainLog]:
    """Independent training runs for every configured seed, in seed order."""
    if workers is None:
        workers = worker_count()
    tasks = [(cfg.to_dict(), seed) for seed in cfg.seeds]
    if workers <= 1 or len(tasks) <= 1:
        return [_run_seed_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_run_seed_task, tasks))


@dataclass
class SweepResult:
    logs: dict[str, list[TrainLog]]

    def variants(self) -> list[str]:
        return list(self.logs.keys())


def sweep(base: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Run the four chunker x smoothing variants over the configured seeds."""
    if workers is None:
        workers = worker_count()
    tasks = []
    for chunker, smoothing in SWEEP_VARIANTS:
        cfg = replace(base, chunker=chunker, smoothing=smoothing)
        for seed in cfg.seeds:
            tasks.append((cfg.to_dict(), seed))
    if workers <= 1 or len(tasks) <= 1:
        results = [_run_seed_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_seed_task, tasks))
    logs: dict[str, list[TrainLog]] = {}
    for log in results:
        logs.setdefault(log.variant, []).append(log)
    for variant in logs:
        logs[variant].sort(key=lambda lg: lg.seed)
    return SweepResult(logs=logs)


# ---------------------------------------------------------------------------
# Artifact writing


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_train_log(out_dir: str | Path, log: TrainLog) -> Path:
    path = Path(out_dir) / f"train_{log.variant}_seed{log.seed}.csv"
    rows = [r.csv_row() for r in log.rows]
    rows.append(["summary"] + log.summary.csv_row()[1:])
    _write_csv(path, TRAIN_COLUMNS, rows)
    return path


SWEEP_SUMMARY_COLUMNS = [
    "variant", "chunker", "smoothing", "n_seeds",
    "final_mse_q25", "final_mse_median", "final_mse_q75",
    "final_cemp_median", "final_accuracy_median", "final_f1_median",
]


def write_sweep_outputs(out_dir: str | Path, result: SweepResult) -> list[Path]:
    """Per-variant quantile curves plus a one-row-per-variant summary CSV."""
    out_dir = Path(out_dir)
    paths = []
    summary_rows = []
    for variant in sorted(result.logs):
        logs = result.logs[variant]
        steps = [r.step for r in logs[0].rows]
        mse = np.array([[r.l_mse for r in lg.rows] for lg in logs])
        cemp = np.array([[r.c_emp for r in lg.rows] for lg in logs])
        curve_rows = []
        for i, step in enumerate(steps):
            qs_m = np.quantile(mse[:, i], [0.25, 0.5, 0.75])
            qs_c = np.quantile(cemp[:, i], [0.25, 0.5, 0.75])
            curve_rows.append([str(step)] + [repr(float(v)) for v in (*qs_m, *qs_c)])
        curve_path = out_dir / f"sweep_curves_{variant}.csv"
        _write_csv(
            curve_path,
            ["step", "mse_q25", "mse_median", "mse_q75", "cemp_q25", "cemp_median", "cemp_q75"],
            curve_rows,
        )
        paths.append(curve_path)
        finals_mse = np.array([lg.summary.l_mse for lg in logs])
        chunker, smoothing = variant.split("_")
        summary_rows.append([
            variant, chunker, smoothing, str(len(logs)),
            repr(float(np.quantile(finals_mse, 0.25))),
            repr(float(np.quantile(finals_mse, 0.5))),
            repr(float(np.quantile(finals_mse, 0.75))),
            repr(float(np.median([lg.summary.c_emp for lg in logs]))),
            repr(float(np.median([lg.summary.accuracy for lg in logs]))),
            repr(float(np.median([lg.summary.f1 for lg in logs]))),
        ])
    summary_path = out_dir / "sweep_summary.csv"
    _write_csv(summary_path, SWEEP_SUMMARY_COLUMNS, summary_rows)
    paths.append(summary_path)
    return paths


def write_metrics_csv(path: str | Path, reports: list[MetricsReport]) -> Path:
    path = Path(path)
    _write_csv(path, CSV_COLUMNS, [r.csv_row() for r in reports])
    return path


def write_manifest(out_dir: str | Path, config: dict, artifacts: list[Path], extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    blob = json.dumps(config, sort_keys=True)
    manifest = {
        "config": config,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest()[:16],
        "artifacts": sorted(str(p.relative_to(out_dir)) for p in artifacts),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# Trace evaluation and reporting


@dataclass
class TraceEvalResult:
    reports: list[MetricsReport]
    aggregate: MetricsReport | None
    skipped: list[str]


def trace_eval(
    paths: list[str | Path],
    null_mode: str = "exact",
    mc_shifts: int = 512,
    seed: int = 0,
) -> TraceEvalResult:
    """Per-trace and aggregate statistics over JSONL trace files.

    Malformed records are skipped and recorded; callers can flag a partial
    evaluation. An empty input (no valid traces at all) is an error.
    """
    reports: list[MetricsReport] = []
    skipped: list[str] = []
    for path in paths:
        for item in read_traces(path, strict=False):
            if isinstance(item, TraceFormatError):
                skipped.append(str(item))
                continue
            reports.append(compute_report(item, null_mode=null_mode, mc_shifts=mc_shifts, seed=seed))
    if not reports:
        raise ConfigError("no valid traces found")
    return TraceEvalResult(reports=reports, aggregate=aggregate(reports), skipped=skipped)


def report(in_dir: str | Path, out_dir: str | Path) -> Path:
    """Combine the artifacts under ``in_dir`` into a single report.json.

    Picks up train_*.csv summary rows and metrics.csv aggregate rows; the
    result is a machine-readable digest of a finished experiment directory.
    """
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest: dict = {"source": str(in_dir), "train_runs": [], "metrics": []}
    for path in sorted(in_dir.glob("train_*.csv")):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        last = rows[-1]
        entry = {"file": path.name}
        entry.update({k: (last[k] if k == "step" else float(last[k])) for k in last})
        digest["train_runs"].append(entry)
    for path in sorted(in_dir.glob("*metrics*.csv")):
        with open(path) as fh:
            for row in csv.DictReader(fh):
                if row["id"] == "AGGREGATE":
                    digest["metrics"].append({"file": path.name, **row})
    if not digest["train_runs"] and not digest["metrics"]:
        raise ConfigError(f"no train_*.csv or metrics CSVs under {in_dir}")
    path = out_dir / "report.json"
    with open(path, "w") as fh:
        json.dump(digest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
