"""Timed single-model and switch-routed SR runs over patch sets."""

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .imaging.metrics import psnr, ssim
from .models.persist import load_model
from .models.training import stack_pairs
from .switch.classifier import SwitchClassifier

RECORD_COLUMNS = ["config", "patch_count", "wall_time_s", "total_flops", "mean_psnr_db", "mean_ssim"]


class ConfigError(ValueError):
    pass


@dataclass
class SingleConfig:
    name: str
    model: object


@dataclass
class HybridConfig:
    """Switch-routed ensemble: class ``k`` of the classifier goes to ``experts[k]``."""

    name: str
    classifier: object
    experts: list


@dataclass
class OracleConfig:
    """Per-patch best expert by PSNR against HR; an upper bound, not deployable.

    Every expert runs on every patch, and flops are charged accordingly.
    """

    name: str
    experts: list


@dataclass
class BenchRecord:
    config_name: str
    patch_count: int
    wall_time: float
    total_flops: int
    mean_psnr: float
    mean_ssim: float
    route_histogram: list = field(default_factory=list)
    per_patch: list = field(default_factory=list)  # (patch_id, model_index, psnr, ssim)


def _infer(config, lr, hr=None, chunk=64):
    """Run inference once; returns ``(sr, route)`` for the whole batch."""
    if isinstance(config, OracleConfig):
        outs = np.stack([_infer(SingleConfig("", e), lr, chunk=chunk)[0] for e in config.experts])
        err = ((outs.astype(np.float64) - hr[None]) ** 2).mean(axis=(2, 3, 4))
        route = np.argmin(err, axis=0)
        return outs[route, np.arange(len(lr))], route
    if isinstance(config, SingleConfig):
        sr = np.concatenate([config.model.forward(lr[i : i + chunk]) for i in range(0, len(lr), chunk)])
        return sr, np.zeros(len(lr), dtype=np.int64)
    route = np.concatenate([config.classifier.route(lr[i : i + chunk]) for i in range(0, len(lr), chunk)])
    scale = config.experts[0].scale
    h, w = lr.shape[-2:]
    sr = np.empty((len(lr), 1, h * scale, w * scale), dtype=np.float64)
    for k, expert in enumerate(config.experts):
        idx = np.flatnonzero(route == k)
        for i in range(0, len(idx), chunk):
            part = idx[i : i + chunk]
            sr[part] = expert.forward(lr[part])
    return sr, route


def config_flops(config, route, lr_shape):
    if isinstance(config, SingleConfig):
        return len(route) * config.model.flops(lr_shape)
    if isinstance(config, OracleConfig):
        return len(route) * sum(e.flops(lr_shape) for e in config.experts)
    per_expert = [e.flops(lr_shape) for e in config.experts]
    counts = np.bincount(route, minlength=len(config.experts))
    return int(sum(int(c) * f for c, f in zip(counts, per_expert))
               + len(route) * config.classifier.flops(lr_shape))


def run_config(config, patches, repeats=3):
    """Median wall time over ``repeats`` single-threaded runs plus quality metrics.

    Hybrid timing includes the classifier's forward pass.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    lr, hr = stack_pairs(patches)
    times = []
    with threadpool_limits(limits=1):
        for _ in range(repeats):
            t0 = time.perf_counter()
            sr, route = _infer(config, lr, hr)
            times.append(time.perf_counter() - t0)
    per_patch = []
    for p, out, k in zip(patches, sr, route):
        per_patch.append((p.id, int(k), psnr(out, p.hr), ssim(out, p.hr)))
    n_models = 1 if isinstance(config, SingleConfig) else len(config.experts)
    return BenchRecord(
        config.name,
        len(patches),
        max(statistics.median(times), 1e-9),
        config_flops(config, route, lr.shape[1:]),
        float(np.mean([r[2] for r in per_patch])),
        float(np.mean([r[3] for r in per_patch])),
        np.bincount(route, minlength=n_models).tolist(),
        per_patch,
    )


def sample_subsets(n_available, patch_counts, seed):
    """Nested random subsets: every count takes a prefix of one seeded permutation."""
    if not patch_counts:
        raise ValueError("patch_counts must be non-empty")
    for c in patch_counts:
        if c > n_available:
            raise ValueError(f"patch count {c} exceeds corpus size {n_available}")
        if c < 1:
            raise ValueError(f"patch count must be >= 1, got {c}")
    perm = np.random.default_rng(seed).permutation(n_available)
    return {c: np.sort(perm[:c]) for c in patch_counts}


def sweep(configs, patches, patch_counts, seed=0, repeats=3):
    """One record per (config, count); all configs see the same patch subsets."""
    subsets = sample_subsets(len(patches), patch_counts, seed)
    records = []
    for count in patch_counts:
        chosen = [patches[i] for i in subsets[count]]
        for config in configs:
            records.append(run_config(config, chosen, repeats))
    return records


def _sorted(records):
    return sorted(records, key=lambda r: (r.config_name, r.patch_count))


def records_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in _sorted(records):
        w.writerow([r.config_name, r.patch_count, f"{r.wall_time:.3g}", int(r.total_flops),
                    f"{r.mean_psnr:.4f}", f"{r.mean_ssim:.4f}"])
    return buf.getvalue()


def records_table(records):
    rows = [RECORD_COLUMNS] + [
        [r.config_name, str(r.patch_count), f"{r.wall_time:.3g}", str(int(r.total_flops)),
         f"{r.mean_psnr:.4f}", f"{r.mean_ssim:.4f}"] for r in _sorted(records)]
    widths = [max(len(row[i]) for row in rows) for i in range(len(RECORD_COLUMNS))]
    lines = []
    for j, row in enumerate(rows):
        cells = [c.ljust(wd) if i == 0 else c.rjust(wd) for i, (c, wd) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"


def report(records, csv_path=None):
    """Return ``(table, csv_text)`` sorted by (config, patch_count); optionally write the CSV."""
    if not records:
        raise ValueError("report needs at least one record")
    text = records_csv(records)
    if csv_path is not None:
        Path(csv_path).write_text(text, encoding="utf-8")
    return records_table(records), text


def read_records(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [BenchRecord(r["config"], int(r["patch_count"]), float(r["wall_time_s"]),
                            int(r["total_flops"]), float(r["mean_psnr_db"]), float(r["mean_ssim"]))
                for r in csv.DictReader(fh)]


def write_per_patch(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch_id", "config", "model_index", "psnr_db", "ssim"])
        for r in _sorted(records):
            for pid, k, p, s in r.per_patch:
                w.writerow([pid, r.config_name, k, f"{p:.9g}", f"{s:.9g}"])


def resolve_config(text, weights_dir, switch_name="switch"):
    """Build a config from ``model``, ``hybrid:expert0+expert1[+...]`` or ``oracle:a+b[+...]``.

    Missing weight files raise :class:`ConfigError` naming the file.
    """
    weights_dir = Path(weights_dir)
    try:
        if text.startswith("oracle:"):
            names = [n for n in text[len("oracle:"):].split("+") if n]
            if not names:
                raise ConfigError(f"oracle config {text!r} lists no experts")
            return OracleConfig(text, [load_model(weights_dir / n) for n in names])
        if text.startswith("hybrid:"):
            names = [n for n in text[len("hybrid:"):].split("+") if n]
            if len(names) < 2:
                raise ConfigError(f"hybrid config {text!r} needs at least two experts")
            clf = SwitchClassifier.load(weights_dir / switch_name)
            if clf.classes != len(names):
                raise ConfigError(f"{switch_name} has {clf.classes} classes but {text!r} lists {len(names)} experts")
            return HybridConfig(text, clf, [load_model(weights_dir / n) for n in names])
        return SingleConfig(text, load_model(weights_dir / text))
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
