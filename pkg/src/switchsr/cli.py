"""``switchsr`` command-line entry point.

Settings come from built-in defaults, then an optional flat ``key=value``
config file (``--config``), then command-line flags. Model hyperparameters
are set with dotted keys such as ``fsrcnn_t.d=16``.
"""

import argparse
import csv
import dataclasses
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench, dataset
from .imaging import entropy, psnr, ssim, write_metrics_csv
from .models import MODEL_NAMES, ModelSpec, build, load_model, minimal_grad_check, save_model, train
from .models.training import stack_pairs
from .switch import (
    LABEL_INDEX,
    SwitchClassifier,
    coupled_train,
    label_by_delta_ssim,
    read_labels,
    route_patches,
    train_switch,
    write_assignment,
    write_labels,
)

log = logging.getLogger("switchsr")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

COMMANDS = ("prepare", "synth", "train-model", "label", "train-switch", "couple", "route",
            "bench", "report", "gradcheck", "metrics")


@dataclasses.dataclass
class RunConfig:
    out: str = "runs"
    corpus: str = ""
    weights: str = ""
    scale: int = 4
    tau: float = 0.02
    seed: int = 0
    threads: int = 0
    epochs: int = 30
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 8
    switch_epochs: int = 10
    switch_lr: float = 0.05
    n: int = 200
    patch_size: int = 64
    split: float = 0.8
    patch_counts: str = "100,200,300,400"
    repeats: int = 3
    rounds: int = 2
    hyper: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")

    @property
    def out_dir(self):
        return Path(self.out)

    @property
    def corpus_dir(self):
        return Path(self.corpus) if self.corpus else self.out_dir / "corpus"

    @property
    def weights_dir(self):
        return Path(self.weights) if self.weights else self.out_dir / "weights"

    def model_spec(self, name):
        return ModelSpec(name, self.scale, dict(self.hyper.get(name, {})))

    def echo(self):
        items = [f"{f.name}={getattr(self, f.name)}" for f in dataclasses.fields(self) if f.name != "hyper"]
        for model in sorted(self.hyper):
            items += [f"{model}.{k}={v}" for k, v in sorted(self.hyper[model].items())]
        return " ".join(items)


def _coerce(field, value):
    kind = {f.name: f.type for f in dataclasses.fields(RunConfig)}[field]
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    return value


def parse_config_text(text):
    values, hyper = {}, {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        if "." in key:
            model, param = key.split(".", 1)
            if model not in MODEL_NAMES:
                raise ValueError(f"config line {lineno}: unknown model {model!r}")
            hyper.setdefault(model, {})[param] = value if param == "loss" else int(value)
        elif key in names and key != "hyper":
            values[key] = _coerce(key, value)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return values, hyper


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--tau", type=float)
    common.add_argument("--scale", type=int, choices=(2, 4))
    common.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("--corpus", help="corpus directory (default OUT/corpus)")
    common.add_argument("--weights", help="weights directory (default OUT/weights)")
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--momentum", type=float)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="switchsr", description="Switch-guided hybrid super-resolution pipeline")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("prepare", parents=[common], help="tile mosaics into an HR/LR corpus")
    p.add_argument("--mosaic", action="append", required=True)
    p.add_argument("--patch-h", type=int, required=True)
    p.add_argument("--patch-w", type=int, required=True)
    p.add_argument("--sample-n", type=int, required=True)
    p.add_argument("--split", type=float)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    p.add_argument("--n", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--split", type=float)

    p = sub.add_parser("train-model", parents=[common], help="train one SR model on the train split")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)

    p = sub.add_parser("label", parents=[common], help="easy/difficult labels by SSIM gain")
    p.add_argument("--deep", required=True, choices=MODEL_NAMES)

    p = sub.add_parser("train-switch", parents=[common], help="train the 2-way switch on labels")
    p.add_argument("--labels", help="labels CSV (default OUT/labels.csv)")
    p.add_argument("--switch-epochs", dest="switch_epochs", type=int)
    p.add_argument("--switch-lr", dest="switch_lr", type=float)

    p = sub.add_parser("couple", parents=[common], help="coupled switch + expert training")
    p.add_argument("--models", default="dbpn_t,dbpn_cascade_t,fsrcnn_t,drln_proxy_t,lapsrn_t")
    p.add_argument("--rounds", type=int)
    p.add_argument("--switch-epochs", dest="switch_epochs", type=int)
    p.add_argument("--switch-lr", dest="switch_lr", type=float)

    p = sub.add_parser("route", parents=[common], help="route every patch with the trained switch")

    p = sub.add_parser("bench", parents=[common], help="time/quality sweep over configs")
    p.add_argument("--configs", default="fsrcnn_t,dbpn_t,hybrid:fsrcnn_t+dbpn_t")
    p.add_argument("--patch-counts", dest="patch_counts")
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("report", parents=[common], help="tabulate benchmark records")
    p.add_argument("--records", help="records CSV (default OUT/bench.csv)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)

    p = sub.add_parser("metrics", parents=[common], help="PSNR/SSIM/entropy per patch")
    p.add_argument("--model", default="bicubic_baseline", choices=MODEL_NAMES)
    return parser


def resolve_config(args):
    values, hyper = {}, {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        values, hyper = parse_config_text(path.read_text(encoding="utf-8"))
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in vars(args).items():
        if key in names and value is not None:
            values[key] = value
    return RunConfig(**values, hyper=hyper)


def _patches(cfg, split=None):
    manifest = dataset.load_manifest(cfg.corpus_dir / "manifest.csv")
    problems = dataset.validate_manifest(manifest, cfg.scale)
    if problems:
        raise ValueError("invalid manifest:\n  " + "\n  ".join(problems))
    return dataset.load_patches(manifest, split)


def cmd_prepare(cfg, args):
    m = dataset.prepare(args.mosaic, args.patch_h, args.patch_w, cfg.scale, args.sample_n,
                        cfg.split, cfg.seed, cfg.corpus_dir)
    print(f"wrote {len(m.rows)} patches to {cfg.corpus_dir}")


def cmd_synth(cfg, args):
    m = dataset.synth_corpus(cfg.n, cfg.patch_size, cfg.patch_size, cfg.seed, cfg.corpus_dir,
                             cfg.scale, cfg.split)
    print(f"wrote {len(m.rows)} synthetic patches to {cfg.corpus_dir}")


def cmd_train_model(cfg, args):
    patches = _patches(cfg, "train")
    model = build(cfg.model_spec(args.model), cfg.seed)
    _, losses = train(model, patches, cfg.epochs, cfg.lr, cfg.seed, cfg.momentum, cfg.batch_size)
    save_model(model, cfg.weights_dir / args.model)
    with open(cfg.out_dir / f"{args.model}_loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows([i + 1, f"{v:.9g}"] for i, v in enumerate(losses))
    print(f"{args.model}: final loss {losses[-1] if losses else float('nan'):.6g}")


def cmd_label(cfg, args):
    patches = _patches(cfg)
    deep = load_model(cfg.weights_dir / args.deep)
    labels = label_by_delta_ssim(patches, deep, cfg.tau)
    write_labels(cfg.out_dir / "labels.csv", labels)
    hard = sum(l.label == "difficult" for l in labels)
    print(f"{hard}/{len(labels)} patches difficult at tau={cfg.tau}")


def _label_arrays(patches, labels):
    by_id = {l.patch_id: LABEL_INDEX[l.label] for l in labels}
    missing = [p.id for p in patches if p.id not in by_id]
    if missing:
        raise ValueError(f"no label for patches {missing[:5]}")
    lr, _ = stack_pairs(patches)
    return lr, np.array([by_id[p.id] for p in patches])


def cmd_train_switch(cfg, args):
    labels = read_labels(args.labels or cfg.out_dir / "labels.csv")
    train_p, val_p = _patches(cfg, "train"), _patches(cfg, "val")
    x, y = _label_arrays(train_p, labels)
    val = _label_arrays(val_p, labels) if val_p else None
    clf = SwitchClassifier(2, seed=cfg.seed)
    _, trace = train_switch(clf, x, y, cfg.switch_epochs, cfg.switch_lr, cfg.seed, val, cfg.momentum)
    clf.save(cfg.weights_dir / "switch")
    with open(cfg.out_dir / "switch_accuracy.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "accuracy"])
        w.writerows([i + 1, f"{a:.9g}"] for i, a in enumerate(trace))
    print(f"switch accuracy after {len(trace)} epochs: {trace[-1] if trace else float('nan'):.4f}")


def cmd_couple(cfg, args):
    names = [n for n in args.models.split(",") if n]
    patches = _patches(cfg, "train")
    models = []
    for i, name in enumerate(names):
        stem = cfg.weights_dir / name
        if stem.with_suffix(".srw").exists():
            models.append(load_model(stem))
        else:
            models.append(build(cfg.model_spec(name), cfg.seed + i))
    clf = SwitchClassifier(len(models), seed=cfg.seed)
    models, clf, reports = coupled_train(models, clf, patches, cfg.rounds, cfg.seed, cfg.switch_epochs,
                                         cfg.switch_lr, cfg.lr, cfg.momentum, cfg.batch_size)
    for name, model in zip(names, models):
        save_model(model, cfg.weights_dir / "coupled" / name)
    clf.save(cfg.weights_dir / "coupled" / "switch")
    with open(cfg.out_dir / "coupled_report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "histogram", "routed_histogram", "classifier_accuracy",
                    "mean_assigned_loss", "previous_assignment_loss", "skipped_experts"])
        for r in reports:
            w.writerow([r.round, " ".join(map(str, r.histogram)), " ".join(map(str, r.routed_histogram)),
                        f"{r.classifier_accuracy:.6f}", f"{r.mean_assigned_loss:.9g}",
                        f"{r.previous_assignment_loss:.9g}", " ".join(map(str, r.skipped_experts))])
            print(f"round {r.round}: assigned {r.histogram} routed {r.routed_histogram} "
                  f"acc {r.classifier_accuracy:.3f} skipped {r.skipped_experts}")


def cmd_route(cfg, args):
    try:
        clf = SwitchClassifier.load(cfg.weights_dir / "switch")
    except FileNotFoundError as exc:
        raise bench.ConfigError(str(exc)) from exc
    assignment = route_patches(clf, _patches(cfg))
    write_assignment(cfg.out_dir / "assignments.csv", assignment)
    print(f"routed {len(assignment.patch_ids)} patches: histogram {assignment.histogram().tolist()}")


def cmd_bench(cfg, args):
    configs = [bench.resolve_config(c, cfg.weights_dir) for c in args.configs.split(",") if c]
    counts = [int(c) for c in cfg.patch_counts.split(",") if c]
    records = bench.sweep(configs, _patches(cfg), counts, cfg.seed, cfg.repeats)
    table, _ = bench.report(records, cfg.out_dir / "bench.csv")
    bench.write_per_patch(cfg.out_dir / "bench_per_patch.csv", records)
    print(table, end="")


def cmd_report(cfg, args):
    path = Path(args.records) if args.records else cfg.out_dir / "bench.csv"
    if not path.exists():
        raise FileNotFoundError(f"records file {path} does not exist")
    table, _ = bench.report(bench.read_records(path), cfg.out_dir / "report.csv")
    print(table, end="")


def cmd_gradcheck(cfg, args):
    rep = minimal_grad_check(args.model, cfg.seed, cfg.scale if args.model != "dbpn_cascade_t" else 4)
    print(f"{args.model}: max relative error {rep.max_relative_error:.3e} "
          f"({rep.checked} entries, {rep.skipped_kinks} kink-adjacent skipped)")
    return EXIT_OK if rep.passed else EXIT_DATA


def cmd_metrics(cfg, args):
    patches = _patches(cfg)
    if args.model == "bicubic_baseline":
        model = build(ModelSpec("bicubic_baseline", cfg.scale))
    else:
        model = load_model(cfg.weights_dir / args.model)
    rows = []
    for p in patches:
        sr = model.forward(p.lr)
        rows.append((p.id, psnr(sr, p.hr), ssim(sr, p.hr), entropy(p.hr)))
    write_metrics_csv(cfg.out_dir / "metrics.csv", rows)
    print(f"mean PSNR {np.mean([r[1] for r in rows]):.4f} dB, mean SSIM {np.mean([r[2] for r in rows]):.4f}")


HANDLERS = {
    "prepare": cmd_prepare,
    "synth": cmd_synth,
    "train-model": cmd_train_model,
    "label": cmd_label,
    "train-switch": cmd_train_switch,
    "couple": cmd_couple,
    "route": cmd_route,
    "bench": cmd_bench,
    "report": cmd_report,
    "gradcheck": cmd_gradcheck,
    "metrics": cmd_metrics,
}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        cfg.weights_dir.mkdir(parents=True, exist_ok=True)
        with open(cfg.out_dir / "runs.log", "a", encoding="utf-8") as fh:
            fh.write(f"{args.command} {cfg.echo()}\n")
        limits = threadpool_limits(limits=cfg.threads) if cfg.threads > 0 else nullcontext()
        with limits:
            status = HANDLERS[args.command](cfg, args)
    except (ValueError, OSError, bench.ConfigError, dataset.ManifestError) as exc:
        print(f"switchsr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
