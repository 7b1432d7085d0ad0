"""Command-line interface: ``ising-ssl {train,classify,evaluate,sweep,oracle-check}``.

Runs are described by a flat ``key=value`` config file with dotted keys, for
example::

    data.path=iris.csv
    data.pca_dim=2
    split.unlabeled_fraction=0.3
    model.family=diagonal_gaussian
    model.xi=6
    solver.reads=32

Relative paths resolve against the config file's directory. See the README
for the full key list.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .annealer import AnnealSchedule
from .dataset import Dataset, SplitSpec, load_csv, pca_project, split
from .oracle import oracle_check
from .pipeline import TrainConfig, TrainedModel, classify, evaluate, sweep, sweep_csv, train
from .plotting import scatter_svg

log = logging.getLogger("ising_ssl")


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _opt_float(v: str) -> Optional[float]:
    return None if v.strip().lower() in ("", "auto", "none") else float(v)


# key -> (parser, default)
KEYS = {
    "data.path": (str, None),
    "data.has_labels": (_bool, True),
    "data.pca_dim": (int, 0),
    "data.whiten": (_bool, False),
    "split.unlabeled_fraction": (float, 0.0),
    "split.seed": (int, None),
    "split.stratified": (_bool, True),
    "model.family": (str, "diagonal_gaussian"),
    "model.beta1": (float, 1.0),
    "model.beta2": (float, 1.0),
    "model.p": (float, 2.0),
    "model.xi": (int, 6),
    "model.doubling": (str, "first"),
    "model.prune": (_bool, False),
    "learn.enabled": (_bool, True),
    "learn.budget": (int, 20),
    "learn.method": (str, "coordinate"),
    "learn.block_size": (int, 16),
    "learn.tol": (float, 1e-4),
    "solver.kind": (str, "sa"),
    "solver.sweeps": (int, 2000),
    "solver.reads": (int, 32),
    "solver.seed": (int, 0),
    "solver.t_hot": (_opt_float, None),
    "solver.t_cold": (_opt_float, None),
    "solver.trotter": (int, 16),
    "solver.gamma0": (_opt_float, None),
    "labels.mode": (str, "clamp"),
    "labels.h_mag": (_opt_float, None),
    "sweep.fractions": (str, ""),
    "sweep.repeats": (int, 1),
    "out": (str, "out"),
    "seed": (int, 0),
}


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


@dataclass(frozen=True)
class RunConfig:
    values: dict
    base: Path

    @classmethod
    def load(cls, path: Optional[str], overrides: dict) -> "RunConfig":
        raw, base = {}, Path.cwd()
        if path:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            raw = parse_config_text(p.read_text())
            base = p.resolve().parent
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
        values = {}
        for key, (conv, default) in KEYS.items():
            try:
                values[key] = conv(raw[key]) if key in raw else default
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        cfg = cls(values, base)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key) -> Path:
        p = Path(self[key])
        return p if p.is_absolute() else self.base / p

    def validate(self):
        if not self["data.path"]:
            raise ConfigError("data.path is required")
        if not self.path("data.path").exists():
            raise ConfigError(f"data file not found: {self.path('data.path')}")
        self.train_config()  # raises on invalid numbers
        self.split_spec()

    def split_spec(self) -> SplitSpec:
        seed = self["split.seed"] if self["split.seed"] is not None else self["seed"]
        return SplitSpec(self["split.unlabeled_fraction"], seed, self["split.stratified"])

    def schedule(self) -> AnnealSchedule:
        kind = self["solver.kind"]
        return AnnealSchedule(
            kind="pimc" if kind == "pimc" else "sa",
            sweeps=self["solver.sweeps"],
            reads=self["solver.reads"],
            seed=self["solver.seed"],
            t_hot=self["solver.t_hot"],
            t_cold=self["solver.t_cold"],
            trotter=self["solver.trotter"],
            gamma0=self["solver.gamma0"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            family=self["model.family"],
            xi=self["model.xi"],
            p=self["model.p"],
            beta1=self["model.beta1"],
            beta2=self["model.beta2"],
            doubling=self["model.doubling"],
            learn=self["learn.enabled"],
            budget=self["learn.budget"],
            fit_method=self["learn.method"],
            block_size=self["learn.block_size"],
            fit_tol=self["learn.tol"],
            solver=self["solver.kind"],
            schedule=self.schedule(),
            label_mode=self["labels.mode"],
            h_mag=self["labels.h_mag"],
            prune=self["model.prune"],
            seed=self["seed"],
        )

    def echo(self) -> str:
        return "".join(
            f"{k}={'' if v is None else v}\n" for k, v in sorted(self.values.items())
        )


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_base(cfg: RunConfig) -> Dataset:
    ds = load_csv(cfg.path("data.path"), cfg["data.has_labels"])
    if cfg["data.pca_dim"]:
        ds = pca_project(ds, cfg["data.pca_dim"], cfg["data.whiten"])
    return ds


def load_dataset(cfg: RunConfig) -> Dataset:
    ds = load_base(cfg)
    if cfg["split.unlabeled_fraction"] > 0:
        ds = split(ds, cfg.split_spec())
    return ds


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg["out"])
    return out if out.is_absolute() else Path.cwd() / out


def _load_model(path) -> TrainedModel:
    if not path:
        raise ConfigError("--model is required")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"model file not found: {p}")
    return TrainedModel.from_dict(json.loads(p.read_text()))


def cmd_train(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    model = train(ds, cfg.train_config())
    out = _out(cfg)
    write_atomic(out / "model.json", model.to_json() + "\n")
    if model.fit_report is not None:
        write_atomic(out / "fit.json", json.dumps(model.fit_report.to_dict(), indent=1) + "\n")
    write_atomic(out / "config.txt", cfg.echo())
    codes = {ds.label_names[k]: [''.join(map(str, c)) for c in model.codebook.label_to_codes[k]]
             for k in model.codebook.order}
    print(f"trained on l={ds.l}, u={ds.u}; codebook {codes}")
    return 0


def predictions_csv(ds: Dataset, labels, names) -> str:
    truth = ds.hidden_truth if ds.has_truth() and ds.u else None
    lines = ["index,predicted_label" + (",true_label,correct" if truth is not None else "")]
    for i, k in enumerate(labels):
        row = f"{i},{names[k]}"
        if truth is not None:
            row += f",{names[truth[i]]},{int(truth[i] == k)}"
        lines.append(row)
    if truth is not None:
        acc = float((truth == labels).mean())
        lines.append(f"# accuracy={acc:.6f}")
    return "\n".join(lines) + "\n"


def cmd_classify(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    model = _load_model(args.model)
    if args.solver:
        model.config = replace(model.config, solver=args.solver)
    if ds.u == 0:
        print("warning: dataset has no unlabeled points", file=sys.stderr)
    result = classify(model, ds)
    out = _out(cfg)
    write_atomic(out / "predictions.csv", predictions_csv(ds, result.labels, ds.label_names))
    write_atomic(out / "config.txt", cfg.echo())
    if ds.has_truth() and ds.u:
        print(f"accuracy {float((result.labels == ds.hidden_truth).mean()):.4f} on {ds.u} points")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    if not (ds.has_truth() and ds.u):
        raise ConfigError("evaluation needs hidden truth; set split.unlabeled_fraction > 0")
    model = _load_model(args.model)
    result = classify(model, ds)
    report = evaluate(result.labels, ds.hidden_truth, model.codebook, result.bits[ds.l:], ds.n_labels)
    doc = report.to_dict()
    doc["labels"] = list(ds.label_names)
    write_atomic(_out(cfg) / "evaluation.json", json.dumps(doc, indent=1) + "\n")
    print(f"accuracy {report.accuracy:.4f}")
    return 0


def _fractions(cfg: RunConfig, args):
    text = args.fractions if args.fractions is not None else cfg["sweep.fractions"]
    try:
        fracs = [float(f) for f in text.split(",") if f.strip()]
    except ValueError:
        raise ConfigError(f"bad --fractions value {text!r}") from None
    if not fracs:
        raise ConfigError("no fractions given (use --fractions 0.3,0.5,0.8)")
    return fracs


def cmd_sweep(cfg: RunConfig, args) -> int:
    fracs = _fractions(cfg, args)
    repeats = args.repeats if args.repeats is not None else cfg["sweep.repeats"]
    ds = load_base(cfg)
    out = _out(cfg)
    figures = {}

    def keep_first(fi, r, part, model, result, report):
        if r == 0 and part.d >= 1:
            title = f"unlabeled {fracs[fi]:.0%}, accuracy {report.accuracy:.2%}"
            figures[fi] = scatter_svg(part, result.labels, title)

    rows = sweep(ds, fracs, repeats, cfg["seed"], cfg.train_config(), on_cell=keep_first)
    write_atomic(out / "sweep.csv", sweep_csv(rows))
    for fi, svg in sorted(figures.items()):
        write_atomic(out / f"scatter_{fracs[fi]:g}.svg", svg)
    write_atomic(out / "config.txt", cfg.echo())
    sys.stdout.write(sweep_csv(rows))
    return 0


def cmd_oracle_check(args) -> int:
    schedule = AnnealSchedule(reads=args.reads)
    report = oracle_check(args.instances, args.seed or 0, schedule)
    print(f"simulated annealing matched the exact ground state on {report.matched}/{report.instances} instances")
    need = -(-95 * report.instances // 100)
    return 0 if report.matched >= need else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ising-ssl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--solver", choices=("sa", "exact", "pimc"))
        return p

    common(sub.add_parser("train", help="fit a model and write model.json"))
    p = common(sub.add_parser("classify", help="write predictions.csv for the unlabeled points"))
    p.add_argument("--model", required=True)
    p = common(sub.add_parser("evaluate", help="write evaluation.json against the hidden truth"))
    p.add_argument("--model", required=True)
    p = common(sub.add_parser("sweep", help="accuracy over unlabeled fractions"))
    p.add_argument("--fractions", help="comma-separated, e.g. 0.3,0.5,0.8")
    p.add_argument("--repeats", type=int)
    p = sub.add_parser("oracle-check", help="simulated annealing vs exact ground states")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--reads", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle-check":
            return cmd_oracle_check(args)
        overrides = {"seed": args.seed, "out": args.out, "solver.kind": args.solver}
        if args.command == "classify" or args.command == "evaluate":
            overrides.pop("solver.kind")
        cfg = RunConfig.load(args.config, overrides)
        handler = {"train": cmd_train, "classify": cmd_classify, "evaluate": cmd_evaluate, "sweep": cmd_sweep}
        return handler[args.command](cfg, args)
    except (ValueError, OSError) as exc:
        print(f"ising-ssl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
