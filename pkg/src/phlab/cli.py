"""``phlab`` command line: hash images, run single attacks, reproduce experiments.

Exit status: 0 on success, 1 for usage or configuration errors, 2 for I/O or
data errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from phlab import experiments as ex
from phlab.attacks import (
    ExtractionConfig,
    GeneticConfig,
    evade,
    extract_class,
    format_weights,
    genetic_near_collision,
)
from phlab.datasets import (
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    load_directory,
    split_by_parity,
)
from phlab.imaging import DecodeError, Image, PreprocessSpec, read_image, write_ppm
from phlab.pipeline import BinaryHash, Pipeline, PipelineConfig
from phlab.report import ExperimentReport, Series, emit_report, summarize

DEFAULT_SEED = 42
EXPERIMENTS = ("sweep", "uniformity", "evasion", "collision", "extraction", "defense")
DEFENSE_ALIASES = {"none": "none", "sha": "sha-at-the-end", "sha-at-the-end": "sha-at-the-end"}


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# --------------------------------------------------------------------------
# key = value configuration

_PIPELINE_KEYS = {"embedder": str, "embedder_seed": int, "matrix_seed": int, "defense": str, "feature_file": str}
_PREPROCESS_KEYS = {"width": int, "height": int, "grayscale": bool}
_GENETIC_KEYS = {f.name: f.type for f in fields(GeneticConfig) if f.name != "rng_seed"}
_EXTRACTION_KEYS = {f.name: f.type for f in fields(ExtractionConfig) if f.name != "rng_seed"}
_SYNTHETIC_KEYS = {"class_count": int, "per_class": int, "image_size": int}
_RUN_KEYS = {"seed": int, "threads": int, "grid_step": float, "steps": int}

KNOWN_KEYS: dict[str, type] = {}
for _group in (_PIPELINE_KEYS, _PREPROCESS_KEYS, _GENETIC_KEYS, _EXTRACTION_KEYS, _SYNTHETIC_KEYS, _RUN_KEYS):
    KNOWN_KEYS.update({k: {"int": int, "float": float, "str": str, "bool": bool}.get(v, v) for k, v in _group.items()})


def _coerce(key: str, raw: str):
    kind = KNOWN_KEYS[key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


@dataclass
class CliConfig:
    values: dict

    @classmethod
    def load(cls, args) -> "CliConfig":
        values = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            values.update(parse_config_text(text, str(path)))
        for item in getattr(args, "set", None) or ():
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            key = key.strip()
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _coerce(key, value)
        for key in ("embedder", "defense", "seed", "threads", "grid_step", "steps"):
            v = getattr(args, key, None)
            if v is not None:
                values[key] = v
        if "defense" in values:
            if values["defense"] not in DEFENSE_ALIASES:
                raise ConfigError(f"unknown defense {values['defense']!r}; use none or sha")
            values["defense"] = DEFENSE_ALIASES[values["defense"]]
        return cls(values)

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", DEFAULT_SEED))

    @property
    def threads(self) -> int:
        if "threads" in self.values:
            return max(1, self.values["threads"])
        env = os.environ.get("PHLAB_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"PHLAB_THREADS must be an integer, got {env!r}") from None
        return os.cpu_count() or 1

    def pipeline(self, defense: str | None = None) -> PipelineConfig:
        base = PipelineConfig()
        pre = PreprocessSpec(
            self.values.get("width", base.preprocess.target_width),
            self.values.get("height", base.preprocess.target_height),
            self.values.get("grayscale", base.preprocess.grayscale),
        )
        kw = {k: self.values[k] for k in _PIPELINE_KEYS if k in self.values}
        if defense is not None:
            kw["defense"] = defense
        try:
            return replace(base, preprocess=pre, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def genetic(self) -> GeneticConfig:
        kw = {k: self.values[k] for k in _GENETIC_KEYS if k in self.values}
        try:
            return GeneticConfig(rng_seed=self.seed, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def extraction(self) -> ExtractionConfig:
        kw = {k: self.values[k] for k in _EXTRACTION_KEYS if k in self.values}
        try:
            return ExtractionConfig(rng_seed=self.seed, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def synthetic(self, per_class: int) -> SyntheticSpec:
        return SyntheticSpec(
            class_count=self.values.get("class_count", 10),
            per_class=self.values.get("per_class", per_class),
            image_size=self.values.get("image_size", 32),
            rng_seed=self.seed,
        )


# --------------------------------------------------------------------------
# helpers


def _read(path) -> Image:
    try:
        return read_image(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (OSError, DecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_dir(path) -> LabeledDataset:
    try:
        return load_directory(path)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None


def _pipeline(cfg: PipelineConfig) -> Pipeline:
    try:
        return Pipeline(cfg)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load features: {exc}") from None


def _dataset(conf: CliConfig, data_dir, per_class: int) -> LabeledDataset:
    if data_dir:
        return _load_dir(data_dir)
    return generate_synthetic(conf.synthetic(per_class))


def _emit(report: ExperimentReport, out_dir) -> None:
    try:
        csv_path, svg_path = emit_report(report, out_dir)
    except OSError as exc:
        raise DataError(f"cannot write report to {out_dir}: {exc.strerror}") from None
    print(f"wrote {csv_path} {svg_path}")


# --------------------------------------------------------------------------
# commands


def cmd_hash(args) -> int:
    conf = CliConfig.load(args)
    cfg = conf.pipeline()
    pipe = _pipeline(cfg)
    for path in args.images:
        img = _read(path)
        pre = pipe.perceptual_hash(img)
        print(f"hash {pre.hex()} {path}")
        if cfg.defense != "none":
            print(f"sha {pipe.hash_image(img).hex()} {path}")
    return 0


def _evasion_report(x_path, c_path, res) -> ExperimentReport:
    return ExperimentReport(
        name="attack_evade",
        config=dict(source=str(x_path), carrier=str(c_path)),
        columns=("pair", "source", "carrier", "alpha_star", "ssim", "evaded", "queries"),
        rows=[(0, str(x_path), str(c_path), res.alpha_star, res.ssim_to_source, res.evaded, res.queries)],
        aggregates=dict(success_rate=summarize([res.evaded]), ssim=summarize([res.ssim_to_source])),
        series=[Series("result", ("alpha*", "SSIM"), (res.alpha_star, res.ssim_to_source))],
        chart="bar",
    )


def cmd_attack(args) -> int:
    conf = CliConfig.load(args)
    pipe = _pipeline(conf.pipeline())
    oracle = pipe.oracle()
    out = Path(args.out)

    if args.kind == "evade":
        if not args.source or not args.carrier:
            raise ConfigError("attack evade needs --source and --carrier")
        x, x0 = _read(args.source), _read(args.carrier)
        if x.shape != x0.shape:
            raise DataError(f"source {x.shape} and carrier {x0.shape} differ in shape")
        step = conf.get("grid_step", 0.01)
        if not 0 < step <= 0.1:
            raise ConfigError("grid_step must lie in (0, 0.1]")
        res = evade(x, x0, oracle, step)
        _emit(_evasion_report(args.source, args.carrier, res), out)
        try:
            write_ppm(res.adversarial_image, out / "attack_evade.ppm")
        except OSError as exc:
            raise DataError(str(exc)) from None
        print(f"alpha*={res.alpha_star:.4f} ssim={res.ssim_to_source:.6f} evaded={str(res.evaded).lower()}")
        return 0

    if args.kind == "collide":
        if not args.target_hash and not args.target:
            raise ConfigError("attack collide needs --target-hash or --target")
        try:
            target = BinaryHash.from_hex(args.target_hash) if args.target_hash else oracle(_read(args.target))
        except ValueError as exc:
            raise ConfigError(f"bad --target-hash: {exc}") from None
        db = _dataset(conf, args.data, per_class=10)
        gcfg = conf.genetic()
        res = genetic_near_collision(target, list(db.images), oracle, gcfg)
        report = ExperimentReport(
            name="attack_collide",
            config=dict(target=target.hex(), database=len(db)),
            columns=("generation", "best_fitness"),
            rows=[(g, float(f)) for g, f in enumerate(res.history)],
            aggregates=dict(fitness=summarize([res.fitness])),
            series=[Series("best fitness", tuple(range(len(res.history))), tuple(float(f) for f in res.history))],
            xlabel="generation",
            ylabel="Hamming similarity to target",
        )
        _emit(report, out)
        try:
            write_ppm(res.image, out / "attack_collide.ppm")
            (out / "attack_collide_weights.txt").write_text(format_weights(res.weights) + "\n")
        except OSError as exc:
            raise DataError(str(exc)) from None
        print(f"best_fitness={res.fitness:.4f} hash={oracle(res.image).hex()} queries={res.queries}")
        return 0

    # extract
    train = _dataset(conf, args.data, per_class=100)
    ecfg = conf.extraction()
    if args.target_hash:
        try:
            target = BinaryHash.from_hex(args.target_hash)
        except ValueError as exc:
            raise ConfigError(f"bad --target-hash: {exc}") from None
        if args.data is None:
            train, _ = split_by_parity(train)
        hashes = [oracle(im) for im in train.images]
        res = extract_class(target, hashes, train.labels, ecfg, n_classes=train.class_count)
        print(f"predicted={train.class_names[res.predicted_class]} support={res.support[res.predicted_class]:.4f}")
        return 0
    if args.targets:
        test = _load_dir(args.targets)
    else:
        train, test = split_by_parity(train)
        if len(test) == 0:
            test = train
    report = ex.run_extraction_eval(train, test, ecfg, oracle, name="attack_extract")
    _emit(report, out)
    print(f"accuracy={report.aggregates['accuracy'].mean:.4f} targets={len(test)}")
    return 0


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _collision_sets(conf: CliConfig, data_dir, n_targets: int, db_per_class: int):
    classes = conf.get("class_count", 10)
    tgt_per = _ceil_div(n_targets, classes)
    train, val = split_by_parity(_dataset(conf, data_dir, 2 * max(db_per_class, tgt_per)))
    targets = val.take_per_class(tgt_per)
    return train.take_per_class(db_per_class), targets.subset(range(min(len(targets), n_targets)))


def _extraction_sets(conf: CliConfig, data_dir, n_targets: int, train_per_class: int):
    classes = conf.get("class_count", 10)
    test_per = _ceil_div(n_targets, classes)
    train, val = split_by_parity(_dataset(conf, data_dir, 2 * max(train_per_class, test_per)))
    test = val.take_per_class(test_per)
    return train.take_per_class(train_per_class), test.subset(range(min(len(test), n_targets)))


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"unknown experiment {args.name!r}; valid: {', '.join(EXPERIMENTS)}", file=sys.stderr)
        return 1
    conf = CliConfig.load(args)
    scale = ex.PAPER_SCALE if args.paper_scale else ex.DESK_SCALE
    seed, threads = conf.seed, conf.threads
    steps = conf.get("steps", 101)
    plain = conf.pipeline()
    reports = []

    if args.name == "sweep":
        ds = _dataset(conf, args.data, per_class=10)
        pairs = args.pairs or scale["sweep_pairs"]
        reports.append(ex.run_averaged_sweep(ds, pairs, steps, _pipeline(plain).oracle(), seed, threads))
    elif args.name == "uniformity":
        pairs = args.pairs or scale["uniform_pairs"]
        reports.append(ex.run_uniformity_eval(pairs, _pipeline(plain).oracle(), seed, conf.get("image_size", 32)))
    elif args.name == "evasion":
        ds = _dataset(conf, args.data, per_class=25)
        pairs = args.pairs or scale["evasion_pairs"]
        step = conf.get("grid_step", 0.01)
        reports.append(ex.run_evasion_eval(ds, pairs, step, _pipeline(plain).oracle(), seed, threads))
    else:
        variants = {"": plain}
        if args.name == "defense":
            variants = {"_none": conf.pipeline(defense="none"), "_sha": conf.pipeline(defense="sha-at-the-end")}
        for suffix, pcfg in variants.items():
            oracle = _pipeline(pcfg).oracle()
            if args.name in ("collision", "defense"):
                n = (args.targets if args.name == "collision" else None) or scale["collision_targets"]
                db, targets = _collision_sets(conf, args.data, n, scale["collision_db_per_class"])
                reports.append(ex.run_collision_eval(db, targets, conf.genetic(), oracle, threads, f"collision{suffix}"))
            if args.name in ("extraction", "defense"):
                n = (args.targets if args.name == "extraction" else None) or scale["extraction_targets"]
                db, test = _extraction_sets(conf, args.data, n, scale["extraction_train_per_class"])
                reports.append(ex.run_extraction_eval(db, test, conf.extraction(), oracle, f"extraction{suffix}"))
            if args.name == "defense":
                ds = _dataset(conf, args.data, per_class=10)
                pairs = args.pairs or scale["sweep_pairs"]
                reports.append(ex.run_averaged_sweep(ds, pairs, steps, oracle, seed, threads, f"sweep{suffix}"))

    out = Path(args.out)
    for r in reports:
        _emit(r, out)
        print(r.summary_line())
    return 0


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--embedder", choices=("linear-surrogate", "tanh-surrogate", "feature-file"))
    p.add_argument("--defense", help="none or sha")
    p.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--threads", type=int, help="worker threads (default: PHLAB_THREADS or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("hash", help="print the 24-hex hash of images")
    _common(p)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("attack", help="run one attack")
    p.add_argument("kind", choices=("evade", "collide", "extract"))
    _common(p)
    p.add_argument("--source")
    p.add_argument("--carrier")
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--target-hash", dest="target_hash")
    p.add_argument("--target", help="image whose hash is the collision target")
    p.add_argument("--data", help="database directory root/<class>/<images>")
    p.add_argument("--targets", help="directory of labeled targets for extract")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("experiment", help="reproduce an experiment")
    p.add_argument("name", help="one of: " + ", ".join(EXPERIMENTS))
    _common(p)
    p.add_argument("--pairs", type=int)
    p.add_argument("--targets", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--data", help="dataset directory root/<class>/<images> (default: synthetic)")
    p.add_argument("--paper-scale", action="store_true", help="use the full sample counts")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"phlab: config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"phlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
