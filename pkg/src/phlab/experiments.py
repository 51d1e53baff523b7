"""Runners that regenerate the interpolation, attack and defense results at
desk scale.

Each runner is deterministic given its dataset, seed and config.  Per-sample
randomness is derived by spawning child seeds from the experiment seed, so
``threads`` changes wall time but never the numbers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from phlab.attacks import (
    ExtractionConfig,
    GeneticConfig,
    Oracle,
    baseline_max_similarity,
    evade,
    extract_classes,
    format_weights,
    genetic_near_collision,
)
from phlab.datasets import LabeledDataset, random_images
from phlab.imaging import Image, interpolate
from phlab.pipeline import hamming_similarity
from phlab.report import ExperimentReport, Series, summarize

# desk-scale defaults and the full-scale counts they stand in for
DESK_SCALE = dict(sweep_pairs=100, evasion_pairs=200, collision_targets=30, collision_db_per_class=10,
                  extraction_train_per_class=50, extraction_targets=200, uniform_pairs=1000)
PAPER_SCALE = dict(sweep_pairs=1000, evasion_pairs=10000, collision_targets=150, collision_db_per_class=25,
                   extraction_train_per_class=50, extraction_targets=1000, uniform_pairs=10000)


def _pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sample_pairs(n_items: int, pairs: int, seed: int) -> list[tuple[int, int]]:
    """``pairs`` random unordered pairs of distinct indices (i < j)."""
    if n_items < 2:
        raise ValueError("need at least two images to form pairs")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = []
    for _ in range(pairs):
        i, j = sorted(int(v) for v in rng.choice(n_items, size=2, replace=False))
        out.append((i, j))
    return out


# --------------------------------------------------------------------------
# Interpolation sweeps


@dataclass(frozen=True)
class InterpolationSweep:
    alphas: np.ndarray
    sim_to_x1: np.ndarray
    sim_to_x2: np.ndarray
    sim_adjacent: np.ndarray  # [i] compares alphas[i] with alphas[i + 1]


def run_interpolation_sweep(x1: Image, x2: Image, steps: int, oracle: Oracle) -> InterpolationSweep:
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if x1.shape != x2.shape:
        raise ValueError(f"images differ in shape: {x1.shape} vs {x2.shape}")
    alphas = np.linspace(0.0, 1.0, steps)
    h1, h2 = oracle(x1), oracle(x2)
    hashes = [oracle(interpolate(x1, x2, float(a))) for a in alphas]
    to1 = np.array([hamming_similarity(h, h1) for h in hashes])
    to2 = np.array([hamming_similarity(h, h2) for h in hashes])
    adj = np.array([hamming_similarity(a, b) for a, b in zip(hashes, hashes[1:])])
    return InterpolationSweep(alphas, to1, to2, adj)


def run_averaged_sweep(
    ds: LabeledDataset,
    pairs: int,
    steps: int,
    oracle: Oracle,
    seed: int = 42,
    threads: int = 1,
    name: str = "sweep",
) -> ExperimentReport:
    """Average interpolation sweeps over random image pairs, with 99% CIs."""
    idx = sample_pairs(len(ds), pairs, seed)
    sweeps = _pmap(lambda ij: run_interpolation_sweep(ds.images[ij[0]], ds.images[ij[1]], steps, oracle), idx, threads)
    rows = []
    for n, ((i, j), sw) in enumerate(zip(idx, sweeps)):
        for s in range(steps):
            adj = sw.sim_adjacent[s] if s < steps - 1 else float("nan")
            rows.append((n, i, j, float(sw.alphas[s]), float(sw.sim_to_x1[s]), float(sw.sim_to_x2[s]), float(adj)))
    alphas = tuple(float(a) for a in np.linspace(0.0, 1.0, steps))
    series, aggregates = [], {}
    for label, attr, xs in (
        ("sim_to_x1", "sim_to_x1", alphas),
        ("sim_to_x2", "sim_to_x2", alphas),
        ("sim_adjacent", "sim_adjacent", alphas[:-1]),
    ):
        stats = [summarize([getattr(sw, attr)[s] for sw in sweeps]) for s in range(len(xs))]
        series.append(Series(label, xs, tuple(a.mean for a in stats), tuple(a.ci99 for a in stats)))
    mid = [s for s, a in enumerate(alphas) if 0.2 <= a <= 0.8]
    aggregates["mid_sim_to_x1"] = summarize([sw.sim_to_x1[s] for sw in sweeps for s in mid])
    aggregates["mid_sim_to_x2"] = summarize([sw.sim_to_x2[s] for sw in sweeps for s in mid])
    return ExperimentReport(
        name=name,
        config=dict(pairs=pairs, steps=steps, seed=seed),
        columns=("pair", "i", "j", "alpha", "sim_to_x1", "sim_to_x2", "sim_adjacent"),
        rows=rows,
        aggregates=aggregates,
        series=series,
        xlabel="alpha (weight of x1)",
        ylabel="Hamming similarity",
    )


def run_uniformity_eval(pairs: int, oracle: Oracle, seed: int = 42, size: int = 32, name: str = "uniformity") -> ExperimentReport:
    """Similarity between hashes of independently seeded noise images."""
    imgs = list(random_images(2 * pairs, size, seed))
    sims = [hamming_similarity(oracle(imgs[2 * n]), oracle(imgs[2 * n + 1])) for n in range(pairs)]
    hist = np.bincount(np.rint(np.array(sims) * 96).astype(int), minlength=97)
    return ExperimentReport(
        name=name,
        config=dict(pairs=pairs, seed=seed, size=size),
        columns=("pair", "similarity"),
        rows=[(n, s) for n, s in enumerate(sims)],
        aggregates=dict(similarity=summarize(sims)),
        series=[Series("pairs", tuple(k / 96 for k in range(97)), tuple(float(c) / max(pairs, 1) for c in hist))],
        xlabel="Hamming similarity",
        ylabel="fraction of pairs",
    )


# --------------------------------------------------------------------------
# Attacks


def run_evasion_eval(
    ds: LabeledDataset,
    pairs: int,
    grid_step: float,
    oracle: Oracle,
    seed: int = 42,
    threads: int = 1,
    name: str = "evasion",
) -> ExperimentReport:
    idx = sample_pairs(len(ds), pairs, seed)
    results = _pmap(lambda ij: evade(ds.images[ij[0]], ds.images[ij[1]], oracle, grid_step), idx, threads)
    rows = [(n, i, j, r.alpha_star, r.ssim_to_source, r.evaded, r.queries) for n, ((i, j), r) in enumerate(zip(idx, results))]
    success = summarize([r.evaded for r in results])
    quality = summarize([r.ssim_to_source for r in results if r.evaded])
    alpha = summarize([r.alpha_star for r in results])
    return ExperimentReport(
        name=name,
        config=dict(pairs=pairs, grid_step=grid_step, seed=seed),
        columns=("pair", "source", "carrier", "alpha_star", "ssim", "evaded", "queries"),
        rows=rows,
        aggregates=dict(success_rate=success, ssim=quality, alpha_star=alpha),
        series=[
            Series(
                "mean (95% CI)",
                ("success rate", "SSIM", "alpha*"),
                (success.mean, quality.mean, alpha.mean),
                (success.ci95, quality.ci95, alpha.ci95),
            )
        ],
        chart="bar",
        ylabel="value",
    )


def run_collision_eval(
    train: LabeledDataset,
    targets: LabeledDataset,
    cfg: GeneticConfig,
    oracle: Oracle,
    threads: int = 1,
    name: str = "collision",
) -> ExperimentReport:
    """Genetic near-collision search per target, against a random baseline
    that gets the same number of oracle queries."""
    database = list(train.images)
    shape = database[0].shape
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(len(targets))

    def one(n):
        target_hash = oracle(targets.images[n])
        rng = np.random.Generator(np.random.Philox(seeds[n]))
        res = genetic_near_collision(target_hash, database, oracle, cfg, rng=rng)
        brng = np.random.Generator(np.random.Philox(seeds[n].spawn(1)[0]))
        sampler = lambda: Image(brng.random(shape))  # noqa: E731
        base = baseline_max_similarity(target_hash, sampler, res.queries, oracle)
        return res, base

    results = _pmap(one, list(range(len(targets))), threads)
    rows = [
        (n, targets.labels[n], r.fitness, b, r.queries, format_weights(r.weights, 1e-6))
        for n, (r, b) in enumerate(results)
    ]
    gens = tuple(range(cfg.iterations + 1))
    per_gen = [summarize([r.history[g] for r, _ in results]) for g in gens]
    base = summarize([b for _, b in results])
    fitness = summarize([r.fitness for r, _ in results])
    return ExperimentReport(
        name=name,
        config=dict(asdict(cfg), database=len(database), targets=len(targets)),
        columns=("target", "label", "fitness", "baseline", "queries", "weights"),
        rows=rows,
        aggregates=dict(fitness=fitness, baseline=base, advantage=summarize([r.fitness - b for r, b in results])),
        series=[
            Series("best fitness", gens, tuple(a.mean for a in per_gen), tuple(a.ci99 for a in per_gen)),
            Series("random baseline", gens, (base.mean,) * len(gens), (base.ci99,) * len(gens)),
        ],
        xlabel="generation",
        ylabel="Hamming similarity to target",
    )


def run_extraction_eval(
    train: LabeledDataset,
    test: LabeledDataset,
    cfg: ExtractionConfig,
    oracle: Oracle,
    name: str = "extraction",
) -> ExperimentReport:
    """Predict each test image's class from its hash and the labeled
    database hashes; report overall and per-class accuracy."""
    db_hashes = [oracle(im) for im in train.images]
    target_hashes = [oracle(im) for im in test.images]
    n_classes = max(train.class_count, test.class_count)
    results = extract_classes(target_hashes, db_hashes, train.labels, cfg, n_classes=n_classes)
    rows = []
    for n, (res, label) in enumerate(zip(results, test.labels)):
        rows.append((n, label, res.predicted_class, res.predicted_class == label, float(res.support[label])))
    correct = [r[3] for r in rows]
    aggregates = dict(accuracy=summarize(correct))
    per_class = []
    for c in range(n_classes):
        acc = summarize([r[3] for r in rows if r[1] == c])
        per_class.append(acc)
        aggregates[f"accuracy_class{c}"] = acc
    names = test.class_names[:n_classes]
    return ExperimentReport(
        name=name,
        config=dict(asdict(cfg), database=len(train), targets=len(test)),
        columns=("target", "label", "predicted", "correct", "true_class_support"),
        rows=rows,
        aggregates=aggregates,
        series=[
            Series(
                "accuracy (99% CI)",
                tuple(names),
                tuple(0.0 if a.n == 0 else a.mean for a in per_class),
                tuple(0.0 if a.n == 0 else a.ci99 for a in per_class),
            ),
            Series("chance", tuple(names), (1.0 / n_classes,) * n_classes),
        ],
        chart="bar",
        ylabel="classification accuracy",
    )


def run_defense_suite(
    collision_train: LabeledDataset,
    collision_targets: LabeledDataset,
    extraction_train: LabeledDataset,
    extraction_test: LabeledDataset,
    genetic: GeneticConfig,
    extraction: ExtractionConfig,
    oracles: dict[str, Oracle],
    threads: int = 1,
) -> list[ExperimentReport]:
    """Collision and extraction reports for each named oracle variant
    (e.g. ``{"none": plain, "sha": defended}``)."""
    reports = []
    for tag, oracle in oracles.items():
        reports.append(run_collision_eval(collision_train, collision_targets, genetic, oracle, threads, f"collision_{tag}"))
        reports.append(run_extraction_eval(extraction_train, extraction_test, extraction, oracle, f"extraction_{tag}"))
    return reports
