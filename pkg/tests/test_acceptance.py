"""Acceptance criteria 1-8.  Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line."""

import time
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from hyperpred.autodiff import Value
from hyperpred.checkpoint import load_checkpoint
from hyperpred.cli import main, sweep_cells, sweep_csv, sweep_summary
from hyperpred.config import TrainConfig
from hyperpred.evaluation import auroc, average_precision, evaluate
from hyperpred.gradcheck import TOLERANCE, run_gradcheck
from hyperpred.hypergraph import Hypergraph, read_split, split_dataset
from hyperpred.sampler import sample_negatives, sns
from hyperpred.synthetic import SyntheticSpec, generate_synthetic
from hyperpred.training import initial_checkpoint, similarity_penalty, train

from .conftest import random_hypergraph
from .test_evaluation import ap_oracle, auroc_oracle, exhaustive_instances
from .test_sampler import is_connected, is_valid_cns

pytestmark = pytest.mark.slow

BENCHMARK_SEED = 7
ABLATION_SEEDS = (0, 1, 2)
ABLATION_EPOCHS = 40
SWEEP_SPEC = SyntheticSpec(num_nodes=60, num_communities=6, edges_per_community=10, size_range=(3, 5), seed=7)
SWEEP_CONFIG = TrainConfig(epochs=8, eval_every=4, d=16, channels=8, noise_dim=8, batch_size=16)


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {detail}")

    return emit


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# 1. gradient correctness


def test_criterion_1_gradients(report):
    with Timer() as t:
        results = run_gradcheck()
    worst = max(results, key=lambda r: r.max_error)
    failed = [r.name for r in results if not r.passed]
    ok = not failed and t.seconds < 30
    report(1, ok, f"{len(results)} checks, worst {worst.name} {worst.max_error:.2e} (< {TOLERANCE:g}), "
                  f"failed {failed}, {t.seconds:.1f}s")  # fmt: skip
    assert {"full_loss", "encoder", "generator", "discriminator"} <= {r.name for r in results}
    assert not failed
    assert t.seconds < 30


# 2. regulariser shape


def test_criterion_2_penalty_shape(report):
    eps = TrainConfig().reg_eps
    problems = []
    with Timer() as t:
        for k in (0.3, 0.5, 0.7):
            for p in (1.0, 2.0, 4.0):
                pen = lambda th: similarity_penalty(Value(np.asarray(th, dtype=float)), k, p).data  # noqa: E731
                grid = np.linspace(0, 1, 52)[1:-1]  # 50 interior points
                below, above = grid[grid < k], grid[grid > k]
                if abs(pen(k)) >= 1e-12:
                    problems.append((k, p, "nonzero at k"))
                if not np.all(np.diff(pen(np.append(below, k))) < 0):
                    problems.append((k, p, "not decreasing"))
                if not np.all(np.diff(pen(np.insert(above, 0, k))) > 0):
                    problems.append((k, p, "not increasing"))
                if not pen(1 - eps) > 1e3 * pen(k + 0.1):
                    problems.append((k, p, "pole too weak"))
    ok = not problems and t.seconds < 1
    report(2, ok, f"9 (k, p) pairs, problems {problems}, {t.seconds:.3f}s")
    assert not problems
    assert t.seconds < 1


# 3. metric oracles


def test_criterion_3_metric_oracles(report):
    rng = np.random.default_rng(3)
    worst, count = 0.0, 0
    with Timer() as t:
        for _ in range(100):
            n_pos, n_neg = rng.integers(1, 11, size=2)
            # a coarse grid forces ties
            pos, neg = rng.integers(0, 6, size=n_pos) / 5, rng.integers(0, 6, size=n_neg) / 5
            worst = max(worst, abs(auroc(pos, neg) - auroc_oracle(pos, neg)),
                        abs(average_precision(pos, neg) - ap_oracle(pos, neg)))  # fmt: skip
        for pos, neg in exhaustive_instances(max_ranked=12, max_tied=6):
            count += 1
            worst = max(worst, abs(auroc(pos, neg) - auroc_oracle(pos, neg)),
                        abs(average_precision(pos, neg) - ap_oracle(pos, neg)))  # fmt: skip
    ok = worst <= 1e-12 and t.seconds < 10
    report(3, ok, f"100 random + {count} exhaustive instances, max deviation {worst:.1e}, {t.seconds:.1f}s")
    assert worst <= 1e-12
    assert t.seconds < 10


# 4. sampler validity


def test_criterion_4_samplers(report):
    h = random_hypergraph(np.random.default_rng(4))
    draws = 10_000
    with Timer() as t:
        cns_out = sample_negatives(h, "cns", draws, np.random.default_rng(41))
        cns_bad = sum(not is_valid_cns(e, h) for e in cns_out)
        mns_out = sample_negatives(h, "mns", draws, np.random.default_rng(42))
        mns_bad = sum(not is_connected(e, h) for e in mns_out)
        pairs = Hypergraph.from_edges(5, [(0, 1)])
        rng = np.random.default_rng(43)
        counts = Counter(sns(pairs, 2, rng) for _ in range(draws))
        pvalue = chisquare([counts[c] for c in sorted(counts)]).pvalue
    ok = cns_bad == 0 and mns_bad == 0 and len(counts) == 10 and pvalue > 0.01 and t.seconds < 30
    report(4, ok, f"invalid CNS {cns_bad}/{draws}, disconnected MNS {mns_bad}/{draws}, "
                  f"SNS chi-square p={pvalue:.3f}, {t.seconds:.1f}s")  # fmt: skip
    assert cns_bad == 0 and mns_bad == 0
    assert len(counts) == 10 and pvalue > 0.01
    assert t.seconds < 30


# 5 and 7 share two default training runs through the CLI


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("default")
    # one master seed drives the benchmark spec and every training substream
    runs = []
    for name in ("a", "b"):
        out = root / name
        with Timer() as t:
            assert main(["train", "--synthetic", "--seed", str(BENCHMARK_SEED), "--workers", "1",
                         "--out", str(out)]) == 0  # fmt: skip
            assert main(["evaluate", "--synthetic", "--checkpoint", str(out / "checkpoint.npz"),
                         "--workers", "1", "--out", str(out / "eval")]) == 0  # fmt: skip
        runs.append((out, t.seconds))
    return runs


def test_criterion_5_end_to_end(report, default_runs):
    out, seconds = default_runs[0]
    h, _ = generate_synthetic(SyntheticSpec())
    ckpt = load_checkpoint(out / "checkpoint.npz")
    split = read_split(out / "split.txt")
    config = ckpt.config
    trained = evaluate(ckpt, h, split, config.seed)
    untrained = evaluate(initial_checkpoint(h, split, config), h, split, config.seed)
    sns_trained, sns_untrained = trained.regimes["sns"]["auroc"], untrained.regimes["sns"]["auroc"]
    defaults = (config.k, config.p, config.beta, config.seed) == (0.5, 2.0, 0.1, BENCHMARK_SEED)
    defaults = defaults and config.epochs <= 300
    spec = SyntheticSpec()
    benchmark = (spec.num_nodes, spec.num_communities, h.num_edges, spec.noise_edge_fraction, spec.seed) == (
        200, 20, 300, 0.05, 7)  # fmt: skip
    ok = defaults and benchmark and sns_trained >= 0.75 and sns_trained - sns_untrained >= 0.15 and seconds < 300
    report(5, ok, f"test SNS AUROC {sns_trained:.3f} (untrained {sns_untrained:.3f}), best epoch {ckpt.epoch} "
                  f"of {config.epochs}, avg AUROC {trained.avg_auroc:.3f}, train+eval {seconds:.0f}s")  # fmt: skip
    assert defaults and benchmark
    assert sns_trained >= 0.75
    assert sns_trained - sns_untrained >= 0.15
    assert seconds < 300


def test_criterion_7_determinism(report, default_runs):
    (a, ta), (b, tb) = default_runs
    same_metrics = (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    same_report = (a / "eval" / "report.csv").read_bytes() == (b / "eval" / "report.csv").read_bytes()
    same_ckpt = (a / "checkpoint.npz").read_bytes() == (b / "checkpoint.npz").read_bytes()
    total = ta + tb
    ok = same_metrics and same_report and same_ckpt and total < 360
    report(7, ok, f"metrics.csv identical {same_metrics}, report.csv identical {same_report}, "
                  f"checkpoint identical {same_ckpt}, {total:.0f}s for both runs")  # fmt: skip
    assert same_metrics and same_report and same_ckpt
    assert total < 360


# 6. ablation direction


def test_criterion_6_ablation(report):
    h, _ = generate_synthetic(SyntheticSpec())
    variants = {
        "full": {},
        "no guidance": {"guided": False},
        "no regulariser": {"beta": 0.0},
    }
    table = {name: [] for name in variants}
    for seed in ABLATION_SEEDS:
        split = split_dataset(h, seed)
        for name, change in variants.items():
            config = TrainConfig(seed=seed, epochs=ABLATION_EPOCHS, **change)
            ckpt = train(h, split, config).checkpoint
            table[name].append(evaluate(ckpt, h, split, seed).avg_auroc)
    means = {name: float(np.mean(v)) for name, v in table.items()}
    lines = [f"{'variant':<16}" + "".join(f"seed {s:<5}" for s in ABLATION_SEEDS) + "mean"]
    for name, values in table.items():
        lines.append(f"{name:<16}" + "".join(f"{v:<10.3f}" for v in values) + f"{means[name]:.3f}")
    full = means["full"]
    hard_fail = full < means["no guidance"] - 0.05 and full < means["no regulariser"] - 0.05
    direction = full >= means["no guidance"] and full >= means["no regulariser"]
    summary = "full >= both ablations" if direction else "full below at least one ablation (soft gate)"
    report(6, not hard_fail, summary + "\n" + "\n".join(lines))
    assert not hard_fail


# 8. sensitivity sweep


def test_criterion_8_sweep(report, tmp_path):
    h, _ = generate_synthetic(SWEEP_SPEC)
    split = split_dataset(h, 0)
    ks = [round(0.1 * i, 1) for i in range(11)]
    ps = [1.0, 2.0, 3.0, 4.0, 5.0]
    with Timer() as t:
        rows = sweep_cells(h, split, SWEEP_CONFIG, ks, ps)
    (tmp_path / "sweep.csv").write_text(sweep_csv(rows))
    summary = sweep_summary(rows)
    hi, lo = summary["mean_avg_auroc_k_ge_0.4"], summary["mean_avg_auroc_k_lt_0.4"]
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    failed = {(r["k"], r["p"]) for r in rows if r["status"] == "failed"}
    ok = len(lines) == 56 and failed == {(k, p) for k in (0.0, 1.0) for p in ps}
    report(8, ok, f"{len(rows)} cells ({len(failed)} rejected: k=0 and k=1), mean avg AUROC k>=0.4 {hi:.3f} "
                  f"vs k<0.4 {lo:.3f}, {t.seconds:.0f}s")  # fmt: skip
    assert len(lines) == 56
    assert failed == {(k, p) for k in (0.0, 1.0) for p in ps}
    assert hi is not None and lo is not None
