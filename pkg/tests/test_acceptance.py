"""Acceptance suite: one test per numbered criterion.

Each test prints an `ACCEPTANCE <n> PASS/FAIL` line with the measured
quantities (visible with `pytest -s tests/test_acceptance.py`).  The
training-based criteria run on the procedural digit sets, so the whole suite
is self-contained; the heavier criteria share module-scoped runs.
"""

import hashlib
import time
from dataclasses import replace

import numpy as np
import pytest

from featcont import datasets as ds
from featcont.augment import anneal_lambda
from featcont.cli import main
from featcont.harness import RunConfig, build_datasets, run
from featcont.rng import KeyedRng
from featcont.schedule import Linear, PiecewiseLinear, alpha_at
from featcont.streams import PairedDataset, StreamConfig, epoch_stream, mix_draw
from test_gradcheck import check_case, sample_case

RUNTIME_BUDGET_S = 15 * 60
SMALL = dict(train_size=3000, test_size=1000, epochs=16, batch_size=64)
SEEDS = (0, 1, 2)


def report(n, ok, detail):
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------------------
# shared runs

@pytest.fixture(scope="module")
def default_scale():
    """Criterion 1/9 runs at the desk-scale defaults, sigma2 = 0.02."""
    base = RunConfig()
    t0 = time.perf_counter()
    data = build_datasets(base)
    build_s = time.perf_counter() - t0
    results = {}
    for label, cfg in [
        ("baseline", replace(base, schedule="constant:1.0", strategy="blending")),
        ("blending", replace(base, schedule="linear", strategy="blending")),
        ("mixing", replace(base, schedule="linear", strategy="mixing")),
    ]:
        t0 = time.perf_counter()
        results[label] = run(cfg, data=data)
        results[label + "_runtime"] = time.perf_counter() - t0
    return {"base": base, "data": data, "build_s": build_s, **results}


@pytest.fixture(scope="module")
def small_scale():
    """Criterion 2/3 runs: 3 seeds, both variances, three policies."""
    out = {}
    for seed in SEEDS:
        for sigma2 in (0.02, 0.05):
            base = RunConfig(sigma2=sigma2, seed=seed, **SMALL)
            data = build_datasets(base)
            out[(seed, sigma2, "baseline")] = run(
                replace(base, schedule="constant:1.0", strategy="blending"), data=data
            )
            out[(seed, sigma2, "mixing")] = run(
                replace(base, schedule="linear", strategy="mixing"), data=data
            )
            if sigma2 == 0.02:
                out[(seed, sigma2, "step")] = run(
                    replace(base, schedule="step:0.25,1.0", strategy="mixing"), data=data
                )
    return out


def final_acc(result):
    return result.records[-1].test_acc_full


def avg_last10(result):
    return float(np.mean([r.test_acc_full for r in result.records[-10:]]))


# ---------------------------------------------------------------------------
# criteria

def test_c01_bias_removal_ordering(default_scale):
    base_acc = final_acc(default_scale["baseline"])
    blend_acc = final_acc(default_scale["blending"])
    mix_acc = final_acc(default_scale["mixing"])
    runtimes = [default_scale[k + "_runtime"] for k in ("baseline", "blending", "mixing")]
    ok = (
        blend_acc >= base_acc + 0.15
        and mix_acc >= base_acc + 0.15
        and max(runtimes) + default_scale["build_s"] < RUNTIME_BUDGET_S
    )
    report(
        1,
        ok,
        f"baseline={base_acc:.4f} blending={blend_acc:.4f} mixing={mix_acc:.4f} "
        f"(gaps {blend_acc - base_acc:+.4f}/{mix_acc - base_acc:+.4f}, need >= +0.15); "
        f"slowest run {max(runtimes) / 60:.1f} min (< 15 min)",
    )


def test_c02_bias_severity_monotonicity(small_scale):
    gaps = {}
    for sigma2 in (0.02, 0.05):
        gaps[sigma2] = float(
            np.mean(
                [
                    final_acc(small_scale[(s, sigma2, "mixing")])
                    - final_acc(small_scale[(s, sigma2, "baseline")])
                    for s in SEEDS
                ]
            )
        )
    ok = gaps[0.05] < gaps[0.02]
    report(
        2,
        ok,
        f"mean gap over {len(SEEDS)} seeds: sigma2=0.02 -> {gaps[0.02]:.4f}, "
        f"sigma2=0.05 -> {gaps[0.05]:.4f} (strictly smaller required)",
    )


def test_c03_linear_at_least_step(small_scale):
    linear = float(np.mean([avg_last10(small_scale[(s, 0.02, "mixing")]) for s in SEEDS]))
    step = float(np.mean([avg_last10(small_scale[(s, 0.02, "step")]) for s in SEEDS]))
    ok = linear >= step
    report(
        3,
        ok,
        f"avg-last-10 over {len(SEEDS)} seeds: linear={linear:.4f} step@25%={step:.4f}",
    )


def test_c04_schedule_exactness():
    def reference(e, total, k1, k2):
        # piecewise ramp as printed: k2/k1 slope, then (1-k2)/(1-k1)
        if e <= k1 * total:
            return (k2 / k1) * (e / total)
        return k2 + (1.0 - k2) / (1.0 - k1) * (e / total - k1)

    total = 1000
    worst = 0.0
    for k1, k2 in ((0.8, 0.5), (0.5, 0.5), (0.25, 0.75)):
        sched = PiecewiseLinear(k1, k2)
        for e in range(total + 1):
            worst = max(worst, abs(alpha_at(sched, e, total) - reference(e, total, k1, k2)))
    linear_dev = max(
        abs(alpha_at(PiecewiseLinear(0.5, 0.5), e, total) - alpha_at(Linear(), e, total))
        for e in range(total + 1)
    )
    ok = worst <= 1e-12 and linear_dev <= 1e-12
    report(4, ok, f"max |alpha - formula| = {worst:.2e}, k1=k2 vs linear dev = {linear_dev:.2e} (<= 1e-12)")


def test_c05_lambda_prime_formula():
    lams = np.linspace(0.005, 0.995, 100)
    alphas = np.linspace(0.0, 1.0, 100)
    exact = all(
        anneal_lambda(lam, a) == (1.0 - a) * lam + a for lam in lams for a in alphas
    )
    endpoints = all(anneal_lambda(lam, 1.0) == 1.0 and anneal_lambda(lam, 0.0) == lam for lam in lams)
    ok = exact and endpoints
    report(5, ok, "lambda' == (1-alpha)*lambda + alpha bitwise on the 100x100 grid, endpoints exact")


def _digest(images, labels):
    items = [
        hashlib.sha256(np.ascontiguousarray(img, dtype=np.float64).tobytes() + bytes([int(lab)])).hexdigest()
        for img, lab in zip(images, labels)
    ]
    return hashlib.sha256("".join(sorted(items)).encode()).hexdigest()


def test_c06_strategy_endpoint_suite():
    rng = np.random.default_rng(0)
    x1 = rng.random((1000, 3, 8, 8)).astype(np.float32)
    x0 = (0.25 * x1).astype(np.float32)
    data = PairedDataset(x0=x0, x1=x1, labels=rng.integers(0, 10, 1000))
    d0 = _digest(np.asarray(data.x0, dtype=np.float64), data.labels)
    d1 = _digest(np.asarray(data.x1, dtype=np.float64), data.labels)

    failures = []
    for strategy in ("mixing", "batch-mixing", "blending", "opacity-blend"):
        batches = list(epoch_stream(data, StreamConfig(strategy, 0.0, 7, 64), epoch=0))
        got = _digest(np.concatenate([b for b, _ in batches]), np.concatenate([l for _, l in batches]))
        if got != d0:
            failures.append(f"{strategy}@0")
    for strategy in ("mixing", "batch-mixing", "blending"):
        batches = list(epoch_stream(data, StreamConfig(strategy, 1.0, 7, 64), epoch=1))
        got = _digest(np.concatenate([b for b, _ in batches]), np.concatenate([l for _, l in batches]))
        if got != d1:
            failures.append(f"{strategy}@1")
    report(6, not failures, f"content-hash endpoint equivalence on 1000 items; failures: {failures or 'none'}")


def test_c07_mixing_statistics():
    n = 100_000
    devs = {}
    for w in (0.1, 0.3, 0.7):
        frac = sum(mix_draw(KeyedRng(11, i), w) for i in range(n)) / n
        devs[w] = abs(frac - w)
    ok = all(d <= 0.01 for d in devs.values())
    report(7, ok, "empirical D1 fraction deviations over 100k keyed draws: " + ", ".join(f"w={w}: {d:.4f}" for w, d in devs.items()))


def test_c08_gradient_oracle():
    t0 = time.perf_counter()
    worst_overall = 0.0
    checked_total = 0
    for seed in range(20):
        net, x, targets = sample_case(seed)
        assert net.num_params() <= 5000
        checked, _, worst = check_case(net, x, targets)
        checked_total += checked
        worst_overall = max(worst_overall, worst)
    elapsed = time.perf_counter() - t0
    ok = worst_overall < 1e-4 and elapsed < 60.0
    report(
        8,
        ok,
        f"20 nets, {checked_total} coordinates: worst relative error {worst_overall:.2e} "
        f"(< 1e-4) in {elapsed:.1f}s (< 60s)",
    )


def test_c09_dataset_bias_oracle(default_scale):
    palette = ds.make_palette(default_scale["base"].palette_seed, 0.02)
    train_acc = ds.nearest_mean_color_accuracy(default_scale["data"].train, palette)
    test_acc = ds.nearest_mean_color_accuracy(default_scale["data"].test, palette)
    ok = train_acc > 0.9 and test_acc < 0.15
    report(9, ok, f"nearest-mean-color accuracy: biased train {train_acc:.4f} (> 0.9), unbiased test {test_acc:.4f} (< 0.15)")


def test_c10_train_determinism(tmp_path):
    args = [
        "train", "--train-size", "300", "--test-size", "100",
        "--epochs", "3", "--batch-size", "32", "--seed", "4",
    ]
    assert main([*args, "--metrics-out", str(tmp_path / "a.csv")]) == 0
    assert main([*args, "--metrics-out", str(tmp_path / "b.csv")]) == 0
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    report(10, same, "repeated `train` run produced a byte-identical metrics CSV")
