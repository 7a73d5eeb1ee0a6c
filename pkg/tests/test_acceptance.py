"""Acceptance criteria 1-11, each at its stated tolerance and runtime budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists one
PASS/FAIL line per criterion.  Criteria 8-10 generate synthetic datasets and
run the full pipeline, which takes a few minutes on one core.
"""
import math
import time

import numpy as np
import pytest

from tubefusion.clustering import ClusteringParams, frame_action_boxes
from tubefusion.core import make_rng
from tubefusion.descriptors import Codebook, compute_hoof, encode_bow, kmeans, nearest_centers
from tubefusion.fusion import (ContributionRatio, FusionWeights, fuse_cholesky, fuse_pca,
                               pca_2x2, rho_from_ratio, variance_weights)
from tubefusion.pipeline.config import RunConfig
from tubefusion.pipeline.runs import (compare_temporal, prepare, run_train_eval,
                                      stratified_split, sweep_ratio)
from tubefusion.pipeline.synth import generate_dataset, preset
from tubefusion.temporal.lstm import PARAM_NAMES, LstmModel, SequenceSample, lstm_backward, lstm_forward
from tubefusion.tubes import build_motion_tubes, equalize_box_counts, link_boxes, normalize_tube_boxes

criterion = pytest.mark.criterion


def budget(t0, seconds):
    elapsed = time.perf_counter() - t0
    assert elapsed < seconds, f"took {elapsed:.1f}s, budget {seconds}s"
    return elapsed


@criterion(1, "contribution ratio to rho reproduces the five tabulated values")
def test_c01_ratio_table():
    expected = {(80, 20): 4 / math.sqrt(17), (60, 40): 3 / math.sqrt(13),
                (50, 50): 1 / math.sqrt(2), (40, 60): 2 / math.sqrt(13),
                (20, 80): 1 / math.sqrt(17)}
    worst = 0.0
    for (m, s), rho in expected.items():
        w = rho_from_ratio(ContributionRatio(m, s))
        worst = max(worst, abs(w.w_motion - rho), abs(w.w_static - math.sqrt(1 - rho * rho)))
    print(f"max abs error {worst:.1e}")
    assert worst < 1e-12


@criterion(2, "cholesky fusion hits the target correlations")
def test_c02_correlation_contract():
    t0 = time.perf_counter()
    worst = 0.0
    for rho in (0.0, 1 / math.sqrt(17), 1 / math.sqrt(2), 4 / math.sqrt(17), 1.0):
        b = math.sqrt(1 - rho * rho)
        for seed in range(20):
            s, m = make_rng(seed, "cholesky-contract").standard_normal((2, 10_000))
            c = fuse_cholesky(s, m, FusionWeights(rho, b))
            worst = max(worst, abs(np.corrcoef(c, m)[0, 1] - rho),
                        abs(np.corrcoef(c, s)[0, 1] - b))
    elapsed = budget(t0, 5)
    print(f"max deviation {worst:.4f} over 100 draws, {elapsed:.2f}s")
    assert worst < 0.03


def scan_hoof(vectors, bins):
    h = np.zeros(bins)
    for x, y in vectors:
        if x < 0 or (x == 0 and y > 0):
            x, y = -x, -y
        theta = math.atan2(y, x)
        if theta >= math.pi / 2:
            theta = -math.pi / 2
        for b in range(bins):
            if -math.pi / 2 + math.pi * b / bins <= theta < -math.pi / 2 + math.pi * (b + 1) / bins:
                break
        h[b] += math.hypot(x, y)
    return h / h.sum() if h.sum() > 0 else h


@criterion(3, "HOOF sums to one, is sign-symmetric and matches an inequality scan")
def test_c03_hoof_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    nonzero = 0
    for _ in range(1000):
        n = int(rng.integers(0, 30))
        bins = int(rng.integers(1, 40))
        v = rng.normal(size=(n, 2)) * (rng.random((n, 1)) < 0.9)
        h = compute_hoof(v, bins)
        if h.any():
            nonzero += 1
            assert abs(h.sum() - 1) < 1e-9
        assert h.tobytes() == compute_hoof(-v, bins).tobytes()
        assert np.allclose(h, scan_hoof(v, bins), rtol=0, atol=1e-12)
    elapsed = budget(t0, 5)
    print(f"{nonzero} nonzero of 1000, {elapsed:.2f}s")


def blob_points(center, rng, n=30, radius=4.0):
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = radius * np.sqrt(rng.random(n))
    return np.asarray(center) + np.c_[rad * np.cos(ang), rad * np.sin(ang)]


def tube_scenario(seed, z=15, size=(160, 130)):
    """Blobs in separate horizontal lanes; some frames lose a blob, others gain clutter.

    Drops and clutter are balanced so the average count stays the blob count.
    """
    rng = np.random.default_rng(seed)
    n_blobs = int(rng.integers(2, 5))
    lanes = 15 + 30 * np.arange(n_blobs)
    start = rng.uniform(20, 60, n_blobs)
    vel = rng.uniform(-1.5, 1.5, n_blobs)
    truth = np.stack([np.c_[start + vel * k, lanes] for k in range(z)])  # (z, n, 2)
    n_glitch = int(rng.integers(0, 3))
    frames = rng.choice(z, size=2 * n_glitch, replace=False)
    drops, clutter = frames[:n_glitch], frames[n_glitch:]
    params = ClusteringParams()
    per_frame = []
    for k in range(z):
        pts = [blob_points(truth[k, i], rng) for i in range(n_blobs)]
        if k in drops:
            pts.pop(int(rng.integers(n_blobs)))
        if k in clutter:
            pts.append(blob_points((145, rng.uniform(10, 120)), rng))
        per_frame.append(frame_action_boxes(np.vstack(pts), k, size, params).boxes)
    return per_frame, truth, n_blobs


@criterion(4, "tube integrity and identity preservation on 200 segments")
def test_c04_tube_integrity():
    t0 = time.perf_counter()
    kept = total = 0
    for seed in range(200):
        per_frame, truth, n_blobs = tube_scenario(seed)
        frames, n = equalize_box_counts(per_frame, list(range(len(per_frame))), (160, 130))
        assert n == n_blobs
        assert all(len(f) == n for f in frames)
        assignments = [link_boxes(frames[k], frames[k + 1]) for k in range(len(frames) - 1)]
        for a in assignments:
            assert sorted(a.tolist()) == list(range(n))
        _, tubes = build_motion_tubes(frames, assignments)
        for k in range(len(frames)):
            ids = [id(t.boxes[k]) for t in tubes]
            assert len(set(ids)) == n
        tubes = [normalize_tube_boxes(t, (160, 130)) for t in tubes]
        for t in tubes:
            owner = [int(np.argmin(np.linalg.norm(truth[k] - b.centroid, axis=1)))
                     for k, b in enumerate(t.boxes)]
            kept += sum(o == owner[0] for o in owner)
            total += len(owner)
    elapsed = budget(t0, 120)
    share = kept / total
    print(f"identity preserved {100 * share:.2f}% of {total} tube-frames, {elapsed:.1f}s")
    assert share >= 0.95


def perturbed_model(seed):
    model = LstmModel.init(8, 8, 3, np.random.default_rng(seed), dropout_prob=0.0)
    rng = np.random.default_rng(seed + 1)
    for name in PARAM_NAMES:
        model.params[name] = model.params[name] + rng.normal(0, 0.3, model.params[name].shape)
    return model


@criterion(5, "LSTM backpropagation agrees with central differences")
def test_c05_lstm_gradient_check():
    t0 = time.perf_counter()
    model = perturbed_model(0)
    sample = SequenceSample(np.random.default_rng(2).normal(size=(5, 8)), 1)

    def loss():
        probs, _ = lstm_forward(model, sample)
        return -math.log(probs[sample.label])

    _, cache = lstm_forward(model, sample)
    analytic = lstm_backward(model, sample, cache)
    errors = {}
    for name in PARAM_NAMES:
        p = model.params[name]
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-6
            up = loss()
            p[idx] = old - 1e-6
            down = loss()
            p[idx] = old
            num[idx] = (up - down) / 2e-6
        a = analytic[name]
        errors[name] = np.linalg.norm(a - num) / (np.linalg.norm(a) + np.linalg.norm(num))
    elapsed = budget(t0, 30)
    print(", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f", {elapsed:.1f}s")
    assert max(errors.values()) < 1e-4


@criterion(6, "k-means objective never rises and BoW matches a brute-force scan")
def test_c06_kmeans_bow():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    for trial in range(20):
        x = rng.dirichlet(np.ones(16), 400)
        centers, _, hist = kmeans(x, int(rng.integers(2, 30)), np.random.default_rng(trial))
        assert all(b <= a for a, b in zip(hist, hist[1:]))
        hoofs = rng.dirichlet(np.ones(16), int(rng.integers(0, 60)))
        expected = [min(range(len(centers)), key=lambda j: (((h - centers[j]) ** 2).sum(), j))
                    for h in hoofs]
        assert nearest_centers(hoofs, centers).tolist() == expected
        bow = encode_bow(hoofs, Codebook(centers))
        assert bow.sum() == len(hoofs)
        assert bow.tolist() == np.bincount(expected, minlength=len(centers)).tolist()
    elapsed = budget(t0, 60)
    print(f"20 trials, {elapsed:.1f}s")


@criterion(7, "PCA fusion eigenpairs, collinear share and share bounds")
def test_c07_pca():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(500):
        a = rng.normal(size=(2, 2))
        cov = a @ a.T
        lam1, lam2, v1 = pca_2x2(cov)
        p, q, r = cov[0, 0], cov[0, 1], cov[1, 1]
        disc = math.sqrt((p - r) ** 2 + 4 * q * q)
        scale = max(1.0, abs(lam1))
        worst = max(worst, abs(lam1 - (p + r + disc) / 2) / scale,
                    abs(lam2 - (p + r - disc) / 2) / scale,
                    np.linalg.norm(cov @ v1 - lam1 * v1) / scale)
        s, m = rng.normal(size=(2, int(rng.integers(2, 50))))
        _, share = fuse_pca(s, m)
        assert 0.5 - 1e-12 <= share <= 1 + 1e-12
    s = rng.random(40)
    _, collinear = fuse_pca(s, -3 * s + 1)
    print(f"max eigen error {worst:.1e}, collinear share {collinear!r}")
    assert worst < 1e-12
    assert abs(collinear - 1.0) < 1e-12


def hand_sigma(v):
    p = [x / sum(v) for x in v]
    mu = sum(i * pi for i, pi in enumerate(p))
    return math.sqrt(sum((i - mu) ** 2 * pi for i, pi in enumerate(p)))


@criterion(11, "variance-ratio weights lie in [0, 1], sum to 1 and match hand moments")
def test_c11_variance_weights():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(500):
        d = int(rng.integers(2, 80))
        s = rng.random(d) * (rng.random(d) < 0.5)
        m = rng.random(d) * (rng.random(d) < 0.5)
        s[int(rng.integers(d))] += 0.2
        m[int(rng.integers(d))] += 0.2
        ss, sm = hand_sigma(s), hand_sigma(m)
        if ss + sm == 0:
            continue
        w = variance_weights(s, m)
        assert 0 <= w.w_motion <= 1 and 0 <= w.w_static <= 1
        assert abs(w.w_motion + w.w_static - 1) < 1e-12
        worst = max(worst, abs(w.w_motion - ss / (ss + sm)), abs(w.w_static - sm / (ss + sm)))
    print(f"max deviation from hand moments {worst:.1e}")
    assert worst < 1e-9


# end-to-end criteria on generated datasets

def pipeline_config(root, out, **kw):
    base = dict(dataset_root=str(root), output_dir=str(out), codebook_k=64, lstm_dropout=0.5,
                train_frac=0.8, ratio="50:50", fusion="cholesky", static_provider="toy:0",
                seed=0)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    cache = {}

    def get(name):
        if name not in cache:
            root = tmp_path_factory.mktemp(f"synth_{name}")
            generate_dataset(preset(name, seed=0), root)
            cache[name] = (root, tmp_path_factory.mktemp(f"run_{name}"))
        return cache[name]

    return get


@pytest.mark.slow
@criterion(8, "moving-square classification reaches 90% within 10 minutes")
def test_c08_end_to_end(synthetic):
    t0 = time.perf_counter()
    root, out = synthetic("motion")
    config = pipeline_config(root, out)
    data = prepare(config)
    assert len(data.class_names) == 2 and len(data.videos) == 80
    report, _ = run_train_eval(config, data=data)
    elapsed = budget(t0, 600)
    print(f"accuracy {report.accuracy:.4f} on {report.n_test} held-out videos, {elapsed:.0f}s")
    assert report.n_test == 16
    assert report.accuracy >= 0.90


@pytest.mark.slow
@criterion(9, "accuracy depends on the static:motion ratio on the mixed-cue set")
def test_c09_ratio_dependence(synthetic):
    root, out = synthetic("mixed")
    config = pipeline_config(root, out)
    data = prepare(config)
    split = stratified_split(data.labels, config.train_frac, config.seed)
    rows, _ = sweep_ratio(config, data=data, split=split)
    acc = {r["static:motion"]: r["accuracy"] for r in rows}
    print(" ".join(f"{k}={v:.3f}" for k, v in acc.items()))
    assert len(rows) == 7
    best, worst = max(acc.values()), min(acc.values())
    assert best - worst >= 0.05
    assert acc["100:0"] < best and acc["0:100"] < best


@pytest.mark.slow
@criterion(10, "LSTM beats the order-blind forest by 10 points on the order set")
def test_c10_temporal_order(synthetic):
    root, out = synthetic("order")
    config = pipeline_config(root, out)
    out = compare_temporal(config)
    print(f"lstm {out['lstm'].accuracy:.4f} forest {out['forest'].accuracy:.4f} "
          f"margin {out['margin']:+.4f}")
    assert out["margin"] >= 0.10
