import dataclasses
import hashlib
import itertools
import json
import shutil

import numpy as np
import pytest

from tubefusion.errors import ConfigError, SplitError
from tubefusion.fusion import ContributionRatio
from tubefusion.pipeline import metrics
from tubefusion.pipeline.cli import main
from tubefusion.pipeline.config import RunConfig
from tubefusion.pipeline.extract import motion_series
from tubefusion.pipeline.metrics import EvalReport, average_precision, confusion_matrix
from tubefusion.pipeline.runs import (discover_videos, fit_stream_stats, fuse_video,
                                      fused_dataset, prepare, run_extract, run_train_eval,
                                      stratified_split, sweep_ratio)
from tubefusion.pipeline.synth import generate_dataset, preset


def brute_ap(scores, positive):
    """O(n^2) precision-at-rank: recount hits above each positive from scratch."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    total = 0.0
    for rank, i in enumerate(order, 1):
        if positive[i]:
            total += sum(positive[j] for j in order[:rank]) / rank
    return total / sum(positive)


class TestAveragePrecision:
    def test_two_of_three(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_hand_values(self):
        # positives at ranks 1 and 3: (1/1 + 2/3) / 2
        assert average_precision([3, 2, 1], [1, 0, 1]) == pytest.approx(5 / 6)
        assert np.isnan(average_precision([1, 2], [0, 0]))

    @pytest.mark.parametrize("seed", range(20))
    def test_against_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        pos = rng.integers(0, 2, n)
        pos[0] = 1
        scores = rng.permutation(n).astype(float)
        assert average_precision(scores, pos) == pytest.approx(brute_ap(list(scores), list(pos)))

    def test_random_scores_near_prior(self):
        aps = []
        for seed in range(30):
            rng = np.random.default_rng(seed)
            pos = np.repeat([1, 0], 100)
            aps.append(average_precision(rng.random(200), pos))
        assert abs(np.mean(aps) - 0.5) < 0.1


class TestReport:
    def test_perfect_classifier(self):
        y = np.array([0, 1, 2, 1, 0])
        probs = np.eye(3)[y] * 0.9 + 0.05
        r = EvalReport.from_predictions("x", ["a", "b", "c"], y, probs, 10)
        assert r.accuracy == 1.0 and r.mAP == 1.0
        cm = np.array(r.confusion)
        assert (cm == np.diag(np.diag(cm))).all() and np.diag(cm).tolist() == [2, 2, 1]

    @pytest.mark.parametrize("seed", range(10))
    def test_invariants(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 4, 40)
        probs = rng.dirichlet(np.ones(4), 40)
        r = EvalReport.from_predictions("x", list("abcd"), y, probs, 5)
        cm = np.array(r.confusion)
        assert r.accuracy == pytest.approx(np.trace(cm) / cm.sum(), abs=1e-15)
        assert r.mAP == pytest.approx(np.nanmean(r.per_class_ap), abs=1e-15)
        assert cm.sum() == 40 == r.n_test

    def test_confusion_rows_are_truth(self):
        assert confusion_matrix([0, 0, 1], [1, 1, 1], 2).tolist() == [[0, 2], [0, 1]]

    def test_serialisation(self):
        r = EvalReport.from_predictions("x", ["a", "b"], [0, 1], [[0.9, 0.1], [0.2, 0.8]], 2,
                                        fusion={"w": np.float64(0.5)})
        d = json.loads(r.to_json())
        assert d["accuracy"] == 1.0 and d["fusion"]["w"] == 0.5
        assert r.to_csv().splitlines()[-1] == "overall,1.000000,1.000000"
        assert metrics.per_class_ap(np.array([[0.9, 0.1], [0.2, 0.8]]), [0, 1]) == [1.0, 1.0]


class TestSplit:
    def test_stratified(self):
        labels = np.repeat([0, 1, 2], [10, 5, 2])
        train, test = stratified_split(labels, 0.8, 0)
        assert sorted(train + test) == list(range(17)) and not set(train) & set(test)
        for c, n_train in ((0, 8), (1, 4), (2, 1)):
            assert sum(labels[i] == c for i in train) == n_train

    def test_deterministic(self):
        labels = np.repeat([0, 1], 9)
        assert stratified_split(labels, 0.7, 3) == stratified_split(labels, 0.7, 3)
        assert stratified_split(labels, 0.7, 3) != stratified_split(labels, 0.7, 4)

    def test_singleton_class(self):
        with pytest.raises(SplitError):
            stratified_split(np.array([0, 0, 1]), 0.5, 0)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestSynth:
    def test_deterministic(self, tmp_path):
        spec = preset("motion", videos_per_class=1, seed=5)
        spec.n_frames = 6
        generate_dataset(spec, tmp_path / "a")
        generate_dataset(spec, tmp_path / "b")
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
        spec.seed = 6
        generate_dataset(spec, tmp_path / "c")
        assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset("nope")


def small_config(root, out, **kw):
    base = dict(dataset_root=str(root), output_dir=str(out), codebook_k=8,
                codebook_sample=2000, hoof_bins=16, lstm_hidden=8, lstm_epochs=3,
                lstm_dropout=0.5, forest_trees=5, train_frac=0.5)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    spec = preset("motion", videos_per_class=3, seed=1)
    spec.n_frames = 25
    generate_dataset(spec, root)
    return root


@pytest.fixture(scope="module")
def tiny_data(tiny_dataset, tmp_path_factory):
    config = small_config(tiny_dataset, tmp_path_factory.mktemp("run"))
    return config, prepare(config)


class TestPipeline:
    def test_every_video_has_motion(self, tiny_data):
        config, data = tiny_data
        assert data.extract.all_processed and len(data.videos) == 6
        for f in data.features:
            m = motion_series(f, data.codebook)
            assert m.any(axis=1).any()

    def test_rerun_uses_cache(self, tiny_data):
        config, data = tiny_data
        again = prepare(config)
        assert set(again.extract.status.values()) == {"cached"}
        assert again.hashes == data.hashes

    def test_short_video_skipped(self, tiny_dataset, tmp_path):
        root = tmp_path / "data"
        shutil.copytree(tiny_dataset, root)
        short = root / "horizontal" / "video_000"
        for p in sorted(short.glob("frame_*"))[10:]:
            p.unlink()
        res = run_extract(small_config(root, tmp_path / "out"))
        assert res.status["horizontal/video_000"].startswith("skipped: EmptyVideo")
        assert sum(s == "computed" for s in res.status.values()) == 5
        assert not res.all_processed

    def test_empty_class(self, tmp_path):
        (tmp_path / "a" / "v0").mkdir(parents=True)
        (tmp_path / "b").mkdir()
        with pytest.raises(ConfigError):
            discover_videos(tmp_path)
        with pytest.raises(ConfigError):
            discover_videos(tmp_path / "missing")

    def test_static_only_ratio_ignores_motion(self, tiny_data):
        config, data = tiny_data
        split = stratified_split(data.labels, config.train_frac, config.seed)
        stats = fit_stream_stats(data, config, split[0])
        r = ContributionRatio.from_static_motion("100:0")
        for f in data.features:
            fused, _ = fuse_video(f, data.codebook, config, stats, r)
            expected = (f.static - stats.static_mean) / stats.static_std
            assert fused.tobytes() == expected.tobytes()
        # scrambling every motion descriptor leaves the 100:0 run untouched
        rng = np.random.default_rng(0)
        scrambled = dataclasses.replace(data, features=[
            dataclasses.replace(f, hoofs=rng.random(f.hoofs.shape)) for f in data.features])
        a, _ = run_train_eval(config, split, data, r)
        b, _ = run_train_eval(config, split, scrambled, r)
        assert a.to_json() == b.to_json()

    def test_same_seed_same_report(self, tiny_data):
        config, data = tiny_data
        a, _ = run_train_eval(config, data=data)
        b, _ = run_train_eval(config, data=data)
        assert a.to_json() == b.to_json()
        assert a.config == config.to_dict() and a.fusion["method"] == "cholesky"

    def test_fusion_summaries(self, tiny_data):
        config, data = tiny_data
        train = list(range(0, 6, 2))
        _, var = fused_dataset(data, config.replace(fusion="variance"), train)
        assert 0 <= var["mean_w_motion"] <= 1
        _, pca = fused_dataset(data, config.replace(fusion="pca"), train)
        assert 0.5 <= pca["pca_share_min"] <= pca["pca_share_max"] <= 1

    def test_sweep_rows(self, tiny_data):
        config, data = tiny_data
        rows, reports = sweep_ratio(config, ["100:0", "50:50", "0:100"], data)
        assert [r["static:motion"] for r in rows] == ["100:0", "50:50", "0:100"]
        assert sum(r["best"] for r in rows) == 1 and len(reports) == 3
        with pytest.raises(ConfigError):
            sweep_ratio(config.replace(fusion="pca"), data=data)


class TestCli:
    def test_commands(self, tiny_dataset, tmp_path, capsys):
        flags = ["--dataset-root", str(tiny_dataset), "--output-dir", str(tmp_path),
                 "--codebook-k", "8", "--codebook-sample", "2000", "--hoof-bins", "16",
                 "--lstm-hidden", "8", "--lstm-epochs", "2", "--forest-trees", "3",
                 "--train-frac", "0.5"]
        for cmd in ("extract", "codebook", "train", "eval", "compare"):
            assert main([cmd] + flags) == 0, cmd
        assert main(["sweep", "--ratios", "80:20,20:80"] + flags) == 0
        reports = tmp_path / "reports"
        for name in ("eval.json", "eval.csv", "compare.json", "sweep.csv", "sweep_80_20.json"):
            assert (reports / name).exists(), name
        assert json.loads((tmp_path / "extract_status.json").read_text())
        assert (tmp_path / "timings.json").exists()
        assert "accuracy" in capsys.readouterr().out

    def test_config_file_and_errors(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"dataset_root = {tiny_dataset}\noutput_dir = {tmp_path / 'o'}\n"
                       "codebook_k = 8\nhoof_bins = 16\n")
        assert main(["extract", "--config", str(cfg)]) == 0
        assert main(["extract", "--config", str(cfg), "--stride", "99"]) == 2
        assert main(["extract", "--dataset-root", str(tmp_path / "none")]) == 2

    def test_skipped_video_exit_code(self, tiny_dataset, tmp_path):
        root = tmp_path / "data"
        shutil.copytree(tiny_dataset, root)
        for p in sorted((root / "vertical" / "video_001").glob("frame_*"))[5:]:
            p.unlink()
        assert main(["extract", "--dataset-root", str(root), "--output-dir",
                     str(tmp_path / "o"), "--hoof-bins", "16"]) == 1

    def test_synth_gen(self, tmp_path):
        assert main(["synth-gen", "--out", str(tmp_path / "s"), "--grammar", "zz=left,up",
                     "--grammar", "yy=up,left", "--videos-per-class", "1", "--frames", "4",
                     "--size", "32"]) == 0
        names = sorted(p.name for p in (tmp_path / "s").iterdir() if p.is_dir())
        assert names == ["yy", "zz"]
        assert len(list(itertools.islice((tmp_path / "s" / "zz" / "video_000").glob("frame_*"),
                                         10))) == 4
