"""Stage orchestration: extraction caches, codebook, training, evaluation, sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..descriptors import Codebook, build_codebook
from ..errors import (ConfigError, DegenerateWarning, EmptyVideo, NotAHistogram, SmallCorpus,
                      SplitError)
from ..formats import (atomic_write_text, list_frame_files, read_json, read_vten, write_json,
                       write_vten)
from ..fusion import (STANDARD_RATIOS, ContributionRatio, fuse_cholesky, fuse_pca,
                      rho_from_ratio, variance_weights)
from ..temporal.forest import train_forest
from ..temporal.lstm import LstmConfig, LstmModel, SequenceSample, train_lstm
from .config import CODEBOOK_KEYS, EXTRACT_KEYS
from .extract import VideoFeatures, extract_video, motion_series
from .metrics import EvalReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VideoRef:
    class_name: str
    name: str
    path: Path

    @property
    def key(self):
        return f"{self.class_name}/{self.name}"


def discover_videos(root):
    """``<root>/<class>/<video>/`` folders, classes and videos in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} does not exist")
    classes = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not classes:
        raise ConfigError(f"no class folders under {root}")
    videos = []
    for cdir in classes:
        vids = sorted(p for p in cdir.iterdir() if p.is_dir() and not p.name.startswith("."))
        if not vids:
            raise ConfigError(f"class {cdir.name!r} has no videos")
        videos.extend(VideoRef(cdir.name, v.name, v) for v in vids)
    return [c.name for c in classes], videos


def video_hash(video, config):
    """Content hash of the video's files plus the extraction settings."""
    h = hashlib.sha256(config.digest(EXTRACT_KEYS).encode())
    for p in sorted(q for q in video.path.iterdir() if q.is_file()):
        h.update(p.name.encode())
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def cache_dir(config, video):
    return Path(config.output_dir) / "cache" / video.class_name / video.name


def save_features(directory, feats, digest):
    directory = Path(directory)
    write_vten(directory / "hoofs.vten", feats.hoofs.reshape(-1, feats.hoofs.shape[-1]))
    write_vten(directory / "hoof_segment.vten", feats.hoof_segment.astype(np.float64),
               dtype=np.float64)
    write_vten(directory / "static.vten", feats.static.reshape(feats.n_segments, -1))
    # meta last: its presence marks a complete cache entry
    write_json(directory / "meta.json", {
        "hash": digest, "status": "ok", "n_frames": feats.n_frames,
        "n_segments": feats.n_segments, "no_motion_segments": feats.no_motion_segments,
        "tube_counts": feats.tube_counts})


def load_features(directory):
    directory = Path(directory)
    meta = read_json(directory / "meta.json")
    if meta.get("status") != "ok":
        return None
    return VideoFeatures(read_vten(directory / "hoofs.vten").astype(np.float64),
                         read_vten(directory / "hoof_segment.vten").astype(int),
                         read_vten(directory / "static.vten").astype(np.float64),
                         meta["n_frames"], meta["n_segments"], meta["no_motion_segments"],
                         meta["tube_counts"])


def _extract_one(args):
    video, config = args
    out = cache_dir(config, video)
    digest = video_hash(video, config)
    meta_path = out / "meta.json"
    if meta_path.exists():
        try:
            meta = read_json(meta_path)
        except (OSError, ValueError):
            meta = {}
        if meta.get("hash") == digest:
            return video.key, "cached" if meta.get("status") == "ok" else meta.get("status"), {}
    if not list_frame_files(video.path):
        status = "failed: no frames"
        write_json(meta_path, {"hash": digest, "status": status})
        return video.key, status, {}
    try:
        feats = extract_video(video.path, config)
    except EmptyVideo as exc:
        status = f"skipped: EmptyVideo ({exc})"
        write_json(meta_path, {"hash": digest, "status": status})
        return video.key, status, {}
    except Exception as exc:  # noqa: BLE001 - per-video failures must not stop the run
        status = f"failed: {type(exc).__name__}: {exc}"
        log.warning("%s: %s", video.key, status)
        return video.key, status, {}
    save_features(out, feats, digest)
    return video.key, "computed", feats.timings


@dataclass
class ExtractResult:
    class_names: list
    videos: list
    status: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok_videos(self):
        return [v for v in self.videos if self.status[v.key] in ("computed", "cached")]

    @property
    def all_processed(self):
        return len(self.ok_videos) == len(self.videos)


def run_extract(config, videos=None):
    """Extract and cache features for every video; failures are recorded, not raised."""
    class_names, found = discover_videos(config.dataset_root)
    videos = found if videos is None else videos
    result = ExtractResult(class_names, videos)
    jobs = [(v, config) for v in videos]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_extract_one, jobs))
    else:
        outcomes = [_extract_one(j) for j in jobs]
    for key, status, timings in outcomes:
        result.status[key] = status
        for stage, dt in timings.items():
            result.timings[stage] = result.timings.get(stage, 0.0) + dt
    write_json(Path(config.output_dir) / "extract_status.json", result.status)
    return result


def dataset_hash(config, videos):
    h = hashlib.sha256()
    for v in videos:
        meta_path = cache_dir(config, v) / "meta.json"
        h.update(v.key.encode())
        h.update(read_json(meta_path)["hash"].encode())
    return h.hexdigest()


def ensure_codebook(config, extract_result=None):
    """Train (or reuse) the HOOF codebook over all cached videos."""
    extract_result = extract_result or run_extract(config)
    videos = extract_result.ok_videos
    digest = hashlib.sha256((config.digest(CODEBOOK_KEYS)
                             + dataset_hash(config, videos)).encode()).hexdigest()
    path = Path(config.output_dir) / "codebook.vten"
    meta_path = Path(str(path) + ".json")
    if path.exists() and meta_path.exists() and read_json(meta_path).get("hash") == digest:
        return Codebook.load(path), digest
    hoofs = [load_features(cache_dir(config, v)).hoofs for v in videos]
    corpus = np.concatenate([h for h in hoofs if len(h)]) if any(len(h) for h in hoofs) else None
    if corpus is None:
        raise ConfigError("no HOOF vectors were extracted; nothing to build a codebook from")
    try:
        cb = build_codebook(corpus, config.codebook_k, config.codebook_sample, config.seed)
    except SmallCorpus as exc:
        raise ConfigError(f"{exc}; set codebook_k <= {exc.achievable_k} for this dataset") from exc
    cb.save(path)
    meta = read_json(meta_path)
    meta["hash"] = digest
    write_json(meta_path, meta)
    return cb, digest


def _fuse_segment(s, m, config, ratio, s_raw, m_raw):
    """Fuse one segment; ``s``/``m`` are the (possibly normalised) streams.

    Variance weights come from the raw histograms, since the moments are
    only defined for nonnegative mass.
    """
    if config.fusion == "cholesky":
        w = rho_from_ratio(ratio)
        return fuse_cholesky(s, m, w), {"w_motion": w.w_motion, "w_static": w.w_static}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        if config.fusion == "variance":
            try:
                w = variance_weights(s_raw, m_raw)
                info = {"w_motion": w.w_motion, "w_static": w.w_static,
                        "degenerate": w.degenerate}
            except NotAHistogram:
                # a segment without motion has no histogram to take moments of
                info = {"w_motion": 0.5, "w_static": 0.5, "degenerate": True}
            return info["w_motion"] * m + info["w_static"] * s, info
        c, share = fuse_pca(s, m)
        return c, {"pca_share": share}


@dataclass(frozen=True)
class StreamStats:
    """Per-dimension shift/scale for the static and motion streams."""

    static_mean: np.ndarray
    static_std: np.ndarray
    motion_mean: np.ndarray
    motion_std: np.ndarray

    @classmethod
    def identity(cls, dim):
        z, o = np.zeros(dim), np.ones(dim)
        return cls(z, o, z, o)

    @classmethod
    def fit(cls, static_rows, motion_rows):
        def ms(x):
            sd = x.std(axis=0)
            return x.mean(axis=0), np.where(sd > 1e-12, sd, 1.0)

        return cls(*ms(static_rows), *ms(motion_rows))


def stream_series(feats, codebook, config):
    return feats.static, motion_series(feats, codebook, config.motion_norm)


def fit_stream_stats(data, config, train_idx):
    if config.stream_norm == "none":
        return StreamStats.identity(data.codebook.k)
    static, motion = zip(*(stream_series(data.features[i], data.codebook, config)
                           for i in train_idx))
    return StreamStats.fit(np.concatenate(static), np.concatenate(motion))


def fuse_video(feats, codebook, config, stats, ratio=None):
    """(n_segments, k) fused series plus per-segment fusion info."""
    ratio = ratio or config.contribution_ratio
    static, motion = stream_series(feats, codebook, config)
    zs = (static - stats.static_mean) / stats.static_std
    zm = (motion - stats.motion_mean) / stats.motion_std
    rows, infos = [], []
    for t in range(feats.n_segments):
        c, info = _fuse_segment(zs[t], zm[t], config, ratio, static[t], motion[t])
        rows.append(c)
        infos.append(info)
    return np.array(rows), infos


def summarize_fusion(infos, config, ratio):
    out = {"method": config.fusion}
    if config.fusion == "cholesky":
        w = rho_from_ratio(ratio)
        out.update(w_motion=w.w_motion, w_static=w.w_static,
                   ratio_static_motion=ratio.static_motion_label,
                   ratio_motion_static=ratio.motion_static_label)
    elif config.fusion == "variance":
        wm = np.array([i["w_motion"] for i in infos])
        out.update(mean_w_motion=float(wm.mean()), mean_w_static=float(1 - wm.mean()),
                   derived_ratio_motion_static=f"{100 * wm.mean():.1f}:{100 * (1 - wm.mean()):.1f}",
                   degenerate_segments=int(sum(i.get("degenerate", False) for i in infos)))
    else:
        share = np.array([i["pca_share"] for i in infos])
        out.update(pca_share_min=float(share.min()), pca_share_mean=float(share.mean()),
                   pca_share_max=float(share.max()))
    return out


def stratified_split(labels, train_frac, seed):
    """Per-class shuffled split; every class lands in both train and test."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise SplitError(f"class {c} has {len(idx)} usable video(s); need at least 2")
        idx = rng.permutation(idx)
        n_train = min(max(int(round(train_frac * len(idx))), 1), len(idx) - 1)
        train.extend(idx[:n_train].tolist())
        test.extend(idx[n_train:].tolist())
    return sorted(train), sorted(test)


@dataclass
class PreparedData:
    class_names: list
    videos: list
    labels: np.ndarray
    features: list
    codebook: Codebook
    hashes: dict
    extract: ExtractResult = None


def prepare(config):
    """Extraction caches plus codebook, loaded for training."""
    extracted = run_extract(config)
    codebook, cb_hash = ensure_codebook(config, extracted)
    videos, feats = [], []
    for v in extracted.ok_videos:
        f = load_features(cache_dir(config, v))
        if f is not None and f.n_segments > 0:
            videos.append(v)
            feats.append(f)
    labels = np.array([extracted.class_names.index(v.class_name) for v in videos])
    hashes = {"dataset": dataset_hash(config, videos), "codebook": cb_hash}
    return PreparedData(extracted.class_names, videos, labels, feats, codebook, hashes, extracted)


def fused_dataset(data, config, train_idx, ratio=None):
    """Fused series for every video; normalisation statistics use ``train_idx`` only."""
    ratio = ratio or config.contribution_ratio
    stats = fit_stream_stats(data, config, train_idx)
    series, infos = [], []
    for f in data.features:
        c, info = fuse_video(f, data.codebook, config, stats, ratio)
        series.append(c)
        infos.extend(info)
    summary = summarize_fusion(infos, config, ratio)
    summary["stream_norm"] = config.stream_norm
    return series, summary


def lstm_config(config):
    return LstmConfig(config.lstm_epochs, config.lstm_lr, config.lstm_batch, config.lstm_clip,
                      config.seed, config.lstm_hidden, config.lstm_dropout,
                      config.lstm_standardize)


def _split(data, config, split):
    if split is None:
        return stratified_split(data.labels, config.train_frac, config.seed)
    return split


def train_on(data, config, series, train_idx):
    samples = [SequenceSample(series[i], int(data.labels[i])) for i in train_idx]
    return train_lstm(samples, lstm_config(config), class_names=data.class_names)


def evaluate_lstm(model, data, series, test_idx, n_train, config, fusion_info, classifier="lstm"):
    probs = model.predict_proba([series[i] for i in test_idx])
    return EvalReport.from_predictions(
        classifier, data.class_names, data.labels[test_idx], probs, n_train,
        fusion=fusion_info, config=config.to_dict(), hashes=dict(data.hashes),
        notes={"test_videos": [data.videos[i].key for i in test_idx]})


def run_train_eval(config, split=None, data=None, ratio=None):
    """Fuse, train the LSTM on the training videos and report on held-out ones."""
    data = data or prepare(config)
    train_idx, test_idx = _split(data, config, split)
    series, fusion_info = fused_dataset(data, config, train_idx, ratio)
    result = train_on(data, config, series, train_idx)
    report = evaluate_lstm(result.model, data, series, test_idx, len(train_idx), config,
                           fusion_info)
    report.notes["loss_curve_final"] = result.loss_curve[-1]
    return report, result.model


def sweep_ratio(config, ratios=None, data=None, split=None):
    """One train/eval per contribution ratio, sharing caches and split.

    Ratios are ``ContributionRatio`` objects or ``"static:motion"`` strings.
    Returns ``(rows, reports)``.
    """
    if config.fusion != "cholesky":
        raise ConfigError("ratio sweeps use cholesky fusion")
    if ratios is None:
        ratios = [ContributionRatio(m, s) for s, m in STANDARD_RATIOS]
    ratios = [r if isinstance(r, ContributionRatio) else ContributionRatio.from_static_motion(r)
              for r in ratios]
    data = data or prepare(config)
    split = _split(data, config, split)
    rows, reports = [], []
    for r in ratios:
        report, _ = run_train_eval(config, split, data, r)
        reports.append(report)
        rows.append({"static:motion": r.static_motion_label,
                     "motion:static": r.motion_static_label,
                     "w_motion": rho_from_ratio(r).w_motion,
                     "accuracy": report.accuracy, "mAP": report.mAP})
    best = max(range(len(rows)), key=lambda i: rows[i]["accuracy"])
    for i, row in enumerate(rows):
        row["best"] = i == best
    return rows, reports


def compare_temporal(config, data=None, split=None):
    """LSTM vs random forest on identical fused features and split.

    The forest sees each video as the mean of its fused segment vectors.
    """
    data = data or prepare(config)
    train_idx, test_idx = _split(data, config, split)
    series, fusion_info = fused_dataset(data, config, train_idx)
    lstm_report, _ = run_train_eval(config, (train_idx, test_idx), data)
    pooled = np.array([s.mean(axis=0) for s in series])
    forest = train_forest(pooled[train_idx], data.labels[train_idx], config.forest_trees,
                          config.forest_max_depth, config.seed,
                          num_classes=len(data.class_names), class_names=data.class_names)
    forest_report = EvalReport.from_predictions(
        "random_forest", data.class_names, data.labels[test_idx],
        forest.predict_proba(pooled[test_idx]), len(train_idx), fusion=fusion_info,
        config=config.to_dict(), hashes=dict(data.hashes),
        notes={"oob_accuracy": forest.oob_accuracy, "pooling": "mean"})
    return {"lstm": lstm_report, "forest": forest_report,
            "margin": lstm_report.accuracy - forest_report.accuracy}


def write_report(report, directory, name):
    directory = Path(directory)
    atomic_write_text(directory / f"{name}.json", report.to_json())
    atomic_write_text(directory / f"{name}.csv", report.to_csv())


def write_sweep(rows, directory, name="sweep"):
    import csv
    import io

    directory = Path(directory)
    atomic_write_text(directory / f"{name}.json", json.dumps(rows, indent=2) + "\n")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    atomic_write_text(directory / f"{name}.csv", buf.getvalue())


def save_model(model, config, split):
    out = Path(config.output_dir) / "model"
    model.save(out / "lstm")
    write_json(out / "split.json", {"train": list(map(int, split[0])),
                                    "test": list(map(int, split[1]))})
    return out


def load_split(config):
    d = read_json(Path(config.output_dir) / "model" / "split.json")
    return d["train"], d["test"]


def load_model(config):
    return LstmModel.load(Path(config.output_dir) / "model" / "lstm")


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
