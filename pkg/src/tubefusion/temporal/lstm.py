"""Single-layer peephole LSTM with a softmax head, trained by BPTT.

Gate equations (sigma is the logistic function, * is elementwise)::

    i_t = sigma(x_t W_xi + h_{t-1} W_hi + w_ci * c_{t-1} + b_i)
    f_t = sigma(x_t W_xf + h_{t-1} W_hf + w_cf * c_{t-1} + b_f)
    c_t = f_t * c_{t-1} + i_t * tanh(x_t W_xc + h_{t-1} W_hc + b_c)
    o_t = sigma(x_t W_xo + h_{t-1} W_ho + w_co * c_{t-1} + b_o)
    h_t = o_t * tanh(c_t)

Sequences are read many-to-one: only the last hidden state feeds the
output layer.  Gate blocks are stored stacked in i, f, c, o order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..errors import Diverged, ShapeError
from ..formats import atomic_write_text, read_vten, write_vten

PARAM_NAMES = ("Wx", "Wh", "b", "peep", "Wout", "bout")
GATES = ("i", "f", "c", "o")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class SequenceSample:
    vectors: np.ndarray  # (n, D)
    label: int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[None, :]
        if self.vectors.ndim != 2 or len(self.vectors) < 1:
            raise ShapeError("a sequence needs at least one vector")


class LstmModel:
    """Parameters of the LSTM layer and its softmax output layer.

    ``Wx`` is (D, 4H), ``Wh`` (H, 4H), ``b`` (4H,), ``peep`` (3H,) holding the
    diagonal peephole weights for the i, f and o gates, ``Wout`` (H, K) and
    ``bout`` (K,).
    """

    def __init__(self, params, dropout_prob=0.8, class_names=None, seed=None,
                 input_shift=None, input_scale=None):
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_NAMES}
        d, four_h = self.params["Wx"].shape
        h = four_h // 4
        k = self.params["Wout"].shape[1]
        expected = {"Wx": (d, 4 * h), "Wh": (h, 4 * h), "b": (4 * h,), "peep": (3 * h,),
                    "Wout": (h, k), "bout": (k,)}
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.params[name].shape}, expected {shape}")
        self.dropout_prob = float(dropout_prob)
        self.class_names = list(class_names) if class_names is not None else None
        self.seed = seed
        self.input_shift = np.zeros(d) if input_shift is None else np.asarray(input_shift, float)
        self.input_scale = np.ones(d) if input_scale is None else np.asarray(input_scale, float)

    @classmethod
    def init(cls, input_dim, hidden=128, num_classes=2, rng=None, dropout_prob=0.8,
             forget_bias=1.0, **kwargs):
        """Uniform init in +-1/sqrt(fan_in); zero biases except the forget gate."""
        rng = rng if rng is not None else np.random.default_rng(0)

        def uniform(fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = forget_bias
        params = {
            "Wx": uniform(input_dim, (input_dim, 4 * hidden)),
            "Wh": uniform(hidden, (hidden, 4 * hidden)),
            "b": b,
            "peep": uniform(hidden, (3 * hidden,)),
            "Wout": uniform(hidden, (hidden, num_classes)),
            "bout": np.zeros(num_classes),
        }
        return cls(params, dropout_prob, **kwargs)

    @property
    def input_dim(self):
        return self.params["Wx"].shape[0]

    @property
    def hidden(self):
        return self.params["Wh"].shape[0]

    @property
    def num_classes(self):
        return self.params["Wout"].shape[1]

    def gate_weights(self, gate):
        """(W_x, W_h, peephole or None, bias) for gate 'i', 'f', 'c' or 'o'."""
        g = GATES.index(gate)
        h = self.hidden
        cols = slice(g * h, (g + 1) * h)
        peep = None
        if gate != "c":
            p = {"i": 0, "f": 1, "o": 2}[gate]
            peep = self.params["peep"][p * h:(p + 1) * h]
        return self.params["Wx"][:, cols], self.params["Wh"][:, cols], peep, self.params["b"][cols]

    def copy(self):
        return LstmModel({k: v.copy() for k, v in self.params.items()}, self.dropout_prob,
                         self.class_names, self.seed, self.input_shift.copy(),
                         self.input_scale.copy())

    def prepare(self, vectors):
        return (np.asarray(vectors, dtype=np.float64) - self.input_shift) / self.input_scale

    def predict_proba(self, samples):
        """Class probabilities for each sample (inference mode, no dropout)."""
        out = []
        for s in samples:
            vec = s.vectors if isinstance(s, SequenceSample) else s
            x, mask = pad_batch([self.prepare(vec)])
            probs, _ = forward_batch(self, x, mask, train_mode=False)
            out.append(probs[0])
        return np.array(out)

    def predict(self, samples):
        return self.predict_proba(samples).argmax(axis=1)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in PARAM_NAMES:
            write_vten(directory / f"{name}.vten", self.params[name], dtype=np.float64)
        write_vten(directory / "input_shift.vten", self.input_shift, dtype=np.float64)
        write_vten(directory / "input_scale.vten", self.input_scale, dtype=np.float64)
        manifest = {"input_dim": self.input_dim, "hidden": self.hidden,
                    "num_classes": self.num_classes, "dropout_prob": self.dropout_prob,
                    "seed": self.seed, "class_names": self.class_names,
                    "tensors": [f"{n}.vten" for n in PARAM_NAMES]}
        atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        params = {n: read_vten(directory / f"{n}.vten") for n in PARAM_NAMES}
        return cls(params, manifest["dropout_prob"], manifest.get("class_names"),
                   manifest.get("seed"), read_vten(directory / "input_shift.vten"),
                   read_vten(directory / "input_scale.vten"))


def pad_batch(sequences):
    """Stack variable-length (n_b, D) sequences into (B, T, D) plus a (B, T) step mask."""
    lengths = [len(s) for s in sequences]
    t_max = max(lengths)
    d = sequences[0].shape[1]
    x = np.zeros((len(sequences), t_max, d))
    mask = np.zeros((len(sequences), t_max))
    for b, s in enumerate(sequences):
        x[b, :len(s)] = s
        mask[b, :len(s)] = 1.0
    return x, mask


def forward_batch(model, x, mask, train_mode=False, rng=None):
    """Run the LSTM over a padded batch; returns ``(probs, cache)``.

    Padded steps leave the state untouched, so each row's result is its own
    final-step output.
    """
    p = model.params
    if x.shape[2] != model.input_dim:
        raise ShapeError(f"input vectors have {x.shape[2]} components, "
                         f"model expects {model.input_dim}")
    n, t_max, _ = x.shape
    h_dim = model.hidden
    pi, pf, po = p["peep"][:h_dim], p["peep"][h_dim:2 * h_dim], p["peep"][2 * h_dim:]
    h = np.zeros((n, h_dim))
    c = np.zeros((n, h_dim))
    steps = []
    for t in range(t_max):
        xt = x[:, t]
        m = mask[:, t, None]
        a = xt @ p["Wx"] + h @ p["Wh"] + p["b"]
        i = sigmoid(a[:, :h_dim] + pi * c)
        f = sigmoid(a[:, h_dim:2 * h_dim] + pf * c)
        g = np.tanh(a[:, 2 * h_dim:3 * h_dim])
        o = sigmoid(a[:, 3 * h_dim:] + po * c)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((xt, h, c, i, f, g, o, tc, m))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
    drop = np.ones_like(h)
    if train_mode and model.dropout_prob > 0:
        if rng is None:
            raise ValueError("train_mode needs an rng for the dropout mask")
        keep = 1.0 - model.dropout_prob
        drop = (rng.random(h.shape) < keep) / keep
    hd = h * drop
    probs = softmax(hd @ p["Wout"] + p["bout"])
    return probs, {"steps": steps, "h_last": h, "drop": drop, "hd": hd, "probs": probs}


def backward_batch(model, probs, cache, labels):
    """Gradients of the summed cross-entropy over the batch."""
    p = model.params
    h_dim = model.hidden
    pi, pf, po = p["peep"][:h_dim], p["peep"][h_dim:2 * h_dim], p["peep"][2 * h_dim:]
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dlogits = probs.copy()
    dlogits[np.arange(len(labels)), labels] -= 1.0
    grads["Wout"] = cache["hd"].T @ dlogits
    grads["bout"] = dlogits.sum(axis=0)
    dh = (dlogits @ p["Wout"].T) * cache["drop"]
    dc = np.zeros_like(dh)
    dpeep = np.zeros((3, h_dim))
    for xt, h_prev, c_prev, i, f, g, o, tc, m in reversed(cache["steps"]):
        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
        dao = dh_new * tc * o * (1.0 - o)
        dai = dc_new * g * i * (1.0 - i)
        daf = dc_new * c_prev * f * (1.0 - f)
        dag = dc_new * i * (1.0 - g * g)
        da = np.concatenate([dai, daf, dag, dao], axis=1)
        grads["Wx"] += xt.T @ da
        grads["Wh"] += h_prev.T @ da
        grads["b"] += da.sum(axis=0)
        dpeep[0] += (dai * c_prev).sum(axis=0)
        dpeep[1] += (daf * c_prev).sum(axis=0)
        dpeep[2] += (dao * c_prev).sum(axis=0)
        dh = (1.0 - m) * dh + da @ p["Wh"].T
        dc = (1.0 - m) * dc + dc_new * f + pi * dai + pf * daf + po * dao
    grads["peep"] = dpeep.ravel()
    return grads


def cross_entropy(probs, labels):
    return -np.log(np.maximum(probs[np.arange(len(labels)), labels], 1e-300))


def lstm_forward(model, sample, train_mode=False, rng=None):
    """Class probabilities for one sequence plus the cache for ``lstm_backward``."""
    vectors = sample.vectors if isinstance(sample, SequenceSample) else np.asarray(sample)
    x, mask = pad_batch([model.prepare(vectors)])
    probs, cache = forward_batch(model, x, mask, train_mode, rng)
    return probs[0], cache


def lstm_backward(model, sample, cache):
    """Exact gradients of -log p(label) for the sample that produced ``cache``."""
    return backward_batch(model, cache["probs"], cache, np.array([sample.label]))


def global_norm(grads):
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


@dataclass
class LstmConfig:
    epochs: int = 60
    lr: float = 0.1
    batch: int = 8
    clip: float = 5.0
    seed: int = 0
    hidden: int = 128
    dropout: float = 0.8
    standardize: bool = True


@dataclass
class TrainResult:
    model: LstmModel
    loss_curve: list = field(default_factory=list)
    config: dict = field(default_factory=dict)


def train_lstm(dataset, config=None, class_names=None):
    """Mini-batch gradient descent with global-norm clipping.

    Returns a ``TrainResult`` holding the model and per-epoch mean loss.
    """
    config = config or LstmConfig()
    if not dataset:
        raise ValueError("empty training set")
    labels = np.array([s.label for s in dataset])
    num_classes = int(labels.max()) + 1 if class_names is None else len(class_names)
    if len(np.unique(labels)) < 2:
        raise ValueError("need at least 2 classes to train")
    rng = np.random.default_rng(config.seed)
    d = dataset[0].vectors.shape[1]
    model = LstmModel.init(d, config.hidden, num_classes, rng, config.dropout,
                           class_names=class_names, seed=config.seed)
    if config.standardize:
        stacked = np.concatenate([s.vectors for s in dataset])
        model.input_shift = stacked.mean(axis=0)
        scale = stacked.std(axis=0)
        model.input_scale = np.where(scale > 1e-12, scale, 1.0)
    prepared = [model.prepare(s.vectors) for s in dataset]
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for s in range(0, len(order), config.batch):
            idx = order[s:s + config.batch]
            x, mask = pad_batch([prepared[i] for i in idx])
            probs, cache = forward_batch(model, x, mask, train_mode=True, rng=rng)
            loss = cross_entropy(probs, labels[idx])
            total += float(loss.sum())
            grads = backward_batch(model, probs, cache, labels[idx])
            scale = 1.0 / len(idx)
            norm = global_norm(grads) * scale
            if config.clip and norm > config.clip:
                scale *= config.clip / norm
            for k in PARAM_NAMES:
                model.params[k] -= config.lr * scale * grads[k]
        mean_loss = total / len(dataset)
        if not np.isfinite(mean_loss):
            raise Diverged(epoch)
        curve.append(mean_loss)
    return TrainResult(model, curve, asdict(config))
