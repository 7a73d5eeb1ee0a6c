"""Synthetic action videos built from motion grammars.

A class is a sequence of sub-events such as ``"right,up"``; each video
plays the events in order over its frames, with the event boundaries
jittered per video.  Two object modes are available:

``square``
    a textured square translating over the background (bouncing at the
    frame edges);
``scroll``
    a textured patch fixed in place whose texture scrolls, so motion is
    visible to optical flow but the frame layout stays put.

Everything is drawn from a per-video random stream, so a dataset is a pure
function of its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..core import make_rng
from ..formats import write_frames, write_json

DIRECTIONS = {
    "right": (1, 0), "left": (-1, 0), "up": (0, -1), "down": (0, 1),
    "upright": (1, -1), "upleft": (-1, -1), "downright": (1, 1), "downleft": (-1, 1),
    "still": (0, 0),
}


@dataclass
class ClassSpec:
    name: str
    grammar: str  # comma-separated sub-event tokens
    mode: str = "square"
    background: tuple = (90, 170)  # range the background level is drawn from
    object_size: int = 20
    speed: int = 2

    @property
    def events(self):
        tokens = [t.strip() for t in self.grammar.split(",") if t.strip()]
        for t in tokens:
            if t not in DIRECTIONS:
                raise ValueError(f"unknown motion token {t!r}; choose from {sorted(DIRECTIONS)}")
        return tokens


@dataclass
class SynthSpec:
    classes: list
    videos_per_class: int = 40
    n_frames: int = 60
    size: int = 64
    boundary_jitter: int = 3
    seed: int = 0
    extra: dict = field(default_factory=dict)


def _texture(rng, shape, sigma=1.5, wrap=False):
    t = ndimage.gaussian_filter(rng.random(shape), sigma, mode="wrap" if wrap else "reflect")
    t = (t - t.mean()) / (t.std() + 1e-12)
    return t


def _event_schedule(n_events, n_steps, jitter, rng):
    """Event index for each of ``n_steps`` frame-to-frame steps."""
    bounds = np.linspace(0, n_steps, n_events + 1)
    inner = bounds[1:-1] + rng.integers(-jitter, jitter + 1, size=n_events - 1)
    bounds = np.concatenate([[0], np.round(inner), [n_steps]]).astype(int)
    return np.searchsorted(bounds[1:], np.arange(n_steps), side="right")


def render_video(spec, cls, rng):
    """(T, H, W) uint8 frames for one video of class ``cls``."""
    size, t_frames = spec.size, spec.n_frames
    lo, hi = cls.background
    bg_level = rng.uniform(lo, hi)
    background = bg_level + 6.0 * _texture(rng, (size, size), sigma=2.0)
    schedule = _event_schedule(len(cls.events), t_frames - 1, spec.boundary_jitter, rng)
    steps = [DIRECTIONS[cls.events[e]] for e in schedule]
    side = cls.object_size
    contrast = 45.0
    frames = np.empty((t_frames, size, size))

    if cls.mode == "square":
        tex = 128.0 + contrast * _texture(rng, (side, side))
        x, y = rng.integers(0, size - side + 1, size=2).astype(int)
        sign = np.array([1, 1]) * rng.choice([-1, 1], size=2)
        for t in range(t_frames):
            if t > 0:
                d = np.array(steps[t - 1]) * sign * cls.speed
                nx, ny = x + d[0], y + d[1]
                if not 0 <= nx <= size - side:
                    sign[0] = -sign[0]
                    nx = x - d[0]
                if not 0 <= ny <= size - side:
                    sign[1] = -sign[1]
                    ny = y - d[1]
                x, y = int(nx), int(ny)
            f = background.copy()
            f[y:y + side, x:x + side] = tex
            frames[t] = f
    elif cls.mode == "scroll":
        tile = 48
        tex = 128.0 + contrast * _texture(rng, (tile, tile), wrap=True)
        x, y = rng.integers(4, size - side - 3, size=2).astype(int)
        offset = np.zeros(2, dtype=int)
        for t in range(t_frames):
            if t > 0:
                offset += np.array(steps[t - 1]) * cls.speed
            shifted = np.roll(tex, shift=(offset[1], offset[0]), axis=(0, 1))
            f = background.copy()
            f[y:y + side, x:x + side] = shifted[:side, :side]
            frames[t] = f
    else:
        raise ValueError(f"unknown object mode {cls.mode!r}")
    return np.clip(np.rint(frames), 0, 255).astype(np.uint8)


def generate_dataset(spec, root):
    """Write ``<root>/<class>/<video>/frame_*.png`` for every class and video."""
    root = Path(root)
    written = []
    for ci, cls in enumerate(spec.classes):
        for vi in range(spec.videos_per_class):
            rng = make_rng(spec.seed, ci, vi)
            frames = render_video(spec, cls, rng)
            vdir = root / cls.name / f"video_{vi:03d}"
            write_frames(vdir, frames)
            written.append(vdir)
    write_json(root / "synth.json", {
        "seed": spec.seed, "videos_per_class": spec.videos_per_class,
        "n_frames": spec.n_frames, "size": spec.size,
        "classes": [{"name": c.name, "grammar": c.grammar, "mode": c.mode,
                     "background": list(c.background), "object_size": c.object_size,
                     "speed": c.speed} for c in spec.classes]})
    return written


def preset(name, videos_per_class=None, seed=0):
    """Named synthetic datasets.

    ``motion``  two classes of moving squares, horizontal vs vertical motion.
    ``mixed``   four classes: background brightness x scroll direction, so
                both static and motion cues are needed.
    ``order``   two classes playing the same sub-events in opposite order.
    """
    if name == "motion":
        classes = [ClassSpec("horizontal", "right"), ClassSpec("vertical", "down")]
        n = 40
    elif name == "mixed":
        dark, bright = (40, 80), (170, 210)
        classes = [ClassSpec("dark_horizontal", "right", "scroll", dark, 24),
                   ClassSpec("dark_vertical", "down", "scroll", dark, 24),
                   ClassSpec("bright_horizontal", "right", "scroll", bright, 24),
                   ClassSpec("bright_vertical", "down", "scroll", bright, 24)]
        n = 20
    elif name == "order":
        classes = [ClassSpec("right_then_down", "right,down", "scroll", (90, 170), 24),
                   ClassSpec("down_then_right", "down,right", "scroll", (90, 170), 24)]
        n = 40
    else:
        raise ValueError(f"unknown preset {name!r}; choose motion, mixed or order")
    return SynthSpec(classes, videos_per_class or n, seed=seed)


def spec_from_grammars(grammars, mode="square", videos_per_class=20, n_frames=60, seed=0):
    """Spec from ``{"class_name": "tok,tok,..."}``."""
    classes = [ClassSpec(name, g, mode) for name, g in grammars.items()]
    return SynthSpec(classes, videos_per_class, n_frames, seed=seed)
