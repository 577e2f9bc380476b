"""Inception score over class-probability matrices, with a small surrogate classifier.

The surrogate replaces a pretrained Inception network: scores are comparable
only between runs scored by the same surrogate, identified by its hash.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ops import ConvParams, LinearParams, conv2d, leaky_relu, linear
from .tensor import Tape, Tensor, backward, log_softmax, mean, no_grad
from .train import AdamMoments, adam_update

SCORE_HEADER = ("arch_name", "step", "score_mean", "score_std", "n_samples", "splits", "surrogate_hash")


def as_prob_matrix(p, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if (
        p.ndim != 2
        or p.shape[0] < 1
        or not np.all(np.isfinite(p))
        or np.any(p < 0)
        or np.any(p > 1)
        or np.any(np.abs(p.sum(axis=1) - 1.0) > atol)
    ):
        raise ValueError("not a probability matrix")
    return p


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise p*ln(p/q) with the 0*ln(0/q) = 0 convention."""
    out = np.zeros(np.broadcast(p, q).shape)
    mask = np.broadcast_to(p > 0, out.shape)
    pb = np.broadcast_to(p, out.shape)
    qb = np.broadcast_to(q, out.shape)
    out[mask] = pb[mask] * (np.log(pb[mask]) - np.log(qb[mask]))
    return out


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal length")
    if np.any((p > 0) & (q <= 0)):
        raise ValueError("absolute continuity violated")
    return float(_xlogy_ratio(p, q).sum())


def split_scores(p, splits: int) -> np.ndarray:
    """Per-split ``exp(mean_x KL(p(y|x) || p(y)))``, splits taken as contiguous row blocks."""
    p = as_prob_matrix(p)
    n = p.shape[0]
    if not 1 <= splits <= n:
        raise ValueError(f"need 1 <= splits <= rows, got splits={splits}, rows={n}")
    scores = []
    for i in range(splits):
        part = p[i * n // splits:(i + 1) * n // splits]
        # a constant column's mean is that constant; avoid rounding it away
        constant = np.all(part == part[:1], axis=0)
        marginal = np.where(constant, part[0], part.mean(axis=0))[None, :]
        kl = _xlogy_ratio(part, marginal).sum(axis=1)
        scores.append(np.exp(kl.mean()))
    return np.array(scores)


def inception_score(p, splits: int = 10) -> tuple[float, float]:
    """Mean and population standard deviation of the per-split scores."""
    s = split_scores(p, splits)
    return float(s.mean()), float(s.std())


@dataclass
class SurrogateClassifier:
    """Three strided convolutions and a linear softmax head.

    ``heldout_accuracy`` is filled in by :func:`train_surrogate`.
    """

    convs: list[ConvParams]
    head: LinearParams
    image_shape: tuple[int, int, int]
    num_classes: int
    tag: str = "surrogate-cnn-v1"
    heldout_accuracy: float = field(default=float("nan"))

    @classmethod
    def init(cls, image_shape=(3, 32, 32), num_classes: int = 10, rng=None, widths=(16, 32, 64)):
        rng = np.random.default_rng(0) if rng is None else rng
        c, h, w = image_shape
        if h % 8 or w % 8:
            raise ValueError("surrogate needs image sides divisible by 8")
        convs, in_c = [], c
        for out_c in widths:
            convs.append(ConvParams.init(in_c, out_c, 4, 2, 1, rng, bias=True, std=np.sqrt(2.0 / (in_c * 16))))
            in_c = out_c
        head = LinearParams.init(in_c * (h // 8) * (w // 8), num_classes, rng)
        return cls(convs, head, tuple(image_shape), num_classes)

    def parameters(self) -> list[Tensor]:
        return [p for conv in self.convs for p in conv.parameters()] + self.head.parameters()

    def logits(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = leaky_relu(conv2d(x, conv))
        return linear(x.reshape(x.shape[0], -1), self.head)

    def predict_proba(self, images, batch_size: int = 256) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if tuple(images.shape[1:]) != self.image_shape:
            raise ValueError(f"geometry mismatch: images {images.shape[1:]} vs classifier {self.image_shape}")
        out = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                out.append(np.exp(log_softmax(self.logits(Tensor(images[start:start + batch_size]))).data))
        probs = np.concatenate(out)
        return probs / probs.sum(axis=1, keepdims=True)

    def accuracy(self, images, labels) -> float:
        return float(np.mean(self.predict_proba(images).argmax(axis=1) == np.asarray(labels)))

    @property
    def hash(self) -> str:
        h = hashlib.sha256(self.tag.encode())
        h.update(np.array(self.image_shape + (self.num_classes,)).tobytes())
        for p in self.parameters():
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        arrays = {f"param{i}": np.array(p.data) for i, p in enumerate(self.parameters())}
        arrays.update(
            tag=np.array(self.tag),
            image_shape=np.array(self.image_shape),
            num_classes=np.array(self.num_classes),
            widths=np.array([c.out_channels for c in self.convs]),
            heldout_accuracy=np.array(self.heldout_accuracy),
        )
        path = Path(path)
        tmp = path.with_name(f".{path.name}.tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "SurrogateClassifier":
        with np.load(path, allow_pickle=False) as f:
            clf = cls.init(tuple(int(v) for v in f["image_shape"]), int(f["num_classes"]),
                           widths=tuple(int(v) for v in f["widths"]))
            clf.tag = str(f["tag"])
            clf.heldout_accuracy = float(f["heldout_accuracy"])
            for i, p in enumerate(clf.parameters()):
                p.assign(f[f"param{i}"])
        return clf


def train_surrogate(images, labels, epochs: int, seed: int = 0, num_classes: int = 10,
                    heldout_fraction: float = 1 / 6, batch_size: int = 64, lr: float = 1e-3) -> SurrogateClassifier:
    """Fit the surrogate with Adam on cross-entropy; the last ``heldout_fraction`` of rows is held out."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("empty dataset")
    n_hold = int(round(len(images) * heldout_fraction))
    if n_hold >= len(images):
        raise ValueError("held-out split leaves no training data")
    x_train, y_train = images[: len(images) - n_hold], labels[: len(images) - n_hold]
    rng = np.random.default_rng(seed)
    clf = SurrogateClassifier.init(images.shape[1:], num_classes, rng)
    params = clf.parameters()
    moments = AdamMoments.zeros_like([p.data for p in params])

    for _ in range(epochs):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            onehot = np.eye(num_classes)[y_train[idx]]
            with Tape() as tape:
                logp = log_softmax(clf.logits(Tensor(x_train[idx])))
                loss = -mean((logp * onehot).sum(axis=1))
            grads = backward(loss, tape)
            new, moments = adam_update([p.data for p in params], [grads[p].data for p in params],
                                       moments, lr, 0.9, 0.999)
            for p, value in zip(params, new):
                p.assign(value)
                p.zero_grad()

    if n_hold:
        clf.heldout_accuracy = clf.accuracy(images[-n_hold:], labels[-n_hold:])
    return clf


def generate_samples(gen, n_samples: int, seed: int, batch_size: int = 100) -> np.ndarray:
    """Draw ``n_samples`` images from ``gen`` (eval mode) using noise seeded by ``seed``."""
    noise_dim = gen.layers[0].in_channels
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, noise_dim, 1, 1))
    if hasattr(gen, "eval"):
        gen.eval()
    out = []
    with no_grad():
        for start in range(0, n_samples, batch_size):
            out.append(gen(Tensor(z[start:start + batch_size])).data)
    return np.concatenate(out)


def score_generator(gen, clf: SurrogateClassifier, n_samples: int = 1000, splits: int = 10,
                    seed: int = 0) -> tuple[float, float]:
    images = generate_samples(gen, n_samples, seed)
    if tuple(images.shape[1:]) != clf.image_shape:
        raise ValueError(f"geometry mismatch: generator emits {images.shape[1:]}, classifier expects {clf.image_shape}")
    return inception_score(clf.predict_proba(images), splits)


def append_score_report(path, arch_name: str, step: int, score: tuple[float, float], n_samples: int,
                        splits: int, surrogate_hash: str) -> None:
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(SCORE_HEADER)
        writer.writerow([arch_name, step, repr(score[0]), repr(score[1]), n_samples, splits, surrogate_hash])
