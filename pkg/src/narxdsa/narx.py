"""NARX predictor: tapped-delay regressors, one tanh hidden layer, LM training.

The regressor used to predict ``y[n]`` is

    [u1[n], ..., u1[n-d_u1], u2[n], ..., u2[n-d_u2], y[n-1], ..., y[n-d_y]]

so the current exogenous inputs are included and the output taps start one
step back. Everything inside the network runs in normalized units.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MODEL_FORMAT = "narxdsa-narx 1"
SIGNALS = ("u1", "u2", "y")


@dataclass(frozen=True)
class NarxConfig:
    hidden_nodes: int = 50
    d_u1: int = 7
    d_u2: int = 7
    d_y: int = 7
    lm_lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_epochs: int = 200
    early_stop_patience: int = 6
    max_rejections: int = 20

    def __post_init__(self):
        if self.hidden_nodes < 1:
            raise ValueError("hidden_nodes must be >= 1")
        if min(self.d_u1, self.d_u2, self.d_y) < 0:
            raise ValueError("delay orders must be non-negative")
        if self.d_u1 < self.d_y or self.d_u2 < self.d_y:
            raise ValueError("input memory orders must be >= the output memory order")

    @property
    def regressor_length(self) -> int:
        return (self.d_u1 + 1) + (self.d_u2 + 1) + self.d_y

    @property
    def warmup(self) -> int:
        return max(self.d_u1, self.d_u2, self.d_y)


@dataclass(frozen=True)
class Affine:
    """``normalized = (raw - shift) / scale``."""

    shift: float = 0.0
    scale: float = 1.0

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.shift


def fit_affine(values) -> Affine:
    """Map the observed [min, max] onto [-1, 1]; a constant signal keeps unit scale."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return Affine(shift=lo, scale=1.0)
    return Affine(shift=0.5 * (lo + hi), scale=0.5 * (hi - lo))


@dataclass
class NarxModel:
    config: NarxConfig
    input_weights: np.ndarray     # hidden x regressor
    input_biases: np.ndarray      # hidden
    output_weights: np.ndarray    # hidden
    output_bias: float
    normalization: dict = field(default_factory=lambda: {s: Affine() for s in SIGNALS})

    @property
    def n_params(self) -> int:
        h, r = self.input_weights.shape
        return h * r + 2 * h + 1

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.input_weights.ravel(), self.input_biases,
                               self.output_weights, [self.output_bias]])

    def with_params(self, theta) -> "NarxModel":
        h, r = self.input_weights.shape
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError("parameter vector has the wrong length")
        return replace(
            self,
            input_weights=theta[:h * r].reshape(h, r).copy(),
            input_biases=theta[h * r:h * r + h].copy(),
            output_weights=theta[h * r + h:h * r + 2 * h].copy(),
            output_bias=float(theta[-1]),
        )


def init_model(cfg: NarxConfig, seed) -> NarxModel:
    rng = np.random.default_rng(seed)
    h, r = cfg.hidden_nodes, cfg.regressor_length
    in_bound = 0.5 / np.sqrt(max(r, 1))
    out_bound = 0.5 / np.sqrt(h)
    return NarxModel(
        config=cfg,
        input_weights=rng.uniform(-in_bound, in_bound, size=(h, r)),
        input_biases=rng.uniform(-in_bound, in_bound, size=h),
        output_weights=rng.uniform(-out_bound, out_bound, size=h),
        output_bias=float(rng.uniform(-out_bound, out_bound)),
    )


def _hidden(model: NarxModel, x):
    return np.tanh(x @ model.input_weights.T + model.input_biases)


def forward(model: NarxModel, regressor):
    """Network output in normalized units for one regressor or a batch of them."""
    x = np.asarray(regressor, dtype=float)
    if x.shape[-1] != model.input_weights.shape[1]:
        raise ValueError(f"regressor length {x.shape[-1]} != {model.input_weights.shape[1]}")
    return _hidden(model, x) @ model.output_weights + model.output_bias


def build_regressors(cfg: NarxConfig, u1, u2, y):
    """Series-parallel regressors and targets for every index past the warmup."""
    u1, u2, y = (np.asarray(s, dtype=float) for s in (u1, u2, y))
    n = len(y)
    if not len(u1) == len(u2) == n:
        raise ValueError("series must be aligned")
    w = cfg.warmup
    if n <= w:
        raise ValueError(f"series of length {n} is too short for warmup {w}")
    idx = np.arange(w, n)
    cols = [u1[idx - k] for k in range(cfg.d_u1 + 1)]
    cols += [u2[idx - k] for k in range(cfg.d_u2 + 1)]
    cols += [y[idx - k] for k in range(1, cfg.d_y + 1)]
    return np.column_stack(cols) if cols else np.empty((len(idx), 0)), y[idx]


def normalize(model: NarxModel, u1, u2, y=None):
    norm = model.normalization
    out = [norm["u1"].apply(u1), norm["u2"].apply(u2)]
    if y is not None:
        out.append(norm["y"].apply(y))
    return out


def open_loop_predict(model: NarxModel, u1, u2, y):
    """One-step-ahead predictions (raw units) using the measured output history."""
    nu1, nu2, ny = normalize(model, u1, u2, y)
    x, _ = build_regressors(model.config, nu1, nu2, ny)
    return model.normalization["y"].invert(forward(model, x))


def closed_loop_predict(model: NarxModel, y_seed, u1, u2):
    """Recursive multi-step prediction feeding outputs back into the delay line.

    ``u1``/``u2`` cover the seed history followed by the horizon, so the
    horizon length is ``len(u1) - len(y_seed)``.
    """
    cfg = model.config
    y_seed = np.asarray(y_seed, dtype=float)
    w = len(y_seed)
    if w < cfg.warmup:
        raise ValueError(f"seed history of {w} steps cannot fill delay lines of {cfg.warmup}")
    if len(u1) != len(u2) or len(u1) < w:
        raise ValueError("input series must cover the seed history")
    nu1, nu2 = normalize(model, u1, u2)
    ny = np.concatenate([model.normalization["y"].apply(y_seed), np.zeros(len(u1) - w)])
    for n in range(w, len(u1)):
        reg = np.concatenate([nu1[n - np.arange(cfg.d_u1 + 1)],
                              nu2[n - np.arange(cfg.d_u2 + 1)],
                              ny[n - np.arange(1, cfg.d_y + 1)]])
        ny[n] = forward(model, reg)
    return model.normalization["y"].invert(ny[w:])


def jacobian(model: NarxModel, x, t):
    """Jacobian of the errors ``e = t - y_hat`` w.r.t. the flat parameter vector.

    Series-parallel: the output taps in ``x`` are treated as given data.
    Returns ``(J, e)`` with ``J`` of shape (samples, params).
    """
    x = np.asarray(x, dtype=float)
    z = _hidden(model, x)
    e = np.asarray(t, dtype=float) - (z @ model.output_weights + model.output_bias)
    dz = (1.0 - z * z) * model.output_weights          # d y_hat / d pre-activation
    n, r = x.shape
    j_win = (dz[:, :, None] * x[:, None, :]).reshape(n, -1)
    jac = np.hstack([j_win, dz, z, np.ones((n, 1))])
    return -jac, e


# -- data ------------------------------------------------------------------

@dataclass
class Sequence:
    u1: np.ndarray
    u2: np.ndarray
    y: np.ndarray
    load: float = float("nan")

    def __len__(self):
        return len(self.y)


@dataclass
class TrainingSet:
    """Sequences plus a per-sequence split label.

    ``pad`` leading steps are synthesized in front of every sequence before
    regressors are built: inputs held at their first value, the output held
    at the normalized midpoint. A positive pad lets every recorded step be a
    training target.
    """

    sequences: list
    split: np.ndarray
    pad: int = 0
    fractions: tuple = (0.7, 0.15, 0.15)

    @property
    def n_samples(self) -> int:
        return sum(len(s) for s in self.sequences)

    def subset(self, label: str) -> list:
        return [s for s, lab in zip(self.sequences, self.split) if lab == label]


def split_sequences(n: int, seed, fractions=(0.7, 0.15, 0.15)) -> np.ndarray:
    """Seeded whole-sequence assignment to train/val/test."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    labels = np.empty(n, dtype=object)
    labels[order[:n_train]] = "train"
    labels[order[n_train:n_train + n_val]] = "val"
    labels[order[n_train + n_val:]] = "test"
    return labels


def fit_normalization(sequences) -> dict:
    return {
        "u1": fit_affine(np.concatenate([s.u1 for s in sequences])),
        "u2": fit_affine(np.concatenate([s.u2 for s in sequences])),
        "y": fit_affine(np.concatenate([s.y for s in sequences])),
    }


def padded(model: NarxModel, seq: Sequence, pad: int):
    """Normalized (u1, u2, y) with ``pad`` synthesized history steps prepended."""
    nu1, nu2, ny = normalize(model, seq.u1, seq.u2, seq.y)
    if pad:
        nu1 = np.concatenate([np.full(pad, nu1[0]), nu1])
        nu2 = np.concatenate([np.full(pad, nu2[0]), nu2])
        ny = np.concatenate([np.zeros(pad), ny])
    return nu1, nu2, ny


def assemble(model: NarxModel, sequences, pad: int = 0):
    xs, ts = [], []
    for seq in sequences:
        x, t = build_regressors(model.config, *padded(model, seq, pad))
        if pad:
            # only recorded steps are targets
            keep = np.arange(model.config.warmup, len(seq) + pad) >= pad
            x, t = x[keep], t[keep]
        xs.append(x)
        ts.append(t)
    if not xs:
        return np.empty((0, model.config.regressor_length)), np.empty(0)
    return np.vstack(xs), np.concatenate(ts)


def predict_sequence(model: NarxModel, seq_u1, seq_u2, pad: int):
    """Closed-loop predictions for every recorded step of a padded sequence."""
    if pad < model.config.warmup:
        raise ValueError(f"pad of {pad} steps cannot fill delay lines of {model.config.warmup}")
    u1 = np.concatenate([np.full(pad, seq_u1[0]), seq_u1])
    u2 = np.concatenate([np.full(pad, seq_u2[0]), seq_u2])
    seed = np.full(pad, model.normalization["y"].shift)
    return closed_loop_predict(model, seed, u1, u2)


# -- training --------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_mse: float
    val_mse: float
    lam: float
    accepted: bool


@dataclass
class TrainResult:
    model: NarxModel
    history: list
    best_epoch: int
    best_val_mse: float
    stop_reason: str


def _mse(model, x, t):
    if len(t) == 0:
        return float("nan")
    e = t - forward(model, x)
    return float(np.mean(e * e))


def train_lm(model: NarxModel, data: TrainingSet, cfg: NarxConfig | None = None,
             refit_normalization: bool = True) -> TrainResult:
    """Levenberg-Marquardt on the training split with validation early stopping.

    Each epoch solves ``(J'J + lam I) d = -J'e`` and retries with a larger
    damping until the training MSE drops; the best-validation weights are
    returned.
    """
    cfg = cfg or model.config
    train_seqs, val_seqs = data.subset("train"), data.subset("val")
    if refit_normalization:
        model = replace(model, normalization=fit_normalization(train_seqs))
    x_tr, t_tr = assemble(model, train_seqs, data.pad)
    x_va, t_va = assemble(model, val_seqs, data.pad)
    if len(t_tr) == 0:
        raise ValueError("empty training split")

    theta = model.get_params()
    lam = cfg.lm_lambda0
    train_mse = _mse(model, x_tr, t_tr)
    val_mse = _mse(model, x_va, t_va)
    best = (val_mse if np.isfinite(val_mse) else train_mse, 0, theta.copy())
    history = [EpochLog(0, train_mse, val_mse, lam, True)]
    eye = np.eye(len(theta))
    fails = 0
    stop = "max_epochs"

    for epoch in range(1, cfg.max_epochs + 1):
        jac, e = jacobian(model, x_tr, t_tr)
        jtj = jac.T @ jac
        jte = jac.T @ e
        accepted = False
        rejections = 0
        while rejections < cfg.max_rejections:
            try:
                step = -np.linalg.solve(jtj + lam * eye, jte)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = model.with_params(theta + step)
                trial_mse = _mse(trial, x_tr, t_tr)
                if trial_mse < train_mse:
                    theta, model, train_mse = theta + step, trial, trial_mse
                    lam *= cfg.lambda_down
                    accepted = True
                    break
            lam *= cfg.lambda_up
            rejections += 1
        val_mse = _mse(model, x_va, t_va)
        history.append(EpochLog(epoch, train_mse, val_mse, lam, accepted))
        if not accepted:
            stop = "max_rejections"
            break
        score = val_mse if np.isfinite(val_mse) else train_mse
        if score < best[0]:
            best = (score, epoch, theta.copy())
            fails = 0
        else:
            fails += 1
            if fails >= cfg.early_stop_patience:
                stop = "validation"
                break
        log.debug("epoch %d train %.6g val %.6g lambda %.3g", epoch, train_mse, val_mse, lam)

    return TrainResult(model=model.with_params(best[2]), history=history,
                       best_epoch=best[1], best_val_mse=best[0], stop_reason=stop)


def write_training_log(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse", "lambda", "accepted"])
        for h in history:
            writer.writerow([h.epoch, f"{h.train_mse:.9g}", f"{h.val_mse:.9g}",
                             f"{h.lam:.9g}", int(h.accepted)])


# -- persistence -------------------------------------------------------------

def _num(v) -> str:
    return format(float(v), ".17g")


def save_model(model: NarxModel, path) -> None:
    cfg = model.config
    lines = [
        MODEL_FORMAT,
        f"dims {cfg.hidden_nodes} {cfg.d_u1} {cfg.d_u2} {cfg.d_y}",
    ]
    for sig in SIGNALS:
        a = model.normalization[sig]
        lines.append(f"norm {sig} {_num(a.shift)} {_num(a.scale)}")
    lines.append("input_weights")
    lines.extend(" ".join(_num(v) for v in row) for row in model.input_weights)
    lines.append("input_biases " + " ".join(_num(v) for v in model.input_biases))
    lines.append("output_weights " + " ".join(_num(v) for v in model.output_weights))
    lines.append("output_bias " + _num(model.output_bias))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path, base: NarxConfig | None = None) -> NarxModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MODEL_FORMAT:
        raise ValueError(f"unsupported model file version: {lines[:1]}")
    try:
        head = lines[1].split()
        if head[0] != "dims" or len(head) != 5:
            raise ValueError("malformed dims line")
        h, d_u1, d_u2, d_y = (int(v) for v in head[1:])
        cfg = replace(base or NarxConfig(), hidden_nodes=h, d_u1=d_u1, d_u2=d_u2, d_y=d_y)
        norm = {}
        for line in lines[2:5]:
            tag, sig, shift, scale = line.split()
            if tag != "norm" or sig not in SIGNALS:
                raise ValueError(f"malformed normalization line: {line!r}")
            norm[sig] = Affine(float(shift), float(scale))
        if lines[5].strip() != "input_weights":
            raise ValueError("missing input_weights block")
        r = cfg.regressor_length
        rows = [[float(v) for v in lines[6 + i].split()] for i in range(h)]
        if any(len(row) != r for row in rows):
            raise ValueError("input weight rows do not match the regressor length")
        rest = lines[6 + h:]
        fields_ = {}
        for line in rest:
            if line.strip():
                key, *vals = line.split()
                fields_[key] = [float(v) for v in vals]
        b_in = np.array(fields_["input_biases"])
        w_out = np.array(fields_["output_weights"])
        (b_out,) = fields_["output_bias"]
    except (IndexError, KeyError) as exc:
        raise ValueError(f"truncated or malformed model file: {exc}") from exc
    if b_in.shape != (h,) or w_out.shape != (h,):
        raise ValueError("bias/output weight counts do not match hidden_nodes")
    model = NarxModel(cfg, np.array(rows).reshape(h, r), b_in, w_out, float(b_out), norm)
    if not np.all(np.isfinite(model.get_params())):
        raise ValueError("non-finite weights in model file")
    return model
