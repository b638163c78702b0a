"""Single-layer LSTM binary classifier, trained from scratch.

The recurrence, backpropagation through time, and Adam are all written out
explicitly so the gradient check can validate every analytic derivative
against central finite differences. Training is deterministic given a seed.

Shapes: inputs are (batch, time, features); gate weights W_x* are (H, D),
W_h* are (H, H), biases (H,); the readout maps the final hidden state to one
logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedLoss, NonFiniteInput, SingleClassPartition

GATES = ("i", "f", "g", "o")
PARAM_NAMES = tuple(
    [f"W_x{g}" for g in GATES]
    + [f"W_h{g}" for g in GATES]
    + [f"b_{g}" for g in GATES]
    + ["w_out", "b_out"]
)


@dataclass
class LstmModel:
    weights: dict[str, np.ndarray]

    @property
    def input_size(self) -> int:
        return self.weights["W_xi"].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.weights["W_xi"].shape[0]

    def copy(self) -> "LstmModel":
        return LstmModel({k: v.copy() for k, v in self.weights.items()})


@dataclass(frozen=True)
class TrainParams:
    hidden_size: int = 16
    learning_rate: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 25
    grad_clip: float = 5.0


def init_model(hidden_size: int = 16, input_size: int = 2,
               seed: int = 0) -> LstmModel:
    """Uniform +-1/sqrt(H) weights, zero biases, forget-gate bias +1."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 7))))
    bound = 1.0 / np.sqrt(hidden_size)
    w: dict[str, np.ndarray] = {}
    for g in GATES:
        w[f"W_x{g}"] = rng.uniform(-bound, bound, (hidden_size, input_size))
        w[f"W_h{g}"] = rng.uniform(-bound, bound, (hidden_size, hidden_size))
        w[f"b_{g}"] = np.zeros(hidden_size)
    w["b_f"] = np.ones(hidden_size)
    w["w_out"] = rng.uniform(-bound, bound, hidden_size)
    w["b_out"] = np.zeros(1)
    return LstmModel(w)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_batch(w: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run the recurrence over (B, T, D) inputs; returns probabilities and
    the per-step cache needed for backpropagation."""
    B, T, _ = x.shape
    H = w["W_xi"].shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(T):
        xt = x[:, t, :]
        gates = {}
        for g in GATES:
            z = xt @ w[f"W_x{g}"].T + h @ w[f"W_h{g}"].T + w[f"b_{g}"]
            gates[g] = np.tanh(z) if g == "g" else _sigmoid(z)
        c_prev = c
        c = gates["f"] * c_prev + gates["i"] * gates["g"]
        tanh_c = np.tanh(c)
        h_new = gates["o"] * tanh_c
        steps.append((xt, h, c_prev, gates, c, tanh_c))
        h = h_new
    logit = h @ w["w_out"] + w["b_out"][0]
    prob = _sigmoid(logit)
    return prob, {"steps": steps, "h_final": h, "x": x}


def forward(model: LstmModel, window) -> float:
    """Spoof probability for one window (array (T, D) or an object with .data)."""
    x = np.asarray(getattr(window, "data", window), dtype=np.float64)
    if not np.isfinite(x).all():
        raise NonFiniteInput("window contains non-finite values")
    prob, _ = _forward_batch(model.weights, x[None, :, :])
    return float(prob[0])


def bce_loss(prob: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-12
    p = np.clip(prob, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _backward_batch(w: dict[str, np.ndarray], cache: dict, prob: np.ndarray,
                    y: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the mean binary cross-entropy w.r.t. every parameter."""
    steps = cache["steps"]
    h_final = cache["h_final"]
    B = y.size
    grads = {k: np.zeros_like(v) for k, v in w.items()}

    dlogit = (prob - y) / B  # (B,)
    grads["w_out"] = dlogit @ h_final
    grads["b_out"] = np.array([dlogit.sum()])
    dh = np.outer(dlogit, w["w_out"])
    dc = np.zeros_like(dh)
    for t in range(len(steps) - 1, -1, -1):
        xt, h_prev, c_prev, gates, c, tanh_c = steps[t]
        do = dh * tanh_c
        dc = dc + dh * gates["o"] * (1.0 - tanh_c**2)
        df = dc * c_prev
        di = dc * gates["g"]
        dg = dc * gates["i"]
        dz = {
            "i": di * gates["i"] * (1.0 - gates["i"]),
            "f": df * gates["f"] * (1.0 - gates["f"]),
            "g": dg * (1.0 - gates["g"] ** 2),
            "o": do * gates["o"] * (1.0 - gates["o"]),
        }
        dh = np.zeros_like(dh)
        for g in GATES:
            grads[f"W_x{g}"] += dz[g].T @ xt
            grads[f"W_h{g}"] += dz[g].T @ h_prev
            grads[f"b_{g}"] += dz[g].sum(axis=0)
            dh += dz[g] @ w[f"W_h{g}"]
        dc = dc * gates["f"]
    return grads


def batch_loss_and_grads(model: LstmModel, x: np.ndarray,
                         y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    prob, cache = _forward_batch(model.weights, x)
    return bce_loss(prob, y), _backward_batch(model.weights, cache, prob, y)


def gradient_check(model: LstmModel, batch: tuple[np.ndarray, np.ndarray],
                   epsilon: float = 1e-5, grad_fn=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grad_fn`` defaults to the production backward pass; tests may inject a
    corrupted one to prove the check can fail.
    """
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if grad_fn is None:
        grad_fn = lambda m: batch_loss_and_grads(m, x, y)[1]
    analytic = grad_fn(model)

    worst = 0.0
    w = model.weights
    for name in PARAM_NAMES:
        param = w[name]
        flat = param.reshape(-1)
        ga = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            lp, _ = _loss_only(w, x, y)
            flat[j] = orig - epsilon
            lm, _ = _loss_only(w, x, y)
            flat[j] = orig
            gn = (lp - lm) / (2.0 * epsilon)
            err = abs(ga[j] - gn) / max(abs(ga[j]), abs(gn), 1e-8)
            worst = max(worst, err)
    return worst


def _loss_only(w: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    prob, _ = _forward_batch(w, x)
    return bce_loss(prob, y), prob


def _clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def train_arrays(x_train: np.ndarray, y_train: np.ndarray,
                 x_val: np.ndarray, y_val: np.ndarray,
                 hyper: TrainParams = TrainParams(),
                 seed: int = 0) -> tuple[LstmModel, TrainHistory]:
    """Adam + BPTT on pre-built arrays; early stops on validation loss and
    restores the best-validation parameters."""
    for name, y in (("training", y_train), ("validation", y_val)):
        if len(np.unique(y)) < 2:
            raise SingleClassPartition(f"{name} partition holds a single class")

    model = init_model(hyper.hidden_size, x_train.shape[2], seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 8))))
    adam_m = {k: np.zeros_like(w) for k, w in model.weights.items()}
    adam_v = {k: np.zeros_like(w) for k, w in model.weights.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    history = TrainHistory()
    best = (np.inf, model.copy(), 0)
    since_best = 0
    n = x_train.shape[0]
    for epoch in range(hyper.max_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            loss, grads = batch_loss_and_grads(model, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            epoch_losses.append(loss)
            _clip_gradients(grads, hyper.grad_clip)
            step += 1
            for key in PARAM_NAMES:
                g = grads[key]
                adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * g
                adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * g * g
                m_hat = adam_m[key] / (1 - beta1**step)
                v_hat = adam_v[key] / (1 - beta2**step)
                model.weights[key] -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

        val_prob, _ = _forward_batch(model.weights, x_val)
        val_loss = bce_loss(val_prob, y_val)
        if not np.isfinite(val_loss):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val_loss)
        history.val_accuracy.append(float(((val_prob >= 0.5) == (y_val >= 0.5)).mean()))
        history.epochs_run = epoch + 1
        if val_loss < best[0]:
            best = (val_loss, model.copy(), epoch)
            since_best = 0
        else:
            since_best += 1
            if since_best >= hyper.patience:
                break
    history.best_epoch = best[2]
    return best[1], history


def save_model(model: LstmModel, path) -> None:
    """Plain-text parameter dump; floats use repr so reloads are bit-exact."""
    lines = [
        "# liveness lstm v1",
        f"input_size = {model.input_size}",
        f"hidden_size = {model.hidden_size}",
    ]
    for name in PARAM_NAMES:
        arr = np.atleast_2d(model.weights[name])
        lines.append(f"[{name}]")
        for row in arr:
            lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> LstmModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    header = dict(ln.split(" = ") for ln in lines[:2])
    sections: dict[str, list[list[float]]] = {}
    current = None
    for ln in lines[2:]:
        if ln.startswith("["):
            current = ln.strip("[]")
            sections[current] = []
        else:
            sections[current].append([float(tok) for tok in ln.split()])
    h = int(header["hidden_size"])
    weights = {}
    for name, rows in sections.items():
        arr = np.array(rows)
        if name.startswith("b_") or name == "w_out":
            arr = arr.reshape(-1)
        if name == "b_out":
            arr = arr.reshape(1)
        weights[name] = arr
    model = LstmModel(weights)
    if model.hidden_size != h:
        raise ValueError(f"{path}: header/parameter hidden size mismatch")
    return model
