"""Mixture-density LSTM for IKI sequence generation, implemented directly on
numpy.

Architecture: character embedding (dim 32) concatenated with the previous
normalized IKI, two LSTM layers of 64 units, and a mixture-density head
emitting 5 Gaussian components (weight logits, means, log-scales) per step.
Training is truncated BPTT (64-step windows, state carried across windows)
with Adam on the per-step negative log-likelihood. Backprop is hand-rolled;
finite_diff_check certifies it against central finite differences.

IKIs are z-scored with train-split constants stored in the model; sampling
de-normalizes and clips to [30, 3000] ms before feeding the value back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyCorpus, NonFiniteLoss, TooShort
from .trace import IkiSequence, Trace, iki_digraphs

SIGMA_FLOOR = 1e-3
NORM_STD_FLOOR = 1e-6
TBPTT_STEPS = 64
CLIP_LOW_MS = 30.0
CLIP_HIGH_MS = 3000.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MODEL_FORMAT_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MdnLstmConfig:
    embed_dim: int = 32
    hidden_units: int = 64
    layers: int = 2
    mixture_components: int = 5
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    vocab_size: int = 95

    def __post_init__(self):
        for name in (
            "embed_dim",
            "hidden_units",
            "layers",
            "mixture_components",
            "epochs",
            "batch_size",
            "vocab_size",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    train_nll: float
    val_nll: float


class MixtureParams(NamedTuple):
    """Per-step mixture: probability weights, means, scales (all length K)."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray


def mdn_nll(params: MixtureParams, target: float) -> float:
    """Negative log-likelihood of a scalar target under the Gaussian mixture,
    in nats, computed with log-sum-exp stabilization."""
    w = np.asarray(params.weights, dtype=np.float64)
    mu = np.asarray(params.means, dtype=np.float64)
    sigma = np.asarray(params.scales, dtype=np.float64)
    active = w > 0
    log_phi = -0.5 * LOG_2PI - np.log(sigma[active]) - 0.5 * ((target - mu[active]) / sigma[active]) ** 2
    log_terms = np.log(w[active]) + log_phi
    peak = log_terms.max()
    return float(-(peak + np.log(np.exp(log_terms - peak).sum())))


def _param_layout(cfg: MdnLstmConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "embed": (cfg.vocab_size + 1, cfg.embed_dim)  # row 0 = unseen key
    }
    in_dim = cfg.embed_dim + 1
    for layer in range(cfg.layers):
        h = cfg.hidden_units
        shapes[f"lstm{layer}_W"] = (in_dim, 4 * h)
        shapes[f"lstm{layer}_U"] = (h, 4 * h)
        shapes[f"lstm{layer}_b"] = (4 * h,)
        in_dim = h
    shapes["head_w"] = (cfg.hidden_units, 3 * cfg.mixture_components)
    shapes["head_b"] = (3 * cfg.mixture_components,)
    return shapes


def _init_params(cfg: MdnLstmConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Matrices uniform +-1/sqrt(fan_in); biases zero. The embedding uses its
    own row dimension as fan-in."""
    params = {}
    for name, shape in _param_layout(cfg).items():
        if name.endswith("_b") or name == "head_b":
            params[name] = np.zeros(shape)
        elif name == "embed":
            bound = 1.0 / math.sqrt(cfg.embed_dim)
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _Sequences:
    """Training tensors for a group of sessions, padded to a common length."""

    key_idx: np.ndarray  # (B, T) int
    prev: np.ndarray  # (B, T) normalized previous IKI, 0 at step 0
    target: np.ndarray  # (B, T) normalized IKI
    mask: np.ndarray  # (B, T) 1.0 where the step is real


def _lstm_step_forward(params, layer: int, x, h_prev, c_prev):
    h4 = params[f"lstm{layer}_b"].shape[0]
    hidden = h4 // 4
    z = x @ params[f"lstm{layer}_W"] + h_prev @ params[f"lstm{layer}_U"] + params[f"lstm{layer}_b"]
    i = _sigmoid(z[:, :hidden])
    f = _sigmoid(z[:, hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = _sigmoid(z[:, 3 * hidden :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (x, h_prev, c_prev, i, f, g, o, tanh_c)
    return h, c, cache


def _lstm_step_backward(params, layer: int, cache, dh, dc_next):
    x, h_prev, c_prev, i, f, g, o, tanh_c = cache
    do = dh * tanh_c
    dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
        axis=1,
    )
    grads = {
        f"lstm{layer}_W": x.T @ dz,
        f"lstm{layer}_U": h_prev.T @ dz,
        f"lstm{layer}_b": dz.sum(axis=0),
    }
    dx = dz @ params[f"lstm{layer}_W"].T
    dh_prev = dz @ params[f"lstm{layer}_U"].T
    return dx, dh_prev, dc_prev, grads


def _forward_chunk(params, cfg, chunk: _Sequences, state):
    """Run the network over one BPTT window. Returns per-step head outputs
    (T, B, 3K), the caches needed for backward, and the final state."""
    b, t_len = chunk.key_idx.shape
    h_states = [s.copy() for s in state[0]]
    c_states = [s.copy() for s in state[1]]
    head_out = np.empty((t_len, b, 3 * cfg.mixture_components))
    caches = []
    for t in range(t_len):
        x = np.concatenate(
            [params["embed"][chunk.key_idx[:, t]], chunk.prev[:, t : t + 1]], axis=1
        )
        step_caches = []
        inp = x
        for layer in range(cfg.layers):
            h, c, cache = _lstm_step_forward(params, layer, inp, h_states[layer], c_states[layer])
            step_caches.append(cache)
            h_states[layer], c_states[layer] = h, c
            inp = h
        head_out[t] = inp @ params["head_w"] + params["head_b"]
        caches.append((step_caches, inp))
    return head_out, caches, (h_states, c_states)


def _mdn_head_loss(head_out, target, mask, k):
    """Masked NLL sum and gradient w.r.t. the raw head outputs.

    head_out is (T, B, 3K) ordered [logits, means, log_scales]; gradients are
    per unit NLL (caller rescales by 1/steps).
    """
    a = head_out[:, :, :k]
    mu = head_out[:, :, k : 2 * k]
    s = head_out[:, :, 2 * k :]
    exp_s = np.exp(s)
    sigma = np.maximum(exp_s, SIGMA_FLOOR)
    live = exp_s > SIGMA_FLOOR  # gradient flows to s only above the floor

    y = target.T[:, :, None]
    zsc = (y - mu) / sigma
    log_phi = -0.5 * LOG_2PI - np.log(sigma) - 0.5 * zsc * zsc

    a_max = a.max(axis=2, keepdims=True)
    log_pi = a - (a_max + np.log(np.exp(a - a_max).sum(axis=2, keepdims=True)))
    log_w = log_pi + log_phi
    w_max = log_w.max(axis=2, keepdims=True)
    log_mix = w_max[:, :, 0] + np.log(np.exp(log_w - w_max).sum(axis=2))
    step_nll = -log_mix * mask.T
    nll_sum = float(step_nll.sum())

    r = np.exp(log_w - log_mix[:, :, None])  # component posteriors
    pi = np.exp(log_pi)
    m3 = mask.T[:, :, None]
    da = (pi - r) * m3
    dmu = -r * zsc / sigma * m3
    ds = r * (1.0 - zsc * zsc) * live * m3
    dhead = np.concatenate([da, dmu, ds], axis=2)
    return nll_sum, dhead


def _backward_chunk(params, cfg, chunk, caches, dhead):
    """BPTT within the window; no gradient flows across window boundaries."""
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    b = chunk.key_idx.shape[0]
    h = cfg.hidden_units
    dh_next = [np.zeros((b, h)) for _ in range(cfg.layers)]
    dc_next = [np.zeros((b, h)) for _ in range(cfg.layers)]
    for t in range(len(caches) - 1, -1, -1):
        step_caches, h_top = caches[t]
        dout = dhead[t]
        grads["head_w"] += h_top.T @ dout
        grads["head_b"] += dout.sum(axis=0)
        d_in = dout @ params["head_w"].T
        for layer in range(cfg.layers - 1, -1, -1):
            dh = d_in + dh_next[layer]
            dx, dh_prev, dc_prev, layer_grads = _lstm_step_backward(
                params, layer, step_caches[layer], dh, dc_next[layer]
            )
            for name, g in layer_grads.items():
                grads[name] += g
            dh_next[layer] = dh_prev
            dc_next[layer] = dc_prev
            d_in = dx
        # d_in is now the gradient on [embedding, prev-IKI]; prev is data.
        np.add.at(grads["embed"], chunk.key_idx[:, t], d_in[:, : cfg.embed_dim])
    return grads


@dataclass
class MdnLstmModel:
    """Trained generator. Parameters live in a flat name -> array dict; the
    vocabulary maps key codepoints to embedding rows (row 0 = unseen)."""

    config: MdnLstmConfig
    params: dict[str, np.ndarray]
    vocab: tuple[int, ...]
    norm_mean: float
    norm_std: float
    epochs_run: int = 0
    final_val_nll: float = float("nan")
    _key_index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._key_index = {key: i + 1 for i, key in enumerate(self.vocab)}

    def key_to_index(self, key: int) -> int:
        return self._key_index.get(int(key), 0)

    def normalize(self, iki_ms: np.ndarray) -> np.ndarray:
        return (iki_ms - self.norm_mean) / self.norm_std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return z * self.norm_std + self.norm_mean

    # -- sampling ---------------------------------------------------------

    def step(self, key_idx: np.ndarray, prev: np.ndarray, state):
        """One forward step for a batch of sessions (no caches)."""
        params, cfg = self.params, self.config
        x = np.concatenate([params["embed"][key_idx], prev[:, None]], axis=1)
        h_states, c_states = state
        inp = x
        for layer in range(cfg.layers):
            h, c, _ = _lstm_step_forward(params, layer, inp, h_states[layer], c_states[layer])
            h_states[layer], c_states[layer] = h, c
            inp = h
        out = inp @ params["head_w"] + params["head_b"]
        k = cfg.mixture_components
        return out[:, :k], out[:, k : 2 * k], out[:, 2 * k :], (h_states, c_states)

    def zero_state(self, batch: int):
        h = self.config.hidden_units
        return (
            [np.zeros((batch, h)) for _ in range(self.config.layers)],
            [np.zeros((batch, h)) for _ in range(self.config.layers)],
        )

    def sample_keys(self, keys: Sequence[int], temperature: float = 1.0, seed=None) -> IkiSequence:
        """Autoregressive IKI sequence for a key sequence; length len(keys)-1.

        Component choice applies temperature to the weight logits; the
        Gaussian scale is left untouched. temperature == 0 is the
        deterministic limit: argmax component, value at its mean. Sampled
        IKIs are clipped to [30, 3000] ms before being fed back.
        """
        if len(keys) < 2:
            raise TooShort("sampling needs at least 2 keys (1 IKI)")
        rng = np.random.default_rng(seed)
        idx = np.array([self.key_to_index(k) for k in keys[1:]], dtype=np.int64)
        state = self.zero_state(1)
        prev = np.zeros(1)
        out = np.empty(len(idx))
        for j in range(len(idx)):
            logits, means, log_scales, state = self.step(idx[j : j + 1], prev, state)
            logits, means, log_scales = logits[0], means[0], log_scales[0]
            sigma = np.maximum(np.exp(log_scales), SIGMA_FLOOR)
            if temperature == 0.0:
                comp = int(np.argmax(logits))
                z = means[comp]
            else:
                scaled = logits / temperature
                scaled -= scaled.max()
                pi = np.exp(scaled)
                pi /= pi.sum()
                comp = int(np.searchsorted(np.cumsum(pi), rng.random()))
                comp = min(comp, len(pi) - 1)
                z = means[comp] + sigma[comp] * rng.standard_normal()
            ms = float(np.clip(self.denormalize(np.array([z]))[0], CLIP_LOW_MS, CLIP_HIGH_MS))
            out[j] = ms
            prev = np.array([(ms - self.norm_mean) / self.norm_std])
        return IkiSequence(values=out, trimmed_count=0)

    # -- serialization ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "config": {
                "embed_dim": self.config.embed_dim,
                "hidden_units": self.config.hidden_units,
                "layers": self.config.layers,
                "mixture_components": self.config.mixture_components,
                "learning_rate": self.config.learning_rate,
                "epochs": self.config.epochs,
                "batch_size": self.config.batch_size,
                "seed": self.config.seed,
                "vocab_size": self.config.vocab_size,
            },
            "vocab": list(self.vocab),
            "norm_mean": self.norm_mean,
            "norm_std": self.norm_std,
            "epochs_run": self.epochs_run,
            "final_val_nll": self.final_val_nll,
            "params": {name: p.tolist() for name, p in self.params.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "MdnLstmModel":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
        cfg = MdnLstmConfig(**payload["config"])
        params = {name: np.array(p, dtype=np.float64) for name, p in payload["params"].items()}
        return cls(
            config=cfg,
            params=params,
            vocab=tuple(payload["vocab"]),
            norm_mean=payload["norm_mean"],
            norm_std=payload["norm_std"],
            epochs_run=payload["epochs_run"],
            final_val_nll=payload["final_val_nll"],
        )


def sample(model: MdnLstmModel, text: Sequence[int] | str, temperature: float = 1.0, seed=None) -> IkiSequence:
    """IKI sequence for typing `text`; see MdnLstmModel.sample_keys."""
    keys = [ord(ch) for ch in text] if isinstance(text, str) else [int(k) for k in text]
    return model.sample_keys(keys, temperature=temperature, seed=seed)


# ---------------------------------------------------------------------------
# Training


def _corpus_sequences(corpus: Sequence[Trace]) -> list[tuple[np.ndarray, np.ndarray]]:
    """(terminal key codepoints, trimmed IKIs in ms) per session."""
    seqs = []
    for trace in corpus:
        pairs, values = iki_digraphs(trace)
        if len(values) < 2:
            raise TooShort(f"session {trace.session_id!r} has {len(values)} IKIs, need >= 2")
        keys = np.array([p[1] for p in pairs], dtype=np.int64)
        seqs.append((keys, values))
    return seqs


def _batch_tensors(model_keyidx, sessions) -> _Sequences:
    b = len(sessions)
    t_max = max(len(keys) for keys, _ in sessions)
    key_idx = np.zeros((b, t_max), dtype=np.int64)
    prev = np.zeros((b, t_max))
    target = np.zeros((b, t_max))
    mask = np.zeros((b, t_max))
    for row, (keys, norm_ikis) in enumerate(sessions):
        t = len(keys)
        key_idx[row, :t] = model_keyidx(keys)
        target[row, :t] = norm_ikis
        prev[row, 1:t] = norm_ikis[:-1]
        mask[row, :t] = 1.0
    return _Sequences(key_idx=key_idx, prev=prev, target=target, mask=mask)


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - ADAM_BETA1**self.t
        b2c = 1.0 - ADAM_BETA2**self.t
        for name, g in grads.items():
            self.m[name] = ADAM_BETA1 * self.m[name] + (1 - ADAM_BETA1) * g
            self.v[name] = ADAM_BETA2 * self.v[name] + (1 - ADAM_BETA2) * g * g
            step = self.lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + ADAM_EPS)
            params[name] -= step


def _evaluate_nll(params, cfg, model: MdnLstmModel, sessions) -> float:
    """Masked mean NLL per step over a list of prepared sessions."""
    total, count = 0.0, 0
    for start in range(0, len(sessions), cfg.batch_size):
        group = sessions[start : start + cfg.batch_size]
        chunk_all = _batch_tensors(lambda ks: [model.key_to_index(k) for k in ks], group)
        state = model.zero_state(len(group))
        for t0 in range(0, chunk_all.key_idx.shape[1], TBPTT_STEPS):
            window = _Sequences(
                key_idx=chunk_all.key_idx[:, t0 : t0 + TBPTT_STEPS],
                prev=chunk_all.prev[:, t0 : t0 + TBPTT_STEPS],
                target=chunk_all.target[:, t0 : t0 + TBPTT_STEPS],
                mask=chunk_all.mask[:, t0 : t0 + TBPTT_STEPS],
            )
            head_out, _, state = _forward_chunk(params, cfg, window, state)
            nll_sum, _ = _mdn_head_loss(head_out, window.target, window.mask, cfg.mixture_components)
            total += nll_sum
            count += int(window.mask.sum())
    return total / max(count, 1)


def train(config: MdnLstmConfig, corpus: Sequence[Trace]) -> tuple[MdnLstmModel, list[TrainRecord]]:
    """Train the mixture-density LSTM on a corpus of traces.

    Deterministic given config.seed: the session split, the parameter init
    and the per-epoch batch order all derive from it. Returns the model and
    one TrainRecord per epoch (train NLL is the running mean over the
    epoch's steps; val NLL is a full pass over the held-out 20%).
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    if len(corpus) < 2:
        raise EmptyCorpus("need >= 2 sessions for the 80/20 train/val split")
    raw = _corpus_sequences(corpus)

    vocab = tuple(sorted({int(k) for keys, _ in raw for k in keys}))
    if len(vocab) > config.vocab_size:
        raise ValueError(
            f"corpus has {len(vocab)} distinct keys, config allows {config.vocab_size}"
        )

    seed_seq = np.random.SeedSequence(config.seed)
    split_rng, init_rng, shuffle_rng = (np.random.default_rng(s) for s in seed_seq.spawn(3))

    order = split_rng.permutation(len(raw))
    n_val = max(1, int(round(0.2 * len(raw))))
    val_ids = set(order[len(raw) - n_val :].tolist())
    train_seqs = [raw[i] for i in range(len(raw)) if i not in val_ids]
    val_seqs = [raw[i] for i in val_ids]

    pooled = np.concatenate([v for _, v in train_seqs])
    norm_mean = float(pooled.mean())
    norm_std = float(max(pooled.std(), NORM_STD_FLOOR))

    params = _init_params(config, init_rng)
    model = MdnLstmModel(
        config=config,
        params=params,
        vocab=vocab,
        norm_mean=norm_mean,
        norm_std=norm_std,
    )
    norm = lambda v: (v - norm_mean) / norm_std
    train_prep = [(k, norm(v)) for k, v in train_seqs]
    val_prep = [(k, norm(v)) for k, v in val_seqs]

    adam = _Adam(params, config.learning_rate)
    records = []
    for epoch in range(1, config.epochs + 1):
        shuffle_rng.shuffle(train_prep)
        epoch_nll, epoch_steps = 0.0, 0
        for start in range(0, len(train_prep), config.batch_size):
            group = train_prep[start : start + config.batch_size]
            tensors = _batch_tensors(lambda ks: [model.key_to_index(k) for k in ks], group)
            state = model.zero_state(len(group))
            for t0 in range(0, tensors.key_idx.shape[1], TBPTT_STEPS):
                window = _Sequences(
                    key_idx=tensors.key_idx[:, t0 : t0 + TBPTT_STEPS],
                    prev=tensors.prev[:, t0 : t0 + TBPTT_STEPS],
                    target=tensors.target[:, t0 : t0 + TBPTT_STEPS],
                    mask=tensors.mask[:, t0 : t0 + TBPTT_STEPS],
                )
                n_steps = int(window.mask.sum())
                if n_steps == 0:
                    continue
                head_out, caches, state = _forward_chunk(params, config, window, state)
                nll_sum, dhead = _mdn_head_loss(
                    head_out, window.target, window.mask, config.mixture_components
                )
                if not np.isfinite(nll_sum):
                    raise NonFiniteLoss(epoch=epoch, step=start // config.batch_size, value=nll_sum)
                grads = _backward_chunk(params, config, window, caches, dhead / n_steps)
                adam.update(params, grads)
                epoch_nll += nll_sum
                epoch_steps += n_steps
        val_nll = _evaluate_nll(params, config, model, val_prep)
        records.append(
            TrainRecord(epoch=epoch, train_nll=epoch_nll / max(epoch_steps, 1), val_nll=val_nll)
        )
    model.epochs_run = config.epochs
    model.final_val_nll = records[-1].val_nll if records else float("nan")
    return model, records


# ---------------------------------------------------------------------------
# Gradient verification


def training_loss(params, config: MdnLstmConfig, model: MdnLstmModel, sessions) -> float:
    """Mean per-step NLL of prepared (key, normalized-IKI) sessions under
    `params`; pure in params so finite differences are well-defined."""
    return _evaluate_nll(params, config, model, sessions)


def finite_diff_check(
    model: MdnLstmModel,
    corpus_slice: Sequence[Trace],
    n_params: int = 200,
    h: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic gradients and central finite
    differences over randomly chosen parameters (1e-8 absolute floor).

    The slice is truncated to at most 4 sessions of at most 16 steps.
    """
    corpus_slice = list(corpus_slice)[:4]
    if not corpus_slice:
        raise EmptyCorpus("finite_diff_check needs at least one trace")
    cfg = model.config
    sessions = []
    for keys, values in _corpus_sequences(corpus_slice):
        sessions.append((keys[:16], model.normalize(values[:16])))

    tensors = _batch_tensors(lambda ks: [model.key_to_index(k) for k in ks], sessions)
    state = model.zero_state(len(sessions))
    n_steps = int(tensors.mask.sum())
    head_out, caches, _ = _forward_chunk(model.params, cfg, tensors, state)
    _, dhead = _mdn_head_loss(head_out, tensors.target, tensors.mask, cfg.mixture_components)
    grads = _backward_chunk(model.params, cfg, tensors, caches, dhead / n_steps)

    names = sorted(model.params)
    sizes = np.array([model.params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_params, total), replace=False)

    max_rel = 0.0
    for flat in chosen:
        tensor_i = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[tensor_i]
        local = int(flat - offsets[tensor_i])
        idx = np.unravel_index(local, model.params[name].shape)

        perturbed = {k: v.copy() for k, v in model.params.items()}
        perturbed[name][idx] += h
        loss_plus = training_loss(perturbed, cfg, model, sessions)
        perturbed[name][idx] -= 2 * h
        loss_minus = training_loss(perturbed, cfg, model, sessions)
        g_fd = (loss_plus - loss_minus) / (2 * h)
        g_an = float(grads[name][idx])
        rel = abs(g_an - g_fd) / max(abs(g_an), abs(g_fd), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
