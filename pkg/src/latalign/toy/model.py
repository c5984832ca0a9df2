"""A minimal teacher-forced encoder-decoder with hand-written backpropagation.

At decoder position ``i`` the model reads the source sentence and exactly one
decoder input token ``u_i`` (``y_{i-1}`` under teacher forcing, ``<bos>`` first):

    keys    = src_key[[<bos>, x_1, ..., x_L]]        (L+1, d)
    values  = src_val[[x_1, ..., x_L, <eos>]]        (L+1, d)
    c_i     = softmax(query[u_i] . keys) @ values
    h_i     = tanh([c_i, emb[u_i]] @ W_h + b_h)
    r_i     = emb[u_i] + h_i @ W_p
    log p_i = log_softmax(r_i @ emb.T + b_o)

Keys are shifted by one source position relative to values, so attending to
the source token that produced the previous output retrieves the next source
token.  The input embedding is carried straight to the tied output
projection, as in a residual transformer decoder with shared embeddings; at
initialization the model therefore leans towards repeating its input.
Nothing couples different decoder positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tasks import BLANK, BOS, EOS, TaskSpec

PARAM_NAMES = ("src_key", "src_val", "query", "emb", "W_h", "b_h", "W_p", "b_o")
FORMAT = "latalign-toymodel"
FORMAT_VERSION = 1


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def param_shapes(vocab_size: int, d_model: int, hidden: int) -> dict[str, tuple[int, ...]]:
    V, d, h = vocab_size, d_model, hidden
    return {
        "src_key": (V, d), "src_val": (V, d), "query": (V, d), "emb": (V, d),
        "W_h": (2 * d, h), "b_h": (h,), "W_p": (h, d), "b_o": (V,),
    }


@dataclass
class ToyModel:
    params: dict[str, np.ndarray]

    @property
    def vocab_size(self) -> int:
        return self.params["b_o"].shape[0]

    @property
    def d_model(self) -> int:
        return self.params["emb"].shape[1]

    @property
    def hidden(self) -> int:
        return self.params["b_h"].shape[0]

    @classmethod
    def init(
        cls,
        vocab_size: int,
        d_model: int = 32,
        hidden: int = 64,
        rng=None,
        embed_scale: float = 0.5,
    ) -> ToyModel:
        """Random parameters; ``embed_scale`` is the std of the shared token embedding."""
        rng = np.random.default_rng(rng)
        shapes = param_shapes(vocab_size, d_model, hidden)
        params = {}
        for name, shape in shapes.items():
            if name.startswith("b_"):
                params[name] = np.zeros(shape)
            elif name == "emb":
                params[name] = rng.normal(0.0, embed_scale, size=shape)
            else:
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        return cls(params)

    def copy(self) -> ToyModel:
        return ToyModel({k: v.copy() for k, v in self.params.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- forward / backward -------------------------------------------------

    def forward(self, source, inputs) -> tuple[np.ndarray, dict]:
        """Log-probabilities for decoder inputs ``inputs`` given ``source``."""
        p = self.params
        V = self.vocab_size
        source = [int(t) for t in source]
        inputs = [int(t) for t in inputs]
        for t in source + inputs:
            if not 0 <= t < V:
                raise ValueError(f"token {t} outside a vocabulary of size {V}")
        keys = np.array([BOS] + source)
        vals = np.array(source + [EOS])
        u = np.array(inputs)

        K = p["src_key"][keys]
        Vv = p["src_val"][vals]
        Q = p["query"][u]
        att = np.exp(log_softmax(Q @ K.T))
        E = p["emb"][u]
        X = np.concatenate([att @ Vv, E], axis=1)
        H = np.tanh(X @ p["W_h"] + p["b_h"])
        R = E + H @ p["W_p"]
        logp = log_softmax(R @ p["emb"].T + p["b_o"])
        cache = dict(keys=keys, vals=vals, u=u, K=K, Vv=Vv, Q=Q, att=att, X=X, H=H, R=R, logp=logp)
        return logp, cache

    def backward(self, cache: dict, dlogp: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given the loss gradient w.r.t. the log-probabilities."""
        p = self.params
        if dlogp.shape != cache["logp"].shape:
            raise ValueError(f"gradient shape {dlogp.shape} != {cache['logp'].shape}")
        d = self.d_model
        grads = self.zeros_like()
        u = cache["u"]

        probs = np.exp(cache["logp"])
        dlogits = dlogp - probs * dlogp.sum(axis=1, keepdims=True)
        grads["b_o"] = dlogits.sum(axis=0)
        grads["emb"] += dlogits.T @ cache["R"]
        dR = dlogits @ p["emb"]
        np.add.at(grads["emb"], u, dR)
        H = cache["H"]
        grads["W_p"] = H.T @ dR
        dZ = (dR @ p["W_p"].T) * (1.0 - H**2)
        grads["W_h"] = cache["X"].T @ dZ
        grads["b_h"] = dZ.sum(axis=0)
        dX = dZ @ p["W_h"].T
        dC = dX[:, :d]
        np.add.at(grads["emb"], u, dX[:, d:])

        att = cache["att"]
        np.add.at(grads["src_val"], cache["vals"], att.T @ dC)
        datt = dC @ cache["Vv"].T
        dS = att * (datt - (datt * att).sum(axis=1, keepdims=True))
        np.add.at(grads["query"], u, dS @ cache["K"])
        np.add.at(grads["src_key"], cache["keys"], dS.T @ cache["Q"])
        return grads

    def step_logprobs(self, source, prev_tokens) -> np.ndarray:
        """Next-token log-probabilities for a batch of previous tokens."""
        logp, _ = self.forward(source, prev_tokens)
        return logp

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "hidden": self.hidden,
            "params": {k: self.params[k].tolist() for k in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ToyModel:
        if data.get("format") != FORMAT:
            raise ValueError("not a toy model file")
        if data.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {data.get('version')}")
        shapes = param_shapes(data["vocab_size"], data["d_model"], data["hidden"])
        params = {k: np.array(data["params"][k], dtype=np.float64) for k in PARAM_NAMES}
        for k, shape in shapes.items():
            if params[k].shape != shape:
                raise ValueError(f"parameter {k} has shape {params[k].shape}, expected {shape}")
        return cls(params)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> ToyModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def teacher_forced_inputs(target) -> list[int]:
    """Decoder inputs ``<bos>, y_1, ..., y_{n-1}``."""
    return [BOS] + [int(t) for t in target[:-1]]


def doubled_inputs(target) -> list[int]:
    """Each teacher-forced input fed twice in a row (2n positions)."""
    return [t for t in teacher_forced_inputs(target) for _ in range(2)]


def forward_teacher_forced(model: ToyModel, source, target):
    return model.forward(source, teacher_forced_inputs(target))


def forward_doubled(model: ToyModel, source, target):
    return model.forward(source, doubled_inputs(target))


def copy_model(task: TaskSpec, scale: float = 30.0, gain: float = 20.0) -> ToyModel:
    """Hand-set parameters that predict the decoder input at every position.

    ``<bos>`` maps to the blank.  When the input token closes the expansion of
    the last source token, the model also puts equal mass on ``<eos>``, so the
    final prediction is shared 50/50 between the last real token and ``<eos>``.
    Requires sources without repeated tokens.
    """
    V = task.vocab_size
    d, hidden = V, 2
    params = {k: np.zeros(shape) for k, shape in param_shapes(V, d, hidden).items()}
    alpha = np.sqrt(scale)
    eye = np.eye(V)
    # copying comes for free: logit_v = emb[v] . emb[u] = scale * [v == u]
    params["emb"][:] = alpha * eye
    params["src_key"][:] = eye
    params["src_val"][EOS, EOS] = 1.0
    params["query"][BOS, BOS] = gain
    for src, out in task.table.items():
        params["query"][out[-1], src] = gain

    # unit 0 fires on a <bos> input, unit 1 when attention lands on the source end
    params["W_h"][d + BOS, 0] = gain / alpha
    params["W_h"][EOS, 1] = gain
    params["b_h"][:] = -gain / 2

    def route(unit, delta):
        # a +-1 unit adds delta * (h + 1) / 2 to the logits
        params["W_p"][unit] = delta / (2 * alpha)
        params["b_o"][:] += delta / 2

    route(0, scale * (eye[BLANK] - eye[BOS]))
    route(1, scale * eye[EOS])
    return ToyModel(params)
