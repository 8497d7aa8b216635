"""Navigation network: symbolic featurizer, siamese fusion, GCN spatial
features, masked object attention, LSTM core, actor and critic heads.

All computation is a pure function of a ParameterSet plus a graph snapshot.
``PolicyModel.unroll`` runs a whole rollout segment at once (batched over
time except for the LSTM recursion) and ``PolicyModel.backward`` returns the
exact gradient of any loss expressed through d(logits) and d(values).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .kg import KnowledgeGraph, normalized_adjacency
from .nn import layers as L
from .nn.params import ParameterSet, glorot_uniform
from .scene_sim.env import N_ACTIONS
from .scene_sim.scene import Observation


@dataclass
class ModelConfig:
    vocab_size: int = 40
    d_vis: int = 128
    d_siam: int = 128
    d_fused: int = 128
    gcn_widths: tuple = (64, 64, 64)
    d_spatial_siam: int = 64
    d_q: int = 64
    d_att: int = 32
    d_lstm: int = 128
    use_kg: bool = True
    use_attention: bool = True
    attention_output: str = "probs"  # "probs" concatenates H_a; "weighted" uses sum_i H_a(i) q_i

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gcn_widths"] = list(self.gcn_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "gcn_widths" in d:
            d["gcn_widths"] = tuple(d["gcn_widths"])
        return cls(**d)


class PolicyOutput(NamedTuple):
    logits: np.ndarray
    value: float
    attention: Optional[np.ndarray]
    lstm_state: tuple


class Unrolled(NamedTuple):
    logits: np.ndarray  # (T, 10)
    values: np.ndarray  # (T,)
    attention: Optional[np.ndarray]  # (T, V)
    lstm_state: tuple  # state after the last step


# ----------------------------------------------------------------- featurizer


def encoding_size(vocab_size: int) -> int:
    return 8 * vocab_size + 1


def encode_observation(obs: Observation) -> np.ndarray:
    """visible | depth one-hot (3 per category) | direction one-hot (3) | open | collision."""
    enc = obs.__dict__.get("_encoding")
    if enc is not None:
        return enc
    v = obs.visible.shape[0]
    depth = np.zeros((v, 3))
    side = np.zeros((v, 3))
    idx = np.flatnonzero(obs.visible)
    depth[idx, obs.depth[idx] - 1] = 1.0
    side[idx, obs.direction[idx] - 1] = 1.0
    enc = np.concatenate(
        [obs.visible.astype(np.float64), depth.ravel(), side.ravel(), obs.open_flags.astype(np.float64),
         [1.0 if obs.collision_last else 0.0]]
    )
    enc.flags.writeable = False
    object.__setattr__(obs, "_encoding", enc)
    return enc


def featurize(obs: Observation, params: ParameterSet) -> np.ndarray:
    e = encode_observation(obs).astype(params["feat.W"].dtype)
    return L.relu(L.dense(e, params["feat.W"], params["feat.b"]))


def fuse_siamese(x_t, x_g, params: ParameterSet, return_branches: bool = False):
    """I_t = ReLU(W_f [ReLU(W_s x_t), ReLU(W_s x_g)]) with one shared W_s."""
    if x_t.shape != x_g.shape:
        raise ValueError(f"fuse_siamese: shape mismatch {x_t.shape} vs {x_g.shape}")
    s_t = L.relu(L.dense(x_t, params["siam.W"], params["siam.b"]))
    s_g = L.relu(L.dense(x_g, params["siam.W"], params["siam.b"]))
    cat = np.concatenate([s_t, s_g], axis=-1)
    out = L.relu(L.dense(cat, params["fuse.W"], params["fuse.b"]))
    return (out, cat) if return_branches else out


def gcn_stack(a_hat, params: ParameterSet):
    """Three GCN layers from one-hot node features; returns every layer output."""
    outs = []
    h = np.eye(a_hat.shape[0], dtype=a_hat.dtype)
    for k in (1, 2, 3):
        h = L.gcn_layer(a_hat, h, params[f"gcn.W{k}"])
        outs.append(h)
    return outs


def _spatial_siam(h_masked, params):
    return L.relu(L.dense(h_masked, params["ssiam.W"], params["ssiam.b"]))


def spatial_features(a_hat, h0, params: ParameterSet, r_t, r_g):
    """Returns (H_t, H_g, Q) where Q holds one fused row per vocabulary entry."""
    if a_hat.shape[0] != len(r_t) or len(r_t) != len(r_g):
        raise ValueError("spatial_features: dimension mismatch")
    h = h0
    for k in (1, 2, 3):
        h = L.gcn_layer(a_hat, h, params[f"gcn.W{k}"])
    h_t = np.asarray(r_t, dtype=h.dtype)[:, None] * h
    h_g = np.asarray(r_g, dtype=h.dtype)[:, None] * h
    cat = np.concatenate([_spatial_siam(h_t, params), _spatial_siam(h_g, params)], axis=-1)
    q = L.dense(cat, params["sfuse.W"], params["sfuse.b"])
    return h_t, h_g, q


def attention_scores(q, params: ParameterSet):
    u = L.relu(L.dense(q, params["att.W1"], params["att.b1"]))
    return u @ params["att.W2"][0], u


def attention(q, r_z, params: ParameterSet):
    """Masked softmax over per-object scores; zero outside R_z."""
    r_z = np.asarray(r_z)
    if not r_z.any():
        raise ValueError("attention: no visible object in observation or target")
    s, _ = attention_scores(q, params)
    return L.softmax(s, r_z.astype(bool))


# ---------------------------------------------------------------------- model


@dataclass
class Context:
    """Target- and graph-dependent quantities shared by every step of a segment."""

    a_hat: np.ndarray
    enc_g: np.ndarray
    x_g: np.ndarray
    s_g: np.ndarray
    m_g: np.ndarray
    gcn: list = field(default_factory=list)
    h_g: Optional[np.ndarray] = None
    z_g: Optional[np.ndarray] = None


class PolicyModel:
    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()

    # -- parameters ----------------------------------------------------------

    @property
    def spatial_dim(self) -> int:
        c = self.config
        if not c.use_kg:
            return 0
        if c.use_attention and c.attention_output == "probs":
            return c.vocab_size
        return c.d_q

    @property
    def lstm_input_dim(self) -> int:
        return self.config.d_fused + self.spatial_dim

    def param_shapes(self) -> dict:
        c = self.config
        v = c.vocab_size
        shapes = {
            "feat.W": (c.d_vis, encoding_size(v)),
            "feat.b": (c.d_vis,),
            "siam.W": (c.d_siam, c.d_vis),
            "siam.b": (c.d_siam,),
            "fuse.W": (c.d_fused, 2 * c.d_siam),
            "fuse.b": (c.d_fused,),
        }
        if c.use_kg:
            g1, g2, g3 = c.gcn_widths
            shapes.update(
                {
                    "gcn.W1": (v, g1),
                    "gcn.W2": (g1, g2),
                    "gcn.W3": (g2, g3),
                    "ssiam.W": (c.d_spatial_siam, g3),
                    "ssiam.b": (c.d_spatial_siam,),
                    "sfuse.W": (c.d_q, 2 * c.d_spatial_siam),
                    "sfuse.b": (c.d_q,),
                }
            )
            if c.use_attention:
                shapes.update({"att.W1": (c.d_att, c.d_q), "att.b1": (c.d_att,), "att.W2": (1, c.d_att)})
        n = c.d_lstm
        shapes.update(
            {
                "lstm.W": (4 * n, self.lstm_input_dim + n),
                "lstm.b": (4 * n,),
                "actor.W": (N_ACTIONS, n),
                "actor.b": (N_ACTIONS,),
                "critic.W": (1, n),
                "critic.b": (1,),
            }
        )
        return shapes

    def init_params(self, seed: int = 0, dtype=np.float32) -> ParameterSet:
        rng = np.random.default_rng(seed)
        ps = ParameterSet()
        for name, shape in self.param_shapes().items():
            if len(shape) == 1:
                arr = np.zeros(shape)
                if name == "lstm.b":
                    n = self.config.d_lstm
                    arr[n : 2 * n] = 1.0  # forget gate
            elif name.startswith("gcn."):
                arr = glorot_uniform(rng, shape, fan_in=shape[0], fan_out=shape[1])
            else:
                arr = glorot_uniform(rng, shape)
            ps.add(name, arr.astype(dtype))
        return ps

    def initial_state(self, dtype=np.float32) -> tuple:
        n = self.config.d_lstm
        return (np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype))

    # -- forward -------------------------------------------------------------

    def context(self, params: ParameterSet, target_obs: Observation, graph) -> Context:
        dt = params["feat.W"].dtype
        if isinstance(graph, KnowledgeGraph):
            a_hat = normalized_adjacency(graph)
        elif graph is None:
            a_hat = np.eye(self.config.vocab_size)
        else:
            a_hat = np.asarray(graph)
        a_hat = a_hat.astype(dt)
        enc_g = encode_observation(target_obs).astype(dt)
        if enc_g.shape[0] != encoding_size(self.config.vocab_size):
            raise ValueError("observation vocabulary does not match the model")
        x_g = L.relu(L.dense(enc_g, params["feat.W"], params["feat.b"]))
        s_g = L.relu(L.dense(x_g, params["siam.W"], params["siam.b"]))
        m_g = target_obs.visible.astype(dt)
        ctx = Context(a_hat, enc_g, x_g, s_g, m_g)
        if self.config.use_kg:
            ctx.gcn = gcn_stack(a_hat, params)
            ctx.h_g = m_g[:, None] * ctx.gcn[-1]
            ctx.z_g = _spatial_siam(ctx.h_g, params)
        return ctx

    def unroll(self, params: ParameterSet, ctx: Context, observations, state0=None, keep_tape=True):
        """Run T steps; returns (Unrolled, tape). The tape feeds ``backward``."""
        c = self.config
        dt = params["feat.W"].dtype
        h, cell = state0 if state0 is not None else self.initial_state(dt)
        enc = np.stack([encode_observation(o) for o in observations]).astype(dt)
        T = enc.shape[0]
        x = L.relu(L.dense(enc, params["feat.W"], params["feat.b"]))
        s = L.relu(L.dense(x, params["siam.W"], params["siam.b"]))
        cat_i = np.concatenate([s, np.broadcast_to(ctx.s_g, s.shape)], axis=-1)
        fused = L.relu(L.dense(cat_i, params["fuse.W"], params["fuse.b"]))
        tape = {"enc": enc, "x": x, "s": s, "cat_i": cat_i, "fused": fused}
        att = None
        if c.use_kg:
            m_t = np.stack([o.visible for o in observations]).astype(dt)
            r_z = np.maximum(m_t, ctx.m_g[None, :])
            H = ctx.gcn[-1]
            h_t = m_t[:, :, None] * H[None]
            z_t = _spatial_siam(h_t, params)
            cat_q = np.concatenate([z_t, np.broadcast_to(ctx.z_g, z_t.shape)], axis=-1)
            q = L.dense(cat_q, params["sfuse.W"], params["sfuse.b"])
            tape.update(m_t=m_t, r_z=r_z, h_t=h_t, z_t=z_t, cat_q=cat_q, q=q)
            if c.use_attention:
                if not r_z.any(axis=1).all():
                    raise ValueError("attention: no visible object in observation or target")
                scores, u = attention_scores(q, params)
                att = L.softmax(scores, r_z.astype(bool))
                tape.update(u=u, att=att)
                if c.attention_output == "probs":
                    spatial = att
                else:
                    spatial = np.einsum("tv,tvd->td", att, q)
            else:
                cnt = np.maximum(r_z.sum(axis=1, keepdims=True), 1.0)
                tape["cnt"] = cnt
                spatial = np.einsum("tv,tvd->td", r_z, q) / cnt
            xin = np.concatenate([fused, spatial], axis=-1)
        else:
            xin = fused
        hs = np.empty((T, c.d_lstm), dtype=dt)
        caches = []
        for t in range(T):
            h, cell, cache = L.lstm_step(xin[t], h, cell, params["lstm.W"], params["lstm.b"])
            hs[t] = h
            if keep_tape:
                caches.append(cache)
        logits = L.dense(hs, params["actor.W"], params["actor.b"])
        values = L.dense(hs, params["critic.W"], params["critic.b"])[:, 0]
        tape.update(xin=xin, hs=hs, lstm=caches)
        return Unrolled(logits, values, att, (h, cell)), (tape if keep_tape else None)

    def act(self, params: ParameterSet, ctx: Context, obs: Observation, state) -> PolicyOutput:
        out, _ = self.unroll(params, ctx, [obs], state, keep_tape=False)
        att = out.attention[0] if out.attention is not None else None
        return PolicyOutput(out.logits[0], float(out.values[0]), att, out.lstm_state)

    # -- backward ------------------------------------------------------------

    def backward(self, params: ParameterSet, ctx: Context, tape: dict, dlogits, dvalues) -> dict:
        c = self.config
        g = {k: np.zeros_like(v) for k, v in params.items()}
        hs = tape["hs"]
        dlogits = np.asarray(dlogits, dtype=hs.dtype)
        dvalues = np.asarray(dvalues, dtype=hs.dtype)
        dhs, g["actor.W"], g["actor.b"] = L.dense_backward(dlogits, hs, params["actor.W"])
        dv = dvalues[:, None]
        dhs2, g["critic.W"], g["critic.b"] = L.dense_backward(dv, hs, params["critic.W"])
        dhs = dhs + dhs2

        T = hs.shape[0]
        xin = tape["xin"]
        # weight gradients are batched over time after the recurrence
        W = params["lstm.W"]
        nx = xin.shape[1]
        w_h = W[:, nx:]
        dgates = np.empty((T, 4 * c.d_lstm), dtype=hs.dtype)
        dh_next = np.zeros(c.d_lstm, dtype=hs.dtype)
        dc_next = np.zeros(c.d_lstm, dtype=hs.dtype)
        for t in range(T - 1, -1, -1):
            dgates[t], dc_next = L.lstm_gate_backward(dhs[t] + dh_next, dc_next, tape["lstm"][t])
            dh_next = dgates[t] @ w_h
        z = np.stack([cache[0] for cache in tape["lstm"]])
        g["lstm.W"] = dgates.T @ z
        g["lstm.b"] = dgates.sum(axis=0)
        dxin = dgates @ W[:, :nx]

        dfused = dxin[:, : c.d_fused]
        if c.use_kg:
            self._backward_spatial(params, ctx, tape, dxin[:, c.d_fused :], g)

        # visual branch
        dpre = L.relu_backward(dfused, tape["fused"])
        dcat, g["fuse.W"], g["fuse.b"] = L.dense_backward(dpre, tape["cat_i"], params["fuse.W"])
        ds = c.d_siam
        ds_t, ds_g = dcat[:, :ds], dcat[:, ds:].sum(axis=0)
        dpre = L.relu_backward(ds_t, tape["s"])
        dx, dW, db = L.dense_backward(dpre, tape["x"], params["siam.W"])
        dpre_g = L.relu_backward(ds_g, ctx.s_g)
        dx_g, dW_g, db_g = L.dense_backward(dpre_g[None], ctx.x_g[None], params["siam.W"])
        g["siam.W"] += dW + dW_g
        g["siam.b"] += db + db_g
        dpre = L.relu_backward(dx, tape["x"])
        _, dW, db = L.dense_backward(dpre, tape["enc"], params["feat.W"])
        dpre_g = L.relu_backward(dx_g[0], ctx.x_g)
        _, dW_g, db_g = L.dense_backward(dpre_g[None], ctx.enc_g[None], params["feat.W"])
        g["feat.W"] += dW + dW_g
        g["feat.b"] += db + db_g
        return g

    def _backward_spatial(self, params, ctx, tape, dspatial, g):
        c = self.config
        q = tape["q"]
        if c.use_attention:
            att = tape["att"]
            if c.attention_output == "probs":
                datt = dspatial
                dq = np.zeros_like(q)
            else:
                datt = np.einsum("td,tvd->tv", dspatial, q)
                dq = att[:, :, None] * dspatial[:, None, :]
            dscores = L.softmax_backward(datt, att)
            u = tape["u"]
            w2 = params["att.W2"][0]
            g["att.W2"] += np.einsum("tv,tvd->d", dscores, u)[None]
            du = dscores[:, :, None] * w2
            dpre = L.relu_backward(du, u)
            dq2, g["att.W1"], g["att.b1"] = L.dense_backward(dpre, q, params["att.W1"])
            dq = dq + dq2
        else:
            dq = tape["r_z"][:, :, None] * (dspatial / tape["cnt"])[:, None, :]
        dcat, g["sfuse.W"], g["sfuse.b"] = L.dense_backward(dq, tape["cat_q"], params["sfuse.W"])
        d = c.d_spatial_siam
        dz_t, dz_g = dcat[..., :d], dcat[..., d:].sum(axis=0)
        dpre = L.relu_backward(dz_t, tape["z_t"])
        dh_t, dW, db = L.dense_backward(dpre, tape["h_t"], params["ssiam.W"])
        dpre_g = L.relu_backward(dz_g, ctx.z_g)
        dh_g, dW_g, db_g = L.dense_backward(dpre_g, ctx.h_g, params["ssiam.W"])
        g["ssiam.W"] += dW + dW_g
        g["ssiam.b"] += db + db_g
        dH = (tape["m_t"][:, :, None] * dh_t).sum(axis=0) + ctx.m_g[:, None] * dh_g
        h_in = [np.eye(ctx.a_hat.shape[0], dtype=ctx.a_hat.dtype)] + ctx.gcn[:-1]
        for k in (3, 2, 1):
            dH, g[f"gcn.W{k}"] = L.gcn_layer_backward(dH, ctx.a_hat, h_in[k - 1], params[f"gcn.W{k}"], ctx.gcn[k - 1])


def forward(obs, target_obs, graph, lstm_state, params: ParameterSet, model: PolicyModel | None = None):
    """One policy step from scratch (no cached context)."""
    model = model or PolicyModel()
    ctx = model.context(params, target_obs, graph)
    return model.act(params, ctx, obs, lstm_state)
