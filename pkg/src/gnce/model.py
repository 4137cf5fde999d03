"""Message-passing network over featurized queries, trained to regress the
natural log of a query's cardinality.

Three message functions are supported:

* ``tpn`` (default): per directed edge s -> o one message
  ReLU(W . (x_o | e | x_s)) is computed and added to BOTH endpoints, so the
  network sees edge direction through the fixed object-predicate-subject
  concatenation order while information still flows both ways.
* ``tpn_undirected``: each endpoint receives ReLU(W . (x_self | e | x_other)),
  which erases direction.
* ``gineconv``: each endpoint i receives ReLU(x_j + e) from its neighbor j,
  with a fixed (1 + eps) factor on the self term and no W.

Every layer applies a two-affine transform with one interior ReLU to the
summed representation. After the final layer node states are sum-pooled per
graph and a two-affine head with interior ReLU produces the scalar log
estimate.

Forward passes run on disjoint unions of query graphs so a whole batch is a
handful of matrix products. Gradients are computed in closed form (reverse
mode, float64 throughout) and applied with Adam. Undirected message
functions accumulate per-node sums in (node, edge) order, which keeps the
output bit-identical when an edge's direction flips; the directed variant
uses the same ordering so results never depend on incidental memory layout.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError, ConfigMismatchError, UsageError
from .featurizer import Featurizer, QueryFeaturization
from .queries import QueryGraph
from .seeding import (STAGE_FEATURIZE, STAGE_MODEL_INIT, STAGE_SHUFFLE,
                      STAGE_UNSEEN, rng_for)

MODEL_MAGIC = b"GNCEMDL1"

MESSAGE_KINDS = ("tpn", "tpn_undirected", "gineconv")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


FEATURIZATION_KINDS = ("embeddings", "binary")


@dataclass(frozen=True, slots=True)
class GnceConfig:
    """Architecture and training hyperparameters.

    input_dim must match the featurizer output width (embedding dim + 1, or
    id width + 1 for the binary variant); ``featurization`` records which of
    the two a checkpoint was trained with. epsilon only matters for gineconv
    and is fixed, never trained.
    """

    input_dim: int = 101
    hidden_dim: int = 101
    layers: int = 2
    message: str = "tpn"
    featurization: str = "embeddings"
    epsilon: float = 0.0
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.message not in MESSAGE_KINDS:
            raise UsageError(f"message must be one of {MESSAGE_KINDS}")
        if self.featurization not in FEATURIZATION_KINDS:
            raise UsageError(
                f"featurization must be one of {FEATURIZATION_KINDS}")
        if self.input_dim < 1 or self.hidden_dim < 1 or self.layers < 1:
            raise UsageError("input_dim, hidden_dim, layers must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise UsageError("bad training hyperparameters")


@dataclass(slots=True)
class _Batch:
    x: np.ndarray            # (N, D) node features
    src: np.ndarray          # (M,) subject node per edge
    dst: np.ndarray          # (M,) object node per edge
    e: np.ndarray            # (M, D) edge features
    edge_key: np.ndarray     # (M,) accumulation tiebreak, direction-free
    graph_idx: np.ndarray    # (N,) owning graph per node
    n_graphs: int


def pack_batch(feats: Sequence[QueryFeaturization], input_dim: int) -> _Batch:
    """Concatenate featurizations into one disjoint graph."""
    xs, es, srcs, dsts, keys, gidx = [], [], [], [], [], []
    node_off = 0
    edge_off = 0
    for g, f in enumerate(feats):
        if f.dim != input_dim:
            raise ConfigMismatchError(
                f"featurization width {f.dim} != model input_dim {input_dim}")
        xs.append(f.node_features)
        es.append(f.edge_features)
        srcs.append(f.edge_index[0] + node_off)
        dsts.append(f.edge_index[1] + node_off)
        keys.append(np.arange(edge_off, edge_off + f.n_edges, dtype=np.int64))
        gidx.append(np.full(f.n_nodes, g, dtype=np.int64))
        node_off += f.n_nodes
        edge_off += f.n_edges
    return _Batch(
        x=np.concatenate(xs, axis=0),
        src=np.concatenate(srcs),
        dst=np.concatenate(dsts),
        e=np.concatenate(es, axis=0),
        edge_key=np.concatenate(keys),
        graph_idx=np.concatenate(gidx),
        n_graphs=len(feats),
    )


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _segment_sum(values: np.ndarray, recipients: np.ndarray,
                 order_key: np.ndarray, n: int) -> np.ndarray:
    """Sum message rows per recipient node, in (recipient, key) order.

    The deterministic order makes the floating-point accumulation identical
    for any two edge lists carrying the same (recipient, key, row) multiset,
    which covers edge-direction flips under undirected message functions.
    """
    order = np.lexsort((order_key, recipients))
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    np.add.at(out, recipients[order], values[order])
    return out


class GnceModel:
    """Cardinality regressor over featurized query graphs."""

    def __init__(self, config: GnceConfig | None = None, *,
                 zero_head: bool = True) -> None:
        self.config = config if config is not None else GnceConfig()
        cfg = self.config
        rng = rng_for(cfg.seed, STAGE_MODEL_INIT)
        d, h = cfg.input_dim, cfg.hidden_dim
        params: dict[str, np.ndarray] = {}
        for k in range(cfg.layers):
            if cfg.message != "gineconv":
                params[f"msg_w{k}"] = _glorot(rng, d, 3 * d)
            params[f"lin1_w{k}"] = _glorot(rng, d, d)
            params[f"lin1_b{k}"] = np.zeros(d)
            params[f"lin2_w{k}"] = _glorot(rng, d, d)
            params[f"lin2_b{k}"] = np.zeros(d)
        params["head1_w"] = _glorot(rng, h, d)
        params["head1_b"] = np.zeros(h)
        # A zero read-out makes the untrained model predict exactly 0 in log
        # space, i.e. a cardinality of 1, and the first epoch's loss equal the
        # second moment of the targets. Gradient tests disable it so head
        # gradients are exercised from step one.
        if zero_head:
            params["head2_w"] = np.zeros(h)
        else:
            params["head2_w"] = _glorot(rng, 1, h).reshape(h)
        params["head2_b"] = np.zeros(1)
        self.params = params
        self.unseen_vector = (rng_for(cfg.seed, STAGE_UNSEEN).random(d - 1)
                              - 0.5) / max(1, d - 1)
        self._adam_m = {k: np.zeros_like(v) for k, v in params.items()}
        self._adam_v = {k: np.zeros_like(v) for k, v in params.items()}
        self._adam_t = 0

    # -- forward -----------------------------------------------------------

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def _forward(self, b: _Batch) -> tuple[np.ndarray, dict]:
        cfg = self.config
        p = self.params
        d = cfg.input_dim
        x = b.x
        recip = np.concatenate([b.dst, b.src])
        keys = np.concatenate([b.edge_key, b.edge_key])
        layers: list[dict] = []
        for k in range(cfg.layers):
            cache: dict = {}
            if cfg.message == "gineconv":
                pre_to_dst = x[b.src] + b.e
                pre_to_src = x[b.dst] + b.e
                pre = np.concatenate([pre_to_dst, pre_to_src], axis=0)
                msgs = np.maximum(pre, 0.0)
                cache["msg_mask"] = pre > 0.0
                agg = _segment_sum(msgs, recip, keys, x.shape[0])
                s = (1.0 + cfg.epsilon) * x + agg
            else:
                w = p[f"msg_w{k}"]
                if cfg.message == "tpn":
                    cat = np.concatenate([x[b.dst], b.e, x[b.src]], axis=1)
                    zpre = cat @ w.T
                    z = np.maximum(zpre, 0.0)
                    msgs = np.concatenate([z, z], axis=0)
                    cache["cat"] = cat
                    cache["msg_mask"] = zpre > 0.0
                else:
                    cat_dst = np.concatenate([x[b.dst], b.e, x[b.src]], axis=1)
                    cat_src = np.concatenate([x[b.src], b.e, x[b.dst]], axis=1)
                    cat = np.concatenate([cat_dst, cat_src], axis=0)
                    zpre = cat @ w.T
                    msgs = np.maximum(zpre, 0.0)
                    cache["cat"] = cat
                    cache["msg_mask"] = zpre > 0.0
                agg = _segment_sum(msgs, recip, keys, x.shape[0])
                s = x + agg
            t1 = s @ p[f"lin1_w{k}"].T + p[f"lin1_b{k}"]
            r1 = np.maximum(t1, 0.0)
            x = r1 @ p[f"lin2_w{k}"].T + p[f"lin2_b{k}"]
            cache.update(s=s, t1_mask=t1 > 0.0, r1=r1)
            layers.append(cache)
        pooled = np.zeros((b.n_graphs, d), dtype=np.float64)
        np.add.at(pooled, b.graph_idx, x)
        q1 = pooled @ p["head1_w"].T + p["head1_b"]
        r = np.maximum(q1, 0.0)
        out = r @ p["head2_w"] + p["head2_b"][0]
        cache = {"layers": layers, "x_out": x, "pooled": pooled,
                 "q1_mask": q1 > 0.0, "r": r}
        return out, cache

    def forward(self, feats: QueryFeaturization | Sequence[QueryFeaturization]
                ) -> np.ndarray:
        """Log-cardinality estimates for already featurized queries."""
        if isinstance(feats, QueryFeaturization):
            feats = [feats]
        out, _ = self._forward(pack_batch(feats, self.config.input_dim))
        return out

    # -- backward ----------------------------------------------------------

    def loss_and_grads(self, feats: Sequence[QueryFeaturization],
                       targets: np.ndarray
                       ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean squared error against log targets, and its gradient."""
        cfg = self.config
        p = self.params
        b = pack_batch(feats, cfg.input_dim)
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (b.n_graphs,):
            raise UsageError("one target per query required")
        out, cache = self._forward(b)
        resid = out - targets
        loss = float(np.mean(resid ** 2))
        g = b.n_graphs
        grads = {k: np.zeros_like(v) for k, v in p.items()}

        dout = (2.0 / g) * resid
        r = cache["r"]
        grads["head2_w"] += r.T @ dout
        grads["head2_b"][0] += dout.sum()
        dq1 = np.where(cache["q1_mask"], np.outer(dout, p["head2_w"]), 0.0)
        grads["head1_w"] += dq1.T @ cache["pooled"]
        grads["head1_b"] += dq1.sum(axis=0)
        dx = (dq1 @ p["head1_w"])[b.graph_idx]

        recip = np.concatenate([b.dst, b.src])
        m = b.src.shape[0]
        d = cfg.input_dim
        for k in reversed(range(cfg.layers)):
            c = cache["layers"][k]
            grads[f"lin2_w{k}"] += dx.T @ c["r1"]
            grads[f"lin2_b{k}"] += dx.sum(axis=0)
            dt1 = np.where(c["t1_mask"], dx @ p[f"lin2_w{k}"], 0.0)
            grads[f"lin1_w{k}"] += dt1.T @ c["s"]
            grads[f"lin1_b{k}"] += dt1.sum(axis=0)
            ds = dt1 @ p[f"lin1_w{k}"]

            if cfg.message == "gineconv":
                dmsg = np.where(c["msg_mask"], ds[recip], 0.0)
                dx = (1.0 + cfg.epsilon) * ds
                np.add.at(dx, b.src, dmsg[:m])
                np.add.at(dx, b.dst, dmsg[m:])
            elif cfg.message == "tpn":
                # The same message reaches both endpoints, so their
                # gradients meet before the ReLU mask.
                w = p[f"msg_w{k}"]
                dz = np.where(c["msg_mask"], ds[b.dst] + ds[b.src], 0.0)
                grads[f"msg_w{k}"] += dz.T @ c["cat"]
                dcat = dz @ w
                dx = ds.copy()
                np.add.at(dx, b.dst, dcat[:, :d])
                np.add.at(dx, b.src, dcat[:, 2 * d:])
            else:
                w = p[f"msg_w{k}"]
                dmsg = np.where(c["msg_mask"], ds[recip], 0.0)
                grads[f"msg_w{k}"] += dmsg.T @ c["cat"]
                dcat = dmsg @ w
                dx = ds.copy()
                np.add.at(dx, b.dst, dcat[:m, :d])
                np.add.at(dx, b.src, dcat[:m, 2 * d:])
                np.add.at(dx, b.src, dcat[m:, :d])
                np.add.at(dx, b.dst, dcat[m:, 2 * d:])
        return loss, grads

    # -- optimization ------------------------------------------------------

    def _adam_step(self, grads: dict[str, np.ndarray]) -> None:
        self._adam_t += 1
        t = self._adam_t
        lr = self.config.lr
        for k, p in self.params.items():
            g = grads[k]
            m = self._adam_m[k]
            v = self._adam_v[k]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            mhat = m / (1.0 - ADAM_BETA1 ** t)
            vhat = v / (1.0 - ADAM_BETA2 ** t)
            p -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)

    def fit(self, queries: Sequence[QueryGraph], featurizer: Featurizer,
            progress: Callable[[int, float], None] | None = None
            ) -> list[float]:
        """Train on queries carrying true cardinalities; returns the
        per-epoch mean training loss.

        Queries are re-featurized every epoch with a fresh variable-id
        permutation, so the model never sees a stable id for any variable.
        """
        cfg = self.config
        n = len(queries)
        if n == 0:
            raise UsageError("no training queries")
        targets = np.empty(n, dtype=np.float64)
        for i, q in enumerate(queries):
            if q.true_cardinality is None:
                raise UsageError("training queries need true cardinalities")
            targets[i] = np.log(max(1.0, float(q.true_cardinality)))
        history: list[float] = []
        for epoch in range(cfg.epochs):
            order = rng_for(cfg.seed, STAGE_SHUFFLE, epoch).permutation(n)
            total = 0.0
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                feats = [
                    featurizer(queries[i],
                               rng_for(cfg.seed, STAGE_FEATURIZE, epoch, int(i)))
                    for i in idx
                ]
                loss, grads = self.loss_and_grads(feats, targets[idx])
                self._adam_step(grads)
                total += loss * len(idx)
            history.append(total / n)
            if progress is not None:
                progress(epoch, history[-1])
        return history

    # -- prediction --------------------------------------------------------

    def predict_log(self, queries: Sequence[QueryGraph],
                    featurizer: Featurizer,
                    batch_size: int = 256) -> np.ndarray:
        """Log-cardinality estimates with deterministic variable ids."""
        outs = []
        for lo in range(0, len(queries), batch_size):
            feats = [featurizer(q, None)
                     for q in queries[lo:lo + batch_size]]
            outs.append(self.forward(feats))
        if not outs:
            return np.empty(0, dtype=np.float64)
        return np.concatenate(outs)

    def predict(self, queries: Sequence[QueryGraph], featurizer: Featurizer,
                batch_size: int = 256) -> np.ndarray:
        """Cardinality estimates (exp of the log regression output)."""
        return np.exp(self.predict_log(queries, featurizer, batch_size))

    # -- persistence -------------------------------------------------------

    def _tensor_order(self) -> list[str]:
        return sorted(self.params)

    def save(self, path) -> None:
        order = self._tensor_order()
        header = {
            "config": asdict(self.config),
            "adam_t": self._adam_t,
            "order": order,
            "shapes": {k: list(self.params[k].shape) for k in order},
            "unseen_dim": int(self.unseen_vector.shape[0]),
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for group in (self.params, self._adam_m, self._adam_v):
                for k in order:
                    fh.write(group[k].astype("<f8", copy=False).tobytes())
            fh.write(self.unseen_vector.astype("<f8", copy=False).tobytes())

    @classmethod
    def load(cls, path, expected_message: str | None = None) -> "GnceModel":
        """Restore a checkpoint.

        ``expected_message`` guards against using a checkpoint trained with a
        different message function than the caller asked for.
        """
        data = Path(path).read_bytes()
        if data[:8] != MODEL_MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint")
        try:
            (hlen,) = struct.unpack_from("<I", data, 8)
            header = json.loads(data[12:12 + hlen].decode("utf-8"))
            cfg = GnceConfig(**header["config"])
            order = header["order"]
            shapes = {k: tuple(v) for k, v in header["shapes"].items()}
            adam_t = header["adam_t"]
            unseen_dim = header["unseen_dim"]
        except (struct.error, ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint header ({exc})") from exc
        if expected_message is not None and cfg.message != expected_message:
            raise ConfigMismatchError(
                f"{path}: checkpoint uses message function {cfg.message!r}, "
                f"not {expected_message!r}")
        model = cls(cfg)
        if sorted(order) != model._tensor_order() or set(order) != set(shapes):
            raise CheckpointError(f"{path}: tensor inventory does not match config")
        off = 12 + hlen
        try:
            for group in (model.params, model._adam_m, model._adam_v):
                for k in order:
                    shape = shapes[k]
                    if model.params[k].shape != shape:
                        raise CheckpointError(
                            f"{path}: tensor {k} has shape {shape}, "
                            f"expected {model.params[k].shape}")
                    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
                    arr = np.frombuffer(data, dtype="<f8", count=size,
                                        offset=off).reshape(shape)
                    group[k] = arr.astype(np.float64).copy()
                    off += 8 * size
            model.unseen_vector = np.frombuffer(
                data, dtype="<f8", count=unseen_dim, offset=off
            ).astype(np.float64).copy()
            off += 8 * unseen_dim
        except ValueError as exc:
            raise CheckpointError(f"{path}: truncated checkpoint ({exc})") from exc
        if off != len(data):
            raise CheckpointError(f"{path}: trailing bytes in checkpoint")
        if unseen_dim != cfg.input_dim - 1:
            raise CheckpointError(f"{path}: unknown-atom vector has wrong width")
        model._adam_t = adam_t
        return model
