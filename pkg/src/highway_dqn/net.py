"""Feed-forward Q-network with optional duelling head and noisy layers.

Everything is float64 numpy with hand-written analytic gradients: the nets
are desk-scale (128-128-3), so precision is cheap and the finite-difference
gradient checks in the test suite can be tight.
"""
from __future__ import annotations

import json
import struct
import zlib

import numpy as np

CHECKPOINT_MAGIC = b"HWQN"
CHECKPOINT_VERSION = 1

SIGMA0 = 0.5  # noisy-layer scale initializer: sigma = SIGMA0 / sqrt(fan_in)


class DimensionMismatch(ValueError):
    pass


class NoNoisyLayers(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def _f(x: np.ndarray) -> np.ndarray:
    """Factorized-noise transform sign(x)*sqrt(|x|)."""
    return np.sign(x) * np.sqrt(np.abs(x))


def duelling_aggregate(v, adv):
    """Q_a = v + adv_a - mean(adv); keeps the advantage stream identifiable."""
    v = np.asarray(v, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return v + adv - adv.mean(axis=-1, keepdims=adv.ndim > 1)


class DenseLayer:
    kind = "dense"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w
        self.b = b

    @classmethod
    def create(cls, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        return cls(w, b)

    @property
    def fan_in(self):
        return self.w.shape[0]

    @property
    def fan_out(self):
        return self.w.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w + self.b

    def backward(self, x: np.ndarray, g: np.ndarray):
        return g @ self.w.T, [x.T @ g, g.sum(axis=0)]

    def param_arrays(self):
        return [self.w, self.b]

    def param_names(self):
        return ["w", "b"]

    def state_arrays(self):
        return {}

    def clone(self):
        return DenseLayer(self.w.copy(), self.b.copy())


class NoisyDenseLayer:
    """Dense layer with learnable factorized parameter noise.

    Effective weights are mu + sigma * eps where eps has the rank-1 structure
    outer(f(eps_in), f(eps_out)). With eps at zero (never sampled, or reset
    via zero_noise) the layer behaves exactly like a dense layer over mu.
    """

    kind = "noisy"

    def __init__(self, mu_w, mu_b, sigma_w, sigma_b, eps_in=None, eps_out=None):
        self.mu_w = mu_w
        self.mu_b = mu_b
        self.sigma_w = sigma_w
        self.sigma_b = sigma_b
        self.eps_in = np.zeros(mu_w.shape[0]) if eps_in is None else eps_in
        self.eps_out = np.zeros(mu_w.shape[1]) if eps_out is None else eps_out

    @classmethod
    def create(cls, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        mu_w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        mu_b = np.zeros(fan_out)
        sigma_w = np.full((fan_in, fan_out), SIGMA0 / np.sqrt(fan_in))
        sigma_b = np.full(fan_out, SIGMA0 / np.sqrt(fan_in))
        return cls(mu_w, mu_b, sigma_w, sigma_b)

    @property
    def fan_in(self):
        return self.mu_w.shape[0]

    @property
    def fan_out(self):
        return self.mu_w.shape[1]

    def effective_weight(self):
        return self.mu_w + self.sigma_w * np.outer(_f(self.eps_in), _f(self.eps_out))

    def effective_bias(self):
        return self.mu_b + self.sigma_b * _f(self.eps_out)

    def sample(self, rng: np.random.Generator):
        self.eps_in = rng.standard_normal(self.fan_in)
        self.eps_out = rng.standard_normal(self.fan_out)

    def zero_noise(self):
        self.eps_in = np.zeros(self.fan_in)
        self.eps_out = np.zeros(self.fan_out)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.effective_weight() + self.effective_bias()

    def backward(self, x: np.ndarray, g: np.ndarray):
        # gradients w.r.t. mu and sigma hold the sampled eps fixed
        dw = x.T @ g
        db = g.sum(axis=0)
        eps_w = np.outer(_f(self.eps_in), _f(self.eps_out))
        grads = [dw, db, dw * eps_w, db * _f(self.eps_out)]
        return g @ self.effective_weight().T, grads

    def param_arrays(self):
        return [self.mu_w, self.mu_b, self.sigma_w, self.sigma_b]

    def param_names(self):
        return ["mu_w", "mu_b", "sigma_w", "sigma_b"]

    def state_arrays(self):
        return {"eps_in": self.eps_in, "eps_out": self.eps_out}

    def clone(self):
        return NoisyDenseLayer(self.mu_w.copy(), self.mu_b.copy(),
                               self.sigma_w.copy(), self.sigma_b.copy(),
                               self.eps_in.copy(), self.eps_out.copy())


def _relu(x):
    return np.maximum(0.0, x)


def _relu_grad(pre):
    return (pre > 0.0).astype(float)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(pre):
    return 1.0 - np.tanh(pre) ** 2


_ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (_tanh, _tanh_grad)}


class Network:
    """MLP mapping an observation vector to one Q-value per action.

    head='plain' ends in a single linear layer; head='duelling' splits into
    a value stream (->1) and an advantage stream (->actions) aggregated as
    Q = v + adv - mean(adv). noisy=True replaces the final two affine layers
    (both duelling streams count as the final layer); noisy_all replaces all.
    """

    def __init__(self, input_dim: int, hidden=(128, 128), output_dim: int = 3,
                 head: str = "plain", noisy: bool = False, noisy_all: bool = False,
                 activation: str = "relu", rng: np.random.Generator | None = None):
        if head not in ("plain", "duelling"):
            raise ValueError(f"unknown head {head!r}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.output_dim = int(output_dim)
        self.head = head
        self.noisy = bool(noisy)
        self.noisy_all = bool(noisy_all)
        self.activation = activation
        self._act, self._act_grad = _ACTIVATIONS[activation]

        rng = np.random.default_rng(0) if rng is None else rng
        n_affine = len(self.hidden) + 1

        def layer_cls(pos):
            if not self.noisy:
                return DenseLayer
            if self.noisy_all or pos >= n_affine - 2:
                return NoisyDenseLayer
            return DenseLayer

        dims = (self.input_dim, *self.hidden)
        self.trunk = [
            layer_cls(i).create(dims[i], dims[i + 1], rng) for i in range(len(self.hidden))
        ]
        last = dims[-1]
        head_cls = layer_cls(n_affine - 1)
        if head == "plain":
            self.head_layers = {"out": head_cls.create(last, self.output_dim, rng)}
        else:
            self.head_layers = {
                "value": head_cls.create(last, 1, rng),
                "adv": head_cls.create(last, self.output_dim, rng),
            }
        self._cache = None

    # -- structure ---------------------------------------------------------

    def named_layers(self):
        for i, layer in enumerate(self.trunk):
            yield f"trunk{i}", layer
        for name in sorted(self.head_layers):
            yield f"head.{name}", self.head_layers[name]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for _, layer in self.named_layers():
            out.extend(layer.param_arrays())
        return out

    @property
    def has_noisy(self) -> bool:
        return any(layer.kind == "noisy" for _, layer in self.named_layers())

    def sample_noise(self, rng: np.random.Generator):
        if not self.has_noisy:
            raise NoNoisyLayers("network has no noisy layers")
        for _, layer in self.named_layers():
            if layer.kind == "noisy":
                layer.sample(rng)

    def zero_noise(self):
        for _, layer in self.named_layers():
            if layer.kind == "noisy":
                layer.zero_noise()

    def clone(self) -> "Network":
        dup = Network.__new__(Network)
        dup.input_dim = self.input_dim
        dup.hidden = self.hidden
        dup.output_dim = self.output_dim
        dup.head = self.head
        dup.noisy = self.noisy
        dup.noisy_all = self.noisy_all
        dup.activation = self.activation
        dup._act, dup._act_grad = _ACTIVATIONS[self.activation]
        dup.trunk = [layer.clone() for layer in self.trunk]
        dup.head_layers = {k: v.clone() for k, v in self.head_layers.items()}
        dup._cache = None
        return dup

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"expected input dim {self.input_dim}, got shape {x.shape}"
            )
        acts = [batch]
        pres = []
        h = batch
        for layer in self.trunk:
            pre = layer.forward(h)
            pres.append(pre)
            h = self._act(pre)
            acts.append(h)
        if self.head == "plain":
            q = self.head_layers["out"].forward(h)
            head_cache = None
        else:
            v = self.head_layers["value"].forward(h)
            adv = self.head_layers["adv"].forward(h)
            q = duelling_aggregate(v, adv)
            head_cache = (v, adv)
        self._cache = (acts, pres, head_cache)
        return q[0] if single else q

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(q * grad_out) for every parameter, in parameters() order."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts, pres, head_cache = self._cache
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != (acts[0].shape[0], self.output_dim):
            raise DimensionMismatch(
                f"expected grad shape ({acts[0].shape[0]}, {self.output_dim}), got {g.shape}"
            )

        head_grads = {}
        h_last = acts[-1]
        if self.head == "plain":
            g_h, head_grads["out"] = self.head_layers["out"].backward(h_last, g)
        else:
            gv = g.sum(axis=1, keepdims=True)
            ga = g - g.mean(axis=1, keepdims=True)
            gx_v, head_grads["value"] = self.head_layers["value"].backward(h_last, gv)
            gx_a, head_grads["adv"] = self.head_layers["adv"].backward(h_last, ga)
            g_h = gx_v + gx_a

        trunk_grads = [None] * len(self.trunk)
        for i in range(len(self.trunk) - 1, -1, -1):
            g_pre = g_h * self._act_grad(pres[i])
            g_h, trunk_grads[i] = self.trunk[i].backward(acts[i], g_pre)

        out = []
        for i in range(len(self.trunk)):
            out.extend(trunk_grads[i])
        for name in sorted(self.head_layers):
            out.extend(head_grads[name])
        return out

    # -- checkpoint ----------------------------------------------------------

    def save_bytes(self, extra: dict | None = None) -> bytes:
        records = []
        for lname, layer in self.named_layers():
            for pname, arr in zip(layer.param_names(), layer.param_arrays()):
                records.append((f"{lname}.{pname}", arr))
            for sname, arr in sorted(layer.state_arrays().items()):
                records.append((f"{lname}.{sname}", arr))
        meta = {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "head": self.head,
            "noisy": self.noisy,
            "noisy_all": self.noisy_all,
            "activation": self.activation,
            "records": [{"name": n, "shape": list(a.shape)} for n, a in records],
            "extra": extra or {},
        }
        meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        out = bytearray()
        out += CHECKPOINT_MAGIC
        out += struct.pack("<I", CHECKPOINT_VERSION)
        out += struct.pack("<I", len(meta_bytes))
        out += meta_bytes
        for _, arr in records:
            data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            out += struct.pack("<Q", len(data))
            out += data
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        return bytes(out)

    def save(self, path, extra: dict | None = None):
        with open(path, "wb") as fh:
            fh.write(self.save_bytes(extra))

    @classmethod
    def load_bytes(cls, blob: bytes) -> tuple["Network", dict]:
        if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError("not a network checkpoint")
        (crc,) = struct.unpack("<I", blob[-4:])
        if zlib.crc32(blob[:-4]) != crc:
            raise CheckpointError("checkpoint checksum mismatch")
        (version,) = struct.unpack("<I", blob[4:8])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", blob[8:12])
        meta = json.loads(blob[12:12 + meta_len].decode())
        net = cls(
            meta["input_dim"], tuple(meta["hidden"]), meta["output_dim"],
            head=meta["head"], noisy=meta["noisy"], noisy_all=meta["noisy_all"],
            activation=meta["activation"],
        )
        arrays = {f"{ln}.{pn}": (layer, pn)
                  for ln, layer in net.named_layers()
                  for pn in layer.param_names() + sorted(layer.state_arrays())}
        pos = 12 + meta_len
        for rec in meta["records"]:
            (nbytes,) = struct.unpack("<Q", blob[pos:pos + 8])
            pos += 8
            arr = np.frombuffer(blob[pos:pos + nbytes], dtype="<f8").reshape(rec["shape"]).copy()
            pos += nbytes
            if rec["name"] not in arrays:
                raise CheckpointError(f"unexpected record {rec['name']}")
            layer, pname = arrays[rec["name"]]
            current = getattr(layer, pname)
            if current.shape != arr.shape:
                raise CheckpointError(f"shape mismatch for {rec['name']}")
            setattr(layer, pname, arr)
        return net, meta.get("extra", {})

    @classmethod
    def load(cls, path) -> tuple["Network", dict]:
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())
