"""Networks that emit mixture parameters, positive scalars, or toy samples.

Three small tanh MLPs built on :mod:`sgm.autodiff`:

* :class:`ImogNetwork` maps a scanning input (a slot index standing in for a
  one-hot vector, a uniform noise vector, optionally a conditioning point)
  to one Gaussian component (w, m, A). Averaged over slots and noise it
  parameterizes a continuum mixture; frozen noise draws materialize it as a
  :class:`~sgm.mixture.FiniteMixture`.
* :class:`RatioNetwork` maps points to a strictly positive scalar, used for
  divergence estimation and as the adversarial critic.
* :class:`GeneratorNetwork` pushes uniform noise through to points, used by
  the toy adversarial mode.

Positivity is enforced structurally: weights are the exponential of a
tanh-bounded pre-activation (so their dynamic range is finite and training
cannot push them to 0 or infinity), variances are a softplus plus the
variance floor. Means are an affine remap of an unbounded head; when a data
summary is supplied the remap is the data bounding box, which keeps every
freshly initialized component inside the data and spares the cold start.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import UsageError

_MAGIC = "sgm-checkpoint-v1"


@dataclass
class ScanInput:
    """One batch of scanning vectors.

    indices : (B,) int slot indices (the one-hot component selector)
    noise : (B, noise_dim) uniform noise
    condition : (B, cond_dim) conditioning points, only in conditional mode
    """

    indices: np.ndarray
    noise: np.ndarray
    condition: Optional[np.ndarray] = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        self.noise = np.atleast_2d(np.asarray(self.noise, dtype=float))
        if self.condition is not None:
            self.condition = np.atleast_2d(np.asarray(self.condition, dtype=float))
        if self.indices.ndim != 1 or self.noise.shape[0] != self.indices.shape[0]:
            raise UsageError("indices and noise disagree on batch size")
        if self.condition is not None and self.condition.shape[0] != self.indices.shape[0]:
            raise UsageError("condition batch size mismatch")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _inv_softplus(y: float) -> float:
    # solve softplus(x) = y for y > 0
    return float(np.log(np.expm1(y))) if y < 30.0 else float(y)


def _summary_box(data: Optional[np.ndarray], dim: int):
    """Center and halfwidth of the data bounding box; identity map if no data."""
    if data is None:
        return np.zeros(dim), np.ones(dim)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != dim:
        raise UsageError(f"data summary has dim {data.shape[1]}, expected {dim}")
    lo, hi = data.min(axis=0), data.max(axis=0)
    half = np.maximum((hi - lo) / 2.0, 1e-6)
    return (lo + hi) / 2.0, half


class ImogNetwork:
    """Scan-to-component network.

    Parameters
    ----------
    n_slots : number of one-hot component slots (the N of the model)
    out_dim : dimension of the emitted Gaussians
    noise_dim : width of the uniform scanning noise
    cond_dim : width of the conditioning input; 0 means unconditional
    hidden : sizes of the two tanh layers
    var_floor : hard lower bound added to every emitted variance
    weight_cap : bound on |log w|; weights live in [e^-cap, e^cap]
    weight_scale : fixed multiplier on emitted weights; the costs are
        invariant to it, which the tests exploit
    data : optional sample array; its bounding box becomes the mean remap
    seed : initialization seed
    """

    kind = "imog"

    def __init__(
        self,
        n_slots: int,
        out_dim: int,
        noise_dim: int = 1,
        cond_dim: int = 0,
        hidden: Sequence[int] = (64, 64),
        var_floor: float = 1e-6,
        weight_cap: float = 4.0,
        weight_scale: float = 1.0,
        data: Optional[np.ndarray] = None,
        seed: int = 0,
        init_spread: float = 0.35,
    ):
        if n_slots < 1 or out_dim < 1 or noise_dim < 1 or cond_dim < 0:
            raise UsageError("bad network sizes")
        if var_floor <= 0.0:
            raise UsageError("var_floor must be positive")
        if not 0.0 < init_spread <= 1.0:
            raise UsageError("init_spread must be in (0, 1]")
        h1, h2 = hidden
        self.n_slots, self.out_dim = int(n_slots), int(out_dim)
        self.noise_dim, self.cond_dim = int(noise_dim), int(cond_dim)
        self.hidden = (int(h1), int(h2))
        self.var_floor = float(var_floor)
        self.weight_cap = float(weight_cap)
        self.weight_scale = float(weight_scale)
        self.seed = int(seed)
        self.init_spread = float(init_spread)
        self.out_center, self.out_half = _summary_box(data, out_dim)
        rng = np.random.default_rng(seed)
        # embedding rows spread wide so distinct slots emit distinct components
        self.emb = ad.param(rng.uniform(-1.0, 1.0, size=(n_slots, h1)))
        self.w_noise = ad.param(_glorot(rng, noise_dim, h1))
        self.w_cond = ad.param(_glorot(rng, cond_dim, h1)) if cond_dim else None
        self.b1 = ad.param(np.zeros(h1))
        self.w2 = ad.param(_glorot(rng, h1, h2))
        self.b2 = ad.param(np.zeros(h2))
        self.head_w = ad.param(_glorot(rng, h2, 1) * 0.1)
        self.bias_w = ad.param(np.zeros(1))
        # mean head kept small enough that |raw| < 1, i.e. inside the box
        self.head_m = ad.param(rng.uniform(-0.5 / h2, 0.5 / h2, size=(h2, out_dim)))
        self.bias_m = ad.param(np.zeros(out_dim))
        # per-slot mean offsets seeded at random data rows, the classic
        # mixture init; without it every slot starts at one shared point and
        # scattered multimodal targets take forever to get covered
        if data is not None:
            rows = np.atleast_2d(np.asarray(data, dtype=float))
            pick = rows[rng.integers(0, rows.shape[0], size=n_slots), -out_dim:]
            raw0 = 0.95 * (pick - self.out_center) / self.out_half
        else:
            raw0 = rng.uniform(-0.49, 0.49, size=(n_slots, out_dim))
        self.slot_m = ad.param(raw0)
        self.head_a = ad.param(_glorot(rng, h2, out_dim) * 0.1)
        # initial component width as a fraction of the data half-extent;
        # narrow targets converge faster when this starts near their scale
        init_var = max((init_spread * float(self.out_half.mean())) ** 2,
                       4.0 * var_floor)
        self.bias_a = ad.param(np.full(out_dim, _inv_softplus(init_var)))

    @property
    def params(self) -> list[ad.Tensor]:
        ps = [self.emb, self.w_noise]
        if self.w_cond is not None:
            ps.append(self.w_cond)
        ps += [self.b1, self.w2, self.b2, self.head_w, self.bias_w,
               self.head_m, self.bias_m, self.slot_m, self.head_a, self.bias_a]
        return ps

    def emit(self, scan: ScanInput):
        """Forward one scan batch to component parameters (w, m, A) tensors."""
        if self.cond_dim == 0 and scan.condition is not None:
            raise UsageError("this network is unconditional; drop the condition")
        if self.cond_dim > 0 and scan.condition is None:
            raise UsageError("this network is conditional; a condition is required")
        if scan.noise.shape[1] != self.noise_dim:
            raise UsageError(f"noise dim {scan.noise.shape[1]} != {self.noise_dim}")
        if scan.indices.min() < 0 or scan.indices.max() >= self.n_slots:
            raise UsageError("slot index out of range")
        pre = ad.add(ad.rows(self.emb, scan.indices),
                     ad.matmul(ad.Tensor(scan.noise), self.w_noise))
        if self.cond_dim:
            if scan.condition.shape[1] != self.cond_dim:
                raise UsageError(f"condition dim {scan.condition.shape[1]} != {self.cond_dim}")
            pre = ad.add(pre, ad.matmul(ad.Tensor(scan.condition), self.w_cond))
        h1 = ad.tanh(ad.add(pre, self.b1))
        h2 = ad.tanh(ad.add(ad.matmul(h1, self.w2), self.b2))
        pre_w = ad.reshape(ad.add(ad.matmul(h2, self.head_w), self.bias_w), (-1,))
        w = ad.mul(ad.exp(ad.mul(ad.tanh(pre_w), self.weight_cap)), self.weight_scale)
        raw_m = ad.add(ad.add(ad.matmul(h2, self.head_m), self.bias_m),
                       ad.rows(self.slot_m, scan.indices))
        m = ad.add(ad.mul(raw_m, self.out_half), self.out_center)
        raw_a = ad.add(ad.matmul(h2, self.head_a), self.bias_a)
        a = ad.add(ad.softplus(raw_a), self.var_floor)
        return w, m, a

    def _config(self) -> dict:
        return {
            "n_slots": self.n_slots, "out_dim": self.out_dim,
            "noise_dim": self.noise_dim, "cond_dim": self.cond_dim,
            "hidden": list(self.hidden), "var_floor": self.var_floor,
            "weight_cap": self.weight_cap, "weight_scale": self.weight_scale,
            "seed": self.seed, "init_spread": self.init_spread,
            "out_center": [float(x) for x in self.out_center],
            "out_half": [float(x) for x in self.out_half],
        }

    @classmethod
    def _from_config(cls, cfg: dict) -> "ImogNetwork":
        net = cls(cfg["n_slots"], cfg["out_dim"], cfg["noise_dim"], cfg["cond_dim"],
                  tuple(cfg["hidden"]), cfg["var_floor"], cfg["weight_cap"],
                  cfg["weight_scale"], data=None, seed=cfg["seed"],
                  init_spread=cfg["init_spread"])
        net.out_center = np.array(cfg["out_center"], dtype=float)
        net.out_half = np.array(cfg["out_half"], dtype=float)
        return net


class RatioNetwork:
    """Points to a strictly positive scalar, bounded to e^[-cap, cap] times
    ``output_scale``. The divergence cost is invariant to ``output_scale``."""

    kind = "ratio"

    def __init__(
        self,
        in_dim: int,
        hidden: Sequence[int] = (64, 64),
        output_cap: float = 6.0,
        output_scale: float = 1.0,
        seed: int = 0,
    ):
        if in_dim < 1:
            raise UsageError("bad input dimension")
        h1, h2 = hidden
        self.in_dim = int(in_dim)
        self.hidden = (int(h1), int(h2))
        self.output_cap = float(output_cap)
        self.output_scale = float(output_scale)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.w1 = ad.param(_glorot(rng, in_dim, h1))
        self.b1 = ad.param(np.zeros(h1))
        self.w2 = ad.param(_glorot(rng, h1, h2))
        self.b2 = ad.param(np.zeros(h2))
        self.w3 = ad.param(_glorot(rng, h2, 1) * 0.1)
        self.b3 = ad.param(np.zeros(1))

    @property
    def params(self) -> list[ad.Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def forward(self, x) -> ad.Tensor:
        x = x if isinstance(x, ad.Tensor) else ad.Tensor(np.atleast_2d(np.asarray(x, dtype=float)))
        if x.data.shape[1] != self.in_dim:
            raise UsageError(f"input dim {x.data.shape[1]} != {self.in_dim}")
        h1 = ad.tanh(ad.add(ad.matmul(x, self.w1), self.b1))
        h2 = ad.tanh(ad.add(ad.matmul(h1, self.w2), self.b2))
        pre = ad.reshape(ad.add(ad.matmul(h2, self.w3), self.b3), (-1,))
        return ad.mul(ad.exp(ad.mul(ad.tanh(pre), self.output_cap)), self.output_scale)

    def pre_scores(self, x: np.ndarray) -> np.ndarray:
        """Pre-activations before the tanh cap, plain numpy (no tape)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h1 = np.tanh(x @ self.w1.data + self.b1.data)
        h2 = np.tanh(h1 @ self.w2.data + self.b2.data)
        return (h2 @ self.w3.data + self.b3.data).ravel()

    def _config(self) -> dict:
        return {
            "in_dim": self.in_dim, "hidden": list(self.hidden),
            "output_cap": self.output_cap, "output_scale": self.output_scale,
            "seed": self.seed,
        }

    @classmethod
    def _from_config(cls, cfg: dict) -> "RatioNetwork":
        return cls(cfg["in_dim"], tuple(cfg["hidden"]), cfg["output_cap"],
                   cfg["output_scale"], cfg["seed"])


class GeneratorNetwork:
    """Uniform noise through a fixed broad base map plus a trainable residual.

    The base map (noise skip and output offset, excluded from ``params``)
    anchors a cloud of a couple of box widths around the data; the small
    MLP learns a bounded displacement on top. The critic only learns the
    ratio where samples land, so the cloud must keep surrounding the data
    from all sides: were the whole footprint trainable, it would drift or
    collapse, and the critic's surface would degenerate into a ramp that
    scores some far-off directions below the data itself."""

    kind = "generator"

    def __init__(
        self,
        out_dim: int,
        noise_dim: int = 2,
        hidden: Sequence[int] = (64, 64),
        data: Optional[np.ndarray] = None,
        seed: int = 0,
    ):
        h1, h2 = hidden
        self.out_dim, self.noise_dim = int(out_dim), int(noise_dim)
        self.hidden = (int(h1), int(h2))
        self.seed = int(seed)
        self.out_center, self.out_half = _summary_box(data, out_dim)
        rng = np.random.default_rng(seed)
        self.w1 = ad.param(_glorot(rng, noise_dim, h1))
        self.b1 = ad.param(np.zeros(h1))
        self.w2 = ad.param(_glorot(rng, h1, h2))
        self.b2 = ad.param(np.zeros(h2))
        self.w3 = ad.param(_glorot(rng, h2, out_dim))
        # structural, not trainable: the offset and the noise-to-output skip
        # fix the cloud's footprint. 1.2 keeps the tanh off its flats
        self.b3 = ad.Tensor(rng.uniform(-0.5, 0.5, size=out_dim))
        self.w_skip = ad.Tensor(1.2 * np.eye(noise_dim, out_dim))

    @property
    def params(self) -> list[ad.Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3]

    def forward(self, u) -> ad.Tensor:
        u = u if isinstance(u, ad.Tensor) else ad.Tensor(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.data.shape[1] != self.noise_dim:
            raise UsageError(f"noise dim {u.data.shape[1]} != {self.noise_dim}")
        uc = ad.sub(ad.mul(u, 2.0), 1.0)  # uniform(0,1) noise, centered
        h1 = ad.tanh(ad.add(ad.matmul(uc, self.w1), self.b1))
        h2 = ad.tanh(ad.add(ad.matmul(h1, self.w2), self.b2))
        pre = ad.add(ad.matmul(h2, self.w3), ad.matmul(uc, self.w_skip))
        raw = ad.tanh(ad.add(pre, self.b3))
        return ad.add(ad.mul(raw, 2.6 * self.out_half), self.out_center)

    def _config(self) -> dict:
        return {
            "out_dim": self.out_dim, "noise_dim": self.noise_dim,
            "hidden": list(self.hidden), "seed": self.seed,
            "out_center": [float(x) for x in self.out_center],
            "out_half": [float(x) for x in self.out_half],
        }

    @classmethod
    def _from_config(cls, cfg: dict) -> "GeneratorNetwork":
        net = cls(cfg["out_dim"], cfg["noise_dim"], tuple(cfg["hidden"]),
                  data=None, seed=cfg["seed"])
        net.out_center = np.array(cfg["out_center"], dtype=float)
        net.out_half = np.array(cfg["out_half"], dtype=float)
        return net


_KINDS = {"imog": ImogNetwork, "ratio": RatioNetwork, "generator": GeneratorNetwork}


# ---------------------------------------------------------------------------
# parameter vector plumbing and checkpoints
# ---------------------------------------------------------------------------

def param_vector(net) -> np.ndarray:
    return np.concatenate([p.data.ravel() for p in net.params])


def set_param_vector(net, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=float)
    pos = 0
    total = sum(p.data.size for p in net.params)
    if vector.shape != (total,):
        raise UsageError(f"parameter vector has size {vector.size}, expected {total}")
    for p in net.params:
        n = p.data.size
        p.data = vector[pos:pos + n].reshape(p.data.shape).copy()
        pos += n


def add_to_params(net, delta: np.ndarray) -> None:
    set_param_vector(net, param_vector(net) + delta)


def save_checkpoint(path, net) -> None:
    """One JSON header line (kind, sizes, seeds), then the raw parameter
    vector as little-endian float64. Loading restores bit-exact forwards."""
    header = {
        "magic": _MAGIC,
        "kind": net.kind,
        "config": net._config(),
        "n_params": int(param_vector(net).size),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(param_vector(net).astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise UsageError(f"not a checkpoint file: {path}") from exc
    if header.get("magic") != _MAGIC:
        raise UsageError(f"not a checkpoint file: {path}")
    cls = _KINDS[header["kind"]]
    net = cls._from_config(header["config"])
    vector = np.frombuffer(blob, dtype="<f8")
    if vector.size != header["n_params"]:
        raise UsageError(
            f"checkpoint truncated: {vector.size} of {header['n_params']} parameters"
        )
    set_param_vector(net, vector.astype(float))
    return net
