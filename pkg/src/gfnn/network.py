"""Network assembly, forward/backward passes, the frozen-layer feature
cache, and checkpoint serialization.

Two architectures share one layer stack:

    conv1 -> relu -> pool -> conv2 -> relu -> pool -> conv3 -> relu -> pool
          -> flatten -> dense1 -> relu -> dropout -> dense2

`cnn` learns every layer.  `gfnn` copies the fixed kernel bank into conv1
(bias 0) and freezes it, which permits caching the layer-1 output per
sample and skipping that work on every later pass.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (CheckpointError, ConfigError, InternalError, ShapeError,
                     StaleCacheError)
from .kernels import KernelBank
from .ops import (ConvParams, DenseParams, conv2d_backward, conv2d_param_grads,
                  conv2d_same, dense, dense_backward, dropout, im2col3x3,
                  maxpool2_backward, maxpool2_ceil, relu, relu_backward)
from .util import maybe_phase, sha256_of_arrays

ARCHES = ("cnn", "gfnn")
LAYER_NAMES = ("conv1", "conv2", "conv3", "dense1", "dense2")

CHECKPOINT_MAGIC = b"GFNN"
CHECKPOINT_VERSION = 1
CACHE_MAGIC = b"GFNC"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sHH32s32sIHHHH")

_F32LE = np.dtype("<f4")


def _ceil_half(v):
    return -(-v // 2)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    Defaults give the 28x28 digit classifier: channels (41, 64, 128),
    dense 2048 -> 625 -> 10.  Smaller variants are allowed so gradient
    checks can run on a shrunken clone of the same stack.
    """

    arch: str = "cnn"
    conv_channels: tuple = (41, 64, 128)
    dense_hidden: int = 625
    num_classes: int = 10
    input_hw: tuple = (28, 28)
    in_channels: int = 1
    dropout_rate: float = 0.5
    init_seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHES:
            raise ConfigError(f"arch must be one of {ARCHES}, got {self.arch!r}")
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        if len(self.conv_channels) != 3 or min(self.conv_channels) < 1:
            raise ConfigError(f"conv_channels must be 3 positive counts, "
                              f"got {self.conv_channels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def pooled_hw(self, stage):
        """Spatial extent after `stage` (1..3) ceil-mode pools."""
        h, w = self.input_hw
        for _ in range(stage):
            h, w = _ceil_half(h), _ceil_half(w)
        return h, w

    @property
    def flatten_dim(self):
        h, w = self.pooled_hw(3)
        return h * w * self.conv_channels[2]

    def to_json_dict(self):
        return {
            "arch": self.arch,
            "convChannels": list(self.conv_channels),
            "denseHidden": self.dense_hidden,
            "numClasses": self.num_classes,
            "inputHw": list(self.input_hw),
            "inChannels": self.in_channels,
            "dropoutRate": self.dropout_rate,
            "initSeed": self.init_seed,
        }

    @staticmethod
    def from_json_dict(d):
        return NetworkConfig(
            arch=d["arch"],
            conv_channels=tuple(d["convChannels"]),
            dense_hidden=int(d["denseHidden"]),
            num_classes=int(d["numClasses"]),
            input_hw=tuple(d["inputHw"]),
            in_channels=int(d["inChannels"]),
            dropout_rate=float(d["dropoutRate"]),
            init_seed=int(d["initSeed"]),
        )


class Network:
    """Parameter container plus the forward and backward passes."""

    def __init__(self, config, params, frozen_layer1=False):
        self.config = config
        self.params = params
        self.frozen_layer1 = frozen_layer1

    @property
    def arch(self):
        return self.config.arch

    def trainable_names(self):
        return tuple(n for n in LAYER_NAMES
                     if not (n == "conv1" and self.frozen_layer1))

    def parameter_count(self, trainable_only=False):
        names = self.trainable_names() if trainable_only else LAYER_NAMES
        return sum(self.params[n].weights.size + self.params[n].bias.size
                   for n in names)

    def layer1_digest(self):
        """Checksum of the conv1 parameters actually in use; a feature
        cache is only valid against the exact layer that produced it."""
        p = self.params["conv1"]
        return sha256_of_arrays(p.weights, p.bias)

    # -- forward ----------------------------------------------------------

    def _layer1(self, x, clock=None):
        """conv1 -> relu -> pool.  Returns (pooled, partial acts)."""
        with maybe_phase(clock, "layer1Forward"):
            cols1 = None if self.frozen_layer1 else im2col3x3(x)
            z1 = conv2d_same(x, self.params["conv1"], cols=cols1)
            a1 = relu(z1)
            p1, arg1 = maxpool2_ceil(a1)
        return p1, {"cols1": cols1, "z1": z1, "arg1": arg1}

    def forward(self, x=None, features=None, training=False, rng=None,
                clock=None):
        """Run the stack from images (`x`) or cached layer-1 output
        (`features`).  Returns (logits, activations); the activation dict
        is what `backward` consumes.
        """
        if (x is None) == (features is None):
            raise ShapeError("pass exactly one of images or features")
        cfg = self.config
        macs = 0
        acts = {"from_features": features is not None}
        if training and cfg.dropout_rate > 0.0 and rng is None:
            raise ConfigError("training forward needs an rng for dropout")

        if features is None:
            h, w = cfg.input_hw
            if x.ndim != 4 or x.shape[1:] != (h, w, cfg.in_channels):
                raise ShapeError(f"input must be (B, {h}, {w}, "
                                 f"{cfg.in_channels}), got {x.shape}")
            p1, l1 = self._layer1(x, clock)
            acts.update(l1)
            macs += h * w * 9 * cfg.in_channels * cfg.conv_channels[0]
        else:
            h1, w1 = cfg.pooled_hw(1)
            want = (h1, w1, cfg.conv_channels[0])
            if features.ndim != 4 or features.shape[1:] != want:
                raise ShapeError(f"features must be (B, {h1}, {w1}, "
                                 f"{cfg.conv_channels[0]}), got {features.shape}")
            p1 = features

        with maybe_phase(clock, "rest"):
            acts["p1"] = p1
            cols2 = im2col3x3(p1)
            z2 = conv2d_same(p1, self.params["conv2"], cols=cols2)
            p2, arg2 = maxpool2_ceil(relu(z2))
            h1, w1 = cfg.pooled_hw(1)
            macs += h1 * w1 * 9 * cfg.conv_channels[0] * cfg.conv_channels[1]

            cols3 = im2col3x3(p2)
            z3 = conv2d_same(p2, self.params["conv3"], cols=cols3)
            p3, arg3 = maxpool2_ceil(relu(z3))
            h2, w2 = cfg.pooled_hw(2)
            macs += h2 * w2 * 9 * cfg.conv_channels[1] * cfg.conv_channels[2]

            flat = p3.reshape(p3.shape[0], -1)
            if flat.shape[1] != cfg.flatten_dim:
                raise InternalError(f"flatten width {flat.shape[1]} != "
                                    f"configured {cfg.flatten_dim}")
            z4 = dense(flat, self.params["dense1"])
            a4 = relu(z4)
            h4, mask = dropout(a4, cfg.dropout_rate, rng, training)
            logits = dense(h4, self.params["dense2"])
            macs += cfg.flatten_dim * cfg.dense_hidden
            macs += cfg.dense_hidden * cfg.num_classes

        acts.update(cols2=cols2, z2=z2, arg2=arg2, p2=p2,
                    cols3=cols3, z3=z3, arg3=arg3, p3=p3,
                    flat=flat, z4=z4, mask=mask, h4=h4,
                    macs_per_sample=macs)
        return logits, acts

    # -- backward ---------------------------------------------------------

    def backward(self, acts, dlogits, clock=None):
        """Gradients for every trainable layer, keyed like `params`.

        With a frozen first layer, backpropagation ends after conv2's
        input gradient; conv1 gradients are never formed.  The input
        gradient of conv1 is never computed for any architecture.
        """
        needed = ["p1", "cols2", "z2", "arg2", "p2", "cols3", "z3", "arg3",
                  "p3", "flat", "z4", "mask", "h4"]
        if not self.frozen_layer1:
            needed += ["cols1", "z1", "arg1"]
        missing = [k for k in needed if acts.get(k) is None]
        if missing:
            raise InternalError(f"forward activations missing {missing}; "
                                f"record a matching forward pass first")

        with maybe_phase(clock, "rest"):
            dh4, dw5, db5 = dense_backward(acts["h4"], self.params["dense2"],
                                           dlogits)
            dz4 = relu_backward(acts["z4"], dh4 * acts["mask"])
            dflat, dw4, db4 = dense_backward(acts["flat"],
                                             self.params["dense1"], dz4)
            dp3 = dflat.reshape(acts["p3"].shape)
            dz3 = relu_backward(acts["z3"],
                                maxpool2_backward(acts["arg3"], dp3,
                                                  acts["z3"].shape))
            dp2, dw3, db3 = conv2d_backward(acts["p2"], self.params["conv3"],
                                            dz3, cols=acts["cols3"])
            dz2 = relu_backward(acts["z2"],
                                maxpool2_backward(acts["arg2"], dp2,
                                                  acts["z2"].shape))
            dp1, dw2, db2 = conv2d_backward(acts["p1"], self.params["conv2"],
                                            dz2, cols=acts["cols2"])

        grads = {"conv2": (dw2, db2), "conv3": (dw3, db3),
                 "dense1": (dw4, db4), "dense2": (dw5, db5)}
        if not self.frozen_layer1:
            with maybe_phase(clock, "layer1Backward"):
                dz1 = relu_backward(acts["z1"],
                                    maxpool2_backward(acts["arg1"], dp1,
                                                      acts["z1"].shape))
                dw1, db1 = conv2d_param_grads(acts["cols1"], dz1)
            grads["conv1"] = (dw1, db1)
        return grads


def _init_conv(rng, cout, cin, std_scale=True):
    fan_in = 9 * cin
    w = rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / fan_in)
    return ConvParams(w.astype(np.float32), np.zeros(cout, dtype=np.float32))


def _init_dense(rng, din, dout):
    w = rng.standard_normal((din, dout)) * np.sqrt(2.0 / din)
    return DenseParams(w.astype(np.float32), np.zeros(dout, dtype=np.float32))


def build_network(config, bank=None):
    """Construct a network from a config, plus the kernel bank for gfnn.

    Initialization draws each layer from its own seeded stream (seed,
    layer index), so both architectures share identical conv2-and-later
    weights at equal seeds; only layer 1 differs.
    """
    cfg = config
    layer_rng = lambda i: np.random.default_rng((cfg.init_seed, i))
    c0, c1, c2 = cfg.conv_channels
    params = {
        "conv2": _init_conv(layer_rng(1), c1, c0),
        "conv3": _init_conv(layer_rng(2), c2, c1),
        "dense1": _init_dense(layer_rng(3), cfg.flatten_dim, cfg.dense_hidden),
        "dense2": _init_dense(layer_rng(4), cfg.dense_hidden, cfg.num_classes),
    }
    if cfg.arch == "gfnn":
        if bank is None:
            raise ConfigError("gfnn needs a kernel bank for its first layer")
        if not isinstance(bank, KernelBank):
            raise ConfigError(f"bank must be a KernelBank, got {type(bank).__name__}")
        if len(bank.kernels) != c0 or cfg.in_channels != 1:
            raise ConfigError(f"bank of {len(bank.kernels)} single-channel "
                              f"kernels cannot fill conv1 "
                              f"({c0} filters, {cfg.in_channels} channels)")
        params["conv1"] = ConvParams(bank.weights(),
                                     np.zeros(c0, dtype=np.float32))
        frozen = True
    else:
        params["conv1"] = _init_conv(layer_rng(0), c0, cfg.in_channels)
        frozen = False
    return Network(cfg, params, frozen_layer1=frozen)


# -- feature cache ----------------------------------------------------------


class FeatureCache:
    """Memory-mapped per-sample layer-1 output with provenance checksums."""

    def __init__(self, path, dataset_digest, bank_digest, count, shape):
        self.path = path
        self.dataset_digest = dataset_digest
        self.bank_digest = bank_digest
        self.count = count
        self.shape = shape  # (h, w, c) per record
        self._mm = np.memmap(path, dtype=_F32LE, mode="r",
                             offset=_CACHE_HEADER.size,
                             shape=(count,) + shape)

    def take(self, indices):
        """Materialize the records for `indices` as a float32 batch."""
        return np.asarray(self._mm[indices], dtype=np.float32)

    def entry(self, j):
        return np.asarray(self._mm[j], dtype=np.float32)


def _read_cache_header(path):
    with open(path, "rb") as f:
        raw = f.read(_CACHE_HEADER.size)
    if len(raw) < _CACHE_HEADER.size:
        raise StaleCacheError(f"{path}: truncated cache header; delete the "
                              f"file and regenerate")
    magic, version, _, ds_digest, bank_digest, count, h, w, c, _ = \
        _CACHE_HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise StaleCacheError(f"{path}: not a feature cache "
                              f"(magic {magic!r}); delete and regenerate")
    if version != CACHE_VERSION:
        raise StaleCacheError(f"{path}: cache version {version}, expected "
                              f"{CACHE_VERSION}; delete and regenerate")
    return ds_digest, bank_digest, count, (h, w, c)


def precompute_features(net, dataset, cache_path, batch_size=256, clock=None):
    """Run layer 1 over every sample once and store the results on disk.

    Idempotent: if `cache_path` already holds a cache whose checksums
    match this dataset and this network's conv1, the file is reused
    untouched.  A mismatch raises a stale-cache error rather than
    silently overwriting.
    """
    from .data import normalize  # local import, data does not need network

    if not net.frozen_layer1:
        raise ConfigError("cache requires frozen first layer")
    ds_digest = dataset.digest()
    bank_digest = net.layer1_digest()
    h, w = net.config.pooled_hw(1)
    shape = (h, w, net.config.conv_channels[0])

    if os.path.exists(cache_path):
        got_ds, got_bank, count, got_shape = _read_cache_header(cache_path)
        if (got_ds, got_bank, count, got_shape) != \
                (ds_digest, bank_digest, len(dataset), shape):
            raise StaleCacheError(
                f"{cache_path} was built for a different dataset or filter "
                f"bank; delete the file (or choose another path) to regenerate")
        return FeatureCache(cache_path, ds_digest, bank_digest, count, shape)

    header = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, ds_digest,
                                bank_digest, len(dataset), h, w, shape[2], 0)
    tmp = cache_path + ".tmp"
    images = normalize(dataset)
    with open(tmp, "wb") as f:
        f.write(header)
        for start in range(0, len(dataset), batch_size):
            batch = images[start:start + batch_size]
            p1, _ = net._layer1(batch, clock)
            f.write(np.ascontiguousarray(p1, dtype=_F32LE).tobytes())
    os.replace(tmp, cache_path)
    return FeatureCache(cache_path, ds_digest, bank_digest, len(dataset), shape)


def forward_from_cache(net, batch, training=False, rng=None, clock=None,
                       bank_digest=None):
    """Forward pass starting from cached layer-1 features.

    `bank_digest`, when given, must match the network's current conv1
    parameters; a mismatch means the cache is stale.
    """
    if not net.frozen_layer1:
        raise ConfigError("cache requires frozen first layer")
    if bank_digest is not None and bank_digest != net.layer1_digest():
        raise StaleCacheError("cached features were produced by a different "
                              "filter bank; regenerate the cache")
    logits, _ = net.forward(features=batch, training=training, rng=rng,
                            clock=clock)
    return logits


# -- checkpoints -------------------------------------------------------------

_CKPT_PREFIX = struct.Struct("<4sHI")  # magic, version, config byte length


def save_checkpoint(net, path):
    """Serialize config + parameters: magic, version u16, config JSON,
    then one checksummed little-endian float32 blob per parameter tensor."""
    from .util import atomic_write_bytes

    cfg = dict(net.config.to_json_dict(), frozenLayer1=net.frozen_layer1)
    cfg_bytes = json.dumps(cfg, sort_keys=True).encode()
    out = [_CKPT_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                             len(cfg_bytes)), cfg_bytes,
           struct.pack("<H", 2 * len(LAYER_NAMES))]
    for name in LAYER_NAMES:
        p = net.params[name]
        for suffix, tensor in (("weights", p.weights), ("bias", p.bias)):
            blob_name = f"{name}.{suffix}".encode()
            raw = np.ascontiguousarray(tensor, dtype=_F32LE).tobytes()
            out.append(struct.pack("<H", len(blob_name)))
            out.append(blob_name)
            out.append(struct.pack("<B", tensor.ndim))
            out.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            out.append(struct.pack("<II", len(raw), zlib.crc32(raw)))
            out.append(raw)
    atomic_write_bytes(path, b"".join(out))


class _Reader:
    def __init__(self, raw, path):
        self.raw, self.pos, self.path = raw, 0, path

    def read(self, n):
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st):
        return st.unpack(self.read(st.size))


def load_checkpoint(path):
    """Inverse of save_checkpoint; verifies magic, version, and per-blob
    checksums, and restores the frozen flag."""
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    magic, version, cfg_len = r.unpack(_CKPT_PREFIX)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, "
                              f"expected {CHECKPOINT_VERSION}")
    try:
        cfg_dict = json.loads(r.read(cfg_len).decode())
    except ValueError as e:
        raise CheckpointError(f"{path}: unreadable config block: {e}") from e
    frozen = bool(cfg_dict.pop("frozenLayer1", False))
    config = NetworkConfig.from_json_dict(cfg_dict)

    (blob_count,) = r.unpack(struct.Struct("<H"))
    tensors = {}
    for _ in range(blob_count):
        (name_len,) = r.unpack(struct.Struct("<H"))
        name = r.read(name_len).decode()
        (ndim,) = r.unpack(struct.Struct("<B"))
        shape = r.unpack(struct.Struct(f"<{ndim}I"))
        nbytes, crc = r.unpack(struct.Struct("<II"))
        raw = r.read(nbytes)
        if zlib.crc32(raw) != crc:
            raise CheckpointError(f"{path}: blob {name!r} failed checksum")
        arr = np.frombuffer(raw, dtype=_F32LE).reshape(shape)
        tensors[name] = arr.astype(np.float32)

    params = {}
    for layer in LAYER_NAMES:
        try:
            params[layer] = _params_for(layer, tensors[f"{layer}.weights"],
                                        tensors[f"{layer}.bias"])
        except KeyError as e:
            raise CheckpointError(f"{path}: missing parameter blob {e}") from e
    return Network(config, params, frozen_layer1=frozen)


def _params_for(layer, weights, bias):
    if layer.startswith("conv"):
        return ConvParams(weights, bias)
    return DenseParams(weights, bias)
