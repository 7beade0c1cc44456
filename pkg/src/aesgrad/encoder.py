"""Miniature dual text/image encoder.

Text tower: word-level tokenizer, learned token + positional embeddings,
pre-norm transformer blocks with causal attention, final layer norm, and a
projection of the EOS-position representation into the joint space. The
vision tower is deliberately shallow (linear patch embedding, mean pool,
projection); it is never differentiated, it only has to map images to
joint-space vectors deterministically.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, FormatError, ShapeMismatchError
from .tensor import Tensor

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

MCLP_MAGIC = b"MCLP"
MCLP_VERSION = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

# Attention logits at masked positions get this additive penalty; large
# enough to zero the weight after softmax in float32 without producing inf.
_MASK_VALUE = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 512
    context_length: int = 77
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_joint: int = 64
    image_side: int = 32
    patch_side: int = 8

    def __post_init__(self) -> None:
        for name in ("vocab_size", "context_length", "d_model", "n_heads",
                     "d_joint", "image_side", "patch_side"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be non-negative, got {self.n_layers}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"n_heads ({self.n_heads}) must divide d_model ({self.d_model})")
        if self.image_side % self.patch_side != 0:
            raise ConfigError(
                f"patch_side ({self.patch_side}) must divide image_side ({self.image_side})")
        if self.context_length < 2:
            raise ConfigError("context_length must be at least 2 (BOS and EOS)")

    # field order is the wire order in the MCLP weight file
    _WIRE_FIELDS = ("vocab_size", "context_length", "d_model", "n_layers",
                    "n_heads", "d_joint", "image_side", "patch_side")


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)


def split_words(text: str) -> list[str]:
    """Lowercased word and punctuation tokens, in order."""
    return _TOKEN_RE.findall(text.lower())


def build_vocab(corpus: list[str], max_size: int) -> Vocabulary:
    if max_size < 5:
        raise ConfigError(f"max_size must be at least 5 (4 reserved ids), got {max_size}")
    if not corpus:
        raise ConfigError("corpus must be nonempty")
    counts: dict[str, int] = {}
    for text in corpus:
        for token in split_words(text):
            counts[token] = counts.get(token, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    id_to_token = ["<pad>", "<bos>", "<eos>", "<unk>"]
    id_to_token += [token for token, _ in ordered[: max_size - 4]]
    token_to_id = {token: i for i, token in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=tuple(id_to_token))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    eos_position: int

    def __post_init__(self) -> None:
        if not self.ids or self.ids[0] != BOS_ID:
            raise ContractError("token sequence must start with BOS")
        if self.ids.count(EOS_ID) != 1 or self.ids[self.eos_position] != EOS_ID:
            raise ContractError("token sequence must contain exactly one EOS at eos_position")

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab: Vocabulary, context_length: int) -> TokenSequence:
    """BOS + word ids + EOS, truncated so EOS always fits."""
    words = split_words(text)[: context_length - 2]
    ids = (BOS_ID, *(vocab.lookup(w) for w in words), EOS_ID)
    return TokenSequence(ids=ids, eos_position=len(ids) - 1)


# --- weights ---------------------------------------------------------------

def parameter_names(config: EncoderConfig) -> list[str]:
    """All parameter names in declaration (wire) order."""
    names = ["token_embedding", "positional_embedding"]
    for i in range(config.n_layers):
        p = f"layers.{i}"
        names += [f"{p}.ln1.gamma", f"{p}.ln1.beta",
                  f"{p}.attn.wq", f"{p}.attn.wk", f"{p}.attn.wv", f"{p}.attn.wo",
                  f"{p}.ln2.gamma", f"{p}.ln2.beta",
                  f"{p}.mlp.w1", f"{p}.mlp.w2"]
    names += ["final_ln.gamma", "final_ln.beta", "text_projection",
              "vision.patch_projection", "vision.projection"]
    return names


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, dj = config.d_model, config.d_joint
    shapes: dict[str, tuple[int, ...]] = {
        "token_embedding": (config.vocab_size, d),
        "positional_embedding": (config.context_length, d),
    }
    for i in range(config.n_layers):
        p = f"layers.{i}"
        shapes[f"{p}.ln1.gamma"] = (d,)
        shapes[f"{p}.ln1.beta"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{w}"] = (d, d)
        shapes[f"{p}.ln2.gamma"] = (d,)
        shapes[f"{p}.ln2.beta"] = (d,)
        shapes[f"{p}.mlp.w1"] = (d, 4 * d)
        shapes[f"{p}.mlp.w2"] = (4 * d, d)
    shapes["final_ln.gamma"] = (d,)
    shapes["final_ln.beta"] = (d,)
    shapes["text_projection"] = (d, dj)
    shapes["vision.patch_projection"] = (config.patch_side ** 2, d)
    shapes["vision.projection"] = (d, dj)
    return shapes


@dataclass
class MiniClipWeights:
    """Full parameter set of the dual encoder, keyed by declaration order."""

    config: EncoderConfig
    params: dict[str, Tensor] = field(repr=False, default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def text_parameter_names(self) -> list[str]:
        return [n for n in parameter_names(self.config) if not n.startswith("vision.")]

    def vision_parameter_names(self) -> list[str]:
        return [n for n in parameter_names(self.config) if n.startswith("vision.")]

    def copy(self) -> "MiniClipWeights":
        return MiniClipWeights(self.config, {n: t.copy() for n, t in self.params.items()})

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(
            [getattr(self.config, f) for f in EncoderConfig._WIRE_FIELDS]).encode())
        for name in parameter_names(self.config):
            h.update(self.params[name].data.tobytes())
        return h.hexdigest()


def init_weights(config: EncoderConfig, seed: int) -> MiniClipWeights:
    """Seeded initialization: embeddings at scale 0.02, linears at 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(config)
    params: dict[str, Tensor] = {}
    for name in parameter_names(config):
        shape = shapes[name]
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            data = np.ones(shape)
        elif leaf == "beta":
            data = np.zeros(shape)
        elif name in ("token_embedding", "positional_embedding"):
            data = rng.standard_normal(shape) * 0.02
        else:
            data = rng.standard_normal(shape) / np.sqrt(shape[0])
        requires_grad = not name.startswith("vision.")
        params[name] = Tensor(data, requires_grad=requires_grad)
    return MiniClipWeights(config=config, params=params)


# --- forward passes --------------------------------------------------------

def _causal_mask(n: int, dtype) -> Tensor:
    mask = np.triu(np.full((n, n), _MASK_VALUE, dtype=dtype), k=1)
    return Tensor(mask, dtype=dtype)


def _layer_norm_affine(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    return T.add(T.mul(T.layer_norm(x), gamma), beta)


def text_forward(weights: MiniClipWeights, tokens: TokenSequence) -> Tensor:
    """Text-tower forward pass; records into the active record, if any."""
    cfg = weights.config
    ids = list(tokens.ids)
    if len(ids) > cfg.context_length:
        raise ContractError(
            f"sequence length {len(ids)} exceeds context_length {cfg.context_length}")
    if max(ids) >= cfg.vocab_size:
        raise ContractError(
            f"token id {max(ids)} out of range for vocab_size {cfg.vocab_size}")
    p = weights.params
    n = len(ids)
    d_head = cfg.d_model // cfg.n_heads

    h = T.add(T.embedding_lookup(p["token_embedding"], ids),
              T.embedding_lookup(p["positional_embedding"], list(range(n))))
    mask = _causal_mask(n, h.data.dtype)
    for i in range(cfg.n_layers):
        pre = f"layers.{i}"
        x = _layer_norm_affine(h, p[f"{pre}.ln1.gamma"], p[f"{pre}.ln1.beta"])
        q = T.matmul(x, p[f"{pre}.attn.wq"])
        k = T.matmul(x, p[f"{pre}.attn.wk"])
        v = T.matmul(x, p[f"{pre}.attn.wv"])
        heads = []
        for hd in range(cfg.n_heads):
            lo, hi = hd * d_head, (hd + 1) * d_head
            qs, ks, vs = (T.slice_cols(t, lo, hi) for t in (q, k, v))
            scores = T.scale(T.matmul(qs, T.transpose(ks)), 1.0 / np.sqrt(d_head))
            attn = T.softmax(T.add(scores, mask))
            heads.append(T.matmul(attn, vs))
        h = T.add(h, T.matmul(T.concat_cols(heads), p[f"{pre}.attn.wo"]))
        x = _layer_norm_affine(h, p[f"{pre}.ln2.gamma"], p[f"{pre}.ln2.beta"])
        h = T.add(h, T.matmul(T.gelu(T.matmul(x, p[f"{pre}.mlp.w1"])), p[f"{pre}.mlp.w2"]))

    x = _layer_norm_affine(h, p["final_ln.gamma"], p["final_ln.beta"])
    eos_row = T.embedding_lookup(x, [tokens.eos_position])
    return T.reshape(T.matmul(eos_row, p["text_projection"]), (cfg.d_joint,))


def encode_text(weights: MiniClipWeights, tokens: TokenSequence) -> tuple[Tensor, T.ComputationRecord]:
    """Prompt conditioning vector plus the record needed for backward."""
    with T.recording() as record:
        c = text_forward(weights, tokens)
    return c, record


def encode_text_plain(weights: MiniClipWeights, tokens: TokenSequence) -> Tensor:
    """Forward pass only, nothing recorded."""
    with T.no_recording():
        return text_forward(weights, tokens)


def encode_image(weights: MiniClipWeights, image: Tensor | np.ndarray) -> Tensor:
    """Joint-space embedding of an image; never recorded for gradients."""
    cfg = weights.config
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=T.default_dtype())
    if data.shape != (cfg.image_side, cfg.image_side):
        raise ShapeMismatchError(
            f"image shape {data.shape} does not match configured "
            f"({cfg.image_side}, {cfg.image_side})")
    side = cfg.image_side // cfg.patch_side
    ps = cfg.patch_side
    patches = np.stack([
        data[r * ps:(r + 1) * ps, c * ps:(c + 1) * ps].reshape(-1)
        for r in range(side) for c in range(side)
    ])
    with T.no_recording():
        embedded = T.matmul(Tensor(patches, dtype=data.dtype),
                            weights.params["vision.patch_projection"])
        pooled = T.mean(embedded, axis=0)
        return T.matmul(pooled, weights.params["vision.projection"])


# --- weight file (MCLP) ----------------------------------------------------

def save_weights(weights: MiniClipWeights, path: str | Path) -> None:
    """Little-endian container: magic, version u16, config u32s, f32 params."""
    cfg = weights.config
    blob = bytearray()
    blob += MCLP_MAGIC
    blob += struct.pack("<H", MCLP_VERSION)
    blob += struct.pack(f"<{len(EncoderConfig._WIRE_FIELDS)}I",
                        *(getattr(cfg, f) for f in EncoderConfig._WIRE_FIELDS))
    for name in parameter_names(cfg):
        blob += np.ascontiguousarray(
            weights.params[name].data, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_weights(path: str | Path) -> MiniClipWeights:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    offset = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal offset
        if offset + n > len(raw):
            raise FormatError(
                f"truncated weight file: needed {n} bytes for {what} at offset {offset}, "
                f"file has {len(raw)}")
        piece = view[offset:offset + n]
        offset += n
        return piece

    magic = bytes(take(4, "magic"))
    if magic != MCLP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MCLP_MAGIC!r}")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != MCLP_VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    n_fields = len(EncoderConfig._WIRE_FIELDS)
    fields = struct.unpack(f"<{n_fields}I", take(4 * n_fields, "config"))
    try:
        config = EncoderConfig(**dict(zip(EncoderConfig._WIRE_FIELDS, fields)))
    except ConfigError as exc:
        raise FormatError(f"weight file carries an invalid config: {exc}") from exc

    shapes = parameter_shapes(config)
    params: dict[str, Tensor] = {}
    for name in parameter_names(config):
        shape = shapes[name]
        count = int(np.prod(shape))
        data = np.frombuffer(take(4 * count, name), dtype="<f4").reshape(shape)
        params[name] = Tensor(data.copy(), requires_grad=not name.startswith("vision."),
                              dtype=np.float32)
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} unexpected trailing bytes after parameters")
    return MiniClipWeights(config=config, params=params)
