"""JSON experiment configs.

Unknown keys are rejected, and every error carries the line of the offending
key in the source document. Example::

    {
      "schema_version": 1,
      "seed": 0,
      "tokens": {"n_tokens": 4096, "dim": 64, "n_components": 20, "spread": 0.05},
      "model": {"n_experts": 8, "k": 2, "d_ffn": 128, "activation": "relu", "experts": "ffn"},
      "topology": {"workers": 2, "bandwidth_intra": 150e9, "bandwidth_inter": 12.5e9,
                   "wire_bytes_per_element": 2},
      "lsh": {"family": "cp", "q": 6},
      "cost": {"peak_flops": 125e12, "utilization": 0.5, "layers": 12}
    }

``lsh`` may be ``null`` or omitted for a baseline-only run. Bandwidths are in
bytes per second.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

from .core import STREAM_LSH, TokenGenSpec, derive_seed
from .cost_model import CostParams
from .expert_parallel import ClusterTopology
from .lsh import HashFamily, HashFamilyConfig
from .moe import Activation, MoeLayer, identity_expert, random_layer, with_experts

SCHEMA_VERSION = 1
EXPERT_KINDS = ("ffn", "affine", "identity")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = self.args[0]
        return f"line {self.line}: {msg}" if self.line else msg


@dataclass(frozen=True)
class ModelSpec:
    n_experts: int = 8
    k: int = 2
    d_ffn: int = 128
    activation: Activation = Activation.RELU
    experts: str = "ffn"


@dataclass(frozen=True)
class CostKnobs:
    peak_flops: float = 125e12
    utilization: float = 0.5
    layers: int = 12
    hidden: int | None = None  # defaults to the token dim
    tokens_per_gpu: float | None = None  # defaults to n_tokens / workers

    @property
    def flops(self) -> float:
        return self.peak_flops * self.utilization


@dataclass(frozen=True)
class ExperimentConfig:
    tokens: TokenGenSpec
    model: ModelSpec
    topology: ClusterTopology
    lsh: HashFamilyConfig | None = None
    cost: CostKnobs = field(default_factory=CostKnobs)
    seed: int = 0
    output: str | None = None

    @property
    def dim(self) -> int:
        return self.tokens.dim

    def with_seed(self, seed: int) -> "ExperimentConfig":
        lsh = None if self.lsh is None else replace(self.lsh, seed=derive_seed(seed, STREAM_LSH))
        return replace(self, seed=seed, tokens=replace(self.tokens, seed=seed), lsh=lsh)

    def with_lsh(self, family, q: int) -> "ExperimentConfig":
        return replace(self, lsh=HashFamilyConfig(HashFamily(family), q, self.dim,
                                                  derive_seed(self.seed, STREAM_LSH)))

    def build_layer(self) -> MoeLayer:
        m = self.model
        if m.experts == "identity":
            base = random_layer(m.n_experts, m.k, self.dim, 1, self.seed)
            return with_experts(base, [identity_expert(self.dim)] * m.n_experts)
        act = Activation.IDENTITY if m.experts == "affine" else m.activation
        return random_layer(m.n_experts, m.k, self.dim, m.d_ffn, self.seed, act)

    def cost_params(self) -> CostParams:
        c, t = self.cost, self.topology
        return CostParams.from_bytes(
            n=c.tokens_per_gpu if c.tokens_per_gpu is not None else self.tokens.n_tokens / t.workers,
            k=self.model.k,
            h=c.hidden if c.hidden is not None else self.dim,
            l=c.layers,
            w=t.workers,
            bandwidth_intra_bytes=t.bandwidth_intra,
            bandwidth_inter_bytes=t.bandwidth_inter,
            wire_bytes_per_element=t.wire_bytes_per_element,
            peak_flops=c.peak_flops,
            utilization=c.utilization,
        )


_SECTIONS = {
    "tokens": {"n_tokens": int, "dim": int, "n_components": int, "spread": float},
    "model": {"n_experts": int, "k": int, "d_ffn": int, "activation": str, "experts": str},
    "topology": {"workers": int, "bandwidth_intra": float, "bandwidth_inter": float,
                 "wire_bytes_per_element": int},
    "lsh": {"family": str, "q": int},
    "cost": {"peak_flops": float, "utilization": float, "layers": int, "hidden": int,
             "tokens_per_gpu": float},
}
_TOP = {"schema_version", "seed", "output", *_SECTIONS}
_REQUIRED = {"tokens": ("n_tokens", "dim"), "model": (), "topology": ("workers",)}


class _Locator:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def __call__(self, *path: str) -> int | None:
        """Best-effort line of the last key in ``path`` (searched after its parent)."""
        start = 0
        for key in path:
            pat = re.compile(r'"%s"\s*:' % re.escape(key))
            for i in range(start, len(self.lines)):
                if pat.search(self.lines[i]):
                    start = i
                    break
            else:
                return start + 1 if start else None
        return start + 1


def loads(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    where = _Locator(text)
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object", 1)

    for key in doc:
        if key not in _TOP:
            raise ConfigError(f"unknown key {key!r}", where(key))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}", where("schema_version") or 1)

    sections = {}
    for name, fields in _SECTIONS.items():
        raw = doc.get(name)
        if raw is None:
            if name in _REQUIRED:
                raise ConfigError(f"missing section {name!r}", 1)
            continue
        if not isinstance(raw, dict):
            raise ConfigError(f"section {name!r} must be an object", where(name))
        for key, value in raw.items():
            if key not in fields:
                raise ConfigError(f"unknown key {name}.{key}", where(name, key))
            if value is None and name == "cost":
                continue
            if not _type_ok(value, fields[key]):
                raise ConfigError(f"{name}.{key} must be {fields[key].__name__}", where(name, key))
        for key in _REQUIRED.get(name, ()):
            if key not in raw:
                raise ConfigError(f"missing key {name}.{key}", where(name))
        sections[name] = {k: v for k, v in raw.items() if v is not None}

    seed = doc.get("seed", 0)
    if not _type_ok(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", where("seed"))
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output must be a path string", where("output"))

    def build(name, fn):
        try:
            return fn(**sections.get(name, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}", where(name)) from None

    tokens = build("tokens", lambda **kw: TokenGenSpec(seed=seed, **kw))
    model = build("model", ModelSpec)
    if model.experts not in EXPERT_KINDS:
        raise ConfigError(f"model.experts must be one of {EXPERT_KINDS}", where("model", "experts"))
    try:
        model = replace(model, activation=Activation(model.activation))
    except ValueError:
        raise ConfigError(f"unknown activation {model.activation!r}", where("model", "activation")) from None
    if not 1 <= model.k <= model.n_experts or model.d_ffn < 1:
        raise ConfigError("model needs 1 <= k <= n_experts and d_ffn >= 1", where("model"))

    topo_kw = dict(sections["topology"])
    workers = topo_kw.get("workers", 1)
    if workers < 1 or model.n_experts % workers:
        raise ConfigError(
            f"n_experts ({model.n_experts}) must be a positive multiple of workers ({workers})",
            where("topology", "workers"))
    topology = build("topology", lambda **kw: ClusterTopology(
        experts_per_worker=model.n_experts // workers, **kw))

    lsh = None
    if "lsh" in sections:
        lsh_kw = sections["lsh"]
        try:
            family = HashFamily(lsh_kw.get("family", "cp"))
        except ValueError:
            raise ConfigError("lsh.family must be 'cp' or 'sp'", where("lsh", "family")) from None
        lsh = build("lsh", lambda **kw: HashFamilyConfig(
            family, kw.get("q", 6), tokens.dim, derive_seed(seed, STREAM_LSH)))

    cost = build("cost", CostKnobs)
    if not (cost.peak_flops > 0 and 0 < cost.utilization <= 1 and cost.layers >= 1):
        raise ConfigError("cost needs peak_flops > 0, 0 < utilization <= 1, layers >= 1", where("cost"))

    return ExperimentConfig(tokens, model, topology, lsh, cost, seed, output)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read())


def _type_ok(value, typ) -> bool:
    if isinstance(value, bool):
        return False
    if typ is float:
        return isinstance(value, (int, float))
    return isinstance(value, typ)
