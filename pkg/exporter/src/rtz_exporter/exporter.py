"""Convert safetensors checkpoints into .rtz containers with a role manifest.

Role inference is a pure function of the tensor name, matched by substring
with the following precedence (first hit wins):

    1. "norm" or "bias"                      -> keep_fp
    2. "lm_head"                             -> lm_head
    3. "embed"                               -> embedding
    4. "gate_proj" or "up_proj"              -> mlp_gate_up
    5. "down_proj"                           -> mlp_down
    6. "q_proj", "k_proj" or "v_proj"        -> attn_qkv
    7. "o_proj"                              -> attn_o
    8. anything else                         -> keep_fp

Norm/bias outranks the projection substrings so a projection bias is never
scheduled for quantization.  The table is a naming-convention heuristic; a
user-supplied role map (glob pattern -> role, first match wins) overrides it.
"""

from __future__ import annotations

import fnmatch
import json
from dataclasses import asdict, dataclass

import numpy as np

from .formats import FormatError, read_rtz, read_safetensors, write_rtz

ROLES = (
    "mlp_gate_up",
    "mlp_down",
    "attn_qkv",
    "attn_o",
    "embedding",
    "lm_head",
    "keep_fp",
)

_SUBSTRING_RULES = (
    (("norm", "bias"), "keep_fp"),
    (("lm_head",), "lm_head"),
    (("embed",), "embedding"),
    (("gate_proj", "up_proj"), "mlp_gate_up"),
    (("down_proj",), "mlp_down"),
    (("q_proj", "k_proj", "v_proj"), "attn_qkv"),
    (("o_proj",), "attn_o"),
)


class VerificationError(ValueError):
    """The exported container does not match the source checkpoint."""


@dataclass(frozen=True)
class ExportManifest:
    sources: tuple[str, ...]
    include: tuple[str, ...]
    exclude: tuple[str, ...]
    tensors: tuple[dict, ...]

    def to_json(self) -> str:
        payload = asdict(self)
        payload["sources"] = list(self.sources)
        payload["include"] = list(self.include)
        payload["exclude"] = list(self.exclude)
        payload["tensors"] = list(self.tensors)
        return json.dumps(payload, indent=2) + "\n"


def infer_role(name: str) -> str:
    """Best-effort tensor role from name substrings; see the module docstring."""
    for needles, role in _SUBSTRING_RULES:
        if any(needle in name for needle in needles):
            return role
    return "keep_fp"


def _resolve_role(name: str, role_map: list[tuple[str, str]] | None) -> str:
    if role_map:
        for pattern, role in role_map:
            if fnmatch.fnmatchcase(name, pattern):
                return role
    return infer_role(name)


def load_role_map(path) -> list[tuple[str, str]]:
    """Role override file: a JSON object of glob pattern -> role."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"role map {path} must be a JSON object")
    pairs = []
    for pattern, role in raw.items():
        if role not in ROLES:
            raise ValueError(f"role map {path}: unknown role '{role}'")
        pairs.append((pattern, role))
    return pairs


def _as_paths(checkpoint) -> list:
    if isinstance(checkpoint, (list, tuple)):
        return list(checkpoint)
    return [checkpoint]


def _matches(name: str, include, exclude) -> bool:
    if include and not any(fnmatch.fnmatchcase(name, g) for g in include):
        return False
    return not any(fnmatch.fnmatchcase(name, g) for g in exclude)


def export(
    checkpoint,
    out_path,
    include_globs=(),
    exclude_globs=(),
    role_map=None,
    manifest_path=None,
) -> ExportManifest:
    """Write matching checkpoint tensors (cast to float32) into ``out_path``.

    ``checkpoint`` is one safetensors path or a list of shard paths; shards
    are concatenated and a name collision across them is an error.  The
    manifest (JSON) lands next to the container unless ``manifest_path``
    says otherwise.
    """
    include = tuple(include_globs or ())
    exclude = tuple(exclude_globs or ())
    paths = _as_paths(checkpoint)

    selected: dict[str, np.ndarray] = {}
    entries = []
    for path in paths:
        for name, meta in read_safetensors(path).items():
            if name in selected:
                raise FormatError(f"tensor '{name}' appears in more than one shard")
            if not _matches(name, include, exclude):
                continue
            selected[name] = meta["array"]
            entries.append(
                {
                    "name": name,
                    "shape": list(meta["shape"]),
                    "source_dtype": meta["dtype"],
                    "role": _resolve_role(name, role_map),
                }
            )
    if not selected:
        raise ValueError(f"no tensors matched include={list(include)} exclude={list(exclude)}")

    write_rtz(out_path, selected)
    manifest = ExportManifest(
        sources=tuple(str(p) for p in paths),
        include=include,
        exclude=exclude,
        tensors=tuple(entries),
    )
    if manifest_path is None:
        manifest_path = f"{out_path}.manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    return manifest


def verify(rtz_path, checkpoint) -> bool:
    """Exact equality check of an exported container against its source.

    Every element of every exported tensor must equal the float32 cast of
    the checkpoint value bit for bit; the first mismatch raises a
    VerificationError naming the tensor and flat index.
    """
    exported = read_rtz(rtz_path)
    source: dict[str, np.ndarray] = {}
    for path in _as_paths(checkpoint):
        for name, meta in read_safetensors(path).items():
            source[name] = meta["array"]
    for name, arr in exported.items():
        if name not in source:
            raise VerificationError(f"tensor '{name}' is missing from the checkpoint")
        want = source[name].astype(np.float32)
        got = np.asarray(arr, dtype=np.float32)
        if got.shape != want.shape:
            raise VerificationError(
                f"tensor '{name}': shape {got.shape} != checkpoint {want.shape}"
            )
        mismatch = np.nonzero(got.reshape(-1).view(np.uint32) != want.reshape(-1).view(np.uint32))[0]
        if mismatch.size:
            i = int(mismatch[0])
            raise VerificationError(
                f"tensor '{name}': element {i} is {got.reshape(-1)[i]!r}, "
                f"checkpoint has {want.reshape(-1)[i]!r}"
            )
    return True
