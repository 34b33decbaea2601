"""File formats: JSON-lines corpora and features, JSON checkpoints.

Checkpoint layout (``format_version`` 1)::

    {"format": "captionforge-checkpoint", "format_version": 1,
     "language": "en",
     "dims": {"vocab_size": V, "hidden": d, "feature_size": d_f},
     "vocab": {"min_count": n, "tokens": [...]},
     "params": {"token_embed": [...], ...},   # row-major flattened float64
     "meta": {...}}

Floats are written with ``repr`` precision, so a save/load round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Iterator

import numpy as np

from captionforge import FORMAT_VERSION
from captionforge.errors import InputError, NumericalError
from captionforge.policy import PARAM_NAMES, PolicyModel, PolicyParams
from captionforge.text import Language, Vocabulary

CHECKPOINT_FORMAT = "captionforge-checkpoint"


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    try:
        f = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise InputError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _get_id(path, lineno, obj) -> str:
    if "id" not in obj:
        raise InputError(f"{path}:{lineno}: missing 'id'")
    return str(obj["id"])


def read_candidates(path) -> dict[str, str]:
    out = {}
    for lineno, obj in iter_jsonl(path):
        key = _get_id(path, lineno, obj)
        if not isinstance(obj.get("caption"), str):
            raise InputError(f"{path}:{lineno}: 'caption' must be a string")
        if key in out:
            raise InputError(f"{path}:{lineno}: duplicate id {key!r}")
        out[key] = obj["caption"]
    return out


def read_references(path) -> dict[str, list[str]]:
    out = {}
    for lineno, obj in iter_jsonl(path):
        key = _get_id(path, lineno, obj)
        refs = obj.get("refs")
        if not isinstance(refs, list) or not refs or not all(isinstance(r, str) for r in refs):
            raise InputError(f"{path}:{lineno}: 'refs' must be a non-empty list of strings")
        if key in out:
            raise InputError(f"{path}:{lineno}: duplicate id {key!r}")
        out[key] = refs
    return out


def read_captions_any(path) -> dict[str, list[str]]:
    """Either file layout, as id -> list of raw caption strings."""
    out: dict[str, list[str]] = {}
    for lineno, obj in iter_jsonl(path):
        key = _get_id(path, lineno, obj)
        if isinstance(obj.get("refs"), list) and all(isinstance(r, str) for r in obj["refs"]):
            texts = obj["refs"]
        elif isinstance(obj.get("caption"), str):
            texts = [obj["caption"]]
        else:
            raise InputError(f"{path}:{lineno}: expected 'caption' string or 'refs' list")
        out.setdefault(key, []).extend(texts)
    return out


def read_features(path) -> dict[str, np.ndarray]:
    out = {}
    size = None
    for lineno, obj in iter_jsonl(path):
        key = _get_id(path, lineno, obj)
        vec = obj.get("feature")
        if not isinstance(vec, list) or not vec:
            raise InputError(f"{path}:{lineno}: 'feature' must be a non-empty list of numbers")
        try:
            arr = np.asarray(vec, dtype=np.float64)
        except (TypeError, ValueError):
            raise InputError(f"{path}:{lineno}: 'feature' must be a list of numbers") from None
        if arr.ndim != 1:
            raise InputError(f"{path}:{lineno}: 'feature' must be a flat list of numbers")
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"{path}:{lineno}: non-finite value in 'feature'")
        if size is None:
            size = arr.size
        elif arr.size != size:
            raise InputError(f"{path}:{lineno}: feature length {arr.size}, earlier lines had {size}")
        out[key] = arr
    if not out:
        raise InputError(f"{path}: no features found")
    return out


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=1, sort_keys=False)
        f.write("\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(path, params: PolicyParams, vocab: Vocabulary, language=Language.ENGLISH,
                    meta: dict | None = None) -> None:
    obj = {
        "format": CHECKPOINT_FORMAT,
        "format_version": FORMAT_VERSION,
        "language": Language.parse(language).value,
        "dims": {"vocab_size": params.vocab_size, "hidden": params.hidden,
                 "feature_size": params.feature_size},
        "vocab": vocab.to_json(),
        "params": {name: arr.ravel().tolist() for name, arr in params.arrays().items()},
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False)
        f.write("\n")


def load_checkpoint(path):
    """Return ``(params, vocab, language, meta)``."""
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as exc:
        raise InputError(f"cannot open checkpoint {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid checkpoint JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"{path}: not a captionforge checkpoint")
    if obj.get("format_version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {obj.get('format_version')}")
    try:
        dims = obj["dims"]
        V, d, df = dims["vocab_size"], dims["hidden"], dims["feature_size"]
        raw = obj["params"]
        vocab = Vocabulary.from_json(obj["vocab"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: incomplete checkpoint, missing {exc}") from None
    shapes = {"token_embed": (V, d), "feature_proj": (df, d), "recur": (d, d),
              "out_weight": (d, V), "out_bias": (V,)}
    arrays = {}
    for name in PARAM_NAMES:
        flat = np.asarray(raw.get(name, ()), dtype=np.float64)
        if flat.size != math.prod(shapes[name]):
            raise InputError(f"{path}: {name} has {flat.size} values, expected shape {shapes[name]}")
        arrays[name] = flat.reshape(shapes[name])
    if len(vocab) != V:
        raise InputError(f"{path}: vocabulary size {len(vocab)} does not match dims {V}")
    params = PolicyParams(**arrays)
    if not params.all_finite():
        raise NumericalError(f"{path}: checkpoint contains non-finite parameters")
    return params, vocab, Language.parse(obj.get("language", "en")), obj.get("meta", {})


def load_model(path) -> tuple[PolicyModel, Language]:
    params, vocab, language, _ = load_checkpoint(path)
    return PolicyModel(params, vocab=vocab), language
