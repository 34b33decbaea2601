"""Bundled synthetic bilingual dataset for end-to-end runs.

Each of the 50 examples is a (subject, action, object) triple.  Its feature
vector is the concatenation of three one-hot blocks plus a little Gaussian
noise; its captions come from three English and three pre-segmented Chinese
templates.  The files under ``data/synthetic`` are exactly what
``write_synthetic`` produces with the default seed.
"""

from __future__ import annotations

import os
from importlib import resources

import numpy as np

from captionforge.io import write_jsonl

SUBJECTS = [("man", "男人"), ("woman", "女人"), ("boy", "男孩"), ("girl", "女孩"), ("dog", "狗")]
ACTIONS = [("riding", "骑"), ("holding", "拿着"), ("throwing", "扔"), ("washing", "清洗"), ("pushing", "推")]
OBJECTS = [("bike", "自行车"), ("ball", "球"), ("box", "箱子"), ("car", "汽车"), ("chair", "椅子")]

EN_TEMPLATES = (
    "A {s} is {a} a {o}.",
    "The {s} is {a} the {o}.",
    "A {s} is {a} a {o} outside.",
)
ZH_TEMPLATES = (
    "一个 {s} 正在 {a} {o}",
    "{s} 在 {a} {o}",
    "一个 {s} {a} 一个 {o}",
)

NUM_EXAMPLES = 50
NOISE = 0.05
SEED = 2020
FILES = ("features.jsonl", "refs_en.jsonl", "refs_zh.jsonl")


def make_synthetic(n: int = NUM_EXAMPLES, seed: int = SEED, noise: float = NOISE):
    """Return ``(features, refs_en, refs_zh)`` as lists of JSON-lines rows."""
    rng = np.random.default_rng(seed)
    features, refs_en, refs_zh = [], [], []
    k = len(SUBJECTS)
    for i in range(n):
        s, a, o = (int(x) for x in rng.integers(0, k, size=3))
        vec = np.zeros(3 * k)
        vec[[s, k + a, 2 * k + o]] = 1.0
        vec += rng.normal(0.0, noise, size=vec.shape)
        key = f"vid{i:03d}"
        features.append({"id": key, "feature": [round(float(v), 6) for v in vec]})
        refs_en.append({"id": key, "refs": [t.format(s=SUBJECTS[s][0], a=ACTIONS[a][0], o=OBJECTS[o][0])
                                            for t in EN_TEMPLATES]})
        refs_zh.append({"id": key, "refs": [t.format(s=SUBJECTS[s][1], a=ACTIONS[a][1], o=OBJECTS[o][1])
                                            for t in ZH_TEMPLATES]})
    return features, refs_en, refs_zh


def write_synthetic(directory, **kwargs) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, rows in zip(FILES, make_synthetic(**kwargs)):
        path = os.path.join(directory, name)
        write_jsonl(path, rows)
        paths[name] = path
    return paths


def bundled_path(name: str) -> str:
    """Filesystem path of one bundled fixture file."""
    if name not in FILES:
        raise KeyError(f"unknown fixture file {name!r}; expected one of {FILES}")
    return str(resources.files("captionforge").joinpath("data", "synthetic", name))
