"""Synthetic fixtures: random case stores, rating matrices, and MOS
targets that are a known function of the stub model's input features.

Used by the test suite, the smoke scripts, and the demo rating server.
Nothing here ships real study data.
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import CaseSet, EditCase, write_manifest
from .model import image_raw_tokens
from .subjective import DEFAULT_DIMS

PROMPT_POOL = [
    ("make the sky look like a watercolor painting", "style"),
    ("replace the cat with a golden retriever", "semantic"),
    ("make the tower twice as tall", "structural"),
    ("turn the photo into pencil sketch", "style"),
    ("remove the person on the left", "semantic"),
    ("rotate the vase to face forward", "structural"),
]


def random_image(rng: random.Random, size: tuple[int, int] = (32, 32)) -> Image.Image:
    """Blocky random RGB image with distinct quadrant statistics."""
    w, h = size
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    for qi, (ys, xs) in enumerate(
        [(slice(0, h // 2), slice(0, w // 2)),
         (slice(0, h // 2), slice(w // 2, w)),
         (slice(h // 2, h), slice(0, w // 2)),
         (slice(h // 2, h), slice(w // 2, w))]
    ):
        base = [rng.randrange(256) for _ in range(3)]
        noise = rng.randrange(5, 60)
        block = np.clip(
            np.array(base)[None, None, :]
            + np.random.default_rng(rng.randrange(2**31)).integers(
                -noise, noise + 1, size=(arr[ys, xs].shape)
            ),
            0,
            255,
        )
        arr[ys, xs] = block.astype(np.uint8)
    return Image.fromarray(arr, "RGB")


def make_case_store(
    out_dir: str | Path,
    n_cases: int = 20,
    seed: int = 0,
    image_size: tuple[int, int] = (32, 32),
    name: str = "synthetic",
) -> CaseSet:
    """Write a valid case store (images + manifest) of random cases."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    cases = []
    for i in range(n_cases):
        cid = f"case{i:04d}"
        src = random_image(rng, image_size)
        edt = random_image(rng, image_size)
        src_rel = f"images/{cid}_src.png"
        edt_rel = f"images/{cid}_edt.png"
        src.save(out_dir / src_rel)
        edt.save(out_dir / edt_rel)
        prompt, ptype = PROMPT_POOL[i % len(PROMPT_POOL)]
        cases.append(
            EditCase(
                case_id=cid,
                source_image=src_rel,
                edited_image=edt_rel,
                prompt=prompt,
                prompt_type=ptype,
                editing_method=f"method{i % 3}",
                content_tags=("synthetic",),
            )
        )
    cs = CaseSet(cases=cases, name=name, version="1", root=out_dir)
    write_manifest(cs, out_dir / "manifest.jsonl")
    return cs


def linear_mos_targets(cs: CaseSet, seed: int = 0) -> dict[str, float]:
    """MOS that is a fixed linear function of the stub input features,
    so a stub-backbone model can learn it (the overfit oracle)."""
    rng = np.random.default_rng(seed)
    w_src = rng.normal(size=4)
    w_edt = rng.normal(size=4)
    from .dataset import load_image_rgb

    mos = {}
    for case in cs.cases:
        fs = image_raw_tokens(np.asarray(load_image_rgb(cs.resolve(case.source_image))))
        fe = image_raw_tokens(np.asarray(load_image_rgb(cs.resolve(case.edited_image))))
        # linear in the pooled stub features, so the stub model can fit it
        mos[case.case_id] = float(fs.mean(axis=0) @ w_src + fe.mean(axis=0) @ w_edt)
    return mos


def adversarial_panel(
    n_consistent: int = 20,
    n_cases: int = 100,
    n_dims: int = 3,
    seed: int = 0,
    noise_sd: float = 1.5,
):
    """20 consistent raters plus one adversary scoring 11 - panel median.

    Returns (scores, mask, rater_ids); the adversary is the last rater.
    Consistent raters score a shared per-case truth with rounded Gaussian
    noise, giving enough panel spread that the screening procedure flags
    the adversary through the 2-sigma branch.
    """
    rng = np.random.default_rng(seed)
    truth = rng.integers(2, 10, size=(n_cases, n_dims))
    rows = []
    for _ in range(n_consistent):
        noisy = truth + np.round(rng.normal(0, noise_sd, size=truth.shape))
        rows.append(np.clip(noisy, 1, 10))
    panel = np.array(rows)
    adversary = np.clip(np.round(11 - np.median(panel, axis=0)), 1, 10)
    scores = np.concatenate([panel, adversary[None]], axis=0)
    mask = np.ones_like(scores, dtype=bool)
    raters = [f"rater{i:02d}" for i in range(n_consistent)] + ["adversary"]
    return scores, mask, raters


def synthetic_score_rows(
    n_raters: int = 25,
    n_cases: int = 20,
    seed: int = 0,
    dims: tuple[str, ...] = DEFAULT_DIMS,
    adversarial_raters: int = 0,
) -> list[dict]:
    """Raw rating rows: consistent raters score a shared per-case truth with
    rounded Gaussian noise; adversarial raters invert the panel (11 - median),
    the same construction as :func:`adversarial_panel`."""
    rng = np.random.default_rng(seed)
    cases = [f"case{i:04d}" for i in range(n_cases)]
    truth = rng.integers(2, 10, size=(n_cases, len(dims)))
    panel = np.stack(
        [
            np.clip(truth + np.round(rng.normal(0, 1.5, size=truth.shape)), 1, 10)
            for _ in range(n_raters)
        ]
    )
    adversary = np.clip(np.round(11 - np.median(panel, axis=0)), 1, 10)
    rows = []
    for r in range(n_raters):
        for i, c in enumerate(cases):
            for j, d in enumerate(dims):
                rows.append(
                    {"rater_id": f"rater{r:02d}", "case_id": c, "dim": d,
                     "score": int(panel[r, i, j]), "timestamp": 0}
                )
    for a in range(adversarial_raters):
        for i, c in enumerate(cases):
            for j, d in enumerate(dims):
                rows.append(
                    {"rater_id": f"advers{a:02d}", "case_id": c, "dim": d,
                     "score": int(adversary[i, j]), "timestamp": 0}
                )
    return rows
