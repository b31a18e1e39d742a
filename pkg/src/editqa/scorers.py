"""Pluggable objective scorers and the baseline harness.

Scorers come in three kinds: full_reference (source vs edited),
no_reference (edited only), and text_image (edited vs prompt).
Embedding-based scorers take a backend object exposing encode_image /
encode_text, so pretrained encoders are injectable and the metric code
stays testable with deterministic stubs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from . import metrics
from .dataset import CaseSet, load_image_rgb
from .reports import EvalReport
from .subjective import MOSTable, mos_vector

logger = logging.getLogger(__name__)

KINDS = ("full_reference", "no_reference", "text_image")


class EmbeddingBackend(Protocol):
    def encode_image(self, image) -> np.ndarray: ...

    def encode_text(self, text: str) -> np.ndarray: ...


class BackendUnavailableError(Exception):
    pass


@dataclass
class ScorerHandle:
    """A named scorer: callable signature depends on kind."""

    name: str
    kind: str
    score: Callable

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scorer kind: {self.kind!r}")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm embedding")
    return float(u @ v / (nu * nv))


def embedding_cosine(backend: EmbeddingBackend, a, b) -> float:
    """Cosine similarity of the two image embeddings."""
    if backend is None:
        raise BackendUnavailableError("no image encoder backend")
    return cosine(backend.encode_image(a), backend.encode_image(b))


def text_image_cosine(backend: EmbeddingBackend, img, prompt: str) -> float:
    """Cosine similarity of image and text embeddings."""
    if backend is None:
        raise BackendUnavailableError("no text-image backend")
    if not prompt:
        raise ValueError("empty prompt")
    return cosine(backend.encode_image(img), backend.encode_text(prompt))


def pixel_scorer(name: str, fn) -> ScorerHandle:
    return ScorerHandle(name=name, kind="full_reference", score=fn)


def builtin_registry(backend: EmbeddingBackend | None = None) -> list[ScorerHandle]:
    """Default scorer set: pixel metrics plus embedding scorers when a
    backend is supplied."""
    registry = [
        pixel_scorer("pixel_mse", lambda src, edt: metrics.mse_image(src, edt)),
        pixel_scorer("pixel_psnr", lambda src, edt: metrics.psnr(src, edt)),
        pixel_scorer("ssim", lambda src, edt: metrics.ssim(src, edt)),
    ]
    if backend is not None:
        registry.append(
            ScorerHandle(
                "embed_cosine",
                "full_reference",
                lambda src, edt: embedding_cosine(backend, src, edt),
            )
        )
        registry.append(
            ScorerHandle(
                "text_cosine",
                "text_image",
                lambda edt, prompt: text_image_cosine(backend, edt, prompt),
            )
        )
    names = [h.name for h in registry]
    if len(set(names)) != len(names):
        raise ValueError("duplicate scorer names in registry")
    return registry


def score_cases(scorer: ScorerHandle, cs: CaseSet) -> dict[str, float]:
    """Per-case scores; failures are logged and the case skipped."""
    out: dict[str, float] = {}
    for case in sorted(cs.cases, key=lambda c: c.case_id):
        try:
            edited = np.asarray(load_image_rgb(cs.resolve(case.edited_image)))
            if scorer.kind == "full_reference":
                source = np.asarray(load_image_rgb(cs.resolve(case.source_image)))
                out[case.case_id] = float(scorer.score(source, edited))
            elif scorer.kind == "no_reference":
                out[case.case_id] = float(scorer.score(edited))
            else:
                out[case.case_id] = float(scorer.score(edited, case.prompt))
        except Exception as exc:
            logger.warning("scorer %s failed on %s: %s", scorer.name, case.case_id, exc)
    return out


def run_baselines(
    cs: CaseSet,
    mt: MOSTable,
    registry: list[ScorerHandle],
    mos_dim: str = "overall_quality",
    score_dump: list[dict] | None = None,
) -> EvalReport:
    """Score every case with every scorer and correlate against MOS."""
    mos = mos_vector(mt, mos_dim)
    report = EvalReport(label="baselines", config_fingerprint={"mos_dim": mos_dim})
    for scorer in registry:
        scores = score_cases(scorer, cs)
        common = sorted(set(scores) & set(mos))
        if score_dump is not None:
            score_dump.extend(
                {"scorer": scorer.name, "case_id": cid, "score": scores[cid]}
                for cid in common
            )
        pred = [scores[c] for c in common]
        target = [mos[c] for c in common]
        row: dict = {"scorer": scorer.name, "n_cases": len(common)}
        if len(common) < 2:
            row["degenerate"] = True
            report.notes.append(f"{scorer.name}: fewer than 2 scored cases")
        else:
            try:
                row.update(metrics.correlation_suite(pred, target))
                row["degenerate"] = False
            except metrics.ConstantSeriesError as exc:
                row["degenerate"] = True
                row["rmse"] = metrics.rmse(pred, target)
                report.notes.append(f"{scorer.name}: {exc}")
        report.rows.append(row)
    return report
