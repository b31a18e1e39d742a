"""Losses, two-stage optimization, k-fold cross-validation, and the
ablation harness.

Loss: L = L_corr + alpha * L_rank with alpha defaulting to 0.3, where
L_corr = (1 - Pearson(pred, target)) / 2 and L_rank is a pairwise hinge
over pairs whose targets differ by more than tie_epsilon.

Training runs in two stages: linear probing (backbone frozen, heads
only) followed by full fine-tuning, each with Adam and a cosine decay
schedule restarted per stage.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .dataset import CaseSet
from .metrics import ConstantSeriesError, correlation_suite, rmse
from .model import (
    CaseFeatures,
    EditQAModel,
    ModelConfig,
    backbone_checksum,
    count_parameters,
    featurize_case,
    parameter_matched_control,
)
from .reports import EvalReport

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    "no_text",
    "no_source",
    "fusion_identity",
    "fusion_attention",
    "fusion_concat",
    "param_matched_control",
)


@dataclass
class LossConfig:
    alpha: float = 0.3
    rank_margin: float = 0.0
    tie_epsilon: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.rank_margin < 0 or self.tie_epsilon < 0:
            raise ValueError("loss config fields must be non-negative")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    stage1_epochs: int = 40
    stage2_epochs: int = 20
    seed: int = 0

    @property
    def total_epochs(self) -> int:
        return self.stage1_epochs + self.stage2_epochs


@dataclass
class FoldSplit:
    k: int
    folds: list[list[str]]
    seed: int


class NonFiniteLossError(Exception):
    pass


# -- losses ----------------------------------------------------------------


def plcc_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(1 - Pearson(pred, target)) / 2; constant pred is defined as 1."""
    if pred.numel() < 2:
        raise ValueError("need at least 2 elements")
    pc = pred - pred.mean()
    tc = target - target.mean()
    denom = torch.sqrt((pc @ pc) * (tc @ tc))
    if denom.item() == 0.0:
        logger.warning("degenerate series in correlation loss, returning 1")
        return pred.sum() * 0.0 + 1.0
    return (1.0 - (pc @ tc) / denom) / 2.0


def rank_loss(
    pred: torch.Tensor, target: torch.Tensor, cfg: LossConfig | None = None
) -> torch.Tensor:
    """Mean hinge over ordered pairs (i, j) with target_i > target_j +
    tie_epsilon: max(0, margin + pred_j - pred_i). No valid pairs -> 0."""
    cfg = cfg or LossConfig()
    if pred.numel() < 2:
        raise ValueError("need at least 2 elements")
    dt = target.unsqueeze(1) - target.unsqueeze(0)  # target_i - target_j
    valid = dt > cfg.tie_epsilon
    if not valid.any():
        return pred.sum() * 0.0
    dp = pred.unsqueeze(0) - pred.unsqueeze(1)  # pred_j - pred_i
    hinge = torch.clamp(cfg.rank_margin + dp, min=0.0)
    return hinge[valid].mean()


def total_loss(
    pred: torch.Tensor, target: torch.Tensor, cfg: LossConfig | None = None
) -> torch.Tensor:
    cfg = cfg or LossConfig()
    return plcc_loss(pred, target) + cfg.alpha * rank_loss(pred, target, cfg)


# -- folds -----------------------------------------------------------------


def make_folds(cs: CaseSet, k: int, seed: int) -> FoldSplit:
    """Seeded shuffle then contiguous chunks with sizes differing by <=1."""
    ids = cs.case_ids()
    if k > len(ids):
        raise ValueError(f"k={k} exceeds {len(ids)} cases")
    rng = random.Random(seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    base, extra = divmod(len(shuffled), k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(sorted(shuffled[pos : pos + size]))
        pos += size
    return FoldSplit(k=k, folds=folds, seed=seed)


# -- training --------------------------------------------------------------


def _prepare_examples(
    cs: CaseSet, case_ids: list[str], mos: dict[str, float]
) -> list[tuple[CaseFeatures, str, float]]:
    by_id = {c.case_id: c for c in cs.cases}
    cache: dict = {}
    examples = []
    for cid in case_ids:
        if cid not in mos:
            raise ValueError(f"case {cid!r} has no MOS")
        case = by_id[cid]
        feats = featurize_case(cs, case, cache)
        examples.append((feats, case.prompt, float(mos[cid])))
    return examples


def _batches(n: int, batch_size: int, rng: random.Random) -> list[list[int]]:
    idx = list(range(n))
    rng.shuffle(idx)
    batches = [idx[i : i + batch_size] for i in range(0, n, batch_size)]
    # Per-batch correlation needs >= 2 examples; merge a trailing singleton.
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2].extend(batches.pop())
    return batches


def _run_stage(
    model: EditQAModel,
    examples,
    params,
    tc: TrainConfig,
    lc: LossConfig,
    epochs: int,
    rng: random.Random,
    history: list[dict],
    stage: int,
) -> None:
    if epochs <= 0:
        return
    optimizer = torch.optim.Adam(params, lr=tc.lr)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=epochs)
    src = np.stack([e[0].source_tokens for e in examples])
    edt = np.stack([e[0].edited_tokens for e in examples])
    prompts = [e[1] for e in examples]
    targets = torch.tensor([e[2] for e in examples], dtype=torch.get_default_dtype())
    model.train()
    for epoch in range(epochs):
        epoch_loss = 0.0
        batches = _batches(len(examples), tc.batch_size, rng)
        for batch in batches:
            optimizer.zero_grad()
            pred, _ = model.forward_batch(
                src[batch], edt[batch], [prompts[i] for i in batch]
            )
            loss = total_loss(pred, targets[batch], lc)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at stage {stage} epoch {epoch}: {loss}"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(batch)
        scheduler.step()
        history.append(
            {"stage": stage, "epoch": epoch, "loss": epoch_loss / len(examples)}
        )


def train(
    model: EditQAModel,
    cs: CaseSet,
    train_ids: list[str],
    mos: dict[str, float],
    tc: TrainConfig,
    lc: LossConfig | None = None,
) -> list[dict]:
    """Two-stage training; returns the per-epoch loss history.

    Stage 1 freezes every backbone parameter (verified bit-identical
    afterwards) and trains the heads; stage 2 trains everything.
    """
    lc = lc or LossConfig()
    examples = _prepare_examples(cs, train_ids, mos)
    rng = random.Random(tc.seed)
    history: list[dict] = []

    for p in model.backbone_parameters():
        p.requires_grad_(False)
    before = backbone_checksum(model)
    _run_stage(
        model, examples, list(model.head_parameters()), tc, lc,
        tc.stage1_epochs, rng, history, stage=1,
    )
    if backbone_checksum(model) != before:
        raise RuntimeError("backbone changed during linear probing stage")

    for p in model.backbone_parameters():
        p.requires_grad_(True)
    _run_stage(
        model, examples, list(model.parameters()), tc, lc,
        tc.stage2_epochs, rng, history, stage=2,
    )
    return history


@dataclass
class EvalResult:
    srocc: float
    plcc: float
    krcc: float
    rmse: float
    degenerate: bool = False
    predictions: dict[str, float] = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "srocc": self.srocc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "rmse": self.rmse,
            "degenerate": self.degenerate,
        }


def evaluate(
    model: EditQAModel, cs: CaseSet, case_ids: list[str], mos: dict[str, float]
) -> EvalResult:
    examples = _prepare_examples(cs, case_ids, mos)
    preds: dict[str, float] = {}
    model.eval()
    for feats, prompt, _target in examples:
        preds[feats.case_id] = model.predict_case(feats, prompt).score
    p = [preds[cid] for cid in case_ids]
    t = [mos[cid] for cid in case_ids]
    try:
        suite = correlation_suite(p, t)
        return EvalResult(**suite, predictions=preds)
    except ConstantSeriesError:
        return EvalResult(
            srocc=float("nan"), plcc=float("nan"), krcc=float("nan"),
            rmse=rmse(p, t), degenerate=True, predictions=preds,
        )


def run_cross_validation(
    cs: CaseSet,
    mos: dict[str, float],
    model_cfg: ModelConfig,
    tc: TrainConfig,
    lc: LossConfig | None = None,
    k: int = 10,
    label: str = "cross_validation",
    variant: str | None = None,
    checkpoint_dir=None,
) -> EvalReport:
    """k rounds of fresh-init train/evaluate; per-fold seeds are
    seed + fold_index. Deterministic in serial execution."""
    lc = lc or LossConfig()
    split = make_folds(cs, k, tc.seed)
    all_ids = set(cs.case_ids())
    report = EvalReport(
        label=label,
        config_fingerprint={
            "model": model_cfg.to_dict(),
            "train": asdict(tc),
            "loss": asdict(lc),
            "k": k,
            "variant": variant,
            "folds": split.folds,
            "parameter_count": None,
        },
    )
    fold_rows = []
    for i, fold in enumerate(split.folds):
        train_ids = sorted(all_ids - set(fold))
        fold_tc = TrainConfig(**{**asdict(tc), "seed": tc.seed + i})
        torch.manual_seed(fold_tc.seed)
        model = EditQAModel(model_cfg)
        if variant == "param_matched_control":
            base = count_parameters(model)
            model = parameter_matched_control(model)
            report.config_fingerprint["base_parameter_count"] = base
        if report.config_fingerprint["parameter_count"] is None:
            report.config_fingerprint["parameter_count"] = count_parameters(model)
        try:
            train(model, cs, train_ids, mos, fold_tc, lc)
            result = evaluate(model, cs, fold, mos)
        except Exception as exc:
            logger.error("fold %d failed: %s", i, exc)
            report.partial = True
            report.notes.append(f"fold {i} failed: {exc}")
            continue
        if checkpoint_dir is not None:
            from pathlib import Path

            from .model import save_checkpoint

            path = Path(checkpoint_dir) / f"fold_{i}.pt"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, path)
        fold_rows.append({"fold": i, **result.as_row()})
    report.rows.extend(fold_rows)
    if fold_rows:
        clean = [r for r in fold_rows if not r["degenerate"]]
        mean_row = {"fold": "mean", "degenerate": len(clean) < len(fold_rows)}
        for m in ("srocc", "plcc", "krcc", "rmse"):
            vals = [r[m] for r in fold_rows]
            mean_row[m] = float(np.mean(vals)) if vals else float("nan")
        report.rows.append(mean_row)
    return report


def variant_config(model_cfg: ModelConfig, variant: str) -> ModelConfig:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant: {variant!r}")
    cfg = ModelConfig.from_dict(model_cfg.to_dict())
    if variant == "no_text":
        cfg.use_text_branch = False
    elif variant == "no_source":
        cfg.use_source_branch = False
    elif variant == "fusion_identity":
        cfg.fusion = "identity"
    elif variant == "fusion_attention":
        cfg.fusion = "attention"
    elif variant == "fusion_concat":
        cfg.fusion = "concatenation"
    # param_matched_control keeps the base config; the control model is
    # derived per fold in run_cross_validation.
    return cfg


def run_ablation(
    variant: str,
    cs: CaseSet,
    mos: dict[str, float],
    model_cfg: ModelConfig,
    tc: TrainConfig,
    lc: LossConfig | None = None,
    k: int = 10,
    checkpoint_dir=None,
) -> EvalReport:
    cfg = variant_config(model_cfg, variant)
    return run_cross_validation(
        cs, mos, cfg, tc, lc, k=k,
        label=f"ablation:{variant}", variant=variant,
        checkpoint_dir=checkpoint_dir,
    )


def history_to_json(history: list[dict]) -> str:
    return json.dumps(history, indent=2)
