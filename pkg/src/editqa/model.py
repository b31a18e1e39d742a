"""Three-branch quality model for text-driven image edits.

Branches: (1) text-image alignment — a visual embedding of the edited
image cross-attended by the text encoder; (2) source-target relationship
— source and edited embeddings concatenated through a feed-forward
network; (3) visual quality of the edited image. Enabled branch outputs
are concatenated and regressed to one scalar.

Backbones are registered by name. The "stub" backbone is a tiny
deterministic encoder (quadrant pixel statistics plus hashed character
embeddings) used for tests and smoke runs; a pretrained vision-language
encoder can be registered under another name without touching the
branch logic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

# Raw per-token feature width of the stub visual front end:
# (mean R, mean G, mean B, std luma) per image quadrant.
RAW_DIM = 4
N_VISUAL_TOKENS = 4

FUSION_MODES = ("identity", "attention", "concatenation")

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class BackboneConfig:
    name: str = "stub"
    d_v: int = 8          # visual embedding width
    d_t: int = 8          # text embedding width
    token_limit: int = 16  # prompts truncated here (tail dropped)
    vocab: int = 64


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    use_text_branch: bool = True
    use_source_branch: bool = True
    fusion: str = "concatenation"
    share_source_encoder: bool = True
    d_a: int = 8           # alignment branch output width
    d_o: int = 8           # source-target branch output width
    d_q: int = 8           # quality branch output width
    d_qv: int = 8          # quality encoder embedding width
    ff_hidden: int = 16    # source-target feed-forward hidden width
    q_hidden: int = 16     # quality head hidden width
    head_hidden: int = 16  # final regression head hidden width
    n_heads: int = 1

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode: {self.fusion!r}")

    def head_input_width(self) -> int:
        """Final-head input width: sum of enabled branch output widths."""
        width = self.d_q
        if self.use_text_branch:
            width += self.d_a
        if self.use_source_branch:
            width += self.d_o
        return width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["backbone"] = BackboneConfig(**d["backbone"])
        return cls(**d)


@dataclass
class AlignmentFeatures:
    e_bv: torch.Tensor  # pooled visual embedding of the edited image
    e_bt: torch.Tensor  # pooled text embedding conditioned on visuals


@dataclass
class SourceTargetFeatures:
    f: torch.Tensor       # source embedding
    f_star: torch.Tensor  # edited embedding
    o_s: torch.Tensor     # relevance vector


@dataclass
class QualityFeatures:
    q: torch.Tensor


@dataclass
class Prediction:
    case_id: str
    score: float
    branch_diagnostics: dict


# -- raw featurization ---------------------------------------------------


def image_raw_tokens(pixels) -> np.ndarray:
    """Quadrant statistics of an RGB image: (4 tokens, RAW_DIM) in [0,1]."""
    a = np.asarray(pixels, dtype=float)
    if a.ndim == 2:
        a = np.stack([a] * 3, axis=-1)
    h, w = a.shape[:2]
    hh, hw = max(h // 2, 1), max(w // 2, 1)
    quadrants = [
        a[:hh, :hw],
        a[:hh, hw:] if w > 1 else a[:hh, :hw],
        a[hh:, :hw] if h > 1 else a[:hh, :hw],
        a[hh:, hw:] if h > 1 and w > 1 else a[:hh, :hw],
    ]
    tokens = np.zeros((N_VISUAL_TOKENS, RAW_DIM))
    for i, quad in enumerate(quadrants):
        rgb = quad.reshape(-1, 3)
        tokens[i, :3] = rgb.mean(axis=0) / 255.0
        tokens[i, 3] = (rgb @ _LUMA).std() / 255.0
    return tokens


def tokenize_prompt(prompt: str, token_limit: int, vocab: int) -> list[int]:
    """Hash characters into [1, vocab); 0 is padding. Tail truncation."""
    if len(prompt) > token_limit:
        logger.debug("prompt truncated to %d tokens", token_limit)
    return [(ord(ch) % (vocab - 1)) + 1 for ch in prompt[:token_limit]]


@dataclass
class CaseFeatures:
    """Precomputed model inputs for one case."""

    case_id: str
    source_tokens: np.ndarray  # (T, RAW_DIM)
    edited_tokens: np.ndarray
    prompt_ids: list[int]


def featurize_case(caseset, case, cache: dict | None = None) -> CaseFeatures:
    from .dataset import load_image_rgb  # local import avoids a cycle

    def raw(ref: str) -> np.ndarray:
        key = str(caseset.resolve(ref))
        if cache is not None and key in cache:
            return cache[key]
        toks = image_raw_tokens(np.asarray(load_image_rgb(key)))
        if cache is not None:
            cache[key] = toks
        return toks

    return CaseFeatures(
        case_id=case.case_id,
        source_tokens=raw(case.source_image),
        edited_tokens=raw(case.edited_image),
        prompt_ids=[],  # filled by the model, which knows the vocab
    )


# -- building blocks -----------------------------------------------------


class FeedForward(nn.Module):
    """Two-layer feed-forward block with tanh nonlinearity."""

    def __init__(self, d_in: int, hidden: int, d_out: int):
        super().__init__()
        self.fc1 = nn.Linear(d_in, hidden)
        self.fc2 = nn.Linear(hidden, d_out)

    def forward(self, x):
        return self.fc2(torch.tanh(self.fc1(x)))


class CrossAttention(nn.Module):
    """Multi-head cross-attention: queries attend over key/value tokens."""

    def __init__(self, d_query: int, d_kv: int, d_model: int, n_heads: int = 1):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError("d_model must divide by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = nn.Linear(d_query, d_model)
        self.wk = nn.Linear(d_kv, d_model)
        self.wv = nn.Linear(d_kv, d_model)
        self.wo = nn.Linear(d_model, d_query)

    def forward(self, queries, kv):
        # queries: (B, L, d_query); kv: (B, T, d_kv)
        B, L, _ = queries.shape
        T = kv.shape[1]

        def split(x):
            return x.view(B, -1, self.n_heads, self.d_head).transpose(1, 2)

        q = split(self.wq(queries))
        k = split(self.wk(kv))
        v = split(self.wv(kv))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.d_head), dim=-1)
        out = (att @ v).transpose(1, 2).reshape(B, L, -1)
        return self.wo(out)


class StubVisualEncoder(nn.Module):
    """Linear projection of quadrant statistics to token embeddings."""

    def __init__(self, d_v: int):
        super().__init__()
        self.proj = nn.Linear(RAW_DIM, d_v)

    def forward(self, raw_tokens):
        # raw_tokens: (B, T, RAW_DIM) -> (B, T, d_v)
        return self.proj(raw_tokens)


class StubTextEmbedding(nn.Module):
    def __init__(self, vocab: int, d_t: int):
        super().__init__()
        self.embed = nn.Embedding(vocab, d_t, padding_idx=0)

    def forward(self, ids):
        return self.embed(ids)


BACKBONES = {"stub": None}  # name -> factory; stub is built inline


# -- the model -----------------------------------------------------------


class EditQAModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.backbone.name not in BACKBONES:
            raise ValueError(f"unknown backbone: {cfg.backbone.name!r}")
        self.cfg = cfg
        d_v, d_t = cfg.backbone.d_v, cfg.backbone.d_t

        # Backbone group (frozen during linear probing).
        self.edited_encoder = StubVisualEncoder(d_v)
        self.source_encoder = (
            self.edited_encoder
            if cfg.share_source_encoder
            else StubVisualEncoder(d_v)
        )
        self.quality_encoder = StubVisualEncoder(cfg.d_qv)
        self.text_embedding = StubTextEmbedding(cfg.backbone.vocab, d_t)

        # Head group.
        if cfg.use_text_branch:
            self.cross_attn = CrossAttention(d_t, d_v, d_t * cfg.n_heads, cfg.n_heads)
            self.align_text_proj = nn.Linear(d_t, d_v)
            self.align_out = nn.Linear(d_v + 1, cfg.d_a)
        if cfg.use_source_branch:
            if cfg.fusion == "concatenation":
                self.st_ffn = FeedForward(2 * d_v, cfg.ff_hidden, cfg.d_o)
            elif cfg.fusion == "identity":
                self.st_ffn = FeedForward(d_v, cfg.ff_hidden, cfg.d_o)
            else:  # attention
                self.st_attn = CrossAttention(d_v, d_v, d_v * cfg.n_heads, cfg.n_heads)
                self.st_ffn = FeedForward(d_v, cfg.ff_hidden, cfg.d_o)
        self.quality_head = FeedForward(cfg.d_qv, cfg.q_hidden, cfg.d_q)
        self.final_head = FeedForward(cfg.head_input_width(), cfg.head_hidden, 1)

    # -- parameter groups ------------------------------------------------

    def backbone_parameters(self) -> Iterable[nn.Parameter]:
        mods = [self.edited_encoder, self.quality_encoder, self.text_embedding]
        if not self.cfg.share_source_encoder:
            mods.append(self.source_encoder)
        seen = set()
        for mod in mods:
            for p in mod.parameters():
                if id(p) not in seen:
                    seen.add(id(p))
                    yield p

    def head_parameters(self) -> Iterable[nn.Parameter]:
        backbone_ids = {id(p) for p in self.backbone_parameters()}
        for p in self.parameters():
            if id(p) not in backbone_ids:
                yield p

    # -- featurization helpers -------------------------------------------

    def _tensor(self, raw_tokens) -> torch.Tensor:
        p = next(self.parameters())
        t = torch.as_tensor(np.asarray(raw_tokens), dtype=p.dtype, device=p.device)
        return t.unsqueeze(0) if t.dim() == 2 else t

    def _prompt_batch(self, prompts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        bb = self.cfg.backbone
        ids = [tokenize_prompt(p, bb.token_limit, bb.vocab) for p in prompts]
        L = max((len(i) for i in ids), default=1) or 1
        padded = torch.zeros(len(prompts), L, dtype=torch.long)
        for row, seq in zip(padded, ids):
            row[: len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask = padded != 0
        device = next(self.parameters()).device
        return padded.to(device), mask.to(device)

    # -- branches ----------------------------------------------------------

    def alignment_branch(self, edited_raw, prompts: list[str]):
        """Returns (pooled visual, pooled conditioned text, branch feature)."""
        tokens = self.edited_encoder(self._tensor(edited_raw))  # (B, T, d_v)
        e_bv = tokens.mean(dim=1)
        ids, mask = self._prompt_batch(prompts)
        if not mask.any(dim=1).all():
            raise ValueError("empty prompt")
        t_tokens = self.text_embedding(ids)  # (B, L, d_t)
        attended = t_tokens + self.cross_attn(t_tokens, tokens)
        denom = mask.sum(dim=1, keepdim=True).to(attended.dtype)
        e_bt = (attended * mask.unsqueeze(-1)).sum(dim=1) / denom
        projected = self.align_text_proj(e_bt)
        cos = torch.nn.functional.cosine_similarity(e_bv, projected, dim=-1)
        summary = torch.cat([e_bv * projected, cos.unsqueeze(-1)], dim=-1)
        return e_bv, e_bt, self.align_out(summary)

    def source_target_branch(self, source_raw, edited_raw):
        f = self.source_encoder(self._tensor(source_raw)).mean(dim=1)
        f_star = self.edited_encoder(self._tensor(edited_raw)).mean(dim=1)
        if self.cfg.fusion == "concatenation":
            o_s = self.st_ffn(torch.cat([f, f_star], dim=-1))
        elif self.cfg.fusion == "identity":
            o_s = self.st_ffn(f_star)
        else:
            src_tokens = self.source_encoder(self._tensor(source_raw))
            fused = self.st_attn(f_star.unsqueeze(1), src_tokens).squeeze(1)
            o_s = self.st_ffn(fused)
        return f, f_star, o_s

    def quality_branch(self, edited_raw):
        pooled = self.quality_encoder(self._tensor(edited_raw)).mean(dim=1)
        return self.quality_head(pooled)

    # -- public encode ops -------------------------------------------------

    def encode_alignment(self, edited_raw, prompt: str) -> AlignmentFeatures:
        if not prompt:
            raise ValueError("empty prompt")
        e_bv, e_bt, _ = self.alignment_branch(edited_raw, [prompt])
        return AlignmentFeatures(e_bv=e_bv.squeeze(0), e_bt=e_bt.squeeze(0))

    def encode_source_target(self, source_raw, edited_raw) -> SourceTargetFeatures:
        f, f_star, o_s = self.source_target_branch(source_raw, edited_raw)
        return SourceTargetFeatures(
            f=f.squeeze(0), f_star=f_star.squeeze(0), o_s=o_s.squeeze(0)
        )

    def encode_quality(self, edited_raw) -> QualityFeatures:
        return QualityFeatures(q=self.quality_branch(edited_raw).squeeze(0))

    # -- full forward --------------------------------------------------------

    def forward_batch(self, source_raw, edited_raw, prompts: list[str]):
        """Scalar predictions for a batch; returns (scores, diagnostics)."""
        parts = []
        diag = {}
        if self.cfg.use_text_branch:
            e_bv, e_bt, align_feat = self.alignment_branch(edited_raw, prompts)
            parts.append(align_feat)
            proj = self.align_text_proj(e_bt)
            diag["alignment_cosine"] = torch.nn.functional.cosine_similarity(
                e_bv, proj, dim=-1
            )
        if self.cfg.use_source_branch:
            _f, _f_star, o_s = self.source_target_branch(source_raw, edited_raw)
            parts.append(o_s)
            diag["source_target_norm"] = o_s.norm(dim=-1)
        q = self.quality_branch(edited_raw)
        parts.append(q)
        diag["quality_norm"] = q.norm(dim=-1)
        scores = self.final_head(torch.cat(parts, dim=-1)).squeeze(-1)
        return scores, diag

    def predict_case(self, feats: CaseFeatures, prompt: str) -> Prediction:
        self.eval()
        with torch.no_grad():
            scores, diag = self.forward_batch(
                feats.source_tokens, feats.edited_tokens, [prompt]
            )
        score = float(scores[0])
        if not math.isfinite(score):
            raise ValueError(f"non-finite prediction for case {feats.case_id}")
        return Prediction(
            case_id=feats.case_id,
            score=score,
            branch_diagnostics={k: float(v[0]) for k, v in diag.items()},
        )


def count_parameters(model: nn.Module) -> int:
    seen = set()
    total = 0
    for p in model.parameters():
        if id(p) not in seen:
            seen.add(id(p))
            total += p.numel()
    return total


def parameter_matched_control(
    model: EditQAModel, tolerance: float = 0.01
) -> EditQAModel:
    """Source-branch-free variant with the edited-image quality branch
    widened so total parameter count matches within ``tolerance``.

    Searches integer widths for the quality head; raises with the best
    achievable delta when no width combination lands inside tolerance.
    """
    if not model.cfg.use_source_branch:
        raise ValueError("model has no source branch to remove")
    target = count_parameters(model)
    base = model.cfg

    def candidate(q_hidden: int, d_qv: int) -> ModelConfig:
        cfg = ModelConfig.from_dict(base.to_dict())
        cfg.use_source_branch = False
        cfg.q_hidden = q_hidden
        cfg.d_qv = d_qv
        return cfg

    def quality_params(q_hidden: int, d_qv: int) -> int:
        encoder = (RAW_DIM + 1) * d_qv
        head = (d_qv + 1) * q_hidden + (q_hidden + 1) * base.d_q
        return encoder + head

    # Everything outside the quality branch is unaffected by the widening.
    base_cfg = candidate(base.q_hidden, base.d_qv)
    fixed = count_parameters(EditQAModel(base_cfg)) - quality_params(
        base.q_hidden, base.d_qv
    )

    best: tuple[float, ModelConfig] | None = None
    for d_qv in range(base.d_qv, base.d_qv * 8 + 1):
        for q_hidden in range(base.q_hidden, base.q_hidden * 32 + 1):
            total = fixed + quality_params(q_hidden, d_qv)
            delta = abs(total - target) / target
            if best is None or delta < best[0]:
                best = (delta, candidate(q_hidden, d_qv))
            if total > target and delta > best[0]:
                break
    assert best is not None
    if best[0] > tolerance:
        raise ValueError(
            f"cannot match parameter count within {tolerance:.1%}; "
            f"best achievable delta {best[0]:.3%}"
        )
    control = EditQAModel(best[1])
    logger.info(
        "parameter-matched control: %d vs %d params (%.3f%%)",
        count_parameters(control), target, 100 * best[0],
    )
    return control


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(model: EditQAModel, path) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": model.cfg.to_dict(),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> EditQAModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('format_version')}")
    model = EditQAModel(ModelConfig.from_dict(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    return model


def backbone_checksum(model: EditQAModel) -> bytes:
    """Order-stable digest of backbone parameter bytes."""
    import hashlib

    h = hashlib.sha256()
    for p in model.backbone_parameters():
        h.update(p.detach().cpu().numpy().tobytes())
    return h.digest()
