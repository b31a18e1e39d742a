"""Case schema, manifest I/O, and image preparation.

A dataset is a set of (source image, prompt, edited image) cases with
taxonomy tags. The on-disk manifest is line-delimited JSON: one header
object followed by one object per case, UTF-8 with LF line endings.
Image references are relative paths resolved against the manifest's
directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from PIL import Image

logger = logging.getLogger(__name__)

PROMPT_TYPES = ("style", "semantic", "structural")
PARADIGMS = ("instruction_based", "description_based")

DEFAULT_SHORTER_SIDE = 512


class ManifestError(Exception):
    """Manifest file is missing or malformed."""


class CaseValidationError(Exception):
    """One or more cases violate schema invariants."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        listing = "; ".join(str(v) for v in violations)
        super().__init__(f"{len(violations)} case violation(s): {listing}")


@dataclass(frozen=True)
class Violation:
    case_id: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        msg = f"{self.case_id}: {self.rule}"
        return f"{msg} ({self.detail})" if self.detail else msg


@dataclass(frozen=True)
class EditCase:
    """One source -> prompt -> edited triple, the atomic scored unit."""

    case_id: str
    source_image: str
    edited_image: str
    prompt: str
    prompt_type: str
    editing_method: str = ""
    content_tags: tuple[str, ...] = ()

    def to_record(self) -> dict:
        d = asdict(self)
        d["content_tags"] = list(self.content_tags)
        return d

    @classmethod
    def from_record(cls, d: dict) -> "EditCase":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        known["content_tags"] = tuple(known.get("content_tags", ()))
        return cls(**known)


@dataclass(frozen=True)
class MethodInfo:
    """An editing method whose outputs the dataset contains."""

    name: str
    zero_shot: bool
    paradigm: str
    backbone_version: str = ""

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ValueError(f"unknown paradigm: {self.paradigm!r}")


@dataclass
class CaseSet:
    cases: list[EditCase]
    name: str = "unnamed"
    version: str = "0"
    created: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )
    # Directory image references are resolved against.
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        # Canonical order so loads are stable regardless of file order.
        self.cases = sorted(self.cases, key=lambda c: c.case_id)

    def __len__(self) -> int:
        return len(self.cases)

    def case_ids(self) -> list[str]:
        return [c.case_id for c in self.cases]

    def resolve(self, ref: str) -> Path:
        p = Path(ref)
        return p if p.is_absolute() else self.root / p


def validate_caseset(cs: CaseSet, check_images: bool = True) -> list[Violation]:
    """Check every case invariant; violations are returned, not raised."""
    violations: list[Violation] = []
    seen: set[str] = set()
    for case in cs.cases:
        if case.case_id in seen:
            violations.append(Violation(case.case_id, "duplicate case_id"))
        seen.add(case.case_id)
        if not case.prompt:
            violations.append(Violation(case.case_id, "empty prompt"))
        if case.prompt_type not in PROMPT_TYPES:
            violations.append(
                Violation(
                    case.case_id,
                    "unknown prompt_type",
                    repr(case.prompt_type),
                )
            )
        if check_images:
            for ref in (case.source_image, case.edited_image):
                path = cs.resolve(ref)
                if not path.is_file():
                    violations.append(
                        Violation(case.case_id, "unresolvable image", str(path))
                    )
                    continue
                try:
                    with Image.open(path) as im:
                        im.verify()
                except Exception as exc:
                    violations.append(
                        Violation(case.case_id, "undecodable image", f"{path}: {exc}")
                    )
    return violations


def load_manifest(path: str | Path, check_images: bool = True) -> CaseSet:
    """Parse and validate a manifest file into a CaseSet.

    Raises ManifestError on malformed input and CaseValidationError when
    any case invariant fails (all offending case_ids are listed).
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ManifestError(f"empty manifest file: {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"bad manifest header: {exc}") from exc
    if not isinstance(header, dict):
        raise ManifestError("manifest header must be an object")

    cases = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
        try:
            cases.append(EditCase.from_record(record))
        except TypeError as exc:
            raise ManifestError(f"line {lineno}: bad case record: {exc}") from exc

    cs = CaseSet(
        cases=cases,
        name=header.get("name", "unnamed"),
        version=str(header.get("version", "0")),
        created=header.get("created", ""),
        root=path.parent,
    )
    violations = validate_caseset(cs, check_images=check_images)
    if violations:
        raise CaseValidationError(violations)
    return cs


def write_manifest(cs: CaseSet, path: str | Path) -> Path:
    """Write the manifest; single-writer, whole-file replace."""
    path = Path(path)
    header = {"name": cs.name, "version": cs.version, "created": cs.created}
    lines = [json.dumps(header, ensure_ascii=False)]
    lines += [json.dumps(c.to_record(), ensure_ascii=False) for c in cs.cases]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def _round_half_up(x: Fraction) -> int:
    return int(x + Fraction(1, 2))


def resize_shorter_side(
    image: Image.Image, target: int = DEFAULT_SHORTER_SIDE
) -> Image.Image:
    """Downscale so the shorter side equals ``target``, keeping aspect.

    Images whose shorter side is already at or below the target pass
    through unchanged (no upscaling). Long side rounds half-up, bicubic.
    """
    w, h = image.size
    if w <= 0 or h <= 0:
        raise ValueError(f"zero-dimension image: {image.size}")
    shorter = min(w, h)
    if shorter <= target:
        return image
    scale = Fraction(target, shorter)
    new_w = target if w == shorter else _round_half_up(w * scale)
    new_h = target if h == shorter else _round_half_up(h * scale)
    return image.resize((new_w, new_h), Image.BICUBIC)


def load_image_rgb(path: str | Path) -> Image.Image:
    """Open an image as 8-bit RGB; alpha is dropped with a warning."""
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA", "PA"):
            logger.warning("dropping alpha channel at ingest: %s", path)
        return im.convert("RGB")


def ingest_caseset(cs: CaseSet, out_dir: str | Path,
                   target: int = DEFAULT_SHORTER_SIDE) -> CaseSet:
    """Write a prepared case store: resized RGB images plus a manifest."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    new_cases = []
    for case in cs.cases:
        refs = {}
        for field_name, ref in (
            ("source_image", case.source_image),
            ("edited_image", case.edited_image),
        ):
            im = resize_shorter_side(load_image_rgb(cs.resolve(ref)), target)
            rel = f"images/{case.case_id}_{field_name}.png"
            im.save(out_dir / rel)
            refs[field_name] = rel
        new_cases.append(
            EditCase(
                case_id=case.case_id,
                source_image=refs["source_image"],
                edited_image=refs["edited_image"],
                prompt=case.prompt,
                prompt_type=case.prompt_type,
                editing_method=case.editing_method,
                content_tags=case.content_tags,
            )
        )
    out = CaseSet(
        cases=new_cases, name=cs.name, version=cs.version,
        created=cs.created, root=out_dir,
    )
    write_manifest(out, out_dir / "manifest.jsonl")
    return out
