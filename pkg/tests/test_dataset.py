import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from editqa.dataset import (
    CaseSet,
    CaseValidationError,
    EditCase,
    ManifestError,
    Violation,
    ingest_caseset,
    load_manifest,
    resize_shorter_side,
    validate_caseset,
    write_manifest,
)
from editqa.synthetic import make_case_store


def _img(tmp_path, name, size=(16, 16), mode="RGB"):
    path = tmp_path / name
    Image.new(mode, size, color=(10, 20, 30) if mode == "RGB" else None).save(path)
    return name


def _case(tmp_path, cid="c1", **overrides):
    fields = dict(
        case_id=cid,
        source_image=_img(tmp_path, f"{cid}_s.png"),
        edited_image=_img(tmp_path, f"{cid}_e.png"),
        prompt="make it blue",
        prompt_type="style",
    )
    fields.update(overrides)
    return EditCase(**fields)


class TestManifestRoundTrip:
    def test_round_trip_equal(self, tmp_path):
        cases = [_case(tmp_path, f"c{i}") for i in range(5)]
        cs = CaseSet(cases=cases, name="rt", version="3", root=tmp_path)
        write_manifest(cs, tmp_path / "m.jsonl")
        loaded = load_manifest(tmp_path / "m.jsonl")
        assert loaded.name == "rt" and loaded.version == "3"
        assert loaded.cases == cs.cases

    def test_empty_manifest_preserves_metadata(self, tmp_path):
        cs = CaseSet(cases=[], name="empty", version="9", root=tmp_path)
        write_manifest(cs, tmp_path / "m.jsonl")
        loaded = load_manifest(tmp_path / "m.jsonl")
        assert len(loaded) == 0
        assert loaded.name == "empty"

    def test_duplicate_ids_named_in_error(self, tmp_path):
        c = _case(tmp_path, "c1")
        lines = [
            json.dumps({"name": "d", "version": "1", "created": ""}),
            json.dumps(c.to_record()),
            json.dumps(c.to_record()),
        ]
        (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(CaseValidationError) as exc:
            load_manifest(tmp_path / "m.jsonl")
        assert "c1" in str(exc.value)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("not json\n")
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "m.jsonl")

    def test_full_scale_counts(self, tmp_path):
        # 301 sources x 5 methods = 1505 cases; manifest-only check, no
        # images on disk, so image validation is off.
        cases = [
            EditCase(
                case_id=f"src{s:03d}_m{m}",
                source_image=f"img/src{s}.png",
                edited_image=f"img/src{s}_m{m}.png",
                prompt="p",
                prompt_type="semantic",
                editing_method=f"m{m}",
            )
            for s in range(301)
            for m in range(5)
        ]
        cs = CaseSet(cases=cases, root=tmp_path)
        write_manifest(cs, tmp_path / "m.jsonl")
        loaded = load_manifest(tmp_path / "m.jsonl", check_images=False)
        assert len(loaded) == 1505


class TestValidation:
    def test_valid_caseset_no_violations(self, tmp_path):
        cs = CaseSet(cases=[_case(tmp_path)], root=tmp_path)
        assert validate_caseset(cs) == []

    def test_empty_prompt(self, tmp_path):
        cs = CaseSet(cases=[_case(tmp_path, prompt="")], root=tmp_path)
        violations = validate_caseset(cs)
        assert Violation("c1", "empty prompt") in violations

    def test_missing_image(self, tmp_path):
        cs = CaseSet(
            cases=[_case(tmp_path, source_image="nope.png")], root=tmp_path
        )
        rules = [v.rule for v in validate_caseset(cs)]
        assert "unresolvable image" in rules

    def test_bad_prompt_type(self, tmp_path):
        cs = CaseSet(cases=[_case(tmp_path, prompt_type="vibes")], root=tmp_path)
        rules = [v.rule for v in validate_caseset(cs)]
        assert "unknown prompt_type" in rules


class TestResize:
    def _raw(self, w, h):
        return Image.fromarray(
            np.random.default_rng(0).integers(0, 256, (h, w, 3), dtype=np.uint8)
        )

    def test_identity_at_target(self):
        img = self._raw(512, 512)
        assert resize_shorter_side(img).size == (512, 512)

    def test_exact_halving(self):
        assert resize_shorter_side(self._raw(2048, 1024)).size == (1024, 512)

    def test_round_half_up_long_side(self):
        # scale 512/768: long side 1024 * 2/3 = 682.67 -> 683
        assert resize_shorter_side(self._raw(1024, 768)).size == (683, 512)

    def test_no_upscale(self):
        assert resize_shorter_side(self._raw(100, 80)).size == (100, 80)

    def test_zero_dimension_rejected(self):
        img = Image.new("RGB", (0, 10))
        with pytest.raises(ValueError):
            resize_shorter_side(img)

    @given(w=st.integers(1, 4000), h=st.integers(1, 4000))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_and_aspect(self, w, h):
        img = Image.new("RGB", (w, h))
        once = resize_shorter_side(img)
        assert resize_shorter_side(once).size == once.size
        # aspect ratio within 1 pixel on the long side
        ow, oh = once.size
        if min(w, h) > 512:
            scale = 512 / min(w, h)
            assert abs(max(ow, oh) - max(w, h) * scale) <= 1
            assert min(ow, oh) == 512


class TestIngest:
    def test_ingest_writes_store(self, tmp_path):
        cs = make_case_store(tmp_path / "raw", n_cases=3, seed=1,
                             image_size=(600, 700))
        out = ingest_caseset(cs, tmp_path / "store")
        assert (tmp_path / "store" / "manifest.jsonl").exists()
        for case in out.cases:
            with Image.open(out.resolve(case.edited_image)) as im:
                assert min(im.size) == 512
                assert im.mode == "RGB"
