import numpy as np
import pytest
import torch

from editqa.model import (
    EditQAModel,
    ModelConfig,
    backbone_checksum,
    count_parameters,
    image_raw_tokens,
    load_checkpoint,
    parameter_matched_control,
    save_checkpoint,
    tokenize_prompt,
)

from conftest import tiny_model_config
from oracles import oracle_forward


def _raw(seed=0):
    rng = np.random.default_rng(seed)
    return image_raw_tokens(rng.integers(0, 256, (16, 16, 3)))


def _state_numpy(model):
    return {k: v.detach().numpy() for k, v in model.state_dict().items()}


class TestShapesAndDeterminism:
    def test_branch_shapes(self, tiny_config):
        torch.manual_seed(0)
        m = EditQAModel(tiny_config)
        af = m.encode_alignment(_raw(0), "make it blue")
        assert af.e_bv.shape == (tiny_config.backbone.d_v,)
        assert af.e_bt.shape == (tiny_config.backbone.d_t,)
        stf = m.encode_source_target(_raw(1), _raw(2))
        assert stf.f.shape == (tiny_config.backbone.d_v,)
        assert stf.o_s.shape == (tiny_config.d_o,)
        qf = m.encode_quality(_raw(3))
        assert qf.q.shape == (tiny_config.d_q,)

    def test_eval_determinism(self, tiny_config):
        torch.manual_seed(0)
        m = EditQAModel(tiny_config)
        m.eval()
        with torch.no_grad():
            a, _ = m.forward_batch(_raw(1), _raw(2), ["same prompt"])
            b, _ = m.forward_batch(_raw(1), _raw(2), ["same prompt"])
        assert torch.equal(a, b)

    def test_empty_prompt_rejected(self, tiny_config):
        m = EditQAModel(tiny_config)
        with pytest.raises(ValueError):
            m.encode_alignment(_raw(0), "")

    def test_prompt_truncation(self, tiny_config):
        ids = tokenize_prompt("x" * 100, tiny_config.backbone.token_limit, 32)
        assert len(ids) == tiny_config.backbone.token_limit
        assert all(1 <= i < 32 for i in ids)

    def test_source_swap_changes_output(self, tiny_config):
        torch.manual_seed(1)
        m = EditQAModel(tiny_config)
        a = m.encode_source_target(_raw(1), _raw(2)).o_s
        b = m.encode_source_target(_raw(2), _raw(1)).o_s
        assert not torch.allclose(a, b)

    def test_source_equals_edited_duplicates_embedding(self, tiny_config):
        torch.manual_seed(2)
        m = EditQAModel(tiny_config)
        stf = m.encode_source_target(_raw(5), _raw(5))
        assert torch.allclose(stf.f, stf.f_star)


class TestForwardOracle:
    @pytest.mark.parametrize("fusion", ["concatenation", "identity", "attention"])
    def test_forward_matches_straight_line_reference(self, fusion):
        cfg = tiny_model_config(fusion=fusion)
        torch.manual_seed(7)
        m = EditQAModel(cfg).double()
        src, edt = _raw(10), _raw(11)
        prompt = "turn the sky purple"
        m.eval()
        with torch.no_grad():
            scores, _ = m.forward_batch(src, edt, [prompt])
        ids = tokenize_prompt(prompt, cfg.backbone.token_limit, cfg.backbone.vocab)
        expected = oracle_forward(_state_numpy(m), cfg, src, edt, ids)
        assert float(scores[0]) == pytest.approx(expected, abs=1e-6)

    def test_branch_encodes_match_reference(self, tiny_config):
        torch.manual_seed(3)
        m = EditQAModel(tiny_config).double()
        src, edt = _raw(20), _raw(21)
        sd = _state_numpy(m)
        stf = m.encode_source_target(src, edt)
        f = src @ sd["edited_encoder.proj.weight"].T + sd["edited_encoder.proj.bias"]
        np.testing.assert_allclose(stf.f.detach().numpy(), f.mean(axis=0), atol=1e-9)

    def test_separate_source_encoder(self):
        cfg = tiny_model_config(share_source_encoder=False)
        torch.manual_seed(5)
        m = EditQAModel(cfg).double()
        src, edt = _raw(30), _raw(31)
        m.eval()
        with torch.no_grad():
            scores, _ = m.forward_batch(src, edt, ["p q r"])
        ids = tokenize_prompt("p q r", cfg.backbone.token_limit, cfg.backbone.vocab)
        expected = oracle_forward(_state_numpy(m), cfg, src, edt, ids)
        assert float(scores[0]) == pytest.approx(expected, abs=1e-6)


class TestWidthEquation:
    @pytest.mark.parametrize(
        "overrides",
        [
            {},
            {"use_text_branch": False},
            {"use_source_branch": False},
            {"fusion": "identity"},
            {"fusion": "attention"},
            {"use_text_branch": False, "use_source_branch": False},
        ],
    )
    def test_head_width_from_config(self, overrides):
        cfg = tiny_model_config(**overrides)
        m = EditQAModel(cfg)
        assert m.final_head.fc1.in_features == cfg.head_input_width()
        expected = cfg.d_q
        if cfg.use_text_branch:
            expected += cfg.d_a
        if cfg.use_source_branch:
            expected += cfg.d_o
        assert cfg.head_input_width() == expected

    def test_disabling_text_branch_shrinks_width_by_d_a(self):
        base = tiny_model_config()
        off = tiny_model_config(use_text_branch=False)
        assert base.head_input_width() - off.head_input_width() == base.d_a

    def test_stub_model_under_2k_params(self, tiny_config):
        assert count_parameters(EditQAModel(tiny_config)) <= 2000

    def test_source_branch_is_live(self, tiny_config):
        torch.manual_seed(9)
        on = EditQAModel(tiny_config)
        torch.manual_seed(9)
        off = EditQAModel(tiny_model_config(use_source_branch=False))
        on.eval(), off.eval()
        diffs = []
        for seed in range(6):
            with torch.no_grad():
                a, _ = on.forward_batch(_raw(seed), _raw(seed + 100), ["x"])
                b, _ = off.forward_batch(_raw(seed), _raw(seed + 100), ["x"])
            diffs.append(abs(float(a[0]) - float(b[0])))
        assert max(diffs) > 0


class TestParameterMatchedControl:
    def test_control_within_one_percent(self, tiny_config):
        torch.manual_seed(0)
        m = EditQAModel(tiny_config)
        control = parameter_matched_control(m)
        base, ctrl = count_parameters(m), count_parameters(control)
        assert abs(ctrl - base) / base <= 0.01
        assert control.cfg.use_source_branch is False

    def test_requires_source_branch(self):
        m = EditQAModel(tiny_model_config(use_source_branch=False))
        with pytest.raises(ValueError):
            parameter_matched_control(m)

    def test_widening_verified_by_counting(self, tiny_config):
        torch.manual_seed(0)
        m = EditQAModel(tiny_config)
        control = parameter_matched_control(m)
        # recount by brute force over named parameters
        manual = sum(p.numel() for p in control.parameters())
        assert manual == count_parameters(control)


class TestGradientCheck:
    def test_analytic_gradients_match_finite_differences(self, tiny_config):
        from editqa.training import LossConfig, total_loss

        torch.manual_seed(13)
        m = EditQAModel(tiny_config).double()
        rng = np.random.default_rng(4)
        src = np.stack([_raw(i) for i in range(4)])
        edt = np.stack([_raw(i + 50) for i in range(4)])
        prompts = ["alpha beta", "gamma", "delta eps", "zeta"]
        target = torch.tensor(rng.normal(size=4), dtype=torch.float64)
        lc = LossConfig(rank_margin=0.1)

        def loss_value():
            pred, _ = m.forward_batch(src, edt, prompts)
            return total_loss(pred, target, lc)

        loss = loss_value()
        loss.backward()
        eps = 1e-5
        checked = 0
        for name, p in m.named_parameters():
            if p.grad is None:
                continue
            flat = p.data.view(-1)
            gflat = p.grad.view(-1)
            for idx in range(0, flat.numel(), max(1, flat.numel() // 3)):
                orig = flat[idx].item()
                flat[idx] = orig + eps
                up = loss_value().item()
                flat[idx] = orig - eps
                down = loss_value().item()
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                analytic = gflat[idx].item()
                denom = max(abs(fd), abs(analytic), 1e-6)
                assert abs(fd - analytic) / denom < 1e-4, (name, idx)
                checked += 1
        assert checked > 20


class TestCheckpoint:
    def test_round_trip(self, tiny_config, tmp_path):
        torch.manual_seed(21)
        m = EditQAModel(tiny_config)
        path = tmp_path / "model.pt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        assert loaded.cfg == m.cfg
        m.eval(), loaded.eval()
        with torch.no_grad():
            a, _ = m.forward_batch(_raw(0), _raw(1), ["p"])
            b, _ = loaded.forward_batch(_raw(0), _raw(1), ["p"])
        assert torch.equal(a, b)

    def test_backbone_checksum_stable(self, tiny_config):
        torch.manual_seed(2)
        m = EditQAModel(tiny_config)
        before = backbone_checksum(m)
        # touching a head parameter must not change the backbone digest
        with torch.no_grad():
            m.final_head.fc1.weight += 1.0
        assert backbone_checksum(m) == before
        with torch.no_grad():
            m.edited_encoder.proj.weight += 1.0
        assert backbone_checksum(m) != before
