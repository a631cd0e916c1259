import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gasfm.config import ModelConfig
from gasfm.model import GasFM, build_model, load_checkpoint, save_checkpoint
from gasfm.model.layers import PatchEmbedding, RotaryAttention, num_patches
from gasfm.model.network import CheckpointError, clone_model
from gasfm.model.rope import apply_rope, rope_frequencies, rope_pair


# -- rotary encoding -----------------------------------------------------


def rope_by_hand(x, pos, base):
    """Explicit 2x2 rotations per dimension pair."""
    d = len(x)
    out = [0.0] * d
    for j in range(d // 2):
        ang = pos * base ** (-2 * j / d)
        a, b = x[2 * j], x[2 * j + 1]
        out[2 * j] = a * math.cos(ang) - b * math.sin(ang)
        out[2 * j + 1] = a * math.sin(ang) + b * math.cos(ang)
    return out


def test_rope_matches_explicit_rotation():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(8, dtype=torch.float64, generator=g)
    got = apply_rope(x[None], 3.5, 100.0)[0].tolist()
    assert got == pytest.approx(rope_by_hand(x.tolist(), 3.5, 100.0), abs=1e-12)


def test_rope_position_zero_is_identity():
    q, k = torch.randn(16, dtype=torch.float64), torch.randn(16, dtype=torch.float64)
    rq, rk = rope_pair(q, k, 0, 0)
    assert torch.equal(rq, q) and torch.equal(rk, k)


def test_rope_offset_example():
    q, k = torch.randn(32, dtype=torch.float64), torch.randn(32, dtype=torch.float64)
    a = torch.dot(*rope_pair(q, k, 5, 9))
    b = torch.dot(*rope_pair(q, k, 0, 4))
    assert abs(float(a - b)) < 1e-5


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-200, 200), st.integers(0, 2**31 - 1))
@settings(max_examples=100, deadline=None)
def test_rope_relative_and_isometric(m, n, s, seed):
    g = torch.Generator().manual_seed(seed)
    q = torch.randn(16, dtype=torch.float64, generator=g)
    k = torch.randn(16, dtype=torch.float64, generator=g)
    d0 = torch.dot(*rope_pair(q, k, m, n))
    d1 = torch.dot(*rope_pair(q, k, m + s, n + s))
    assert abs(float(d0 - d1)) < 1e-5
    assert abs(float(apply_rope(q[None], m)[0].norm() - q.norm())) < 1e-6


def test_rope_odd_head_dim_rejected():
    with pytest.raises(ValueError):
        rope_frequencies(7)
    with pytest.raises(ValueError):
        ModelConfig(model_dim=12, heads=4)  # head_dim 3


# -- patching ------------------------------------------------------------


@pytest.mark.parametrize("n,p,s,expected", [(96, 16, 8, 11), (16, 16, 16, 1)])
def test_patch_count_examples(n, p, s, expected):
    assert num_patches(n, p, s) == expected


def test_patch_count_matches_enumeration():
    for n in range(1, 65):
        for p in range(1, n + 1):
            for s in range(1, p + 1):
                starts = [i for i in range(0, n) if i + p <= n and i % s == 0]
                assert num_patches(n, p, s) == len(starts)


def test_zero_projection_gives_position_rows():
    emb = PatchEmbedding(96, 16, 8, 32)
    with torch.no_grad():
        emb.proj.weight.zero_()
        emb.proj.bias.zero_()
    out = emb(torch.zeros(2, 96))
    assert torch.equal(out[0], emb.pos.detach()) and out.shape == (2, 11, 32)


def test_patch_embedding_length_mismatch():
    with pytest.raises(ValueError):
        PatchEmbedding(96, 16, 8, 32)(torch.zeros(1, 95))


# -- encoder / decoder -----------------------------------------------------


@pytest.fixture
def model():
    return build_model(ModelConfig(), 96, seed=0).eval()


def test_encoder_shape_and_determinism(model):
    x = torch.randn(3, 96)
    tok = model.embed(x)
    assert tok.shape == (3, 11, 64)
    a, b = model.encode(tok), model.encode(tok)
    assert a.shape == (3, 11, 64) and torch.equal(a, b)


def test_zero_weight_layer_is_residual_identity():
    cfg = ModelConfig(encoder_layers=1)
    m = GasFM(cfg, 96).eval()
    blk = m.encoder[0]
    with torch.no_grad():
        blk.attn.wo.weight.zero_()
        blk.ff.fc2.weight.zero_()
        blk.ff.fc2.bias.zero_()
    tok = torch.randn(2, 11, 64)
    assert torch.equal(m.encode(tok), tok)


def test_encoder_is_position_aware(model):
    tok = torch.randn(1, 11, 64)
    perm = torch.randperm(11)
    out = model.encode(tok)
    out_perm = model.encode(tok[:, perm])
    assert not torch.allclose(out[:, perm], out_perm, atol=1e-5)


def test_encoder_reports_layer_of_non_finite_output(model):
    with torch.no_grad():
        model.encoder[1].ff.fc2.bias.fill_(float("inf"))
    with pytest.raises(FloatingPointError, match="layer 1"):
        model.encode(torch.randn(1, 11, 64))


def test_non_finite_input_rejected(model):
    x = torch.zeros(1, 96)
    x[0, 5] = float("nan")
    with pytest.raises(ValueError):
        model.embed(x)


def test_attention_rows_sum_to_one():
    attn = RotaryAttention(32, 4)
    q, kv = torch.randn(2, 11, 32), torch.randn(2, 11, 32)
    attn(q, kv, torch.arange(11.0), torch.arange(11.0) + 6, keep_weights=True)
    assert torch.allclose(attn.last_weights.sum(-1), torch.ones(2, 4, 11), atol=1e-6)


def test_zero_query_weights_give_uniform_attention():
    attn = RotaryAttention(32, 4)
    with torch.no_grad():
        attn.wq.weight.zero_()
    q, kv = torch.randn(1, 11, 32), torch.randn(1, 11, 32)
    out = attn(q, kv, torch.arange(11.0), torch.arange(11.0), keep_weights=True)
    assert torch.allclose(attn.last_weights, torch.full_like(attn.last_weights, 1 / 11))
    mean_v = attn.wv(kv).mean(dim=1, keepdim=True)
    assert torch.allclose(out, attn.wo(mean_v).expand_as(out), atol=1e-6)


def test_decoder_output_length_and_shape_check(model):
    a, b = torch.randn(2, 11, 64), torch.randn(2, 11, 64)
    assert model.decode_denoise(a, b, 6.0).shape == (2, 96)
    with pytest.raises(ValueError):
        model.decode_denoise(a, b[:, :10])


def test_decoder_uses_key_offset(model):
    a, b = torch.randn(2, 11, 64), torch.randn(2, 11, 64)
    assert not torch.allclose(model.decode(a, b, 0.0), model.decode(a, b, 6.0))


# -- forecast heads --------------------------------------------------------


def test_forecast_heads(model):
    model.add_forecast_head(30)
    model.add_forecast_head(7)
    x = torch.randn(4, 96)
    assert model.forecast(x, 30).shape == (4, 30)
    assert model.heads["30"] is not model.heads["7"]
    with torch.no_grad():
        model.heads["30"].linear.weight.zero_()
        model.heads["30"].linear.bias.zero_()
    assert torch.equal(model.forecast(x, 30), torch.zeros(4, 30))
    with pytest.raises(ValueError):
        model.add_forecast_head(181)
    with pytest.raises(ValueError):
        model.forecast(x, 200)
    with pytest.raises(KeyError):
        model.forecast(x, 15)


def test_default_forward_is_finite(model):
    model.add_forecast_head(180)
    x = torch.randn(8, 96) * 10
    assert torch.isfinite(model.forecast(x, 180)).all()
    assert torch.isfinite(model.decode_denoise(model.encode(model.embed(x)), model.encode(model.embed(x)), 6)).all()


# -- checkpoints ---------------------------------------------------------


def test_checkpoint_round_trip_and_bytes(tmp_path, model):
    model.add_forecast_head(30)
    save_checkpoint(model, tmp_path / "a.pt", {"seed": 1})
    save_checkpoint(model, tmp_path / "b.pt", {"seed": 1})
    assert (tmp_path / "a.pt").read_bytes() == (tmp_path / "b.pt").read_bytes()
    back = load_checkpoint(tmp_path / "a.pt").eval()
    assert back.checkpoint_extra == {"seed": 1}
    x = torch.randn(2, 96)
    assert torch.equal(back.forecast(x, 30), model.forecast(x, 30))


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.pt")
    torch.save({"meta": '{"schema": "other"}', "state_dict": {}}, tmp_path / "bad.pt")
    with pytest.raises(CheckpointError, match="schema"):
        load_checkpoint(tmp_path / "bad.pt")


def test_clone_is_independent(model):
    c = clone_model(model)
    with torch.no_grad():
        c.patch.pos.add_(1.0)
    assert not torch.equal(c.patch.pos, model.patch.pos)
    assert np.isfinite(c.patch.pos.detach().numpy()).all()
