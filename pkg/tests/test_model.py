import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from jamdetect.exceptions import ArgumentError, ConfigError, FormatError, ShapeError, VersionError
from jamdetect.model import (
    ModelConfig,
    decode,
    encode,
    forward,
    forward_backward,
    init_params,
    load_checkpoint,
    load_params,
    param_shapes,
    save_params,
)
from jamdetect.nn import finite_difference_gradient, relative_error


def zero_params(cfg):
    return {k: np.zeros(s) for k, (s, _) in param_shapes(cfg).items()}


CONFIGS = {
    "sdp": dict(seq_len=3, encoder_units=[4, 3], num_heads=1, key_dim=2),
    "sdp-2head": dict(seq_len=4, encoder_units=[4, 3], num_heads=2, key_dim=2),
    "additive": dict(seq_len=3, encoder_units=[4, 3], attention_variant="additive", scorer_units=3),
    "reverse": dict(seq_len=3, encoder_units=[4, 3], num_heads=1, key_dim=2, decoder_order="reverse"),
    "three-layer": dict(seq_len=3, encoder_units=[4, 3, 2], num_heads=1, key_dim=2),
}


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.encoder_units == [50, 25]
        assert cfg.decoder_units == [25, 50]
        assert cfg.latent_dim == 25
        assert (cfg.num_heads, cfg.key_dim, cfg.input_dim, cfg.seq_len) == (4, 50, 2, 10)
        assert cfg.window_shape == (10, 2)

    @pytest.mark.parametrize("bad", [
        dict(seq_len=0), dict(encoder_units=[]), dict(num_heads=0), dict(key_dim=-1),
        dict(attention_variant="luong"), dict(decoder_order="sideways"),
        dict(bottleneck_activation="softplus"), dict(encoder_units=[4, 2.5]),
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ModelConfig(**bad)

    def test_dict_round_trip(self):
        cfg = ModelConfig(**CONFIGS["additive"])
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"units": 3})


class TestInit:
    def test_deterministic(self):
        cfg = ModelConfig()
        a, b = init_params(cfg, 3), init_params(cfg, 3)
        assert list(a) == list(b)
        for k in a:
            assert np.array_equal(a[k], b[k])

    def test_first_cell_shape(self):
        p = init_params(ModelConfig(), 0)
        assert p["enc1.W_ix"].shape == (50, 2)
        assert p["enc2.W_ix"].shape == (25, 50)
        assert p["attn.W_q"].shape == (4, 50, 50)
        assert p["attn.W_o"].shape == (200, 50)
        assert p["out.W"].shape == (2, 50)

    def test_seeds_differ(self):
        cfg = ModelConfig(**CONFIGS["sdp"])
        a, b = init_params(cfg, 0), init_params(cfg, 1)
        assert any(not np.array_equal(a[k], b[k]) for k in a)

    def test_bounds(self):
        cfg = ModelConfig()
        params = init_params(cfg, 5)
        for name, (shape, fan_in) in param_shapes(cfg).items():
            assert params[name].shape == shape
            assert np.all(np.abs(params[name]) <= 1 / np.sqrt(fan_in))


class TestEncodeDecode:
    def test_zero_window_zero_params(self):
        cfg = ModelConfig(**CONFIGS["sdp"])
        H, latent = encode(np.zeros(cfg.window_shape), zero_params(cfg), cfg)
        np.testing.assert_array_equal(latent, 0)
        np.testing.assert_array_equal(H, 0)

    def test_zero_latent_zero_params(self):
        cfg = ModelConfig(**CONFIGS["sdp"])
        np.testing.assert_array_equal(decode(np.zeros(cfg.latent_dim), zero_params(cfg), cfg), 0)

    def test_bias_only_output(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        p["out.W"][:] = 0
        p["out.b"][:] = [0.25, -1.5]
        x_hat = decode(rng.normal(size=cfg.latent_dim), p, cfg)
        np.testing.assert_array_equal(x_hat, np.tile([0.25, -1.5], (cfg.seq_len, 1)))

    def test_single_step_attention(self, rng):
        cfg = ModelConfig(seq_len=1, encoder_units=[4, 3], num_heads=2, key_dim=3)
        p = init_params(cfg, 2)
        x = rng.normal(size=(1, 2))
        H_aug, _ = encode(x, p, cfg)
        h = np.array(oracles.lstm_unroll(list(x), {k[5:]: v for k, v in p.items() if k.startswith("enc1.")}))
        v = np.concatenate([h @ p["attn.W_v"][k] for k in range(2)], axis=1)
        np.testing.assert_allclose(H_aug, h + v @ p["attn.W_o"], atol=1e-12, rtol=0)

    @pytest.mark.parametrize("name", list(CONFIGS))
    @pytest.mark.parametrize("seed", range(3))
    def test_encode_vs_oracle(self, name, seed):
        cfg = ModelConfig(**CONFIGS[name])
        p = init_params(cfg, seed)
        x = np.random.default_rng(seed + 100).normal(size=cfg.window_shape)
        H, latent = encode(x, p, cfg)
        H_ref, latent_ref = oracles.encode(x, p, cfg)
        np.testing.assert_allclose(H, H_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(latent, latent_ref, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("name", list(CONFIGS))
    @pytest.mark.parametrize("seed", range(3))
    def test_decode_vs_oracle(self, name, seed):
        cfg = ModelConfig(**CONFIGS[name])
        p = init_params(cfg, seed)
        z = np.abs(np.random.default_rng(seed + 200).normal(size=cfg.latent_dim))
        np.testing.assert_allclose(decode(z, p, cfg), oracles.decode(z, p, cfg), rtol=0, atol=1e-12)

    def test_attention_bypass(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp-2head"])
        p = init_params(cfg, 4)
        p["attn.W_o"][:] = 0
        x = rng.normal(size=cfg.window_shape)
        _, latent = encode(x, p, cfg)
        _, plain = oracles.encode(x, p, cfg, use_attention=False)
        np.testing.assert_allclose(latent, plain, rtol=0, atol=1e-12)

    def test_reverse_order_differs(self, rng):
        fwd = ModelConfig(**CONFIGS["sdp"])
        rev = ModelConfig(**CONFIGS["reverse"])
        p = init_params(fwd, 0)
        z = rng.uniform(0.5, 1.0, size=fwd.latent_dim)
        a, b = decode(z, p, fwd), decode(z, p, rev)
        assert not np.allclose(a, b)
        np.testing.assert_allclose(a[0], b[-1], atol=1e-12)

    def test_length_mismatch(self):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        with pytest.raises(ArgumentError):
            encode(np.zeros((4, 2)), p, cfg)
        with pytest.raises(ArgumentError):
            forward(np.zeros((3, 3)), p, cfg)
        with pytest.raises(ShapeError):
            decode(np.zeros(7), p, cfg)


class TestForward:
    @settings(max_examples=15, deadline=None)
    @given(T=st.integers(1, 6), n=st.integers(1, 3), u1=st.integers(1, 5), u2=st.integers(1, 4),
           heads=st.integers(1, 3), dk=st.integers(1, 4), B=st.integers(1, 3),
           variant=st.sampled_from(["scaled_dot_product", "additive"]))
    def test_shape_preserved(self, T, n, u1, u2, heads, dk, B, variant):
        cfg = ModelConfig(input_dim=n, seq_len=T, encoder_units=[u1, u2], num_heads=heads,
                          key_dim=dk, attention_variant=variant)
        p = init_params(cfg, 0)
        X = np.random.default_rng(T).normal(size=(B, T, n))
        assert forward(X, p, cfg).shape == (B, T, n)
        assert forward(X[0], p, cfg).shape == (T, n)

    def test_deterministic(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        x = rng.normal(size=cfg.window_shape)
        assert np.array_equal(forward(x, p, cfg), forward(x, p, cfg))

    def test_batch_rows_match(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp-2head"])
        p = init_params(cfg, 0)
        X = rng.normal(size=(5,) + cfg.window_shape)
        out = forward(X, p, cfg)
        for b in range(5):
            np.testing.assert_allclose(out[b], forward(X[b], p, cfg), rtol=0, atol=1e-14)


class TestForwardBackward:
    def test_own_output_target(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        x = rng.normal(size=cfg.window_shape)
        loss, grads = forward_backward(x, forward(x, p, cfg), p, cfg)
        assert loss == 0.0
        for g in grads.values():
            np.testing.assert_array_equal(g, 0)

    def test_deterministic(self, rng):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        x, y = rng.normal(size=(2,) + cfg.window_shape), rng.normal(size=(2,) + cfg.window_shape)
        l1, g1 = forward_backward(x, y, p, cfg)
        l2, g2 = forward_backward(x, y, p, cfg)
        assert l1 == l2
        assert all(np.array_equal(g1[k], g2[k]) for k in g1)

    @pytest.mark.parametrize("variant,order", [
        ("scaled_dot_product", "forward"), ("scaled_dot_product", "reverse"),
        ("additive", "forward"),
    ])
    @pytest.mark.parametrize("seed", range(2))
    def test_full_model_fd(self, variant, order, seed):
        cfg = ModelConfig(seq_len=3, encoder_units=[3, 2], num_heads=1, key_dim=2,
                          attention_variant=variant, decoder_order=order)
        rng = np.random.default_rng(seed)
        p = {k: v * 3 for k, v in init_params(cfg, seed).items()}
        p["bottleneck.b"] = np.abs(p["bottleneck.b"]) + 0.5  # keep ReLU away from its kink
        x, y = rng.normal(size=(2, 3, 2)), rng.normal(size=(2, 3, 2))
        _, grads = forward_backward(x, y, p, cfg)
        num = finite_difference_gradient(lambda t: forward_backward(x, y, t, cfg)[0], p)
        assert relative_error(grads, num) < 1e-5

    def test_target_shape_mismatch(self):
        cfg = ModelConfig(**CONFIGS["sdp"])
        with pytest.raises(ShapeError):
            forward_backward(np.zeros((2, 3, 2)), np.zeros((1, 3, 2)), init_params(cfg, 0), cfg)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = ModelConfig(**CONFIGS["additive"])
        p = init_params(cfg, 9)
        path = tmp_path / "m.ckpt"
        save_params(p, path, cfg, metadata={"note": "x"})
        q, cfg2, meta = load_checkpoint(path)
        assert cfg2 == cfg and meta == {"note": "x"}
        assert list(q) == list(p)
        for k in p:
            assert q[k].tobytes() == p[k].tobytes()
        q2, _ = load_params(path)
        assert all(np.array_equal(q2[k], p[k]) for k in p)

    def test_truncated(self, tmp_path):
        cfg = ModelConfig(**CONFIGS["sdp"])
        path = tmp_path / "m.ckpt"
        save_params(init_params(cfg, 0), path, cfg)
        raw = path.read_bytes()
        for cut in (len(raw) - 1, len(raw) // 2, 10):
            path.write_bytes(raw[:cut])
            with pytest.raises(FormatError):
                load_params(path)

    def test_corrupted(self, tmp_path):
        cfg = ModelConfig(**CONFIGS["sdp"])
        path = tmp_path / "m.ckpt"
        save_params(init_params(cfg, 0), path, cfg)
        raw = bytearray(path.read_bytes())
        raw[-40] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="checksum"):
            load_params(path)
        path.write_bytes(b"NOTACKPT" + bytes(raw[8:]))
        with pytest.raises(FormatError, match="magic"):
            load_params(path)

    def test_version_mismatch(self, tmp_path):
        cfg = ModelConfig(**CONFIGS["sdp"])
        path = tmp_path / "m.ckpt"
        save_params(init_params(cfg, 0), path, cfg)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 8, 2)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            load_params(path)

    def test_wrong_shapes_rejected(self, tmp_path):
        cfg = ModelConfig(**CONFIGS["sdp"])
        p = init_params(cfg, 0)
        p["out.b"] = np.zeros(3)
        with pytest.raises(ShapeError):
            save_params(p, tmp_path / "m.ckpt", cfg)
