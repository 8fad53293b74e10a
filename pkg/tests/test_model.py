"""Two-stream model contracts: shapes, fusion invariance, gradients,
and the checkpoint format."""

import numpy as np
import pytest

from atnet.autodiff import Tensor, grad_check, l2_normalize, log_softmax
from atnet.binio import BadMagicError, BadVersionError, TruncatedPayloadError
from atnet.dataset import Class3
from atnet.model import (
    ATNet,
    CheckpointMismatchError,
    ModelConfig,
    Prediction,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)

RNG = np.random.default_rng(2024)


def small_config(**kw):
    defaults = dict(image_size=16, embed_dim=8, stem_width=4, stage_widths=(4, 8),
                    blocks_per_stage=(1, 1), lstm_hidden=8, feature_dim=12, time_steps=6)
    defaults.update(kw)
    return ModelConfig(**defaults)


def batch(config, n=2, rng=None):
    rng = rng or RNG
    apex = rng.uniform(0, 1, size=(n, config.image_size, config.image_size))
    feat = rng.uniform(-1, 1, size=(n, config.time_steps, config.feature_dim))
    return Tensor(apex), Tensor(feat)


# -- shape contracts ---------------------------------------------------------


def test_spatial_output_length():
    config = small_config()
    model = ATNet(config, np.random.default_rng(1))
    apex, _ = batch(config)
    out = model.spatial_forward(apex)
    assert out.data.shape == (2, config.embed_dim)


def test_temporal_output_length():
    config = small_config()
    model = ATNet(config, np.random.default_rng(1))
    _, feat = batch(config)
    out = model.temporal_forward(feat)
    assert out.data.shape == (2, config.embed_dim)


def test_shape_mismatch_errors():
    config = small_config()
    model = ATNet(config, np.random.default_rng(1))
    with pytest.raises(ValueError, match="apex"):
        model.spatial_forward(Tensor(np.zeros((1, 1, 8, 8))))
    with pytest.raises(ValueError, match="feature"):
        model.temporal_forward(Tensor(np.zeros((1, 3, 12))))


def test_paper_scale_concat_is_1024():
    config = ModelConfig.paper_scale()
    assert config.embed_dim == 512
    assert config.head_dim == 1024
    assert config.lstm_hidden == 512


def test_paper_scale_forward_shapes():
    config = ModelConfig.paper_scale()
    model = ATNet(config, np.random.default_rng(20))
    assert sum(t.data.size for _, t in model.params()) > 8_000_000
    apex = RNG.uniform(0, 1, size=(224, 224))
    feat = RNG.uniform(-1, 1, size=(64, 128))
    sp = model.spatial_forward(Tensor(apex[None]))
    tp = model.temporal_forward(Tensor(feat[None]))
    assert sp.data.shape == (1, 512)
    assert tp.data.shape == (1, 512)
    pred = model.predict(apex, feat)
    assert pred.probabilities.shape == (3,)


def test_config_validation():
    with pytest.raises(ValueError, match="dropout"):
        small_config(dropout_p=1.0)
    with pytest.raises(ValueError, match="stream"):
        small_config(stream="both")
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(image_size=30)


# -- zero-propagation cases ---------------------------------------------------


def test_zero_image_zero_projection_gives_zero_embedding():
    config = small_config()
    model = ATNet(config, np.random.default_rng(3))
    model.spatial.proj.weight.data[:] = 0.0
    model.spatial.proj.bias.data[:] = 0.0
    out = model.spatial_forward(Tensor(np.zeros((1, config.image_size, config.image_size))))
    np.testing.assert_array_equal(out.data, np.zeros((1, config.embed_dim)))


def test_zero_feature_zero_biases_gives_zero_embedding():
    config = small_config()
    model = ATNet(config, np.random.default_rng(4))
    for layer in model.temporal.layers:
        layer.b.data[:] = 0.0
    model.temporal.proj.weight.data[:] = 0.0
    model.temporal.proj.bias.data[:] = 0.0
    out = model.temporal_forward(Tensor(np.zeros((1, config.time_steps, config.feature_dim))))
    np.testing.assert_array_equal(out.data, np.zeros((1, config.embed_dim)))


# -- normalization and fusion ---------------------------------------------------


def test_l2_normalize_3_4_triangle():
    out = l2_normalize(Tensor(np.array([3.0, 4.0]))).data
    np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)


def test_l2_normalize_idempotent_on_unit_vectors():
    v = RNG.uniform(-1, 1, size=8)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(l2_normalize(Tensor(v)).data, v, atol=1e-15)


def test_fused_streams_have_unit_norm_contributions():
    config = small_config()
    model = ATNet(config, np.random.default_rng(5))
    apex, feat = batch(config)
    sp = model.spatial_forward(apex).data
    tp = model.temporal_forward(feat).data
    pred = model.fuse_classify(sp[0], tp[0])
    assert isinstance(pred, Prediction)
    # reconstruct: the head saw [norm(sp); norm(tp)]
    np.testing.assert_allclose(np.linalg.norm(sp[0] / np.linalg.norm(sp[0])), 1.0, atol=1e-12)


def test_fusion_scale_invariance_bitwise_for_power_of_two():
    config = small_config()
    model = ATNet(config, np.random.default_rng(6))
    sp = RNG.uniform(-1, 1, size=config.embed_dim)
    tp = RNG.uniform(-1, 1, size=config.embed_dim)
    base = model.fuse_classify(sp, tp)
    for c in (2.0, 0.5, 8.0, 1024.0):
        scaled = model.fuse_classify(sp, c * tp)
        np.testing.assert_array_equal(scaled.logits, base.logits)
        np.testing.assert_array_equal(scaled.probabilities, base.probabilities)
        assert scaled.predicted_class == base.predicted_class
        other = model.fuse_classify(c * sp, tp)
        np.testing.assert_array_equal(other.logits, base.logits)


def test_fusion_scale_invariance_for_arbitrary_positive_scale():
    config = small_config()
    model = ATNet(config, np.random.default_rng(7))
    sp = RNG.uniform(-1, 1, size=config.embed_dim)
    tp = RNG.uniform(-1, 1, size=config.embed_dim)
    base = model.fuse_classify(sp, tp)
    for c in (10.0, 3.7, 0.013):
        scaled = model.fuse_classify(sp, c * tp)
        np.testing.assert_allclose(scaled.probabilities, base.probabilities, atol=1e-12)
        assert scaled.predicted_class == base.predicted_class


def test_eval_mode_deterministic():
    config = small_config()
    model = ATNet(config, np.random.default_rng(8))
    apex, feat = batch(config)
    a = model.forward(apex, feat, training=False).data
    b = model.forward(apex, feat, training=False).data
    np.testing.assert_array_equal(a, b)


def test_train_mode_dropout_needs_rng_and_varies():
    config = small_config()
    model = ATNet(config, np.random.default_rng(9))
    apex, feat = batch(config)
    a = model.forward(apex, feat, training=True, rng=np.random.default_rng(1)).data
    b = model.forward(apex, feat, training=True, rng=np.random.default_rng(2)).data
    assert not np.array_equal(a, b)
    c = model.forward(apex, feat, training=True, rng=np.random.default_rng(1)).data
    np.testing.assert_array_equal(a, c)


def test_prediction_probabilities_valid():
    config = small_config()
    model = ATNet(config, np.random.default_rng(10))
    apex, feat = batch(config, n=1)
    pred = model.predict(apex.data[0], feat.data[0])
    assert pred.probabilities.shape == (3,)
    assert (pred.probabilities > 0).all()
    assert abs(pred.probabilities.sum() - 1.0) < 1e-12
    assert pred.predicted_class in (Class3.POSITIVE, Class3.NEGATIVE, Class3.SURPRISE)


def test_single_stream_models():
    for stream in ("spatial", "temporal"):
        config = small_config(stream=stream)
        model = ATNet(config, np.random.default_rng(11))
        apex, feat = batch(config, n=1)
        pred = model.predict(apex.data[0] if stream == "spatial" else None,
                             feat.data[0] if stream == "temporal" else None)
        assert pred.probabilities.shape == (3,)
        names = [n for n, _ in model.params()]
        assert all(not n.startswith("temporal" if stream == "spatial" else "spatial") for n in names)


# -- gradients through the full model -------------------------------------------


def loss_builder(model, apex_data, feat_data, label):
    def build(params):
        apex = Tensor(apex_data)
        feat = Tensor(feat_data)
        logits = model.forward(apex, feat, training=True, rng=np.random.default_rng(33))
        # scaled loss keeps finite-difference round-off under the
        # checker's relative-error floor
        return -log_softmax(logits, axis=-1)[0, label] * 0.01
    return build


def test_spatial_stream_gradients():
    config = small_config(stream="spatial")
    model = ATNet(config, np.random.default_rng(12))
    apex = RNG.uniform(0, 1, size=(1, config.image_size, config.image_size))

    def build(params):
        logits = model.forward(Tensor(apex), None, training=True, rng=np.random.default_rng(3))
        return -log_softmax(logits, axis=-1)[0, 1] * 0.01

    params = dict(model.params())
    err = grad_check(build, params, sample=4, rng=np.random.default_rng(0))
    assert err < 1e-4


def test_full_model_gradients():
    config = small_config()
    model = ATNet(config, np.random.default_rng(13))
    apex = RNG.uniform(0, 1, size=(1, config.image_size, config.image_size))
    feat = RNG.uniform(-1, 1, size=(1, config.time_steps, config.feature_dim))
    params = dict(model.params())
    err = grad_check(loss_builder(model, apex, feat, 2), params,
                     sample=3, rng=np.random.default_rng(1))
    assert err < 1e-4


# -- checkpoint format ------------------------------------------------------------


def test_checkpoint_round_trip_bit_identical():
    config = small_config()
    model = ATNet(config, np.random.default_rng(14))
    # give running stats non-default values
    apex, feat = batch(config, n=4)
    model.forward(apex, feat, training=True, rng=np.random.default_rng(0))
    payload = encode_checkpoint(model)
    clone = decode_checkpoint(payload)
    assert clone.config == config
    for (name_a, t_a), (name_b, t_b) in zip(model.params(), clone.params()):
        assert name_a == name_b
        np.testing.assert_array_equal(t_a.data, t_b.data)
    for (_, b_a), (_, b_b) in zip(model.buffers(), clone.buffers()):
        np.testing.assert_array_equal(b_a, b_b)
    assert encode_checkpoint(clone) == payload


def test_checkpoint_predictions_survive_round_trip(tmp_path):
    config = small_config()
    model = ATNet(config, np.random.default_rng(15))
    apex, feat = batch(config, n=1)
    before = model.predict(apex.data[0], feat.data[0])
    path = tmp_path / "model.atnw"
    save_checkpoint(path, model)
    clone = load_checkpoint(path)
    after = clone.predict(apex.data[0], feat.data[0])
    np.testing.assert_array_equal(before.logits, after.logits)


def test_checkpoint_bad_magic():
    payload = encode_checkpoint(ATNet(small_config(), np.random.default_rng(16)))
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"NOPE" + payload[4:])


def test_checkpoint_bad_version():
    payload = bytearray(encode_checkpoint(ATNet(small_config(), np.random.default_rng(17))))
    payload[4:6] = (7).to_bytes(2, "little")
    with pytest.raises(BadVersionError):
        decode_checkpoint(bytes(payload))


def test_checkpoint_truncation():
    payload = encode_checkpoint(ATNet(small_config(), np.random.default_rng(18)))
    with pytest.raises(TruncatedPayloadError):
        decode_checkpoint(payload[: len(payload) // 2])


def test_checkpoint_shape_validation():
    model = ATNet(small_config(), np.random.default_rng(19))
    payload = encode_checkpoint(model)
    # tamper: claim a different lstm width in the config json
    import json as json_mod
    import struct as struct_mod
    config_len = struct_mod.unpack("<I", payload[6:10])[0]
    config = json_mod.loads(payload[10 : 10 + config_len].decode())
    config["lstm_hidden"] = 16
    new_json = json_mod.dumps(config, sort_keys=True).encode()
    tampered = payload[:6] + struct_mod.pack("<I", len(new_json)) + new_json + payload[10 + config_len :]
    with pytest.raises(CheckpointMismatchError):
        decode_checkpoint(tampered)
