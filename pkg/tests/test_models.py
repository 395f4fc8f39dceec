import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quakeloc.models import ModelConfig, build_model, make_ground_truth, predict, prepare_batch, prepare_input
from quakeloc.records import EventMeta, StationMeta
from quakeloc.tensor import Tensor, no_grad

from _gradcheck import check_gradients, jitter_offsets, probe


def pooled(size: int) -> int:
    """Output length of the extent-3, stride-2, pad-1 pool along the frequency/channel axis."""
    return (size + 2 - 3) // 2 + 1


def resnet_feature_map(h: int, w: int, n_blocks: int) -> tuple[int, int]:
    # same-padded convs keep (h, w); each of the 1 + n_blocks pools halves w and keeps h
    for _ in range(1 + n_blocks):
        w = pooled(w)
    return h, w


@pytest.mark.parametrize("domain, d, shape", [("frequency", 30, (59, 51, 3)), ("time", 15, (1500, 3, 1))])
def test_resnet_encoder_output_width(domain, d, shape):
    cfg = ModelConfig("resnet", domain, d)
    assert cfg.input_shape == shape
    assert resnet_feature_map(shape[0], shape[1], 3) in {(59, 4), (1500, 1)}
    model = build_model(cfg).eval()
    with no_grad():
        feats = model.encoder(Tensor(np.random.default_rng(0).standard_normal((2,) + shape).astype(np.float32)))
    assert feats.shape == (2, 128)


def test_tcn_frequency_pooling_lengths():
    model = build_model(ModelConfig("tcn", "frequency", 30)).eval()
    x = Tensor(np.zeros((2, 59, 51, 3), np.float32))
    with no_grad():
        assert model.encoder.sequence(x).shape == (2, 7, 32)
        assert model.encoder.sequence(x, pool=False).shape == (2, 59, 32)
        assert model.encoder(x).shape == (2, 32)


def test_tcn_time_domain_keeps_length():
    model = build_model(ModelConfig("tcn", "time", 15)).eval()
    with no_grad():
        assert model.encoder.sequence(Tensor(np.zeros((1, 1500, 3, 1), np.float32))).shape == (1, 1500, 32)


@pytest.mark.parametrize("kind", ["resnet", "tcn"])
def test_zero_input_gives_finite_output(kind):
    model = build_model(ModelConfig(kind, "frequency", 15))
    stations = np.array([[38.0, 43.0], [40.0, 30.0]], np.float32)
    for mode in ("train", "eval"):
        getattr(model, mode)()
        out = model(np.zeros((2, 29, 51, 3), np.float32), stations, rng=np.random.default_rng(0))
        assert out.shape == (2, 2) and np.all(np.isfinite(out.data))


def test_station_input_is_live_and_eval_deterministic(rng):
    model = build_model(ModelConfig("tcn", "frequency", 15))
    x = rng.standard_normal((1, 29, 51, 3)).astype(np.float32)
    x2 = np.concatenate([x, x])
    stations = np.array([[38.0, 43.0], [40.5, 29.5]], np.float32)
    out = predict(model, x2, stations)
    assert not np.allclose(out[0], out[1])
    assert np.array_equal(predict(model, x2, stations), out)
    w = model.head.fc1.weight.data
    assert np.abs(w[-2:]).sum() > 0


def test_predict_restores_training_flags(rng):
    model = build_model(ModelConfig("tcn", "frequency", 15)).train()
    model.encoder.eval()
    predict(model, rng.standard_normal((3, 29, 51, 3)).astype(np.float32), np.zeros((3, 2), np.float32), 2)
    assert model.training and model.head.training and not model.encoder.training


def test_shape_mismatch_rejected():
    model = build_model(ModelConfig("tcn", "frequency", 15))
    with pytest.raises(ValueError, match="input shape"):
        model(np.zeros((1, 59, 51, 3), np.float32), np.zeros((1, 2), np.float32))
    with pytest.raises(ValueError, match="station"):
        model(np.zeros((2, 29, 51, 3), np.float32), np.zeros((1, 2), np.float32))


def test_same_seed_same_weights():
    a = build_model(ModelConfig("resnet", "frequency", 15, seed=4)).state_dict()
    b = build_model(ModelConfig("resnet", "frequency", 15, seed=4)).state_dict()
    c = build_model(ModelConfig("resnet", "frequency", 15, seed=5)).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a if k.startswith("param/"))


def test_ground_truth_examples():
    st_ = StationMeta("S", 38.0, 43.0)
    assert make_ground_truth(EventMeta("e", 0, 38.5, 43.2, 1, 4), st_) == pytest.approx((0.5, 0.2))
    assert make_ground_truth(EventMeta("e", 0, 38.0, 43.0, 1, 4), st_) == (0.0, 0.0)


@settings(max_examples=200)
@given(st.floats(-89, 89), st.floats(-179, 179), st.floats(-89, 89), st.floats(-179, 179))
def test_ground_truth_round_trip_exact(elat, elon, slat, slon):
    g = make_ground_truth(EventMeta("e", 0, elat, elon, 1, 4), StationMeta("s", slat, slon))
    # Sterbenz-exact for nearby points; the general case is checked in the acceptance suite
    assert abs((slat + g[0]) - elat) <= 1e-12 and abs((slon + g[1]) - elon) <= 1e-12


def test_prepare_input_layouts(rng):
    w = rng.standard_normal((3, 1500)).astype(np.float32) * 981
    t = prepare_input(w, ModelConfig("tcn", "time", 15))
    assert t.shape == (1500, 3, 1) and np.allclose(t[:, 1, 0], w[1] / 981)
    f = prepare_input(w, ModelConfig("tcn", "frequency", 15))
    assert f.shape == (29, 51, 3) and f.dtype == np.float32
    assert prepare_batch([w, w], ModelConfig("tcn", "frequency", 15)).shape == (2, 29, 51, 3)
    with pytest.raises(ValueError):
        prepare_input(w, ModelConfig("tcn", "time", 30))


def test_config_json_round_trip():
    cfg = ModelConfig("tcn", "time", 60, resnet_widths=(8, 16), station_ref=(40, 30))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ModelConfig("mlp")


SMALL = dict(resnet_stem=3, resnet_widths=(4, 5), tcn_channels=4, tcn_dilations=(1, 2), head_hidden=6,
             dropout_rate=0.3)


def small_model(kind, domain, rng):
    # d=5 leaves the frequency TCN a sequence of 9 -> 4 -> 2 -> 1 through its three pools
    model = build_model(ModelConfig(kind, domain, d=2 if domain == "time" else 5, **SMALL))
    model.astype(np.float64).train()
    jitter_offsets(model, rng)
    return model


@pytest.mark.parametrize("kind", ["resnet", "tcn"])
@pytest.mark.parametrize("domain", ["time", "frequency"])
def test_full_model_gradients_small(kind, domain):
    rng = np.random.default_rng(7)
    model = small_model(kind, domain, rng)
    x = Tensor(rng.standard_normal((3,) + model.config.input_shape), requires_grad=True, dtype=np.float64)
    stations = Tensor(rng.uniform(36, 42, (3, 2)), dtype=np.float64)
    r = probe((3, 2), rng)

    def loss():
        return (model(x, stations, rng=np.random.default_rng(1)) * r).sum()

    assert check_gradients(loss, model.parameters() + [x], rng, n_coords=5) < 1e-3


def test_biases_before_batchnorm_get_zero_gradient():
    rng = np.random.default_rng(3)
    model = small_model("resnet", "frequency", rng)
    x = rng.standard_normal((4,) + model.config.input_shape)
    out = model(Tensor(x, dtype=np.float64), Tensor(rng.uniform(36, 42, (4, 2)), dtype=np.float64),
                rng=np.random.default_rng(0))
    (out * probe((4, 2), rng)).sum().backward()
    for block in model.encoder.blocks:
        # a per-channel constant added right before training-mode batch norm is normalised away
        assert np.abs(block.conv7x3.bias.grad).max() < 1e-12
        assert np.abs(block.project.bias.grad).max() < 1e-12
        assert np.abs(block.conv3x3.bias.grad).max() > 1e-6
