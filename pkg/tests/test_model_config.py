import pytest
from hypothesis import given, strategies as st

from parascope.model_config import (
    ModelShape,
    critical_batch,
    layer_param_count,
    leading_param_count,
    make_x_model,
    named_model,
    param_count,
    shape_from_config,
)


def test_x_family_dimensions():
    s = make_x_model(160)
    assert (s.d_l, s.d_a, s.d_h, s.d_m, s.d_s, s.n_I) == (160, 80, 320, 25600, 2560, 4)
    assert s.d_I == 4 * 25600


def test_param_count_x160_by_hand():
    # 12 x^5 weights plus 13 x^3 biases and norms
    assert param_count(make_x_model(160)) == 12 * 160**5 + 13 * 160**3 == 1_258_344_448_000


def test_x2_layer_count():
    s = make_x_model(2)
    assert layer_param_count(s) == 12 * 16 + 13 * 4 == 244
    assert param_count(s) == 488


def test_gpt3_shape():
    s = named_model("gpt-3")
    assert (s.d_l, s.d_m, s.d_s) == (96, 12288, 2048)
    assert param_count(s) == pytest.approx(174e9, rel=0.01)
    assert critical_batch(s) == pytest.approx(1560, rel=0.01)


def test_critical_batch_x160():
    assert critical_batch(make_x_model(160)) == pytest.approx(2420, rel=0.01)


@pytest.mark.parametrize("x", [0, 1, 3, -2, 2.0, True])
def test_make_x_model_rejects_bad_x(x):
    with pytest.raises(ValueError):
        make_x_model(x)


def test_shape_rejects_non_positive():
    with pytest.raises(ValueError):
        ModelShape(d_l=0, d_a=1, d_h=1, d_s=1)


def test_named_model_unknown():
    with pytest.raises(KeyError):
        named_model("no-such-model")


def test_shape_from_config_variants():
    assert shape_from_config({"x": 8}) == make_x_model(8)
    assert shape_from_config({"name": "bert"}).d_l == 24
    s = shape_from_config({"d_l": 2, "d_a": 2, "d_h": 4, "d_s": 16, "name": "tiny"})
    assert s.d_m == 8 and s.n_I == 4
    with pytest.raises(ValueError):
        shape_from_config({"d_l": 2})


@given(st.integers(1, 200).map(lambda k: 2 * k))
def test_x_family_scaling_laws(x):
    s = make_x_model(x)
    assert param_count(s) == 12 * x**5 + 13 * x**3
    assert leading_param_count(s) == 12 * x**5
    # b_c d_s = 573 p^(1/3) tokens
    assert critical_batch(s) * s.d_s == pytest.approx(573 * (12 * x**5) ** (1 / 3), rel=1e-9)


@given(st.integers(1, 100).map(lambda k: 2 * k), st.integers(1, 100).map(lambda k: 2 * k))
def test_critical_batch_monotone_in_tokens(a, b):
    sa, sb = make_x_model(a), make_x_model(b)
    if a < b:
        assert critical_batch(sa) * sa.d_s < critical_batch(sb) * sb.d_s
