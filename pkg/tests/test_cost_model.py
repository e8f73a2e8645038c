import pytest
from hypothesis import assume, given, strategies as st

from parascope.cost_model import (
    MemoryBreakdown,
    ParallelPlan,
    Strategy,
    activation_bytes_per_token,
    batch_flops,
    checkpoint_offload_intensity,
    data_parallel_intensity,
    memory_breakdown,
    overlap_overhead,
    pipeline_intensity,
    state_offload_intensity,
    tensor_intensity,
)
from parascope.hardware import GIB
from parascope.model_config import make_x_model, param_count

X160 = make_x_model(160)
P160 = param_count(X160)


def test_plan_rejects_non_positive_and_short_microbatching():
    with pytest.raises(ValueError):
        ParallelPlan(Strategy.Baseline, n_b=0)
    with pytest.raises(ValueError):
        ParallelPlan(Strategy.Baseline, n_l=4, n_mu=3)
    with pytest.raises(ValueError):
        ParallelPlan(Strategy.Partitioned, state_partitioned=False)


def test_plan_derived_sizes():
    p = ParallelPlan(Strategy.Improved, n_b=483, n_l=5, n_a=16, n_mu=5, b_mu=1)
    assert p.b == 2415 and p.n_gpu == 38640
    assert p.partitioned and p.layered
    assert not ParallelPlan(Strategy.Baseline).partitioned


def test_validate_against_shape():
    s = make_x_model(8)
    ParallelPlan(Strategy.Baseline, n_l=8, n_mu=8).validate(s)
    with pytest.raises(ValueError):
        ParallelPlan(Strategy.Baseline, n_l=9, n_mu=9).validate(s)
    with pytest.raises(ValueError):
        ParallelPlan(Strategy.Baseline, n_a=8).validate(s)  # 4 heads
    ParallelPlan(Strategy.Baseline, n_a=8).validate(s, split_heads=True)


def test_strategy_parse():
    assert Strategy.parse("Improved") is Strategy.Improved
    with pytest.raises(ValueError):
        Strategy.parse("fastest")


def test_batch_flops_is_eight_b_ds_p():
    assert batch_flops(X160, 2420) == 8 * 2420 * 2560 * P160


def test_total_training_compute_x160():
    assert 100_000 * batch_flops(X160, 2420) == pytest.approx(6.24e24, rel=0.01)


def test_memory_3d_improved_by_hand():
    plan = ParallelPlan(Strategy.Improved, n_b=483, n_l=5, n_a=16, n_mu=5, b_mu=1)
    m = memory_breakdown(X160, plan)
    assert m.state == pytest.approx(12 * P160 / 38640)
    assert m.checkpoints == pytest.approx(2 * 2415 * 2560 * 25600 * 160 / 38640)
    assert m.buffers == pytest.approx(6 * P160 / 160 / 16)
    assert m.layer_activations == pytest.approx(2560 * activation_bytes_per_token(X160) / 16)
    assert m.offloadable == m.state + m.checkpoints
    assert m.non_offloadable == m.buffers + m.layer_activations


def test_resident_memory():
    m = MemoryBreakdown(state=4.0, checkpoints=2.0, buffers=1.0, layer_activations=0.5)
    assert m.resident(False, False) == m.total == 7.5
    assert m.resident(True, False) == 3.5
    assert m.resident(True, True) == 1.5
    assert set(m.in_gib()) == {"state", "checkpoint", "buffers", "activations", "offloadable", "non_offloadable"}


def test_memory_rejects_too_deep_pipeline():
    with pytest.raises(ValueError):
        memory_breakdown(make_x_model(4), ParallelPlan(Strategy.Baseline, n_l=5, n_mu=5))


def test_tensor_intensity_x160():
    # (4 + 2 n_I) d_m / (3 (n_a - 1))
    assert tensor_intensity(X160, 16) == pytest.approx(12 * 25600 / 45)
    assert tensor_intensity(X160, 16) == pytest.approx(6826.7, abs=0.1)
    assert tensor_intensity(X160, 1) is None


def test_pipeline_intensity_contiguous_vs_modular():
    base = ParallelPlan(Strategy.Baseline, n_l=160, n_mu=172)
    impr = ParallelPlan(Strategy.Improved, n_l=5, n_mu=5)
    assert pipeline_intensity(X160, base) == pytest.approx(6 * 25600)
    assert pipeline_intensity(X160, impr) == pytest.approx(6 * 25600)
    # a contiguous pipeline of 5 stages sends d_l / n_l times less often
    contiguous5 = ParallelPlan(Strategy.Baseline, n_l=5, n_mu=5)
    assert pipeline_intensity(X160, contiguous5) == pytest.approx(6 * 25600 * 32)
    assert pipeline_intensity(X160, ParallelPlan(Strategy.Baseline)) is None


def test_data_parallel_intensities():
    tokens = 5 * 2560
    base = ParallelPlan(Strategy.Baseline, n_b=483, b_mu=5)
    part = ParallelPlan(Strategy.Partitioned, n_b=483, b_mu=5)
    assert data_parallel_intensity(X160, base) == pytest.approx(0.75 * tokens)
    assert data_parallel_intensity(X160, part) == pytest.approx(0.5 * tokens)
    impr = ParallelPlan(Strategy.Improved, n_b=483, n_l=5, n_mu=5)
    assert data_parallel_intensity(X160, impr) == pytest.approx(0.5 * 5 * 2560)
    assert data_parallel_intensity(X160, ParallelPlan(Strategy.Baseline)) is None


def test_offload_intensities():
    impr = ParallelPlan(Strategy.Improved, n_b=483, n_l=5, n_a=16, n_mu=5)
    assert state_offload_intensity(X160, impr) == 2415 * 2560
    assert checkpoint_offload_intensity(X160) == 12 * 25600
    base = ParallelPlan(Strategy.Baseline, n_mu=604, b_mu=4)
    assert state_offload_intensity(X160, base) == 4 * 2560


def test_overlap_overhead():
    assert overlap_overhead(1000, 500, overlapped=True) == 0
    assert overlap_overhead(1000, 500, overlapped=False) == 0.5
    assert overlap_overhead(500, 1000, overlapped=True) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        overlap_overhead(0, 1, True)


def test_memory_table_rows_in_gib():
    none = memory_breakdown(X160, ParallelPlan(Strategy.Baseline, n_mu=604, b_mu=4)).in_gib()
    assert none["state"] == pytest.approx(14.1e3, rel=0.01)
    assert none["checkpoint"] == pytest.approx(47.2e3, rel=0.01)
    assert none["buffers"] == pytest.approx(43.9, rel=0.01)


plans = st.builds(
    lambda s, n_b, n_l, n_a, extra, b_mu: ParallelPlan(s, n_b=n_b, n_l=n_l, n_a=n_a, n_mu=n_l + extra, b_mu=b_mu),
    st.sampled_from(list(Strategy)),
    st.integers(1, 64),
    st.integers(1, 16),
    st.sampled_from([1, 2, 4, 8]),
    st.integers(0, 16),
    st.integers(1, 8),
)


@given(plans)
def test_partitioned_state_scales_with_all_gpus(plan):
    m = memory_breakdown(X160, plan)
    split = plan.n_gpu if plan.partitioned else plan.n_l * plan.n_a
    assert m.state * split == pytest.approx(12 * P160)


@given(plans)
def test_checkpoints_follow_batch_per_gpu(plan):
    m = memory_breakdown(X160, plan)
    assert m.checkpoints * plan.n_gpu == pytest.approx(2 * plan.b * 2560 * 25600 * 160)


@given(plans)
def test_doubling_tensor_degree_halves_per_layer_memory(plan):
    doubled = ParallelPlan(plan.strategy, plan.n_b, plan.n_l, plan.n_a * 2, plan.n_mu, plan.b_mu)
    a, b = memory_breakdown(X160, plan), memory_breakdown(X160, doubled)
    assert b.buffers == pytest.approx(a.buffers / 2)
    assert b.layer_activations == pytest.approx(a.layer_activations / 2)
    assert b.total < a.total


@given(plans)
def test_activations_depend_only_on_microbatch(plan):
    m = memory_breakdown(X160, plan)
    assert m.layer_activations == pytest.approx(plan.b_mu * 2560 * activation_bytes_per_token(X160) / plan.n_a)


@given(st.integers(2, 64), st.integers(2, 64))
def test_tensor_intensity_decreases_with_degree(a, b):
    assume(a < b)
    assert tensor_intensity(X160, a) > tensor_intensity(X160, b)


def test_memory_gib_constant():
    assert GIB == 1 << 30
