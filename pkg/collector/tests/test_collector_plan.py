import pytest

from pm2lat_collector.plan import (
    DEFAULT_K_GRID,
    CollectionPlan,
    ConfigMapPlan,
    MemBoundPlan,
    PlanError,
)


class TestCollectionPlan:
    def test_defaults_meet_floors(self):
        plan = CollectionPlan()
        assert plan.repetitions >= 25
        assert plan.min_total_ms >= 500.0
        assert plan.warmup_reps == 5
        assert plan.k_grid == DEFAULT_K_GRID
        assert plan.ref_k == 8192

    def test_low_repetitions_refused(self):
        with pytest.raises(PlanError, match="allow-low-quality"):
            CollectionPlan(repetitions=10)

    def test_low_total_time_refused(self):
        with pytest.raises(PlanError, match="allow-low-quality"):
            CollectionPlan(min_total_ms=100.0)

    def test_explicit_override_allows_it(self):
        plan = CollectionPlan(repetitions=10, min_total_ms=100.0,
                              allow_low_quality=True)
        assert plan.repetitions == 10

    def test_unknown_family_rejected(self):
        with pytest.raises(PlanError, match="family"):
            CollectionPlan(families=("conv",))

    def test_k_grid_sorted_deduped(self):
        plan = CollectionPlan(k_grid=(8192, 32, 32, 64))
        assert plan.k_grid == (32, 64, 8192)


class TestMemBoundPlan:
    def test_repetition_gate(self):
        with pytest.raises(PlanError):
            MemBoundPlan(repetitions=5)
        assert MemBoundPlan(repetitions=5, allow_low_quality=True).repetitions == 5

    def test_default_case_grid(self):
        plan = MemBoundPlan()
        assert len(plan.sizes) == 16
        assert "softmax" in plan.kernels


class TestConfigMapPlan:
    def test_shape_enumeration(self):
        plan = ConfigMapPlan(m_values=(64, 128), n_values=(64,), k_values=(32, 64))
        shapes = list(plan.shapes())
        assert len(shapes) == 4
        assert shapes[0] == (1, 64, 64, 32)
