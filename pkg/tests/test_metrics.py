import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgelm.metrics import (
    PLATFORMS,
    MetricRecord,
    PlatformProfile,
    cdtr,
    compute_all,
    dsi,
    energy_per_token,
    energy_ratio,
    flops_per_token,
    generalization_gap,
    session_cost,
)


class TestGeneralizationGap:
    def test_healthcare_worked_example(self):
        assert generalization_gap(0.95, 0.40) == pytest.approx(0.578947368, abs=1e-9)

    def test_legal_worked_example(self):
        assert generalization_gap(0.90, 0.62) == pytest.approx(0.311111111, abs=1e-9)

    def test_equal_perfs(self):
        assert generalization_gap(0.5, 0.5) == 0.0

    def test_zero_in_domain(self):
        with pytest.raises(ValueError, match="undefined gap"):
            generalization_gap(0.0, 0.3)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
    def test_bounded_above_and_sign(self, in_perf, out_perf):
        gg = generalization_gap(in_perf, out_perf)
        assert gg <= 1.0
        assert (gg >= 0) == (in_perf >= out_perf)


class TestCdtr:
    def test_finance_to_legal(self):
        assert cdtr(0.60, 0.90) == pytest.approx(0.666666667, abs=1e-9)

    def test_healthcare_to_general(self):
        assert cdtr(0.40, 0.95) == pytest.approx(0.421052632, abs=1e-9)

    def test_identity(self):
        assert cdtr(0.7, 0.7) == 1.0

    def test_zero_source(self):
        with pytest.raises(ValueError):
            cdtr(0.5, 0.0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_reciprocity(self, a, b):
        assert cdtr(a, b) * cdtr(b, a) == pytest.approx(1.0, rel=1e-12)


class TestDsi:
    def test_finance_example(self):
        record = MetricRecord("finance", 0.90, {"h": 0.30, "l": 0.30, "s": 0.30})
        assert dsi(record) == pytest.approx(3.0, abs=1e-9)

    def test_chatbot_example(self):
        record = MetricRecord("healthcare", 0.95, {"a": 0.40, "b": 0.45, "c": 0.50})
        assert dsi(record) == pytest.approx(2.111111111, abs=1e-9)

    def test_all_equal(self):
        record = MetricRecord("x", 0.6, {"a": 0.6, "b": 0.6})
        assert dsi(record) == pytest.approx(1.0)

    def test_zero_mean_rejected(self):
        record = MetricRecord("x", 0.6, {"a": 0.0})
        with pytest.raises(ValueError, match="zero"):
            dsi(record)


class TestScaleInvariance:
    @given(st.floats(0.05, 1.0), st.floats(0.01, 1.0), st.floats(0.1, 1.0))
    def test_metrics_invariant_to_common_rescale(self, in_perf, out_perf, scale):
        gg0 = generalization_gap(in_perf, out_perf)
        gg1 = generalization_gap(in_perf * scale, out_perf * scale)
        assert gg0 == pytest.approx(gg1, abs=1e-12)
        assert cdtr(out_perf, in_perf) == pytest.approx(
            cdtr(out_perf * scale, in_perf * scale), rel=1e-12
        )
        r0 = MetricRecord("d", in_perf, {"a": out_perf})
        r1 = MetricRecord("d", in_perf * scale, {"a": out_perf * scale})
        assert dsi(r0) == pytest.approx(dsi(r1), rel=1e-12)


class TestCost:
    def test_energy_in_domain(self):
        assert energy_per_token(2.5, 0.050) == pytest.approx(0.125, abs=1e-12)

    def test_energy_out_of_domain_and_delta(self):
        e = energy_per_token(2.7, 0.070)
        assert e == pytest.approx(0.189, abs=1e-9)
        assert (e / 0.125 - 1.0) * 100 == pytest.approx(51.20, abs=1e-6)

    def test_zero_power(self):
        assert energy_per_token(0.0, 99.0) == 0.0

    @given(st.floats(0.01, 100), st.floats(0.001, 10))
    def test_bilinear(self, power, latency):
        assert energy_per_token(2 * power, latency) == pytest.approx(
            2 * energy_per_token(power, latency), rel=1e-12
        )

    def test_flops_per_token(self):
        assert flops_per_token(12, 128) == 393_216
        assert flops_per_token(0, 128) == 0
        assert flops_per_token(2, 32) == 4_096

    def test_energy_ratio(self):
        assert energy_ratio(4, 8) == 0.25
        assert energy_ratio(6, 6) == 1.0
        assert energy_ratio(6, 8) == pytest.approx(0.5625)

    def test_session_cost(self):
        s = session_cost(10, 0.0824, 0.23)
        assert s["total_latency_s"] == pytest.approx(0.824, abs=1e-9)
        assert s["total_energy_j"] == pytest.approx(2.3, abs=1e-9)
        z = session_cost(0, 0.1, 0.1)
        assert z == {"total_latency_s": 0.0, "total_energy_j": 0.0}
        s2 = session_cost(100, 0.05, 0.125)
        assert (s2["total_latency_s"], s2["total_energy_j"]) == (5.0, 12.5)


class TestPlatforms:
    def test_builtins_present(self):
        assert set(PLATFORMS) == {"raspberry_pi_4", "pixel_6", "iphone_13", "custom_npu"}
        assert PLATFORMS["raspberry_pi_4"].peak_flops == 12e9
        assert PLATFORMS["raspberry_pi_4"].ram_bytes == 4e9

    def test_positive_constants_enforced(self):
        with pytest.raises(ValueError):
            PlatformProfile("bad", 0, 1, 1)


class TestComputeAll:
    def test_table_rows(self):
        records = [
            MetricRecord("healthcare", 0.95, {"general": 0.40, "b": 0.45, "c": 0.50},
                         gg_reference="general"),
            MetricRecord("finance", 0.90, {"legal": 0.60, "h": 0.15, "s": 0.15}),
            MetricRecord("legal", 0.90, {"finance": 0.62}),
        ]
        table = compute_all(records)
        assert table[0]["gg"] == pytest.approx(0.5789, abs=1e-4)
        assert table[1]["gg"] == pytest.approx(0.6667, abs=1e-4)
        assert table[2]["gg"] == pytest.approx(0.3111, abs=1e-4)
        assert table[0]["dsi"] == pytest.approx(2.1111, abs=1e-4)
        assert table[1]["dsi"] == pytest.approx(3.0, abs=1e-9)
        assert table[2]["dsi"] == pytest.approx(1.4516, abs=1e-4)
        assert table[0]["cdtr"]["general"] == pytest.approx(0.4211, abs=1e-4)
        assert table[1]["cdtr"]["legal"] == pytest.approx(0.6667, abs=1e-4)

    def test_degenerate_record(self):
        table = compute_all([MetricRecord("x", 0.8, {"a": 0.8})])
        assert table[0]["gg"] == 0.0
        assert table[0]["dsi"] == pytest.approx(1.0)
        assert table[0]["cdtr"]["a"] == pytest.approx(1.0)

    def test_cells_match_scalar_recomputation(self):
        rng = np.random.default_rng(12)
        records = []
        for i in range(20):
            outs = {f"d{j}": float(rng.uniform(0.05, 1.0)) for j in range(rng.integers(1, 5))}
            records.append(MetricRecord(f"m{i}", float(rng.uniform(0.05, 1.0)), outs))
        for record, row in zip(records, compute_all(records)):
            mean_out = sum(record.out_domain_perfs.values()) / len(record.out_domain_perfs)
            assert row["gg"] == pytest.approx(
                generalization_gap(record.in_domain_perf, mean_out), rel=1e-12
            )
            assert row["dsi"] == pytest.approx(dsi(record), rel=1e-12)
            for name, perf in record.out_domain_perfs.items():
                assert row["cdtr"][name] == pytest.approx(
                    cdtr(perf, record.in_domain_perf), rel=1e-12
                )
