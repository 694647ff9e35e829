"""Seeding, noise sweep, training data, exhaustive search and the Monte Carlo harness."""

import csv
import itertools

import numpy as np
import pytest

from narxdsa.config import ExperimentConfig
from narxdsa.experiments.baselines import exhaustive_baselines, permutation_count
from narxdsa.experiments.common import amc_table, derive_seed, prepare_cell
from narxdsa.experiments.dataset import (
    cqi_error_histogram,
    error_bins,
    generate_training_data,
    read_dataset_csv,
    write_cqi_hist_csv,
    write_dataset_csv,
)
from narxdsa.experiments.montecarlo import (
    MissingModelError,
    aggregate,
    metrics_table,
    run_monte_carlo,
    sn_throughput_cdf,
    write_monte_carlo_csv,
    write_sn_cdf_csv,
    zero_mass,
)
from narxdsa.experiments.noise import elbow, run_noise_sweep
from narxdsa.narx import predict_sequence
from narxdsa.power import OFF, primary_sinr
from narxdsa.radio import ChannelGains, PlaygroundConfig

TINY = ExperimentConfig(runs=2, loads=(0.16, 0.48), train_samples=200,
                        noise_grid=(-130.0, -100.0, -80.0, -70.0),
                        policies=("pn_only", "fm_baseline", "exhaustive_min", "exhaustive_max"))
NN = ("nn_no_mod_change", "nn_rel_change_2", "nn_rel_change_5", "nn_rel_change_10")


class TestSeeding:
    def test_deterministic_and_distinct(self):
        assert derive_seed(1, 0, 3) == derive_seed(1, 0, 3)
        seeds = {derive_seed(1, s, r) for s in range(4) for r in range(30)}
        assert len(seeds) == 120


class TestNoiseSweep:
    def test_rows_and_self_reference(self):
        rows = run_noise_sweep(TINY)
        assert len(rows) == 2 * 4
        for load in TINY.loads:
            first = [r for r in rows if r[0] == load][0]
            assert first[1] == -130.0 and first[3] == 0.0

    def test_elbow_helper(self):
        rows = [(0.16, -130.0, 10.0, 0.0), (0.16, -90.0, 9.8, 0.02), (0.16, -85.0, 9.0, 0.1)]
        assert elbow(rows, 0.16) == -85.0
        assert elbow(rows, 0.32) is None

    def test_throughput_non_increasing_in_noise(self, noise_rows, default_cfg):
        for load in default_cfg.loads:
            t = np.array([r[2] for r in noise_rows if r[0] == load])
            assert np.all(np.diff(t) <= 0), f"load {load}: throughput rises with noise"


class TestTrainingData:
    def test_counts_and_domains(self, training_data, default_cfg):
        assert training_data.n_samples >= 4000
        counts = {load: sum(1 for s in training_data.sequences if s.load == load)
                  for load in default_cfg.loads}
        assert len(set(counts.values())) == 1
        for s in training_data.sequences:
            assert set(np.unique(s.u2)) <= {0.0, 1.0, 2.0}
            assert len(s) == len(default_cfg.probe_powers) + 1
            assert s.u1[0] == default_cfg.probe_powers[0]
        assert set(training_data.split) == {"train", "val", "test"}

    def test_targets_are_true_throughput(self):
        cfg = TINY
        data = generate_training_data(cfg)
        table = amc_table(cfg)
        seq = data.sequences[0]
        cell = prepare_cell(cfg, table, cfg.loads[0],
                            derive_seed(cfg.master_seed, 2, 0, round(cfg.loads[0] * 10_000)))
        link = cell.nearest[0]
        expected = [table.throughput_of(primary_sinr(cell.pn_dbm, np.full(4, OFF), cell.gains,
                                                     cell.sigma2))[link]]
        for p in cfg.probe_powers:
            expected.append(table.throughput_of(primary_sinr(cell.pn_dbm, np.full(4, p), cell.gains,
                                                             cell.sigma2))[link])
        np.testing.assert_array_equal(seq.y, expected)

    def test_csv_roundtrip(self, tmp_path):
        data = generate_training_data(TINY)
        write_dataset_csv(data, tmp_path / "d.csv")
        back = read_dataset_csv(tmp_path / "d.csv", data.pad)
        assert len(back.sequences) == len(data.sequences)
        np.testing.assert_array_equal(back.split, data.split)
        for a, b in zip(back.sequences, data.sequences):
            np.testing.assert_array_equal(a.u1, b.u1)
            np.testing.assert_array_equal(a.u2, b.u2)
            np.testing.assert_allclose(a.y, b.y, rtol=1e-8)


class TestCqiHistogram:
    def test_bins(self):
        np.testing.assert_allclose(error_bins([0, 0, 1, 2, 3, 7]), [2 / 6, 1 / 6, 1 / 6, 2 / 6])
        np.testing.assert_array_equal(error_bins([0, 0, 0]), [1, 0, 0, 0])
        assert np.all(np.isnan(error_bins([])))

    def test_histogram_sums_to_one(self, trained, training_data, default_cfg, tmp_path):
        hist = cqi_error_histogram(trained.model, training_data.subset("test"), amc_table(default_cfg))
        assert sorted(hist) == sorted(default_cfg.loads)
        for freqs in hist.values():
            np.testing.assert_allclose(freqs.sum(), 1.0)
        write_cqi_hist_csv(hist, tmp_path / "h.csv")
        assert len((tmp_path / "h.csv").read_text().splitlines()) == 1 + 4 * len(hist)


def toy_gains():
    """One PU link and one SU; the SU interferes through gps."""
    return ChannelGains(gpp=np.array([[1e-9]]), gps=np.array([[1e-12]]),
                        gsp=np.array([[1e-12]]), gss=np.array([[1e-9]]))


class TestExhaustive:
    def test_one_su_three_levels_by_hand(self):
        g = toy_gains()
        table = amc_table(ExperimentConfig())
        pn = np.array([0.0])
        sigma2 = 1e-13
        grid = [-30.0, 0.0, 20.0]
        base = table.type_of(primary_sinr(pn, np.array([OFF]), g, sigma2))
        cases = []
        for s in [OFF] + grid:
            gamma = primary_sinr(pn, np.array([s]), g, sigma2)
            feasible = table.type_of(gamma)[0] == base[0]
            cases.append((s, feasible, float(table.throughput_of(gamma)[0])))
        feas = [c for c in cases if c[1]]
        lo, hi = exhaustive_baselines(g, pn, base, grid, table, sigma2)
        assert hi.pn_throughput == max(c[2] for c in feas)
        assert lo.pn_throughput == min(c[2] for c in feas)
        assert (lo.powers[0], lo.pn_throughput) in [(c[0], c[2]) for c in feas]

    def test_all_off_is_feasible_and_max_equals_reference(self):
        cfg = ExperimentConfig()
        table = amc_table(cfg)
        for seed in range(3):
            cell = prepare_cell(cfg, table, 0.32, seed)
            types = table.type_of(cell.pn_sinr)
            lo, hi = exhaustive_baselines(cell.gains, cell.pn_dbm, types, cfg.probe_powers, table,
                                          cell.sigma2)
            np.testing.assert_allclose(hi.pn_throughput, table.throughput_of(cell.pn_sinr).mean())
            assert lo.pn_throughput <= hi.pn_throughput
            after = table.type_of(primary_sinr(cell.pn_dbm, lo.powers, cell.gains, cell.sigma2))
            np.testing.assert_array_equal(after, types)

    def test_ties_prefer_lower_total_power(self):
        g = ChannelGains(gpp=np.array([[1e-9]]), gps=np.array([[1e-30]]),
                         gsp=np.array([[1e-30]]), gss=np.array([[1e-30]]))
        table = amc_table(ExperimentConfig())
        pn = np.array([0.0])
        base = table.type_of(primary_sinr(pn, np.array([OFF]), g, 1e-13))
        lo, hi = exhaustive_baselines(g, pn, base, [-30.0, 0.0], table, 1e-13)
        # every setting is feasible with the same PN throughput
        assert hi.powers[0] == OFF and lo.powers[0] == OFF

    def test_empty_feasible_set_returns_all_off(self):
        g = toy_gains()
        table = amc_table(ExperimentConfig())
        lo, hi = exhaustive_baselines(g, np.array([0.0]), np.array([-1]), [0.0], table, 1e-13)
        assert lo.powers[0] == OFF and hi.powers[0] == OFF

    def test_permutation_count(self):
        assert permutation_count(12, 4) == 20_736


class TestMonteCarlo:
    def test_missing_model(self):
        with pytest.raises(MissingModelError):
            run_monte_carlo(TINY.with_overrides(policies=("pn_only", "nn_rel_change_2")))

    def test_reference_rows_and_exhaustive_dominance(self):
        cells = run_monte_carlo(TINY)
        for c in cells:
            if c.policy == "pn_only":
                assert c.sn_kbps == 0.0 and c.rel_change == 0.0
        by_run = {}
        for c in cells:
            by_run.setdefault((c.load, c.run), {})[c.policy] = c.pn_kbps
        for vals in by_run.values():
            assert all(vals["exhaustive_max"] >= v - 1e-9 for v in vals.values())

    def test_parallel_matches_serial(self, tmp_path):
        a = run_monte_carlo(TINY, jobs=1)
        b = run_monte_carlo(TINY, jobs=2)
        write_monte_carlo_csv(a, aggregate(a), tmp_path / "a.csv")
        write_monte_carlo_csv(b, aggregate(b), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_exhaustive_cap_guard(self, caplog):
        cells = run_monte_carlo(TINY.with_overrides(exhaustive_cap=10))
        assert not any(c.policy.startswith("exhaustive") for c in cells)
        assert "exhaustive search skipped" in caplog.text

    def test_csv_schema(self, tmp_path):
        cells = run_monte_carlo(TINY)
        records = aggregate(cells)
        write_monte_carlo_csv(cells, records, tmp_path / "mc.csv")
        with open(tmp_path / "mc.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["policy", "load", "run", "pn_kbps", "rel_change", "sn_kbps", "blocked_frac"]
        assert len(rows) == len(cells) + len(records)
        assert sum(r["run"] == "all" for r in rows) == len(records)

    def test_cdf_properties(self, tmp_path):
        rows = sn_throughput_cdf(aggregate(run_monte_carlo(TINY)))
        assert not any(r[0] == "pn_only" for r in rows)
        for key, group in itertools.groupby(rows, key=lambda r: (r[0], r[1])):
            group = list(group)
            assert np.all(np.diff([g[2] for g in group]) > 0)
            assert np.all(np.diff([g[3] for g in group]) > 0)
            assert group[-1][3] == pytest.approx(1.0)
        write_sn_cdf_csv(rows, tmp_path / "cdf.csv")
        assert (tmp_path / "cdf.csv").read_text().splitlines()[0] == "policy,load,throughput_kbps,cdf"

    def test_aggregate_invariants(self, mc_records, default_cfg):
        for load in default_cfg.loads:
            ref = mc_records["pn_only", load]
            assert ref.pn_rel_change == 0.0 and ref.sn_avg_throughput == 0.0
            for policy in default_cfg.policies:
                rec = mc_records[policy, load]
                np.testing.assert_allclose(
                    rec.pn_rel_change, (ref.pn_avg_throughput - rec.pn_avg_throughput) / ref.pn_avg_throughput)
                assert 0.0 <= zero_mass(rec) <= 1.0

    def test_blocking_dominance(self, mc_records, default_cfg):
        for load in default_cfg.loads:
            fm = mc_records["fm_baseline", load].blocked_fraction
            for p in NN:
                assert mc_records[p, load].blocked_fraction <= fm

    def test_cqi_histograms_at_selected_settings(self, mc_records, default_cfg):
        for load in default_cfg.loads:
            for p in NN:
                hist = mc_records[p, load].cqi_abs_error_histogram
                if np.all(np.isfinite(hist)):
                    np.testing.assert_allclose(hist.sum(), 1.0)


class TestTrainedPredictor:
    def test_constant_type_two_stays_in_band(self, trained, default_cfg):
        table = amc_table(default_cfg)
        band = table.throughputs[table.types == 2]
        u1 = np.concatenate([[default_cfg.probe_powers[0]], default_cfg.probe_powers])
        pred = predict_sequence(trained.model, u1, np.full(len(u1), 2.0), default_cfg.narx.warmup)
        assert np.all((pred >= band.min()) & (pred <= band.max())), np.round(pred, 1)
