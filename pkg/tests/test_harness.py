from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from flownav import harness as H
from flownav.exceptions import InvalidScenario
from flownav.sim import SCENARIOS
from flownav.sim.trajectory import MODEL_SWITCH_ALTITUDE

SMALL = H.ScenarioConfig("flat", resolution=256, t_start=20.0, t_end=21.0)


def record(i, rel=0.1, truth=(1.0, 0.0, 0.0), status="ok"):
    est = tuple(np.add(truth, (rel * np.linalg.norm(truth), 0.0, 0.0)))
    ok = status == "ok"
    return H.FrameRecord(i, i * 0.25, (i + 1) * 0.25, 100.0, "planar", status,
                         est if ok else (math.nan,) * 3, truth, rel if ok else math.nan,
                         rel * np.linalg.norm(truth) if ok else math.nan,
                         bool(np.linalg.norm(truth) < H.EXCLUDE_SPEED), 10, 0.1, True)


@pytest.fixture(scope="module")
def small_report():
    return H.run_pipeline(SMALL)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(scenario="mars"), dict(resolution=100),
                                    dict(resolution=64), dict(model="cone"), dict(pairs=-1),
                                    dict(frame_rate=0.0), dict(pair_span=0.1)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidScenario):
            H.ScenarioConfig(**kw)

    def test_noise_seed_follows_seed(self):
        assert H.ScenarioConfig(seed=9).noise.seed == 9

    def test_mapping_round_trip(self):
        cfg = H.from_mapping({"scenario": "incline", "seed": "3", "frame_rate": "2",
                              "camera_sigma": "8", "window": "40", "roughness": "0.01",
                              "altitude0": "5000", "altitude1": "100", "vertical0": "50",
                              "horizontal0": "0", "vertical1": "0", "horizontal1": "0"})
        assert cfg.lk.window == 40 and cfg.noise.camera_sigma == 8.0
        assert cfg.endpoints.altitude0 == 5000.0
        assert cfg.trajectory().terrain.roughness == 0.01
        assert H.from_mapping(H.to_mapping(cfg)) == cfg
        assert H.from_mapping({k: str(v) for k, v in H.to_mapping(cfg).items()}) == cfg

    def test_unknown_key(self):
        with pytest.raises(InvalidScenario, match="unknown config keys"):
            H.from_mapping({"colour": "red"})

    def test_partial_endpoints(self):
        with pytest.raises(InvalidScenario):
            H.from_mapping({"altitude0": "100"})

    def test_state_sigma_sets_both(self):
        cfg = H.from_mapping({"state_sigma": "1e-3", "attitude_sigma": "5"})
        assert cfg.noise.attitude_sigma == cfg.noise.rate_sigma == 1e-3

    def test_load_config_overrides(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("scenario = peak\nseed = 2\n")
        cfg = H.load_config(p, seed=5, frame_rate=None)
        assert (cfg.scenario, cfg.seed, cfg.frame_rate) == ("peak", 5, 4.0)

    def test_with_value(self):
        assert SMALL.with_value("camera_sigma", 16).noise.camera_sigma == 16.0


class TestPairTimes:
    def test_consecutive(self):
        src = H.SimulatedSource(replace(SMALL, t_start=0.0, t_end=2.0))
        pairs = src.pair_times()
        assert len(pairs) == 8
        assert all(b - a == pytest.approx(0.25) for a, b in pairs)

    def test_anchored(self):
        cfg = H.ScenarioConfig("flat", pairs=5, pair_span=2.0, frame_rate=4.0)
        pairs = H.SimulatedSource(cfg).pair_times()
        assert len(pairs) == 5
        assert pairs[0][0] == 0.0 and pairs[-1][0] == pytest.approx(58.0)
        assert all(b - a == pytest.approx(0.25) for a, b in pairs)

    def test_sweep_shares_anchors(self):
        base = H.ScenarioConfig("flat", pairs=4)
        sw = H.SweepConfig(base, "frame_rate", (4.0, 1.0, 0.5))
        anchors = [[a for a, _ in H.SimulatedSource(c).pair_times()] for c in sw.configs()]
        assert anchors[0] == anchors[1] == anchors[2]

    def test_sweep_invalid(self):
        with pytest.raises(InvalidScenario):
            H.SweepConfig(SMALL, "colour", (1,))
        with pytest.raises(InvalidScenario):
            H.SweepConfig(SMALL, "frame_rate", ())


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_oracle_is_exact(scenario):
    rep = H.run_oracle(H.ScenarioConfig(scenario, pairs=40))
    s = rep.summary
    assert s["n_failed"] == 0
    assert s["rel_mean"] < 1e-8


def test_oracle_slope_model_on_incline():
    rep = H.run_oracle(H.ScenarioConfig("incline", pairs=10, model="slope"))
    assert rep.summary["rel_mean"] < 1e-8


class TestPipeline:
    def test_small_run(self, small_report):
        s = small_report.summary
        assert s["n_pairs"] == 4 and s["n_failed"] == 0
        assert s["rel_mean"] < 0.05
        assert len(small_report.timings) == 4

    def test_deterministic_csv(self, small_report, tmp_path):
        again = H.run_pipeline(SMALL)
        a = H.export_report(small_report, tmp_path / "a")
        b = H.export_report(again, tmp_path / "b")
        for key in ("frames", "summary", "plot"):
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_aggregates_from_csv(self, small_report, tmp_path):
        paths = H.export_report(small_report, tmp_path)
        rows = H.read_frames_csv(paths["frames"])
        rel = np.array([float(r["rel_error"]) for r in rows if r["status"] == "ok"
                        and r["excluded"] == "0"])
        summary = H.read_frames_csv(paths["summary"])[0]
        assert summary["group"] == "Landing" and summary["trajectory"] == "Flat"
        for key, val in (("rel_mean", rel.mean()), ("rel_max", rel.max()),
                         ("rel_min", rel.min()), ("rel_std", rel.std())):
            assert float(summary[key]) == pytest.approx(val, rel=1e-12, abs=1e-15)

    def test_failed_pair_is_recorded(self):
        class Blank(H.SimulatedSource):
            def image(self, t):
                return np.full((self.K.height, self.K.width), 90, np.uint8)

        rep = H.run_pipeline(SMALL, source=Blank(SMALL))
        s = rep.summary
        assert s["n_failed"] == 4 and s["n_used"] == 0 and math.isnan(s["rel_mean"])
        assert rep.frames[0].status == "NoFeatures"
        assert math.isnan(rep.frames[0].estimate[0])

    def test_directory_round_trip(self, small_report, tmp_path):
        cfg = replace(SMALL, noise=replace(SMALL.noise, camera_sigma=2.0, attitude_sigma=1e-4,
                                           rate_sigma=1e-4))
        out = H.simulate(cfg, tmp_path / "sim")
        assert len(list((out / H.FRAME_DIR).glob("*.pgm"))) == 5
        disk = H.estimate_directory(out)
        mem = H.run_pipeline(cfg)
        assert np.array_equal(disk.column("rel_error"), mem.column("rel_error"))

    def test_slope_model_runs(self):
        rep = H.run_pipeline(replace(SMALL, scenario="incline", model="slope"))
        assert rep.summary["n_failed"] == 0
        assert all(np.isfinite(f.slope).all() for f in rep.frames)


class TestAggregate:
    def test_statistics(self):
        frames = [record(0, 0.1), record(1, 0.3), record(2, 0.2)]
        s = H.aggregate(frames)
        assert s["rel_mean"] == pytest.approx(0.2)
        assert s["rel_std"] == pytest.approx(np.std([0.1, 0.3, 0.2]))
        assert (s["rel_max"], s["rel_min"], s["n_used"]) == (0.3, 0.1, 3)

    def test_exclusion_and_failures(self):
        frames = [record(0, 0.1), record(1, 5.0, truth=(0.001, 0.0, 0.0)),
                  record(2, status="NoFeatures")]
        s = H.aggregate(frames)
        assert (s["n_used"], s["n_excluded"], s["n_failed"]) == (1, 1, 1)
        assert s["rel_max"] == 0.1 and s["rel_max_all"] == 5.0

    def test_empty(self, tmp_path):
        rep = H.RunReport("flat", {}, [])
        paths = H.export_report(rep, tmp_path)
        assert paths["frames"].read_text().strip() == ",".join(H.FRAME_COLUMNS)
        ET.fromstring(paths["plot"].read_text())

    def test_svg_well_formed(self, small_report):
        root = ET.fromstring(H.velocity_svg(small_report))
        assert root.tag.endswith("svg")
        assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 7

    def test_groups(self):
        assert H.summary_row(H.RunReport("hohmann", {}, []))[:2] == ["Orbital",
                                                                     "Hohmann Transfer"]
        assert H.summary_row(H.RunReport("transfer_to_landing", {}, []))[0] == "End-to-End"


def test_auto_model_switch():
    cfg = H.ScenarioConfig("transfer_to_landing")
    traj = cfg.trajectory()
    att = np.zeros(3)
    assert H._choose_model(cfg, traj, att, MODEL_SWITCH_ALTITUDE + 500.0) == "sphere"
    assert H._choose_model(cfg, traj, att, MODEL_SWITCH_ALTITUDE - 500.0) == "planar"
    flat = H.ScenarioConfig("flat")
    assert H._choose_model(flat, flat.trajectory(), att, 1e6) == "planar"
    assert H._choose_model(replace(flat, model="slope"), flat.trajectory(), att, 1.0) == "slope"


def test_export_sweep(tmp_path):
    sw = H.SweepConfig(SMALL, "camera_sigma", (0.0, 8.0))
    reports = {0.0: H.RunReport("flat", {}, [record(0, 0.1)]),
               8.0: H.RunReport("flat", {}, [record(0, 0.2)])}
    path = H.export_sweep(sw, reports, tmp_path)
    rows = H.read_frames_csv(path)
    assert [r["camera_sigma"] for r in rows] == ["0.0", "8.0"]
    assert [float(r["rel_mean"]) for r in rows] == [0.1, 0.2]
    assert (tmp_path / "camera_sigma=8.0" / "velocity.svg").exists()
