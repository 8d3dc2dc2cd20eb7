import math

import numpy as np
import pytest

from skinwrench import simkit
from skinwrench.estimator import joint_torques
from skinwrench.model import load_model, propagate_kinematics
from skinwrench.skinfield import PressureFrame
from skinwrench.spatial import ProperKinematics, Wrench

from helpers import G, kg_footprint, leg_doc, leg_patch


def flat_patch():
    return simkit.flat_grid_patch("skin", 10, 10, 0.006, 0.002)


def test_oracle_static_cut_carries_subtree_weight():
    m = load_model(leg_doc(with_patch=False))
    state = propagate_kinematics(m, ProperKinematics.static("hip"))
    out = simkit.inverse_dynamics_oracle(m, state)
    f = out.cut_wrenches["hip_ft"]
    assert f.frame == "thigh"
    np.testing.assert_allclose(f.force, [0, 0, (1.5 + 0.8) * G])
    # moment about the thigh origin from both centres of mass
    expected_my = -(1.5 * 0.1 + 0.8 * 0.32) * G
    np.testing.assert_allclose(f.moment, [0, expected_my, 0], atol=1e-12)


def test_oracle_free_fall_is_quiet(rng):
    m = simkit.random_multibody(rng, 5, cuts=(1,))
    state = propagate_kinematics(m, ProperKinematics(np.zeros(6), np.zeros(3), m.root), rng.normal(size=4))
    out = simkit.inverse_dynamics_oracle(m, state)
    assert all(np.all(w.vector == 0) for w in out.cut_wrenches.values())
    assert all(t == 0 for t in out.torques.values())


def test_oracle_agrees_with_estimator(rng):
    for _ in range(100):
        m = simkit.random_multibody(rng, int(rng.integers(2, 8)), fixed_fraction=0.2)
        state = simkit.random_state(rng, m)
        ext = {l.name: simkit.random_wrench(rng, l.name) for l in m.links if rng.random() < 0.4}
        oracle = simkit.inverse_dynamics_oracle(m, state, ext)
        ours = joint_torques(m, state, ext)
        for j in m.joints:
            if j.kind == "revolute":
                assert ours[j.name] == pytest.approx(oracle.torques[j.name], abs=1e-10)
            np.testing.assert_allclose(ours.wrenches[j.name].vector, oracle.joint_wrenches[j.name], atol=1e-10)


def test_zero_peak_footprint():
    patch = flat_patch()
    fr, force, moment = simkit.synthesize_pressures(patch, simkit.FootprintSpec("disk", (0.027, 0.027), 0.01, 0.0))
    assert np.all(fr.pressures == 0) and np.all(force == 0) and np.all(moment == 0)


def test_disk_truth():
    patch = flat_patch()
    _, force, moment = simkit.synthesize_pressures(patch, simkit.FootprintSpec("disk", (0.027, 0.027), 0.02, 10e3))
    assert np.linalg.norm(force) == pytest.approx(10e3 * math.pi * 0.02 ** 2, rel=1e-9)
    np.testing.assert_allclose(moment, np.cross([0.027, 0.027, 0.0], force), rtol=1e-9)


def test_incidence_angle_ratio():
    patch = flat_patch()
    normal = simkit.FootprintSpec("gaussian", (0.027, 0.027), 0.006, 1e4)
    oblique = simkit.FootprintSpec("gaussian", (0.027, 0.027), 0.006, 1e4, math.radians(75))
    fn, truth_n, _ = simkit.synthesize_pressures(patch, normal)
    fo, truth_o, _ = simkit.synthesize_pressures(patch, oblique)
    np.testing.assert_allclose(fo.pressures, fn.pressures * math.sin(math.radians(75)))
    assert fo.pressures.sum() / fn.pressures.sum() == pytest.approx(0.966, abs=5e-4)
    # the total force keeps its magnitude and tilts towards +u
    assert np.linalg.norm(truth_o) == pytest.approx(np.linalg.norm(truth_n), rel=1e-12)
    assert truth_o[2] / np.linalg.norm(truth_o) == pytest.approx(math.sin(math.radians(75)))
    assert truth_o[0] > 0


def test_footprint_validation():
    with pytest.raises(ValueError):
        simkit.FootprintSpec("square", (0, 0), 1.0, 1.0)
    with pytest.raises(ValueError):
        simkit.FootprintSpec("disk", (0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        simkit.FootprintSpec("disk", (0, 0), 1.0, -1.0)
    with pytest.raises(ValueError):
        simkit.FootprintSpec("disk", (0, 0), 1.0, 1.0, angle=2.0)
    with pytest.raises(ValueError):
        simkit.synthesize_pressures(flat_patch(), simkit.FootprintSpec("disk", (1.0, 1.0), 0.01, 1.0))


def test_truth_consistency_at_four_times_resolution(rng):
    patch = leg_patch()
    for _ in range(5):
        fp = simkit.FootprintSpec.from_dict(kg_footprint(rng.uniform(0.08, 0.17), math.radians(rng.uniform(70, 90)),
                                                         rng.uniform(0.004, 0.012)))
        f1, m1 = simkit.footprint_truth(patch, fp)
        f4, m4 = simkit.footprint_truth(patch, fp, n_radial=192, n_angular=384)
        assert np.linalg.norm(f4 - f1) < 1e-3 * np.linalg.norm(f4)
        assert np.linalg.norm(m4 - m1) < 1e-3 * np.linalg.norm(m4)


def test_quantize_midrange():
    fr = simkit.quantize_and_noise(PressureFrame("s", [90e3, 0.0, 200e3]), 8, 180e3)
    step = 180e3 / 255
    assert step == pytest.approx(705.88, abs=0.01)
    assert fr.pressures[0] == pytest.approx(128 * step)
    assert abs(fr.pressures[0] - 90e3) <= step
    assert fr.pressures[1] == 0.0
    assert fr.pressures[2] == 180e3


def test_quantize_deterministic():
    fr = PressureFrame("s", np.linspace(0, 1e5, 50))
    a = simkit.quantize_and_noise(fr, 8, 180e3, seed=3, sigma=500.0)
    b = simkit.quantize_and_noise(fr, 8, 180e3, seed=3, sigma=500.0)
    np.testing.assert_array_equal(a.pressures, b.pressures)
    with pytest.raises(ValueError):
        simkit.quantize_and_noise(fr, 0, 180e3)


def _leg_scenario(**extra):
    doc = {
        "model": leg_doc(),
        "trajectory": [{"t": 0.0}, {"t": 0.01}],
        "contacts": [{"id": "mass", "link": "shank", "footprint": kg_footprint()}],
    }
    doc.update(extra)
    return simkit.Scenario.from_dict(doc)


def test_empty_trajectory():
    frames, truth = simkit.generate_log(_leg_scenario(trajectory=[]))
    assert frames == [] and truth == []


def test_kilogram_footprint_truth():
    frames, truth = simkit.generate_log(_leg_scenario())
    assert len(frames) == 2
    w = np.array(truth[0]["contacts"]["mass"]["wrench"])
    assert np.linalg.norm(w[:3]) == pytest.approx(9.81, rel=1e-6)
    assert set(frames[0]["skin"]) == {"shank"}
    assert frames[0]["contacts"][0]["id"] == "support"


def test_log_is_consistent_with_oracle():
    frames, truth = simkit.generate_log(_leg_scenario())
    m = load_model(leg_doc())
    state = propagate_kinematics(m, ProperKinematics.static("hip"))
    ext = {k: Wrench.from_vector(v, k) for k, v in truth[0]["external"].items()}
    np.testing.assert_allclose(frames[0]["ft"]["hip_ft"],
                               simkit.inverse_dynamics_oracle(m, state, ext).cut_wrenches["hip_ft"].vector)
    assert truth[0]["torques"]["knee"] == pytest.approx(joint_torques(m, state, ext)["knee"], abs=1e-12)


def test_logs_are_byte_identical(tmp_path):
    s = _leg_scenario(noise={"bits": 8, "sigma": 300.0}, seed=11)
    for name in ("a", "b"):
        frames, truth = simkit.generate_log(s)
        simkit.write_jsonl(tmp_path / f"{name}.jsonl", frames)
        simkit.write_jsonl(simkit.sidecar_path(tmp_path / f"{name}.jsonl"), truth)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.truth.jsonl").read_bytes() == (tmp_path / "b.truth.jsonl").read_bytes()
    other, _ = simkit.generate_log(s, seed=12)
    assert other != simkit.generate_log(s)[0]


def test_contact_window():
    s = _leg_scenario(contacts=[{"id": "late", "link": "shank", "start": 0.005, "wrench": [0, 0, -1, 0, 0, 0]}])
    frames, truth = simkit.generate_log(s)
    assert "late" not in truth[0]["contacts"] and "late" in truth[1]["contacts"]


def test_point_wrench_moment():
    c = simkit.InjectedContact("c", "l", point=np.array([0.1, 0, 0]), wrench=np.array([0, 0, -2.0, 0, 0, 0]))
    np.testing.assert_allclose(c.link_wrench().moment, [0, 0.2, 0])


def test_scenario_validation():
    with pytest.raises(simkit.ScenarioError, match="increasing"):
        _leg_scenario(trajectory=[{"t": 1.0}, {"t": 1.0}])
    with pytest.raises(simkit.ScenarioError, match="unknown link"):
        _leg_scenario(contacts=[{"link": "tail", "wrench": [0] * 6}])
    with pytest.raises(simkit.ScenarioError, match="no skin patch"):
        _leg_scenario(contacts=[{"link": "thigh", "footprint": kg_footprint()}])
    with pytest.raises(simkit.ScenarioError):
        simkit.Scenario.from_dict({"trajectory": []})


def test_sidecar_path():
    assert simkit.sidecar_path("out/run.jsonl").name == "run.truth.jsonl"


def test_random_inertia_is_physical(rng):
    for _ in range(50):
        I = simkit.random_inertia(rng)
        eig = np.linalg.eigvalsh(I.matrix())
        assert eig.min() > 0
