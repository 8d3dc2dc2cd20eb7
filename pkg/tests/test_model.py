import copy
import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from skinwrench import simkit
from skinwrench.model import (
    ModelError,
    decompose,
    dump_model,
    load_model,
    net_wrench,
    outside_neighbors,
    propagate_kinematics,
)
from skinwrench.spatial import ProperKinematics, SpatialInertia, apply_inertia
from skinwrench.model import Link

from helpers import humanoid_doc, leg_doc, pendulum_doc

GRAVITY = np.array([0.0, 0.0, -9.81])


def test_load_pendulum():
    m = load_model(pendulum_doc())
    assert m.n_links == 2 and len(m.joints) == 1
    assert m.root == "pivot"


def test_load_from_path_and_text(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(leg_doc()))
    assert load_model(path).n_links == 3
    assert load_model(str(path)).n_links == 3
    assert load_model(json.dumps(leg_doc())).patches["shank"].link == "shank"


def test_cyclic_joints_rejected():
    doc = pendulum_doc()
    doc["links"].append({"name": "third", "mass": 1.0})
    doc["joints"] += [
        {"name": "a", "parent": "arm", "child": "third", "type": "fixed"},
        {"name": "b", "parent": "third", "child": "arm", "type": "fixed"},
    ]
    with pytest.raises(ModelError):
        load_model(doc)


def test_joint_loop_without_root_rejected():
    doc = {"links": [{"name": "a", "mass": 1}, {"name": "b", "mass": 1}],
           "joints": [{"name": "j", "parent": "a", "child": "b", "type": "fixed"}]}
    load_model(doc)
    doc["links"].append({"name": "c", "mass": 1})
    doc["joints"].append({"name": "k", "parent": "c", "child": "c", "type": "fixed"})
    with pytest.raises(ModelError):
        load_model(doc)


def test_unknown_keys_rejected():
    doc = pendulum_doc()
    doc["extra"] = 1
    with pytest.raises(ModelError, match="schema"):
        load_model(doc)
    doc = pendulum_doc()
    doc["links"][0]["colour"] = "red"
    with pytest.raises(ModelError, match="schema"):
        load_model(doc)


def test_unknown_link_reference():
    doc = pendulum_doc()
    doc["joints"][0]["child"] = "nowhere"
    with pytest.raises(ModelError, match="unknown link"):
        load_model(doc)


def test_bad_rotation_rejected():
    doc = pendulum_doc()
    doc["joints"][0]["origin"]["rotation"] = [1, 0, 0, 0, 1, 0, 0, 0, 2]
    with pytest.raises(ModelError, match="orthonormal"):
        load_model(doc)


def test_axis_must_be_unit():
    doc = pendulum_doc()
    doc["joints"][0]["axis"] = [0, 2, 0]
    with pytest.raises(ModelError, match="unit"):
        load_model(doc)


def test_cut_validation():
    doc = leg_doc(with_patch=False)
    doc["sensor_cuts"].append(dict(doc["sensor_cuts"][0]))
    with pytest.raises(ModelError, match="duplicate"):
        load_model(doc)
    doc = leg_doc(with_patch=False)
    doc["sensor_cuts"][0]["joint"] = "elbow"
    with pytest.raises(ModelError, match="unknown joint"):
        load_model(doc)
    doc = leg_doc(with_patch=False)
    doc["sensor_cuts"][0]["frame"] = "shank"
    with pytest.raises(ModelError, match="not a side"):
        load_model(doc)


def test_rpy_origin():
    doc = pendulum_doc()
    doc["joints"][0]["origin"]["rpy"] = [0.1, 0.2, 0.3]
    m = load_model(doc)
    np.testing.assert_allclose(m.joints[0].origin.rotation, Rotation.from_euler("xyz", [0.1, 0.2, 0.3]).as_matrix())


def test_dump_round_trip():
    m = load_model(leg_doc())
    again = load_model(dump_model(m))
    assert [l.name for l in again.links] == [l.name for l in m.links]
    assert len(again.patches["shank"]) == len(m.patches["shank"])


def test_decompose_no_cuts():
    m = load_model(pendulum_doc())
    (sm,) = decompose(m)
    assert set(sm.links) == {"pivot", "arm"} and sm.cuts == () and sm.base == "pivot"


def test_decompose_single_cut():
    doc = pendulum_doc()
    doc["sensor_cuts"] = [{"joint": "hinge", "frame": "arm"}]
    subs = decompose(load_model(doc))
    assert [s.links for s in subs] == [("pivot",), ("arm",)]
    assert subs[0].cuts == (("hinge", "arm", "pivot"),)
    assert subs[1].cuts == (("hinge", "pivot", "arm"),)


def test_decompose_five_cuts_six_submodels():
    m = load_model(humanoid_doc())
    assert len(m.sensor_cuts) == 5
    subs = decompose(m)
    assert len(subs) == 6
    # partition of the link set
    members = [l for s in subs for l in s.links]
    assert sorted(members) == sorted(l.name for l in m.links)
    # every cut borders exactly two submodels, once per side
    for cut in m.sensor_cuts:
        sides = [s for s in subs for c in s.cuts if c[0] == cut.joint]
        assert len(sides) == 2 and sides[0].id != sides[1].id
    # base is the shallowest member
    for s in subs:
        assert m.depth[s.base] == min(m.depth[l] for l in s.links)


def test_outside_neighbors_symmetric():
    m = load_model(humanoid_doc())
    subs = decompose(m)
    owner = {l: s for s in subs for l in s.links}
    for s in subs:
        for link in s.links:
            for d in outside_neighbors(m, s, link):
                assert link in outside_neighbors(m, owner[d], d)


def test_static_propagation_reexpresses_gravity(rng):
    m = simkit.random_multibody(rng, 6)
    q = rng.uniform(-3, 3, len(m.joints))
    state = propagate_kinematics(m, ProperKinematics.static(m.root), q)
    for name, k in state.kinematics.items():
        R = state.poses[name].rotation
        np.testing.assert_allclose(k.ang_vel, 0, atol=1e-15)
        np.testing.assert_allclose(k.proper_acc[:3], -R.T @ GRAVITY, atol=1e-12)
        np.testing.assert_allclose(k.proper_acc[3:], 0, atol=1e-15)


def test_single_revolute_rate():
    doc = pendulum_doc()
    doc["joints"][0]["axis"] = [0, 0, 1]
    m = load_model(doc)
    state = propagate_kinematics(m, ProperKinematics.static("pivot"), qd=[1.0])
    np.testing.assert_allclose(state.kinematics["arm"].ang_vel, [0, 0, 1])


def test_base_frame_checked():
    m = load_model(pendulum_doc())
    with pytest.raises(ModelError):
        propagate_kinematics(m, ProperKinematics.static("arm"))


def _world_poses(m, q):
    poses = {m.root: (np.eye(3), np.zeros(3))}
    for name in m.order[1:]:
        j = m.parent_joint[name]
        Rp, pp = poses[j.parent]
        R = j.origin.rotation
        if j.kind == "revolute":
            R = R @ Rotation.from_rotvec(j.axis * q[m.joints.index(j)]).as_matrix()
        poses[name] = (Rp @ R, pp + Rp @ j.origin.translation)
    return poses


def _vee(S):
    return np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]]) / 2


def test_propagation_matches_finite_differences(rng):
    for _ in range(5):
        m = simkit.random_multibody(rng, 5, fixed_fraction=0.2)
        n = len(m.joints)
        q0, v, a = rng.uniform(-2, 2, n), rng.normal(size=n), rng.normal(size=n)
        traj = lambda t: q0 + v * t + 0.5 * a * t ** 2
        h = 1e-4
        p_m, p_0, p_p = (_world_poses(m, traj(t)) for t in (-h, 0.0, h))
        pp2, pm2 = _world_poses(m, traj(2 * h)), _world_poses(m, traj(-2 * h))
        state = propagate_kinematics(m, ProperKinematics.static(m.root), q0, v, a)
        for name in m.order:
            R, p = p_0[name]
            w_world = _vee((p_p[name][0] - p_m[name][0]) / (2 * h) @ R.T)
            # angular acceleration from a central difference of world angular velocity
            w_plus = _vee((pp2[name][0] - p_0[name][0]) / (2 * h) @ p_p[name][0].T)
            w_minus = _vee((p_0[name][0] - pm2[name][0]) / (2 * h) @ p_m[name][0].T)
            dw_world = (w_plus - w_minus) / (2 * h)
            acc_world = (p_p[name][1] - 2 * p + p_m[name][1]) / h ** 2
            k = state.kinematics[name]
            np.testing.assert_allclose(k.ang_vel, R.T @ w_world, atol=1e-4)
            np.testing.assert_allclose(k.proper_acc[3:], R.T @ dw_world, atol=1e-4)
            np.testing.assert_allclose(k.proper_acc[:3], R.T @ (acc_world - GRAVITY), atol=1e-4)


def test_net_wrench_free_fall():
    link = Link("b", SpatialInertia(2.0, (0.1, 0, 0), np.eye(3)))
    out = net_wrench(link, ProperKinematics(np.zeros(6), np.zeros(3), "b"))
    np.testing.assert_array_equal(out.vector, np.zeros(6))


def test_net_wrench_static_link():
    link = Link("b", SpatialInertia(2.0, (0, 0, 0), np.eye(3)))
    out = net_wrench(link, ProperKinematics.static("b"))
    np.testing.assert_allclose(out.force, [0, 0, 19.62])
    np.testing.assert_allclose(out.moment, 0)


def test_net_wrench_principal_spin_has_no_gyroscopic_moment():
    link = Link("b", SpatialInertia(1.0, (0, 0, 0), np.diag([1.0, 2.0, 3.0])))
    out = net_wrench(link, ProperKinematics(np.zeros(6), (0, 0, 5.0), "b"))
    np.testing.assert_allclose(out.vector, 0, atol=1e-12)


def test_net_wrench_frame_checked():
    link = Link("b", SpatialInertia(1.0, (0, 0, 0), np.eye(3)))
    with pytest.raises(ValueError):
        net_wrench(link, ProperKinematics.static("c"))


def test_net_wrench_linear_in_acceleration(rng):
    for _ in range(20):
        link = Link("b", simkit.random_inertia(rng))
        alpha, w = rng.normal(size=6), rng.normal(size=3)
        two = net_wrench(link, ProperKinematics(2 * alpha, w, "b"))
        one = net_wrench(link, ProperKinematics(alpha, w, "b"))
        np.testing.assert_allclose((two - one).vector, apply_inertia(link.inertia, alpha, "b").vector, atol=1e-12)


def test_net_wrench_centripetal_direction():
    # a point mass whirling at radius r about z needs an inward force m w^2 r
    link = Link("b", SpatialInertia(1.0, (0.5, 0, 0), 0.25 * np.diag([0, 1, 1])))
    out = net_wrench(link, ProperKinematics(np.zeros(6), (0, 0, 2.0), "b"))
    np.testing.assert_allclose(out.force, [-2.0, 0, 0], atol=1e-12)
