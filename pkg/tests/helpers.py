"""Model documents shared by several test modules."""

import math

from skinwrench import simkit

G = 9.81


def link(name, mass=0.0, com=(0.0, 0.0, 0.0), inertia=None):
    d = {"name": name, "mass": mass, "com": list(com)}
    if inertia is not None:
        d["inertia"] = list(inertia)
    return d


def pendulum_doc(mass=1.0, length=0.3):
    """Fixed pivot link and a point-mass arm along +x about a -y axis (horizontal at q=0)."""
    return {
        "links": [link("pivot", 1.0), link("arm", mass, (length, 0.0, 0.0))],
        "joints": [{"name": "hinge", "parent": "pivot", "child": "arm", "type": "revolute",
                    "axis": [0.0, -1.0, 0.0], "origin": {"xyz": [0.0, 0.0, 0.0]}}],
    }


def leg_doc(with_patch=True, shank_mass=0.8):
    """Hip, thigh and shank; F/T cut between hip and thigh, revolute knee about -y.

    The shank extends along +x and carries a flat patch on its top face
    (z = 0.03) whose normals point down into the link.
    """
    doc = {
        "links": [
            link("hip", 2.0, (0.0, 0.0, 0.0), [0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.01]),
            link("thigh", 1.5, (0.1, 0.0, 0.0), [0.003, 0, 0, 0, 0.02, 0, 0, 0, 0.02]),
            link("shank", shank_mass, (0.12, 0.0, 0.0), [0.002, 0, 0, 0, 0.016, 0, 0, 0, 0.016]),
        ],
        "joints": [
            {"name": "hip_ft", "parent": "hip", "child": "thigh", "type": "fixed",
             "origin": {"xyz": [0.0, 0.0, -0.05]}},
            {"name": "knee", "parent": "thigh", "child": "shank", "type": "revolute",
             "axis": [0.0, -1.0, 0.0], "origin": {"xyz": [0.2, 0.0, 0.0]}},
        ],
        "sensor_cuts": [{"joint": "hip_ft", "frame": "thigh", "sign": "parent_on_child"}],
    }
    if with_patch:
        doc["patches"] = [leg_patch().to_dict()]
    return doc


def leg_patch():
    return simkit.flat_grid_patch("shank", 27, 15, 0.005, 0.0018, origin=(0.06, -0.035, 0.03), normal=(0.0, 0.0, -1.0))


def kg_footprint(lever=0.125, angle=math.pi / 2, sigma=0.008, mass=1.0):
    """Gaussian footprint carrying ``mass`` kg centred ``lever`` m from the knee."""
    peak = mass * G / (2.0 * math.pi * sigma ** 2)
    return {"shape": "gaussian", "center": [lever - 0.06, 0.035], "scale": sigma, "peak": peak, "angle": angle}


def humanoid_doc():
    """Torso with two legs (thigh, shank, foot) and two arms; five sensor cuts."""
    links = [link("torso", 5.0, (0, 0, 0.1), [0.1, 0, 0, 0, 0.1, 0, 0, 0, 0.05])]
    joints, cuts = [], []

    def add(name, parent, xyz, axis=(0.0, 1.0, 0.0), mass=1.0):
        links.append(link(name, mass, (0.0, 0.0, -0.1), [0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.005]))
        joints.append({"name": f"{parent}_{name}", "parent": parent, "child": name, "type": "revolute",
                       "axis": list(axis), "origin": {"xyz": list(xyz)}})

    for side, y in (("l", 0.1), ("r", -0.1)):
        add(f"{side}_thigh", "torso", (0.0, y, -0.1))
        add(f"{side}_shank", f"{side}_thigh", (0.0, 0.0, -0.3))
        add(f"{side}_foot", f"{side}_shank", (0.0, 0.0, -0.3))
        add(f"{side}_arm", "torso", (0.0, 2 * y, 0.3), axis=(1.0, 0.0, 0.0))
        cuts.append({"joint": f"torso_{side}_thigh", "frame": f"{side}_thigh"})
        cuts.append({"joint": f"torso_{side}_arm", "frame": f"{side}_arm"})
    cuts.append({"joint": "l_shank_l_foot", "frame": "l_foot", "sign": "child_on_parent"})
    return {"links": links, "joints": joints, "sensor_cuts": cuts}
