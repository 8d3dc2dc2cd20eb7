"""Command-line entry point: ``interp``, ``estimate`` and ``simulate``.

Exit codes: 0 success, 1 unreadable or malformed input, 2 degenerate
triangulation, 3 log does not match the model.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import skinfield
from .estimator import ContactSpec, EstimationError, FORCE, FULL, NORM, estimate_frame
from .model import ModelError, decompose, load_model, propagate_kinematics
from .simkit import Scenario, ScenarioError, generate_log, sidecar_path, write_jsonl
from .spatial import ProperKinematics, Wrench

log = logging.getLogger("skinwrench")

EXIT_OK, EXIT_PARSE, EXIT_DEGENERATE, EXIT_MISMATCH = 0, 1, 2, 3


class LogMismatch(ValueError):
    pass


def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like WxH, got {text!r}")
    if w < 2 or h < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 points per side")
    return w, h


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ------------------------------------------------------------------ interp

def _pick_pressures(doc: dict, model, patch_name: str | None) -> skinfield.PressureFrame:
    if "skin" in doc:
        skin = doc["skin"]
        if patch_name is None:
            if len(skin) != 1:
                raise LogMismatch("frame carries several patches; choose one with --patch")
            patch_name = next(iter(skin))
        if patch_name not in skin:
            raise LogMismatch(f"frame has no pressures for patch {patch_name!r}")
        pressures = skin[patch_name]
    else:
        patch_name = patch_name or doc.get("patch")
        pressures = doc["pressures"]
    if patch_name not in model.patches:
        raise LogMismatch(f"model has no patch on {patch_name!r}")
    frame = skinfield.PressureFrame(patch_name, pressures, float(doc.get("t", 0.0)))
    if len(frame.pressures) != len(model.patches[patch_name]):
        raise LogMismatch(f"{len(frame.pressures)} pressures for {len(model.patches[patch_name])} taxels")
    return frame


def cmd_interp(args) -> int:
    try:
        model = load_model(Path(args.model))
        frame_doc = _load_json(args.frame)
        frame = _pick_pressures(frame_doc, model, args.patch)
    except LogMismatch as exc:
        log.error("%s", exc)
        return EXIT_MISMATCH
    except skinfield.DegenerateTriangulationError as exc:
        log.error("degenerate triangulation: %s", exc)
        return EXIT_DEGENERATE
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_PARSE
    patch = model.patches[frame.link]
    try:
        fields = skinfield.fields_for(patch, frame)
    except skinfield.DegenerateTriangulationError as exc:
        log.error("degenerate triangulation: %s", exc)
        return EXIT_DEGENERATE
    rows = skinfield.sample_grid(fields, patch.chart, args.grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "p", "x", "y", "z", "nx", "ny", "nz"])
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])
    return EXIT_OK


# ---------------------------------------------------------------- estimate

def _contact_spec(d: dict, model) -> ContactSpec:
    link = d["link"]
    if link not in model.link:
        raise LogMismatch(f"contact on unknown link {link!r}")
    kind = d.get("kind", FULL)
    pos = d.get("position")
    rot = None if d.get("rotation") is None else np.array(d["rotation"], dtype=float).reshape(3, 3)
    name = f"{link}/{d.get('id', 'contact')}"
    if kind == FULL:
        return ContactSpec.full(link, pos, rot, name)
    if kind == FORCE:
        return ContactSpec.force(link, pos, rot, name)
    if kind == NORM:
        return ContactSpec.norm(link, pos, d["normal"], name)
    raise ValueError(f"unknown contact kind {kind!r}")


def _parse_frame(doc: dict, model):
    for key in ("q", "qd", "qdd"):
        unknown = set(doc.get(key, {})) - set(model.joint)
        if unknown:
            raise LogMismatch(f"{key} references unknown joints {sorted(unknown)}")
    unknown = set(doc.get("ft", {})) - set(model.cut)
    if unknown:
        raise LogMismatch(f"readings for unknown sensor cuts {sorted(unknown)}")
    unknown = set(doc.get("skin", {})) - set(model.patches)
    if unknown:
        raise LogMismatch(f"pressures for unknown patches {sorted(unknown)}")
    base = doc.get("base", {})
    kin = ProperKinematics(base.get("proper_acc", [0.0, 0.0, 9.81, 0.0, 0.0, 0.0]),
                           base.get("ang_vel", [0.0, 0.0, 0.0]), model.root)
    state = propagate_kinematics(model, kin, doc.get("q", {}), doc.get("qd", {}), doc.get("qdd", {}))
    cuts = {name: Wrench.from_vector(v, model.cut[name].frame) for name, v in doc.get("ft", {}).items()}
    frames = {}
    for link, p in doc.get("skin", {}).items():
        frame = skinfield.PressureFrame(link, p, float(doc["t"]))
        if len(frame.pressures) != len(model.patches[link]):
            raise LogMismatch(f"{len(frame.pressures)} pressures for {len(model.patches[link])} taxels on {link!r}")
        frames[link] = frame
    contacts = [_contact_spec(c, model) for c in doc.get("contacts", [])]
    return state, cuts, frames, contacts


def _estimate_one(doc, model, submodels, args) -> dict:
    state, cuts, frames, contacts = _parse_frame(doc, model)
    flags = {"rank_deficient": False, "saturated": {}, "degenerate_normals": [], "pulling": False}
    skin_contacts = []
    for link, frame in frames.items():
        patch = model.patches[link]
        sat = skinfield.saturated_taxels(patch, frame, args.ceiling)
        if sat:
            flags["saturated"][link] = sat
        if not np.any(frame.pressures > args.skin_threshold):
            continue
        try:
            fields = skinfield.fields_for(patch, frame)
            found = skinfield.detect_contacts(patch, frame, fields, args.skin_threshold,
                                              args.resolution, args.metric_factor)
        except skinfield.DegenerateNormalError:
            flags["degenerate_normals"].append(link)
            continue
        if args.use_skin:
            skin_contacts.extend(found)
        else:
            for i, k in enumerate(found):
                normal = skinfield.mean_normal(patch, frame, k.activated_taxels)
                contacts.append(ContactSpec.norm(link, k.location, normal, f"{link}/skin{i}"))
    solutions, torques = estimate_frame(model, state, cuts, skin_contacts, contacts, submodels)
    out_sm = []
    for sm, sol in zip(submodels, solutions):
        flags["rank_deficient"] |= sol.rank_deficient
        entries = []
        for est in sol.contacts:
            flags["pulling"] |= est.pulling
            e = {"link": est.spec.link, "name": est.spec.frame.from_frame, "kind": est.spec.kind,
                 "wrench": [float(x) for x in est.wrench.vector]}
            if est.magnitude is not None:
                e["magnitude"] = est.magnitude
            entries.append(e)
        out_sm.append({"id": sm.id, "base": sm.base, "contacts": entries,
                       "residual_norm": sol.residual_norm, "rank": sol.rank, "unknowns": sol.unknowns})
    return {
        "t": doc["t"],
        "submodels": out_sm,
        "torques": torques.torques,
        "skin_contacts": [{"link": k.link, "location": [float(x) for x in k.location],
                           "wrench": [float(x) for x in k.wrench.vector],
                           "taxels": list(k.activated_taxels)} for k in skin_contacts],
        "flags": flags,
    }


def cmd_estimate(args) -> int:
    try:
        model = load_model(Path(args.model))
        source = open(args.log)
    except skinfield.DegenerateTriangulationError as exc:
        log.error("degenerate triangulation: %s", exc)
        return EXIT_DEGENERATE
    except (OSError, ValueError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_PARSE
    submodels = decompose(model)
    last_t = -np.inf
    with source, open(args.out, "w") as sink:
        for lineno, line in enumerate(source, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                t = float(doc["t"])
                if t < last_t:
                    raise ValueError(f"timestamp {t} decreases")
                last_t = t
                result = _estimate_one(doc, model, submodels, args)
            except LogMismatch as exc:
                log.error("line %d: %s", lineno, exc)
                return EXIT_MISMATCH
            except EstimationError as exc:
                log.error("line %d: %s", lineno, exc)
                return EXIT_MISMATCH
            except skinfield.DegenerateTriangulationError as exc:
                log.error("line %d: degenerate triangulation: %s", lineno, exc)
                return EXIT_DEGENERATE
            except (ValueError, KeyError, TypeError) as exc:
                log.error("line %d: malformed frame: %s", lineno, exc)
                return EXIT_PARSE
            sink.write(json.dumps(result))
            sink.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    try:
        scenario_path = Path(args.scenario)
        scenario = Scenario.from_dict(_load_json(scenario_path), scenario_path.parent)
    except (OSError, ValueError, ScenarioError, ModelError) as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_PARSE
    frames, truth = generate_log(scenario, args.seed)
    out = Path(args.out)
    write_jsonl(out, frames)
    write_jsonl(sidecar_path(out), truth)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skinwrench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("interp", help="sample the interpolated field of one pressure frame to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--frame", "--log", dest="frame", required=True, help="JSON pressure frame or sensor-log frame")
    p.add_argument("--patch", help="patch link name when the frame has several")
    p.add_argument("--grid", type=_grid, default=(50, 50), help="WxH sample lattice")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("estimate", help="estimate contact wrenches and joint torques for a sensor log")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--use-skin", action=argparse.BooleanOptionalAction, default=True,
                   help="feed skin wrenches as known contacts (default) or only as force-norm hypotheses")
    p.add_argument("--skin-threshold", type=float, default=skinfield.DEFAULT_THRESHOLD, help="activation threshold, Pa")
    p.add_argument("--resolution", type=int, default=skinfield.DEFAULT_RESOLUTION, help="quadrature cells per side")
    p.add_argument("--metric-factor", action="store_true", help="weight the integrand by the surface area factor")
    p.add_argument("--ceiling", type=float, default=skinfield.CALIBRATION_CEILING, help="calibration ceiling, Pa")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate a synthetic sensor log and ground-truth sidecar")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
