"""Command line: robustness computations, result verification and witness re-certification.

Exit codes: 0 success, 1 a check failed, 2 invalid input, 3 solver failure.
Nothing is read from the environment; every setting comes from flags or --config.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import QresError, ValidationError
from .io import (canonical, decode_instance, dump, encode_decomposition, encode_witness, read_json)
from .models import (Behaviour, DistributedPovm, GeneralisedMeasurementSet, Povm, StandardMeasurementSet,
                     distributed_povm)
from .operators import HermitianOperator, choi_teleportation, partial_trace
from .robustness import (check_assemblage_witness, check_behaviour_witness, check_buscemi_witness,
                         check_incompat_witness, check_teleport_witness, rob_behaviour, rob_buscemi,
                         rob_incompat_generalised, rob_incompat_standard, rob_teleport_choi)
from .theorems import (embedded_pairs, regression_corpus, transpose_assemblage, verify_result2, verify_sets)

SCHEMA = "qres-report/1"
MATCH_TOL = 1e-9


class Inputs:
    """Loads instance files and remembers their content hashes for the report."""

    def __init__(self):
        self.hashes = []

    def load(self, path, *types):
        data, h = read_json(path)
        obj = decode_instance(data)
        self.hashes.append({"path": str(path), "sha1": h})
        if types and not isinstance(obj, types):
            names = " or ".join(t.__name__ for t in types)
            raise ValidationError(f"{path}: expected a {names} file, got {type(obj).__name__}")
        return obj, data


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--lambda-card", type=int, dest="lambda_card")
    p.add_argument("--tol-eq", type=float, dest="tol_eq", help="tolerance for value equalities")
    p.add_argument("--out", metavar="PATH", help="write the JSON report here (artifacts go next to it)")
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qres", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qres {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    rob = sub.add_parser("robustness", help="compute a robustness quantifier")
    _common(rob)
    rob.add_argument("kind", choices=["incompat", "teleport", "buscemi", "behaviour"])
    rob.add_argument("instance", nargs="*", help="instance file(s); teleport takes POVM then STATE")
    rob.add_argument("--mode", choices=["exact", "ppt_lower", "seesaw_upper"])
    rob.add_argument("--povm", help="Alice's POVM on V (x) A")
    rob.add_argument("--state", help="shared state on A (x) B")
    rob.add_argument("--bob", help="Bob's POVM on B (x) W (buscemi)")
    rob.add_argument("--unconstrained-pmf", action="store_true",
                     help="behaviour: allow arbitrary local response distributions")

    ver = sub.add_parser("verify", help="check one of the robustness equalities")
    _common(ver)
    ver.add_argument("result", type=int, choices=[1, 2, 3, 4])
    ver.add_argument("instance", nargs="*", help="measurement-set file, or POVM and STATE for result 2")
    ver.add_argument("--corpus", action="store_true", help="run the seeded regression corpus")
    ver.add_argument("--bob", help="result 2: Bob's POVM for the decomposition map (needs d^2 outcomes)")

    chk = sub.add_parser("check-witness", help="re-certify a stored witness against an instance")
    _common(chk)
    chk.add_argument("witness")
    chk.add_argument("instance")
    chk.add_argument("--state", help="shared state, for teleportation witnesses with a POVM instance")
    return ap


def run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    over = {k: getattr(args, k) for k in ("seed", "restarts", "lambda_card", "tol_eq", "out", "jobs")
            if getattr(args, k, None) is not None}
    return dataclasses.replace(cfg, **over).validate()


def _clean(v):
    """JSON-safe diagnostics with timing fields dropped so reports are reproducible."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items() if "time" not in str(k) and "elapsed" not in str(k)}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist()) if v.size <= 64 else f"<array shape {list(v.shape)}>"
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if v is None or isinstance(v, str):
        return v
    return repr(v)


def _side_path(out, suffix):
    p = Path(out)
    return p.with_name(f"{p.stem}.{suffix}.json")


def _emit(report, cfg, text=None):
    body = canonical(_clean(report)) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(body)
        print(text if text is not None else f"report written to {cfg.out}")
    else:
        sys.stdout.write(body)


def _header(command, cfg, inputs):
    return {"schema": SCHEMA, "command": command, "inputs": inputs.hashes, "config": cfg.to_dict()}


# ---------------------------------------------------------------------------
# robustness

def _state_and_povm(args, inputs, positional):
    povm_path = args.povm or (positional[0] if positional else None)
    state_path = args.state or (positional[1] if len(positional) > 1 else None)
    if not povm_path or not state_path:
        raise ValidationError("teleportation needs a POVM file and a state file")
    Ma, _ = inputs.load(povm_path, Povm)
    rho, _ = inputs.load(state_path, HermitianOperator)
    return Ma, rho


def cmd_robustness(args, cfg) -> int:
    inputs = Inputs()
    settings = cfg.robustness()
    kind = args.kind
    if kind == "incompat":
        if len(args.instance) != 1:
            raise ValidationError("incompat takes one measurement-set or generalised-set file")
        obj, _ = inputs.load(args.instance[0], StandardMeasurementSet, GeneralisedMeasurementSet)
        if isinstance(obj, StandardMeasurementSet):
            res = rob_incompat_standard(obj, settings)
        else:
            res = rob_incompat_generalised(obj, args.mode or "ppt_lower", settings)
    elif kind == "teleport":
        Ma, rho = _state_and_povm(args, inputs, args.instance)
        res = rob_teleport_choi(Ma, rho, args.mode or "ppt_lower", settings)
    elif kind == "buscemi":
        if args.instance:
            dp, _ = inputs.load(args.instance[0], DistributedPovm)
        else:
            Ma, rho = _state_and_povm(args, inputs, [])
            if not args.bob:
                raise ValidationError("buscemi needs a distributed-POVM file or --povm, --bob and --state")
            Mb, _ = inputs.load(args.bob, Povm)
            dp = distributed_povm(Ma, Mb, rho)
        if args.mode == "exact":
            raise ValidationError("buscemi has no exact mode; use ppt_lower or seesaw_upper")
        res = rob_buscemi(dp, args.mode or "ppt_lower", settings)
    else:
        if len(args.instance) != 1:
            raise ValidationError("behaviour takes one behaviour file")
        b, _ = inputs.load(args.instance[0], Behaviour)
        res = rob_behaviour(b, unconstrained_pmf=args.unconstrained_pmf, settings=settings)

    report = _header("robustness", cfg, inputs)
    report.update({"quantifier": kind, "value": res.value, "bound": res.bound, "program": res.program,
                   "gap": res.diagnostics.get("gap"), "diagnostics": res.diagnostics,
                   "witness_path": None, "decomposition_path": None})
    if res.witness is not None:
        report["witness"] = {"kind": res.witness.kind, "valid": res.witness.valid,
                             "certified_value": res.witness.certified_value}
    if cfg.out:
        if res.witness is not None:
            wp = _side_path(cfg.out, "witness")
            dump(encode_witness(res.witness), wp)
            report["witness_path"] = str(wp)
        if res.decomposition is not None:
            dpth = _side_path(cfg.out, "decomposition")
            dump(encode_decomposition(res.decomposition), dpth)
            report["decomposition_path"] = str(dpth)
    _emit(report, cfg, f"{kind}: {res.value:.12g} ({res.bound})")
    return 0


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args, cfg) -> int:
    inputs = Inputs()
    settings = cfg.robustness()
    rid = args.result
    if args.corpus and args.instance:
        raise ValidationError("give either --corpus or instance files, not both")
    if args.corpus:
        sets = regression_corpus()
        work = embedded_pairs(sets) if rid == 2 else sets
    elif rid == 2 and len(args.instance) == 2:
        Ma, _ = inputs.load(args.instance[0], Povm)
        rho, _ = inputs.load(args.instance[1], HermitianOperator)
        work = [(Path(args.instance[0]).stem, (Ma, rho))]
    elif len(args.instance) == 1:
        m, _ = inputs.load(args.instance[0], StandardMeasurementSet)
        work = [(Path(args.instance[0]).stem, m)]
        if rid == 2:
            work = embedded_pairs(work)
    else:
        raise ValidationError("verify needs --corpus, a measurement-set file, or (result 2) a POVM and a state")

    if args.bob is not None:
        if rid != 2 or len(work) != 1:
            raise ValidationError("--bob applies to result 2 on a single instance")
        Mb, _ = inputs.load(args.bob, Povm)
        label, (Ma, rho) = work[0]
        rep = verify_result2(Ma, rho, Mb, settings, label, cfg.tol_eq)
    else:
        rep = verify_sets(rid, work, settings, cfg.jobs, cfg.tol_eq)

    report = _header("verify", cfg, inputs)
    report.update(rep.to_dict())
    artifacts = []
    if cfg.out:
        for inst in rep.instances:
            art = inst.get("artifacts")
            if not art:
                continue
            wp = _side_path(cfg.out, f"{inst['instance']}.witness")
            ip = _side_path(cfg.out, f"{inst['instance']}.instance")
            dump(encode_witness(art["witness"]), wp)
            dump(art["distributed_povm"], ip)
            artifacts.append({"instance": inst["instance"], "witness_path": str(wp), "instance_path": str(ip)})
    report["artifacts"] = artifacts
    _emit(report, cfg, rep.to_text())
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------
# check-witness

def cmd_check_witness(args, cfg) -> int:
    inputs = Inputs()
    data, h = read_json(args.witness)
    inputs.hashes.append({"path": str(args.witness), "sha1": h})
    w = decode_instance(dict(data, type="witness"))
    stored = w.certified_value
    w.evidence = {}  # never reuse stored evidence
    samples, seed = cfg.samples, cfg.seed
    if w.kind == "incompatibility":
        m, _ = inputs.load(args.instance, StandardMeasurementSet)
        w = check_incompat_witness(w, m.arrays())
    elif w.kind == "assemblage":
        m, _ = inputs.load(args.instance, StandardMeasurementSet)
        w = check_assemblage_witness(w, transpose_assemblage(m))
    elif w.kind == "teleportation":
        if not args.state:
            raise ValidationError("teleportation witnesses need --state alongside the POVM instance")
        Ma, _ = inputs.load(args.instance, Povm)
        rho, _ = inputs.load(args.state, HermitianOperator)
        J = np.array([j.matrix for j in choi_teleportation(Ma, rho)])
        w = check_teleport_witness(w, J, partial_trace(rho.matrix, [0], rho.dims), samples, seed)
    elif w.kind == "buscemi":
        dp, _ = inputs.load(args.instance, DistributedPovm)
        w = check_buscemi_witness(w, dp.arrays(), samples, seed)
    elif w.kind == "behaviour":
        b, _ = inputs.load(args.instance, Behaviour)
        w = check_behaviour_witness(w, b.table)
    else:
        raise ValidationError(f"unknown witness kind {w.kind!r}")

    match = None if not np.isfinite(stored) else bool(abs(stored - w.certified_value) <= MATCH_TOL)
    report = _header("check-witness", cfg, inputs)
    report.update({"kind": w.kind, "valid": w.valid, "certified_value": w.certified_value,
                   "stored_value": stored if np.isfinite(stored) else None, "matches_stored": match,
                   "evidence": w.evidence})
    ok = bool(w.valid) and match is not False
    _emit(report, cfg, f"witness {'valid' if w.valid else 'INVALID'}: value {w.certified_value:.12g}"
          + ("" if match is None else f", stored value {'matches' if match else 'DIFFERS'}"))
    return 0 if ok else 1


COMMANDS = {"robustness": cmd_robustness, "verify": cmd_verify, "check-witness": cmd_check_witness}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = run_config(args)
        return COMMANDS[args.command](args, cfg)
    except QresError as exc:
        print(f"qres: {type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(_clean(diag), sort_keys=True), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
