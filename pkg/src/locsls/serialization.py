"""JSON interchange for plants, weights, patterns, CLMs and controllers.

Matrices are ``{"rows": r, "cols": c, "data": [[...], ...]}`` (row major).
Patterns carry 0/1 integer data plus a ``role``. Partitions are ``{"n": [...], "m": [...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .column import ColumnSolution, LocalizedCLM
from .errors import ConfigurationError
from .netmodel import CostWeights, Pattern, Plant, SubsystemPartition
from .realization import DistributedController

SCHEMA_VERSION = 1


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float)) if np.ndim(M) else np.asarray([[float(M)]])
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": M.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    try:
        r, c = int(obj["rows"]), int(obj["cols"])
        M = np.array(obj["data"], dtype=float).reshape(r, c)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed matrix object: {exc}") from exc
    return M


def pattern_to_json(p: Pattern) -> dict:
    return {"role": p.role, "rows": p.N, "cols": p.N, "data": p.entries.astype(int).tolist()}


def pattern_from_json(obj) -> Pattern:
    E = np.array(obj["data"], dtype=int).reshape(int(obj["rows"]), int(obj["cols"]))
    return Pattern(E, obj.get("role", "generic"))


def partition_to_json(p: SubsystemPartition) -> dict:
    return {"n": list(p.n), "m": list(p.m)}


def partition_from_json(obj) -> SubsystemPartition:
    return SubsystemPartition(tuple(obj["n"]), tuple(obj["m"]))


def plant_to_json(plant: Plant) -> dict:
    return {"A": matrix_to_json(plant.A), "B": matrix_to_json(plant.B), "partition": partition_to_json(plant.partition)}


def plant_from_json(obj) -> Plant:
    try:
        part = partition_from_json(obj["partition"])
        return Plant(matrix_from_json(obj["A"]), matrix_from_json(obj["B"]), part)
    except KeyError as exc:
        raise ConfigurationError(f"plant object is missing {exc}") from exc


def weights_to_json(w: CostWeights) -> dict:
    return {"Q": matrix_to_json(w.Q), "R": matrix_to_json(w.R)}


def weights_from_json(obj) -> CostWeights:
    return CostWeights(matrix_from_json(obj["Q"]), matrix_from_json(obj["R"]))


def column_to_json(cs: ColumnSolution) -> dict:
    return {
        "j": cs.j,
        "support": list(cs.support),
        "boundary": list(cs.boundary),
        "input_support": list(cs.input_support),
        "Acl": matrix_to_json(cs.Acl),
        "Fu": matrix_to_json(cs.Fu if cs.Fu.size else np.zeros((0, len(cs.support)))),
        "init": list(map(float, cs.init)),
        "tightening_steps": cs.tightening_steps,
    }


def clm_to_json(clm: LocalizedCLM) -> dict:
    """Per column: ``Acl``, ``Fu``, ``init`` and index maps.

    Spectral elements are ``Phi_x[k](support, j) = Acl^k init`` and
    ``Phi_u[k](input_support, j) = Fu Acl^k init``.
    """
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "localized_clm",
        "n_states": clm.plant.Nx,
        "n_inputs": clm.plant.Nu,
        "plant": plant_to_json(clm.plant),
        "localization": pattern_to_json(clm.loc),
        "communication": pattern_to_json(clm.comm),
        "extended": pattern_to_json(clm.ext),
        "columns": [column_to_json(cs) for cs in clm.columns],
    }


def clm_columns_from_json(obj) -> list[ColumnSolution]:
    """Rebuild column generators (without Riccati data) from an exported CLM."""
    cols = []
    for c in obj["columns"]:
        Acl = matrix_from_json(c["Acl"])
        n = Acl.shape[0]
        cols.append(
            ColumnSolution(
                j=int(c["j"]),
                Acl=Acl,
                Fu=matrix_from_json(c["Fu"]).reshape(len(c["input_support"]), n),
                init=np.array(c["init"], dtype=float),
                gain=np.zeros((len(c["input_support"]), n)),
                riccati=np.zeros((0, 0)),
                state_map=np.eye(n),
                support=tuple(c["support"]),
                boundary=tuple(c["boundary"]),
                input_support=tuple(c["input_support"]),
                n_states=int(obj["n_states"]),
                n_inputs=int(obj["n_inputs"]),
                tightening_steps=int(c.get("tightening_steps", 0)),
            )
        )
    return cols


def controller_to_json(dc: DistributedController) -> dict:
    subs = []
    for s in dc.subs:
        subs.append(
            {
                "ell": s.ell,
                "A_K": matrix_to_json(s.A_K),
                "B_K": list(map(float, s.B_K)),
                "C_K": matrix_to_json(s.C_K if s.C_K.size else np.zeros((0, s.A_K.shape[0]))),
                "D_K": list(map(float, s.D_K)),
                "support": list(s.support),
                "input_embed": list(s.input_embed),
                "neighbor_reads": [{"column": i, "position": p} for i, p in s.neighbor_reads],
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "distributed_controller",
        "partition": partition_to_json(dc.partition),
        "communication": pattern_to_json(dc.comm),
        "subcontrollers": subs,
    }


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read JSON from {path}: {exc}") from exc
