"""
Result files: long-format CSV of paths, the little-endian binary dump, results.csv and manifest.json
"""
import csv
import json
import logging

import numpy as np

from graphs.grid import Grid


logger = logging.getLogger("IO")

MAGIC = b"MDPF"
VERSION = 1
ROLES = {"field-path": 0, "measure-density": 1, "control": 2}
HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("role", "<u4"), ("nx", "<u4"), ("nt", "<u4"),
                   ("cols", "<u4"), ("L", "<f8"), ("T", "<f8")])
RESULT_COLUMNS = ["name", "pass", "observed", "target", "tol", "se", "runtime_s"]
ENSEMBLE_COLUMNS = ["probe_t", "probe_y", "mean", "var", "se", "n"]


def _frames(path):
    if hasattr(path, "densities"):
        return path.densities, path.grid.nodes[:-1], "measure-density"
    return path.frames, path.grid.nodes, "field-path"


def write_field_csv(file_name, path):
    """Rows (t, y, value) of a FieldPath or SignedMeasurePath; measure cells sit at their left node."""
    frames, ys, _ = _frames(path)
    with open(file_name, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(["t", "y", "value"])
        for t, frame in zip(path.grid.times, frames):
            writer.writerows((repr(float(t)), repr(float(y)), repr(float(v))) for y, v in zip(ys, frame))


def write_binary(file_name, data, grid, role):
    if role not in ROLES:
        raise ValueError("role must be one of {}, got {}".format(tuple(ROLES), role))
    data = np.ascontiguousarray(data, dtype="<f8")
    if data.ndim != 2:
        raise ValueError("binary dumps hold 2-d arrays, got shape {}".format(data.shape))
    header = np.array([(MAGIC, VERSION, ROLES[role], grid.nx, grid.nt, data.shape[1], grid.L, grid.T)], dtype=HEADER)
    with open(file_name, "wb") as out:
        out.write(header.tobytes())
        out.write(data.tobytes())


def read_binary(file_name):
    """:return: (role, grid, data)"""
    with open(file_name, "rb") as dump:
        raw = dump.read()
    if len(raw) < HEADER.itemsize:
        raise ValueError("{} is too short for a dump header".format(file_name))
    header = np.frombuffer(raw[:HEADER.itemsize], dtype=HEADER)[0]
    if header["magic"] != MAGIC:
        raise ValueError("{} is not an MDPF dump".format(file_name))
    if header["version"] != VERSION:
        raise ValueError("unsupported dump version {}".format(header["version"]))
    role = {code: name for name, code in ROLES.items()}[int(header["role"])]
    data = np.frombuffer(raw[HEADER.itemsize:], dtype="<f8").reshape(-1, int(header["cols"])).copy()
    grid = Grid(L=float(header["L"]), nx=int(header["nx"]), T=float(header["T"]), nt=int(header["nt"]))
    return role, grid, data


def write_rows(file_name, columns, rows):
    with open(file_name, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(columns)
        writer.writerows(rows)


def write_results_csv(file_name, results):
    write_rows(file_name, RESULT_COLUMNS, [result.row() for result in results])


def write_manifest(file_name, manifest):
    with open(file_name, "w") as out:
        json.dump(manifest, out, indent=2, sort_keys=True, default=str)
    logger.info("manifest written to %s", file_name)
