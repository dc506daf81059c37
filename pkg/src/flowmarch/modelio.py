"""Versioned binary container for trained models.

Layout: an 8-byte magic, a little-endian uint32 format version, a
little-endian uint64 header length, a UTF-8 JSON header, the concatenated
float64 little-endian array payload, and a trailing SHA-256 digest of all
preceding bytes.  The header stores every scalar needed to rebuild the
model (arch, Rm, seed, activation, generator name, delta_m, domain bounds,
representation kind) plus the shape index of the payload arrays, so a
round trip is bitwise exact.

Systems are not pickled: catalog-built systems are re-materialized from
their recorded key and parameters; models of user-defined systems load
only when the caller passes the system in.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Optional

import numpy as np

from .decomp import DecomposedModel, Partition, Subdomain
from .errors import ModelFormatError
from .odecore import IvpSystem, TrainingDomain
from .psirep import PsiModel, PsiRepresentation
from .randnet import GENERATOR_NAME, Normalizer, SubnetParams

MAGIC = b"PSIMODEL"
FORMAT_VERSION = 1
_DIGEST_BYTES = 32


def _domain_dict(domain: TrainingDomain) -> dict:
    return {
        "y0_box": domain.y0_box.tolist(),
        "t0_interval": None if domain.t0_interval is None else list(domain.t0_interval),
        "h_max": domain.h_max,
        "xi_sign": domain.xi_sign,
    }


def _domain_from(d: dict) -> TrainingDomain:
    return TrainingDomain(
        y0_box=np.array(d["y0_box"], dtype=float),
        t0_interval=None if d["t0_interval"] is None else tuple(d["t0_interval"]),
        h_max=d["h_max"],
        xi_sign=d["xi_sign"],
    )


def _system_dict(system: IvpSystem) -> dict:
    return {
        "name": system.name,
        "dim": system.dim,
        "autonomous": system.autonomous,
        "catalog_key": system.catalog_key,
        "catalog_params": system.catalog_params,
    }


def _model_record(model: PsiModel) -> tuple:
    """(header record, list of arrays in payload order)."""
    sn = model.subnet
    arrays = []
    index = []
    for l, (W, b) in enumerate(zip(sn.hidden_weights, sn.hidden_biases)):
        arrays.append(W)
        index.append({"name": f"hidden_weights_{l}", "shape": list(W.shape)})
        arrays.append(b)
        index.append({"name": f"hidden_biases_{l}", "shape": list(b.shape)})
    arrays.append(sn.beta)
    index.append({"name": "beta", "shape": list(sn.beta.shape)})
    record = {
        "kind": model.representation.kind,
        "arch": list(sn.arch),
        "Rm": sn.Rm,
        "seed": sn.seed,
        "activation": sn.activation,
        "generator": GENERATOR_NAME,
        "delta_m": model.normalizer.delta_m,
        "trained": model.trained,
        "domain": _domain_dict(model.domain),
        "system": _system_dict(model.system),
        "arrays": index,
    }
    return record, arrays


def _model_from(record: dict, arrays: list, system: Optional[IvpSystem]) -> PsiModel:
    sysd = record["system"]
    if system is None:
        if sysd["catalog_key"] is None:
            raise ValueError(
                f"model of non-catalog system {sysd['name']!r}: pass system= to load"
            )
        from .catalog import get_system

        system = get_system(sysd["catalog_key"], **sysd["catalog_params"])
    if system.dim != sysd["dim"] or system.autonomous != sysd["autonomous"]:
        raise ModelFormatError(
            f"system {system.name!r} does not match the saved model "
            f"(dim {sysd['dim']}, autonomous={sysd['autonomous']})"
        )
    if record["generator"] != GENERATOR_NAME:
        raise ModelFormatError(
            f"unsupported generator {record['generator']!r} (expected {GENERATOR_NAME!r})"
        )

    arch = tuple(int(m) for m in record["arch"])
    n_hidden = len(arch) - 2
    want = 2 * n_hidden + 1
    if len(arrays) != want:
        raise ModelFormatError(f"expected {want} arrays for arch {arch}, got {len(arrays)}")
    weights = [arrays[2 * l] for l in range(n_hidden)]
    biases = [arrays[2 * l + 1] for l in range(n_hidden)]
    subnet = SubnetParams(
        arch=arch,
        Rm=record["Rm"],
        seed=record["seed"],
        activation=record["activation"],
        hidden_weights=weights,
        hidden_biases=biases,
        beta=arrays[-1],
    )
    domain = _domain_from(record["domain"])
    normalizer = Normalizer(
        y0_box=domain.y0_box,
        t0_interval=None if system.autonomous else domain.t0_interval,
        h_max=domain.h_max,
        delta_m=record["delta_m"],
    )
    return PsiModel(
        representation=PsiRepresentation.from_kind(record["kind"]),
        subnet=subnet,
        normalizer=normalizer,
        system=system,
        domain=domain,
        trained=bool(record["trained"]),
    )


def _subdomain_dict(sub: Subdomain) -> dict:
    return {
        "id": sub.id,
        "box": sub.box.tolist(),
        "t0_interval": None if sub.t0_interval is None else list(sub.t0_interval),
        "h_max_local": sub.h_max_local,
        "delta_m_local": sub.delta_m_local,
        "r": list(sub.r),
        "xi_sign": sub.xi_sign,
    }


def _subdomain_from(d: dict) -> Subdomain:
    return Subdomain(
        id=int(d["id"]),
        box=np.array(d["box"], dtype=float),
        t0_interval=None if d["t0_interval"] is None else tuple(d["t0_interval"]),
        h_max_local=d["h_max_local"],
        delta_m_local=d["delta_m_local"],
        r=tuple(d["r"]),
        xi_sign=d["xi_sign"],
    )


def save_model(model, path) -> None:
    """Write a PsiModel or DecomposedModel to the container format."""
    if isinstance(model, DecomposedModel):
        records, arrays = [], []
        for local in model.models:
            rec, arrs = _model_record(local)
            records.append(rec)
            arrays.extend(arrs)
        header = {
            "container": "decomposed",
            "partition": {
                "y_boundaries": [b.tolist() for b in model.partition.y_boundaries],
                "t_boundaries": None
                if model.partition.t_boundaries is None
                else model.partition.t_boundaries.tolist(),
            },
            "subdomains": [_subdomain_dict(s) for s in model.subdomains],
            "models": records,
        }
    elif isinstance(model, PsiModel):
        record, arrays = _model_record(model)
        header = {"container": "single", "model": record}
    else:
        raise TypeError(f"cannot save object of type {type(model).__name__}")

    head_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    body = (
        MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + struct.pack("<Q", len(head_bytes))
        + head_bytes
        + payload
    )
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def _read_header(blob: bytes, path) -> tuple:
    """(header dict, payload bytes) after all integrity checks."""
    if len(blob) < len(MAGIC) + 12 + _DIGEST_BYTES:
        raise ModelFormatError(f"{path}: file too short to be a model container")
    if blob[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic (not a model file)")
    version = struct.unpack_from("<I", blob, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    head_len = struct.unpack_from("<Q", blob, len(MAGIC) + 4)[0]
    head_start = len(MAGIC) + 12
    payload_start = head_start + head_len
    if payload_start + _DIGEST_BYTES > len(blob):
        raise ModelFormatError(f"{path}: truncated header")
    body, digest = blob[:-_DIGEST_BYTES], blob[-_DIGEST_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError(f"{path}: checksum mismatch (corrupt or truncated file)")
    try:
        header = json.loads(blob[head_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: malformed header: {exc}") from exc
    return header, blob[payload_start : len(blob) - _DIGEST_BYTES]


def _take_arrays(payload: bytes, index: list, cursor: int, path) -> tuple:
    """Read the arrays named by `index` starting at element offset cursor."""
    out = []
    for meta in index:
        shape = tuple(int(s) for s in meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = cursor + count
        if end * 8 > len(payload):
            raise ModelFormatError(f"{path}: payload shorter than the array index")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=cursor * 8)
        out.append(arr.astype(float).reshape(shape))
        cursor = end
    return out, cursor


def load_model(path, system: Optional[IvpSystem] = None):
    """Load a PsiModel or DecomposedModel saved by save_model."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _read_header(blob, path)

    if header.get("container") == "single":
        record = header["model"]
        arrays, cursor = _take_arrays(payload, record["arrays"], 0, path)
        if cursor * 8 != len(payload):
            raise ModelFormatError(f"{path}: trailing bytes after the array payload")
        return _model_from(record, arrays, system)

    if header.get("container") == "decomposed":
        part = Partition(
            y_boundaries=tuple(
                np.array(b, dtype=float) for b in header["partition"]["y_boundaries"]
            ),
            t_boundaries=None
            if header["partition"]["t_boundaries"] is None
            else np.array(header["partition"]["t_boundaries"], dtype=float),
        )
        subs = [_subdomain_from(d) for d in header["subdomains"]]
        cursor = 0
        models = []
        for record in header["models"]:
            arrays, cursor = _take_arrays(payload, record["arrays"], cursor, path)
            models.append(_model_from(record, arrays, system))
        if cursor * 8 != len(payload):
            raise ModelFormatError(f"{path}: trailing bytes after the array payload")
        return DecomposedModel(part, subs, models)

    raise ModelFormatError(f"{path}: unknown container {header.get('container')!r}")


def model_manifest(path) -> dict:
    """The JSON header plus file-level facts, for inspection tools.

    Reads and verifies the whole file but materializes no arrays.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _read_header(blob, path)
    return {
        "path": str(path),
        "file_bytes": len(blob),
        "payload_doubles": len(payload) // 8,
        "format_version": FORMAT_VERSION,
        **header,
    }
