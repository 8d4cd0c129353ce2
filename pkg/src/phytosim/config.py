"""Scenario and schedule documents: JSON in, validated dataclasses out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from importlib import resources
from typing import Any

import jsonschema

from . import physiology as phys
from .podsim import (
    ConfigError, Inversion, LightSchedule, OccupancyEvent, PodConfig,
    Scenario, make_scenario,
)


class DocumentError(ValueError):
    """Malformed or schema-invalid input document (as opposed to a bad configuration)."""


_LEAF_PRESETS = {
    "c3": phys.c3_leaf,
    "cam": phys.cam_leaf,
    "facultative": phys.facultative_leaf,
    "young": lambda **kw: phys.developmental_leaf(0.0, **kw),
    "mature": lambda **kw: phys.developmental_leaf(1.0, **kw),
}


def load_schema(name: str) -> dict:
    text = resources.files("phytosim").joinpath("schemas", name).read_text()
    return json.loads(text)


def parse_json(text: str, source: str = "<input>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _check(doc: Any, schema: dict, source: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.path])
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "(root)"
        raise DocumentError(f"{source}: {where}: {e.message}")


def validate(doc: Any, schema_name: str, source: str = "<input>") -> None:
    _check(doc, load_schema(schema_name), source)


def config_hash(doc: Any) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _pod(base: PodConfig, over: dict) -> PodConfig:
    over = dict(over)
    if "seal" in over and "leak_conductance" not in over:
        over["leak_conductance"] = None  # fall back to the new seal's default
    return replace(base, **over)


def schedule_from_dict(doc: dict, base: LightSchedule | None = None) -> LightSchedule:
    doc = dict(doc)
    if "inversion_events" in doc:
        doc["inversion_events"] = tuple(
            Inversion(e["time"], e["on_time"], e["off_time"]) for e in doc["inversion_events"])
    return replace(base or LightSchedule(), **doc)


def schedule_to_dict(s: LightSchedule) -> dict:
    return {
        "on_time": s.on_time, "off_time": s.off_time, "peak_lux": s.peak_lux,
        "mode": s.mode.value,
        "inversion_events": [
            {"time": e.time, "on_time": e.on_time, "off_time": e.off_time}
            for e in s.inversion_events
        ],
    }


def load_schedule(text: str, source: str = "<schedule>") -> LightSchedule:
    """A bare schedule object, validated against the scenario schema's definition."""
    doc = parse_json(text, source)
    schema = load_schema("scenario.schema.json")
    _check(doc, dict(schema["$defs"]["schedule"], **{"$defs": schema["$defs"]}), source)
    return schedule_from_dict(doc)


def scenario_from_dict(doc: dict, seed: int | None = None, source: str = "<input>") -> Scenario:
    """Build a Scenario from a schema-valid document.

    The preset and pathway give the starting point; each section present in
    the document replaces the matching fields.
    """
    validate(doc, "scenario.schema.json", source)
    doc = dict(doc)
    preset = doc.pop("preset", "env1")
    pathway = doc.pop("pathway", "c3")
    sc = make_scenario(preset, pathway)
    explicit_state = "initial_state" in doc

    fields: dict[str, Any] = {}
    scalar = {
        "duration": "duration", "dt": "dt", "seed": "rng_seed", "start_time": "start_time",
        "noise_co2_sd": "noise_co2_sd", "noise_rh_sd": "noise_rh_sd",
        "facultative": "facultative", "initial_pod_co2": "initial_pod_co2",
        "leaf_removed_at": "leaf_removed_at",
    }
    for key, attr in scalar.items():
        if key in doc:
            fields[attr] = doc[key]
    if "watering_events" in doc:
        fields["watering_events"] = tuple(doc["watering_events"])
    if seed is not None:
        fields["rng_seed"] = seed
    if "pod" in doc:
        fields["pod"] = _pod(sc.pod, doc["pod"])
        if "control_pod" not in doc:
            fields["control_pod"] = fields["pod"]
    if "control_pod" in doc:
        fields["control_pod"] = _pod(sc.control_pod, doc["control_pod"])
    if "leaf" in doc:
        leaf_doc = dict(doc["leaf"])
        name = leaf_doc.pop("preset", None)
        base = _LEAF_PRESETS[name]() if name else sc.leaf
        fields["leaf"] = replace(base, **leaf_doc)
    if explicit_state:
        fields["initial_state"] = replace(sc.initial_state, **doc["initial_state"])
    if "clock" in doc:
        fields["clock"] = replace(sc.clock, **doc["clock"])
    if "schedule" in doc:
        fields["schedule"] = schedule_from_dict(doc["schedule"], sc.schedule)
    if "environment" in doc:
        env_doc = dict(doc["environment"])
        if "occupancy_events" in env_doc:
            env_doc["occupancy_events"] = tuple(
                OccupancyEvent(e["start"], e["end"], e["persons"])
                for e in env_doc["occupancy_events"])
        fields["environment"] = replace(sc.environment, **env_doc)

    sc = replace(sc, **fields)
    if not explicit_state:
        phase = sc.schedule.external_phase(sc.start_time)
        sc = replace(sc, initial_state=replace(sc.initial_state, clock_phase=phase))
    return sc


def load_scenario(text: str, source: str = "<scenario>", seed: int | None = None) -> Scenario:
    doc = parse_json(text, source)
    try:
        return scenario_from_dict(doc, seed, source)
    except (phys.DomainError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None

