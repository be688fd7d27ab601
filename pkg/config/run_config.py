"""
Run configuration loader.

A config file holds ``section.key = value`` lines; ``#`` starts a comment.
List values are comma separated, ``none`` clears an optional value.
Command-line overrides use the same ``section.key=value`` form and win over
the file.
"""

import os
import typing
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ValidationError

from config import DEFAULT_CONFIG_PATH, get_env
from util import logger
from zsl.errors import FormatError
from zsl.models.data_schema import RunConfig

Origin = Tuple[str, Optional[int]]


def resolve_config_path(explicit: Optional[str] = None) -> str:
    """``--config`` flag, else env ZSL_CONFIG, else the shipped defaults."""
    if explicit:
        return explicit
    return get_env("ZSL_CONFIG") or DEFAULT_CONFIG_PATH


def _field_kind(section: str, key: str) -> Optional[str]:
    section_field = RunConfig.model_fields.get(section)
    if section_field is None:
        return None
    model = section_field.annotation
    if not (isinstance(model, type) and issubclass(model, BaseModel)) or key not in model.model_fields:
        return None
    annotation = model.model_fields[key].annotation
    if typing.get_origin(annotation) in (list, List):
        return "list"
    if type(None) in typing.get_args(annotation):
        return "optional"
    return "scalar"


def _parse_assignment(text: str, origin: Origin) -> Tuple[str, str, object]:
    source, line = origin
    where = f"line {line}: " if line is not None else ""
    lhs, sep, rhs = text.partition("=")
    if not sep:
        raise FormatError(source, f"{where}expected 'section.key = value', got {text!r}")
    section, dot, key = lhs.strip().partition(".")
    if not dot or not section or not key:
        raise FormatError(source, f"{where}setting name must be 'section.key', got {lhs.strip()!r}")

    kind = _field_kind(section, key)
    if kind is None:
        raise FormatError(source, f"{where}unknown setting '{section}.{key}'")
    value = rhs.strip()
    if kind == "list":
        return section, key, [v.strip() for v in value.split(",") if v.strip()]
    if kind == "optional" and value.lower() in ("", "none"):
        return section, key, None
    return section, key, value


def _collect(assignments: Sequence[Tuple[str, Origin]]) -> Tuple[Dict[str, Dict[str, object]], Dict[Tuple[str, str], Origin]]:
    raw: Dict[str, Dict[str, object]] = {}
    origins: Dict[Tuple[str, str], Origin] = {}
    for text, origin in assignments:
        section, key, value = _parse_assignment(text, origin)
        raw.setdefault(section, {})[key] = value
        origins[(section, key)] = origin
    return raw, origins


def parse_run_config(text: str, source: str = "<config>", overrides: Sequence[str] = ()) -> RunConfig:
    assignments: List[Tuple[str, Origin]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            assignments.append((line, (source, lineno)))
    assignments.extend((o, ("--set", None)) for o in overrides)

    raw, origins = _collect(assignments)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        loc = tuple(str(p) for p in err["loc"])
        where_source, where_line = origins.get(loc[:2], (source, None))
        prefix = f"line {where_line}: " if where_line is not None else ""
        raise FormatError(where_source, f"{prefix}{'.'.join(loc) or 'config'}: {err['msg']}") from None


def load_run_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    path = resolve_config_path(path)
    logger.info(f"Loading run config from {path} with {len(overrides)} override(s)")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise FormatError(path, f"cannot read config: {e.strerror or e}") from e
    cfg = parse_run_config(text, source=os.fspath(path), overrides=overrides)
    logger.debug(f"Run config: {cfg.model_dump()}")
    return cfg


def _format_value(value: object) -> str:
    if value is None:
        return "none"
    if isinstance(value, list):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_run_config(cfg: RunConfig) -> str:
    """Config file text that parses back to ``cfg``."""
    lines = []
    for section, values in cfg.model_dump().items():
        lines.extend(f"{section}.{key} = {_format_value(value)}" for key, value in values.items())
    return "\n".join(lines) + "\n"
