"""Event ontology: event types, their templates, role schemas and keywords.

The ontology file is YAML with three top-level keys::

    universal_type: ANY          # optional, default "ANY"
    entity_types:
      - name: PER
        phrase: person
      - name: ANY
        phrase: entity
    event_types:
      - name: Transaction.ExchangeBuySell
        template: <arg1> bought, sold or traded <arg3> to <arg2> in exchange
          for <arg4> for the benefit of <arg5> at <arg6> place
        keywords: [buy, sell, purchase]
        roles:
          - name: Giver
            types: [PER, ORG]
          - name: Recipient
            types: [PER, ORG]
          ...

The i-th role fills the ``<argi>`` marker of the template.  A role with no
``types`` entry (or listing the universal type) accepts any entity type.
Ontology objects are immutable after load and safe to share across threads.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass

import yaml

SLOT_RE = re.compile(r"<arg(\d+)>")
DEFAULT_UNIVERSAL_TYPE = "ANY"


class OntologyError(Exception):
    """Base class for ontology loading problems."""


class OntologyParseError(OntologyError):
    """The file is not syntactically valid."""


class OntologyValidationError(OntologyError):
    """The file parsed but violates a structural constraint."""


class OntologyLookupError(OntologyError, KeyError):
    """An event type or role name is not registered."""


@dataclass(frozen=True)
class EntityTypeDef:
    name: str
    # Noun phrase inserted into clarification statements, e.g.
    # "person/organization/country".
    statement_phrase: str


@dataclass(frozen=True)
class RoleDef:
    name: str
    slot_index: int  # 1-based, maps to <arg{slot_index}> in the template
    allowed_entity_types: frozenset[str]


@dataclass(frozen=True)
class EventTypeDef:
    name: str
    template: str
    roles: tuple[RoleDef, ...]
    keywords: tuple[str, ...] = ()

    def role(self, role_name: str) -> RoleDef:
        for r in self.roles:
            if r.name == role_name:
                return r
        raise OntologyLookupError(
            f"event type {self.name!r} has no role {role_name!r}; "
            f"roles are {[r.name for r in self.roles]}"
        )

    def role_names(self) -> list[str]:
        return [r.name for r in self.roles]


@dataclass(frozen=True)
class EventOntology:
    event_types: dict[str, EventTypeDef]
    entity_types: dict[str, EntityTypeDef]
    universal_type: str = DEFAULT_UNIVERSAL_TYPE

    def __len__(self) -> int:
        return len(self.event_types)

    def __contains__(self, event_type: str) -> bool:
        return event_type in self.event_types


def _slot_indices(template: str) -> list[int]:
    return [int(m.group(1)) for m in SLOT_RE.finditer(template)]


def _validate_event_type(et: EventTypeDef, entity_types: dict[str, EntityTypeDef],
                         universal: str) -> None:
    slots = _slot_indices(et.template)
    distinct = set(slots)
    if len(distinct) != len(slots):
        raise OntologyValidationError(
            f"event type {et.name!r}: template repeats a slot marker"
        )
    if len(distinct) != len(et.roles):
        raise OntologyValidationError(
            f"event type {et.name!r}: template has {len(distinct)} slot markers "
            f"but {len(et.roles)} roles are declared"
        )
    if distinct and distinct != set(range(1, len(distinct) + 1)):
        raise OntologyValidationError(
            f"event type {et.name!r}: slot markers {sorted(distinct)} are not "
            f"numbered contiguously from 1"
        )
    names = [r.name for r in et.roles]
    if len(set(names)) != len(names):
        raise OntologyValidationError(
            f"event type {et.name!r}: duplicate role names in {names}"
        )
    for r in et.roles:
        if not r.allowed_entity_types:
            raise OntologyValidationError(
                f"event type {et.name!r}: role {r.name!r} allows no entity types"
            )
        for t in r.allowed_entity_types:
            if t not in entity_types and t != universal:
                raise OntologyValidationError(
                    f"event type {et.name!r}: role {r.name!r} references "
                    f"undeclared entity type {t!r}"
                )


def _build(data: dict, source: str) -> EventOntology:
    if not isinstance(data, dict):
        raise OntologyParseError(f"{source}: top level must be a mapping")
    universal = data.get("universal_type", DEFAULT_UNIVERSAL_TYPE)

    entity_types: dict[str, EntityTypeDef] = {}
    for rec in data.get("entity_types", []) or []:
        name = str(rec["name"])
        phrase = str(rec.get("phrase", "") or rec.get("statement_phrase", ""))
        if not phrase:
            raise OntologyValidationError(
                f"entity type {name!r}: statement phrase must be non-empty"
            )
        entity_types[name] = EntityTypeDef(name=name, statement_phrase=phrase)
    if universal not in entity_types:
        entity_types[universal] = EntityTypeDef(name=universal, statement_phrase="entity")

    event_types: dict[str, EventTypeDef] = {}
    for rec in data.get("event_types", []) or []:
        try:
            name = str(rec["name"])
            template = str(rec["template"])
        except (KeyError, TypeError) as exc:
            raise OntologyParseError(
                f"{source}: event type record missing field: {exc}") from exc
        roles = []
        for i, role_rec in enumerate(rec.get("roles", []) or [], start=1):
            types = role_rec.get("types") or [universal]
            roles.append(RoleDef(
                name=str(role_rec["name"]),
                slot_index=i,
                allowed_entity_types=frozenset(str(t) for t in types),
            ))
        keywords = tuple(str(k).strip() for k in rec.get("keywords", []) or [])
        et = EventTypeDef(name=name, template=template, roles=tuple(roles),
                          keywords=keywords)
        _validate_event_type(et, entity_types, universal)
        if name in event_types:
            raise OntologyValidationError(f"duplicate event type {name!r}")
        event_types[name] = et

    return EventOntology(event_types=event_types, entity_types=entity_types,
                         universal_type=universal)


def parse_ontology(text: str, source: str = "<string>") -> EventOntology:
    """Parse ontology YAML from a string.  See :func:`load_ontology`."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "?"
        raise OntologyParseError(f"{source}: {exc.problem} at {where}") from exc
    except yaml.YAMLError as exc:
        raise OntologyParseError(f"{source}: {exc}") from exc
    if data is None:
        data = {}
    return _build(data, source)


def load_ontology(path) -> EventOntology:
    """Load and validate an ontology file.

    Raises :class:`OntologyParseError` (with line context) on malformed
    files and :class:`OntologyValidationError`, naming the offending event
    type, when template slots and roles disagree.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return parse_ontology(text, source=str(path))


def serialize_ontology(ontology: EventOntology) -> str:
    """Render an ontology back to YAML; inverse of :func:`parse_ontology`."""
    data = {
        "universal_type": ontology.universal_type,
        "entity_types": [
            {"name": t.name, "phrase": t.statement_phrase}
            for t in ontology.entity_types.values()
        ],
        "event_types": [
            {
                "name": et.name,
                "template": et.template,
                "keywords": list(et.keywords),
                "roles": [
                    {"name": r.name, "types": sorted(r.allowed_entity_types)}
                    for r in et.roles
                ],
            }
            for et in ontology.event_types.values()
        ],
    }
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)


def template_for(ontology: EventOntology, event_type: str) -> EventTypeDef:
    """Exact, case-sensitive lookup of an event type definition."""
    try:
        return ontology.event_types[event_type]
    except KeyError:
        near = difflib.get_close_matches(event_type, ontology.event_types, n=3)
        raise OntologyLookupError(
            f"unknown event type {event_type!r}"
            + (f"; nearest: {near}" if near else "")
        ) from None


def valid_entity_types(ontology: EventOntology, event_type: str,
                       role_name: str) -> set[EntityTypeDef]:
    """The set of entity types a role accepts (never empty).

    Unconstrained roles yield the singleton set containing the universal
    type, which matches every entity type.
    """
    role = template_for(ontology, event_type).role(role_name)
    return {ontology.entity_types[t] for t in role.allowed_entity_types}


def is_unconstrained(ontology: EventOntology, role: RoleDef) -> bool:
    """True when the role accepts any entity (lists the universal type)."""
    return ontology.universal_type in role.allowed_entity_types
