"""Deterministic synthetic ontology and corpus for tests and demos.

The generated documents have the same structure as real document-level
event data: multi-sentence texts, entity mentions at NAME / NOMINAL /
PRONOUN levels with coreference clusters, triggers realized as inflected
keywords, arguments that live outside the trigger sentence, roles with
multiple fillers and roles left unfilled.
"""

from __future__ import annotations

import numpy as np

from .corpus import (NAME, NOMINAL, PRONOUN, CorefCluster, Document,
                     EntityMention, EventMention, informative_mention,
                     validate_document)
from .ontology import EventOntology, parse_ontology

TOY_ONTOLOGY_YAML = """
universal_type: ANY
entity_types:
  - {name: PER, phrase: person}
  - {name: ORG, phrase: organization}
  - {name: GPE, phrase: person/organization/country}
  - {name: LOC, phrase: place}
  - {name: FAC, phrase: facility}
  - {name: WEA, phrase: weapon}
  - {name: VEH, phrase: vehicle}
  - {name: MON, phrase: amount of money}
  - {name: ANY, phrase: entity}
event_types:
  - name: Transaction.ExchangeBuySell
    template: <arg1> sold or traded <arg3> to <arg2> in exchange for <arg4> at <arg5> place
    keywords: [buy, sell, purchase]
    roles:
      - {name: Giver, types: [PER, ORG, GPE]}
      - {name: Recipient, types: [PER, ORG, GPE]}
      - {name: AcquiredEntity, types: [ANY]}
      - {name: PaymentBarter, types: [MON]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Conflict.Attack.DetonateExplode
    template: <arg1> detonated <arg2> to attack <arg3> at <arg4> place
    keywords: [detonate, explode, bomb]
    roles:
      - {name: Attacker, types: [PER, ORG, GPE]}
      - {name: ExplosiveDevice, types: [WEA]}
      - {name: Target, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Life.Die
    template: <arg1> killed <arg2> with <arg3> at <arg4> place
    keywords: [kill, die, perish]
    roles:
      - {name: Killer, types: [PER, ORG, GPE]}
      - {name: Victim, types: [PER]}
      - {name: Instrument, types: [WEA]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Life.Injure
    template: <arg1> injured <arg2> with <arg3> at <arg4> place
    keywords: [injure, wound, hurt]
    roles:
      - {name: Injurer, types: [PER, ORG, GPE]}
      - {name: Victim, types: [PER]}
      - {name: Instrument, types: [WEA]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Contact.PublicStatement
    template: <arg1> communicated with <arg2> about <arg3> at <arg4> place
    keywords: [announce, state, declare]
    roles:
      - {name: Communicator, types: [PER, ORG, GPE]}
      - {name: Recipient, types: [PER, ORG, GPE]}
      - {name: Topic, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Justice.ArrestJailDetain
    template: <arg1> arrested or jailed <arg2> for <arg3> crime at <arg4> place
    keywords: [arrest, detain, jail]
    roles:
      - {name: Jailer, types: [PER, ORG, GPE]}
      - {name: Detainee, types: [PER]}
      - {name: Crime, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Justice.ChargeIndict
    template: <arg1> charged or indicted <arg2> before <arg3> in <arg4> court for <arg5> crime
    keywords: [charge, indict, accuse]
    roles:
      - {name: Prosecutor, types: [PER, ORG, GPE]}
      - {name: Defendant, types: [PER, ORG, GPE]}
      - {name: JudgeCourt, types: [PER, ORG]}
      - {name: Place, types: [GPE, LOC, FAC]}
      - {name: Crime, types: [ANY]}
  - name: Personnel.StartPosition
    template: <arg1> started working at <arg2> in <arg3> position at <arg4> place
    keywords: [hire, employ, appoint]
    roles:
      - {name: Employee, types: [PER]}
      - {name: PlaceOfEmployment, types: [ORG]}
      - {name: Position, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Contact.Meet
    template: <arg1> met face-to-face with <arg2> about <arg3> at <arg4> place
    keywords: [meet, gather, assemble]
    roles:
      - {name: Participant, types: [PER, ORG, GPE]}
      - {name: OtherParticipant, types: [PER, ORG, GPE]}
      - {name: Topic, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Movement.Transportation
    template: <arg1> transported <arg2> in <arg3> from <arg4> place to <arg5> place
    keywords: [transport, move, carry]
    roles:
      - {name: Transporter, types: [PER, ORG, GPE]}
      - {name: PassengerArtifact, types: [ANY]}
      - {name: Vehicle, types: [VEH]}
      - {name: Origin, types: [GPE, LOC, FAC]}
      - {name: Destination, types: [GPE, LOC, FAC]}
  - name: Disaster.FireExplosion
    template: <arg1> caught fire or exploded at <arg2> place
    keywords: [burn, fire, blaze]
    roles:
      - {name: FireExplosionObject, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
  - name: Cognitive.IdentifyCategorize
    template: <arg1> identified <arg2> as <arg3> at <arg4> place
    keywords: [identify, categorize, recognize]
    roles:
      - {name: Identifier, types: [PER, ORG, GPE]}
      - {name: IdentifiedObject, types: [ANY]}
      - {name: IdentifiedRole, types: [ANY]}
      - {name: Place, types: [GPE, LOC, FAC]}
"""


def toy_ontology() -> EventOntology:
    return parse_ontology(TOY_ONTOLOGY_YAML, source="<toy ontology>")


# (name form, short form, nominal form, pronoun, entity type)
PEOPLE = [
    ("Mara Ellison", "Ellison", "the officer", "she"),
    ("John Carter", "Carter", "the trader", "he"),
    ("Bilal Saleh", "Saleh", "the suspect", "he"),
    ("Nadia Rahim", "Rahim", "the minister", "she"),
    ("Omar Farouk", "Farouk", "the driver", "he"),
    ("Lena Ortiz", "Ortiz", "the reporter", "she"),
    ("Viktor Hale", "Hale", "the banker", "he"),
    ("Amina Diallo", "Diallo", "the engineer", "she"),
]
ORGS = [
    ("Acme Corporation", "Acme", "the company"),
    ("Northwind Bank", "Northwind", "the bank"),
    ("the City Council", None, "the council"),
    ("the Redhill Militia", None, "the militia"),
    ("Hale and Frost", None, "the firm"),
]
GPES = ["Springfield", "Riverton", "Westbrook", "Karthis"]
FACS = ["the Grand Market", "Harbor Square", "the Central Station",
        "Mercy Hospital"]
WEAPONS = ["a car bomb", "a hunting rifle", "an improvised device"]
VEHICLES = ["a cargo truck", "the morning ferry", "a white van"]
MONEYS = ["$280.32", "$1,500", "4,000 dinars"]
ITEMS = [
    ("three crates of parts", "the crates"),
    ("the paintings", "the artwork"),
    ("a shipment of grain", "the shipment"),
    ("the old warehouse", "the building"),
]
POSITIONS = ["chief engineer", "site manager", "senior analyst"]
CRIMES = ["arson", "smuggling", "fraud"]
TOPICS = ["a new tax plan", "the budget dispute", "the merger talks"]

FILLER_SENTENCES = [
    "The streets stayed calm that evening .",
    "Local radio repeated the story for hours .",
    "Nobody expected what happened next .",
]


class _Entity:
    def __init__(self, key: str, entity_type: str, forms: dict[str, str]):
        self.key = key
        self.entity_type = entity_type
        self.forms = forms  # form name -> surface string

    def level(self, form: str) -> str:
        if form in ("name", "short"):
            return NAME
        if form == "pronoun":
            return PRONOUN
        return NOMINAL


class _DocBuilder:
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        self.tokens: list[str] = []
        self.bounds: list[tuple[int, int]] = []
        self.mentions: list[EntityMention] = []
        self.events: list[EventMention] = []
        self.entity_mentions: dict[str, list[str]] = {}

    def sentence(self, parts) -> tuple[list[str], tuple[int, int] | None]:
        """parts: str literal | ('m', entity, form) | ('t', word).
        Returns mention ids (in part order) and the trigger span."""
        start = len(self.tokens)
        mention_ids: list[str] = []
        trigger = None
        for part in parts:
            if isinstance(part, str):
                self.tokens.extend(part.split())
            elif part[0] == "m":
                _, entity, form = part
                words = entity.forms[form].split()
                s = len(self.tokens)
                self.tokens.extend(words)
                e = len(self.tokens)
                mid = f"{self.doc_id}-m{len(self.mentions)}"
                self.mentions.append(EntityMention(
                    mention_id=mid, span=(s, e), head_span=(e - 1, e),
                    mention_level=entity.level(form),
                    entity_type=entity.entity_type,
                    text=" ".join(words)))
                self.entity_mentions.setdefault(entity.key, []).append(mid)
                mention_ids.append(mid)
            elif part[0] == "t":
                s = len(self.tokens)
                self.tokens.append(part[1])
                trigger = (s, s + 1)
            else:
                raise ValueError(f"bad part {part!r}")
        self.bounds.append((start, len(self.tokens)))
        return mention_ids, trigger

    def event(self, event_type: str, trigger, args) -> None:
        self.events.append(EventMention(
            event_id=f"{self.doc_id}-ev{len(self.events)}",
            event_type=event_type, trigger_span=trigger,
            arguments=tuple(args)))

    def build(self) -> Document:
        clusters = []
        mention_map = {m.mention_id: m for m in self.mentions}
        for i, (key, mids) in enumerate(sorted(self.entity_mentions.items())):
            etype = mention_map[mids[0]].entity_type
            if len(mids) < 2 and etype not in ("PER", "ORG"):
                continue  # leave most singletons unclustered
            cluster = CorefCluster(
                cluster_id=f"{self.doc_id}-c{i}",
                mention_ids=frozenset(mids),
                informative_mention_id=mids[0])
            best = informative_mention(cluster, mention_map)
            clusters.append(CorefCluster(
                cluster_id=cluster.cluster_id,
                mention_ids=cluster.mention_ids,
                informative_mention_id=best.mention_id))
        doc = Document(doc_id=self.doc_id, tokens=self.tokens,
                       sentence_boundaries=self.bounds,
                       entity_mentions=self.mentions,
                       event_mentions=self.events,
                       coref_clusters=clusters)
        validate_document(doc)
        return doc


def _person(rng, used: set[str]) -> _Entity:
    name, short, nominal, pronoun = _pick(rng, PEOPLE, used)
    return _Entity(name, "PER", {"name": name, "short": short,
                                 "nominal": nominal, "pronoun": pronoun})


def _org(rng, used: set[str]) -> _Entity:
    name, short, nominal = _pick(rng, ORGS, used)
    forms = {"name": name, "nominal": nominal, "pronoun": "it"}
    if short:
        forms["short"] = short
    return _Entity(name, "ORG", forms)


def _simple(rng, pool, entity_type: str, used: set[str]) -> _Entity:
    entry = _pick(rng, pool, used)
    if isinstance(entry, tuple):
        return _Entity(entry[0], entity_type,
                       {"name": entry[0], "nominal": entry[1]})
    return _Entity(entry, entity_type, {"name": entry})


def _pick(rng, pool, used: set[str]):
    options = [p for p in pool if (p[0] if isinstance(p, tuple) else p)
               not in used]
    if not options:
        options = list(pool)
    choice = options[int(rng.integers(len(options)))]
    used.add(choice[0] if isinstance(choice, tuple) else choice)
    return choice


def _shape_transaction(b: _DocBuilder, rng, used):
    buyer = _person(rng, used)
    seller = _org(rng, used) if rng.random() < 0.5 else _person(rng, used)
    item = _simple(rng, ITEMS, "ANY", used)
    money = _simple(rng, MONEYS, "MON", used)
    place = _simple(rng, GPES, "GPE", used)

    ids0, _ = b.sentence([("m", buyer, "name"), ",", ("m", buyer, "nominal"),
                          ", visited", ("m", place, "name"), "on Friday ."])
    ids1, trig = b.sentence(["There", ("m", buyer, "pronoun"),
                             ("t", "bought"), ("m", item, "name"), "from",
                             ("m", seller, "name"), "."])
    ids2, _ = b.sentence(["The payment of", ("m", money, "name"),
                          "was wired to", ("m", seller, "nominal"), "."])
    b.event("Transaction.ExchangeBuySell", trig, [
        ("Giver", ids1[2]), ("Recipient", ids1[0]),
        ("AcquiredEntity", ids1[1]), ("PaymentBarter", ids2[0]),
        ("Place", ids0[2]),
    ])


def _shape_attack(b: _DocBuilder, rng, used):
    attacker = _person(rng, used)
    victim = _person(rng, used)
    weapon = _simple(rng, WEAPONS, "WEA", used)
    place = _simple(rng, FACS, "FAC", used)

    ids0, _ = b.sentence([("m", attacker, "name"), "entered",
                          ("m", place, "name"), "carrying",
                          ("m", weapon, "name"), "."])
    ids1, trig1 = b.sentence(["Witnesses said", ("m", attacker, "pronoun"),
                              ("t", "detonated"), "the device near the gate ."])
    b.event("Conflict.Attack.DetonateExplode", trig1, [
        ("Attacker", ids1[0]), ("ExplosiveDevice", ids0[2]),
        ("Place", ids0[1]),
    ])
    ids2, trig2 = b.sentence([("m", victim, "name"), ",",
                              ("m", victim, "nominal"), ", was",
                              ("t", "killed"), "in the blast ."])
    b.event("Life.Die", trig2, [
        ("Killer", ids1[0]), ("Victim", ids2[0]),
        ("Instrument", ids0[2]), ("Place", ids0[1]),
    ])
    if rng.random() < 0.5:
        victim2 = _person(rng, used)
        ids3, trig3 = b.sentence([("m", victim2, "name"), "was",
                                  ("t", "injured"), "by the explosion ."])
        b.event("Life.Injure", trig3, [
            ("Injurer", ids1[0]), ("Victim", ids3[0]),
            ("Instrument", ids0[2]), ("Place", ids0[1]),
        ])


def _shape_statement(b: _DocBuilder, rng, used):
    speaker = _person(rng, used)
    audience = _org(rng, used) if rng.random() < 0.5 else _person(rng, used)
    topic = _simple(rng, TOPICS, "ANY", used)
    place = _simple(rng, GPES, "GPE", used)

    ids0, _ = b.sentence([("m", speaker, "name"), "outlined",
                          ("m", topic, "name"), "during a visit to",
                          ("m", place, "name"), "."])
    ids1, trig = b.sentence([("m", speaker, "pronoun"), ("t", "announced"),
                             "the proposal to", ("m", audience, "name"), "."])
    args = [("Communicator", ids1[0]), ("Recipient", ids1[1]),
            ("Topic", ids0[1])]
    if rng.random() < 0.7:
        args.append(("Place", ids0[2]))
    b.event("Contact.PublicStatement", trig, args)


def _shape_justice(b: _DocBuilder, rng, used):
    org = _org(rng, used)
    d1 = _person(rng, used)
    d2 = _person(rng, used)
    prosecutor = _person(rng, used)
    crime = _simple(rng, CRIMES, "ANY", used)
    place = _simple(rng, GPES, "GPE", used)

    ids0, trig0 = b.sentence([("m", org, "name"), "officers",
                              ("t", "arrested"), ("m", d1, "name"),
                              "as well as", ("m", d2, "name"), "near",
                              ("m", place, "name"), "."])
    b.event("Justice.ArrestJailDetain", trig0, [
        ("Jailer", ids0[0]), ("Detainee", ids0[1]), ("Detainee", ids0[2]),
        ("Place", ids0[3]),
    ])
    ids1, trig1 = b.sentence(["Later", ("m", prosecutor, "name"),
                              ("t", "charged"), ("m", d1, "short"),
                              "as well as", ("m", d2, "short"), "with",
                              ("m", crime, "name"), "."])
    b.event("Justice.ChargeIndict", trig1, [
        ("Prosecutor", ids1[0]), ("Defendant", ids1[1]),
        ("Defendant", ids1[2]), ("Crime", ids1[3]),
    ])


def _shape_personnel(b: _DocBuilder, rng, used):
    org = _org(rng, used)
    emp = _person(rng, used)
    other = _person(rng, used)
    position = _simple(rng, POSITIONS, "ANY", used)
    place = _simple(rng, FACS, "FAC", used)

    ids0, trig0 = b.sentence([("m", org, "name"), ("t", "hired"),
                              ("m", emp, "name"), "as",
                              ("m", position, "name"), "."])
    b.event("Personnel.StartPosition", trig0, [
        ("Employee", ids0[1]), ("PlaceOfEmployment", ids0[0]),
        ("Position", ids0[2]),
    ])
    ids1, trig1 = b.sentence(["A week later", ("m", emp, "pronoun"),
                              ("t", "met"), "with", ("m", other, "name"),
                              "at", ("m", place, "name"), "."])
    b.event("Contact.Meet", trig1, [
        ("Participant", ids1[0]), ("OtherParticipant", ids1[1]),
        ("Place", ids1[2]),
    ])


def _shape_transport(b: _DocBuilder, rng, used):
    driver = _person(rng, used)
    cargo = _simple(rng, ITEMS, "ANY", used)
    vehicle = _simple(rng, VEHICLES, "VEH", used)
    origin = _simple(rng, GPES, "GPE", used)
    dest = _simple(rng, FACS, "FAC", used)

    ids0, trig0 = b.sentence([("m", driver, "name"), ("t", "transported"),
                              ("m", cargo, "name"), "in",
                              ("m", vehicle, "name"), "from",
                              ("m", origin, "name"), "to",
                              ("m", dest, "name"), "."])
    b.event("Movement.Transportation", trig0, [
        ("Transporter", ids0[0]), ("PassengerArtifact", ids0[1]),
        ("Vehicle", ids0[2]), ("Origin", ids0[3]), ("Destination", ids0[4]),
    ])
    ids1, trig1 = b.sentence(["Hours later", ("m", cargo, "nominal"),
                              "caught", ("t", "fire"), "at",
                              ("m", dest, "name"), "."])
    b.event("Disaster.FireExplosion", trig1, [
        ("FireExplosionObject", ids1[0]), ("Place", ids1[1]),
    ])


def _shape_identify(b: _DocBuilder, rng, used):
    identifier = _person(rng, used)
    obj = _simple(rng, ITEMS, "ANY", used)
    place = _simple(rng, FACS, "FAC", used)

    ids0, _ = b.sentence([("m", identifier, "name"), ",",
                          ("m", identifier, "nominal"), ", arrived at",
                          ("m", place, "name"), "."])
    ids1, trig = b.sentence([("m", identifier, "pronoun"),
                             ("t", "identified"), ("m", obj, "name"),
                             "as stolen goods at the scene ."])
    b.event("Cognitive.IdentifyCategorize", trig, [
        ("Identifier", ids1[0]), ("IdentifiedObject", ids1[1]),
        ("Place", ids0[2]),
    ])


SHAPES = {
    "transaction": _shape_transaction,
    "attack": _shape_attack,
    "statement": _shape_statement,
    "justice": _shape_justice,
    "personnel": _shape_personnel,
    "transport": _shape_transport,
    "identify": _shape_identify,
}


def build_toy_corpus(n_docs: int = 30, seed: int = 0,
                     shapes: list[str] | None = None) -> list[Document]:
    rng = np.random.default_rng(seed)
    shape_names = sorted(shapes) if shapes else sorted(SHAPES)
    docs = []
    for i in range(n_docs):
        b = _DocBuilder(f"toy-{seed}-{i:03d}")
        used: set[str] = set()
        name = shape_names[i % len(shape_names)]
        if rng.random() < 0.3:
            b.sentence([FILLER_SENTENCES[int(rng.integers(len(FILLER_SENTENCES)))]])
        SHAPES[name](b, rng, used)
        if rng.random() < 0.3:
            b.sentence([FILLER_SENTENCES[int(rng.integers(len(FILLER_SENTENCES)))]])
        docs.append(b.build())
    return docs


def write_wikievents_files(docs: list[Document], doc_path, coref_path) -> None:
    """Emit the WikiEvents-style raw format read by
    :func:`docevents.corpus.load_wikievents` (one document per line plus a
    separate coreference file; informative mentions as surface text)."""
    import json

    with open(doc_path, "w", encoding="utf-8") as f:
        for doc in docs:
            rec = {
                "doc_id": doc.doc_id,
                "tokens": doc.tokens,
                "text": " ".join(doc.tokens),
                "sentences": [doc.tokens[s:e]
                              for s, e in doc.sentence_boundaries],
                "entity_mentions": [
                    {"id": m.mention_id, "start": m.start, "end": m.end,
                     "entity_type": m.entity_type,
                     "mention_type": {NAME: "NAM", NOMINAL: "NOM",
                                      PRONOUN: "PRO"}[m.mention_level],
                     "text": m.text}
                    for m in doc.entity_mentions],
                "event_mentions": [
                    {"id": e.event_id, "event_type": e.event_type,
                     "trigger": {"start": e.trigger_span[0],
                                 "end": e.trigger_span[1],
                                 "text": doc.text_of(e.trigger_span)},
                     "arguments": [{"entity_id": mid, "role": role,
                                    "text": doc.mentions_by_id[mid].text}
                                   for role, mid in e.arguments]}
                    for e in doc.event_mentions],
            }
            f.write(json.dumps(rec) + "\n")
    with open(coref_path, "w", encoding="utf-8") as f:
        for doc in docs:
            mention_map = doc.mentions_by_id
            rec = {
                "doc_key": doc.doc_id,
                "clusters": [sorted(c.mention_ids)
                             for c in doc.coref_clusters],
                "informative_mentions": [
                    mention_map[c.informative_mention_id].text
                    for c in doc.coref_clusters],
            }
            f.write(json.dumps(rec) + "\n")
