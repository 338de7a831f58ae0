"""Document-level event extraction toolkit.

Two extractors share one ontology:

* argument extraction by filling the ontology template for an event with
  copy-restricted conditional generation (:mod:`docevents.generation`),
* zero-shot trigger extraction from keyword seeds with a projection-based
  CRF tagger (:mod:`docevents.tapkey`),

plus loaders for document-level corpora (:mod:`docevents.corpus`) and a
scoring harness covering head / coref / informative / span argument
matching (:mod:`docevents.metrics`).
"""

__version__ = "0.1.0"
