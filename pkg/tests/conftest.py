import numpy as np
import pytest

from docevents.backends import GeneratorBackend, Vocab
from docevents.toy import build_toy_corpus, toy_ontology


@pytest.fixture(scope="session")
def ontology():
    return toy_ontology()


@pytest.fixture(scope="session")
def toy_docs():
    return build_toy_corpus(n_docs=14, seed=3)


class FixedLogitBackend(GeneratorBackend):
    """Backend with step-indexed logits, for exact hand-checkable decodes.

    ``logits_by_step[t]`` is the unnormalized logit vector used at step t
    (the last entry is reused when decoding runs longer).  Ignores the
    prefix, so every path sees the same per-step distribution.
    """

    def __init__(self, vocab: Vocab, logits_by_step):
        self.vocab = vocab
        self.logits_by_step = [np.asarray(l, dtype=float)
                               for l in logits_by_step]

    def encode(self, input_tokens):
        return tuple(input_tokens)

    def _step(self, t):
        logits = self.logits_by_step[min(t, len(self.logits_by_step) - 1)]
        return logits - _lse(logits)

    def next_token_logprobs(self, context, prefix_ids):
        return self._step(len(prefix_ids))

    def score_sequence(self, input_tokens, output_tokens):
        total = 0.0
        for t, tok in enumerate(output_tokens):
            total += self._step(t)[self.vocab.id(tok)]
        return float(total)


class RandomLogitBackend(GeneratorBackend):
    """Deterministic pseudo-random logits keyed on the prefix hash."""

    def __init__(self, vocab: Vocab, seed: int = 0):
        self.vocab = vocab
        self.seed = seed

    def encode(self, input_tokens):
        return tuple(self.vocab.ids(input_tokens))

    def next_token_logprobs(self, context, prefix_ids):
        key = hash((self.seed, context, tuple(prefix_ids))) % (2 ** 32)
        rng = np.random.default_rng(key)
        logits = rng.normal(size=len(self.vocab))
        return logits - _lse(logits)

    def score_sequence(self, input_tokens, output_tokens):
        context = self.encode(input_tokens)
        prefix, total = [], 0.0
        for tok in output_tokens:
            i = self.vocab.id(tok)
            total += self.next_token_logprobs(context, prefix)[i]
            prefix.append(i)
        return float(total)


def _lse(x):
    m = np.max(x)
    return m + np.log(np.exp(x - m).sum())


@pytest.fixture
def fixed_backend_factory():
    return FixedLogitBackend


@pytest.fixture
def random_backend_factory():
    return RandomLogitBackend
