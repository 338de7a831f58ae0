"""Keyword-seeded trigger extraction: a linear-chain CRF over IO tags
whose emissions compare projected token embeddings against per-class
reference vectors.

Class representation vectors come from keyword occurrences in unlabeled
text (masked-prediction filtering removes ambiguous ones).  The
projection is not learned: it is the orthonormal null-space basis of the
class-vector/reference differences, recomputed by QR decomposition at the
start of every epoch.  Transitions use two diagonal matrices (same-class
and O-boundary), so no parameter is indexed by class identity; adding a
class only appends its reference vector and a column to the constraint
matrix, which is what enables zero-shot transfer.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch

from .corpus import Document, Span
from .embeddings import EmbeddingBackend, morphological_variants

log = logging.getLogger(__name__)

O_TAG = "O"
X_TAG = "X"
NULLSPACE_TOL = 1e-5


class ClassVectorError(Exception):
    pass


@dataclass
class ClassVector:
    event_type: str
    vector: np.ndarray
    support_count: int


def itag(event_type: str) -> str:
    return f"I-{event_type}"


def build_class_vector(backend: EmbeddingBackend, event_type: str,
                       keywords: list[str], sentences: list[list[str]],
                       top_k: int = 50) -> ClassVector:
    """Average the contextual embeddings of keyword occurrences.

    An occurrence (the keyword or one of its morphological variants) is
    kept only when the masked prediction at its position ranks the keyword
    inside the top ``top_k`` candidates; when no occurrence survives the
    filter, all occurrences are used and a warning is emitted.
    """
    if not keywords:
        raise ClassVectorError(f"{event_type}: no keywords given")
    variants: dict[str, set[str]] = {
        kw.lower(): morphological_variants(kw) for kw in keywords}
    all_forms = set().union(*variants.values())

    kept: list[np.ndarray] = []
    fallback: list[np.ndarray] = []
    for tokens in sentences:
        lowered = [t.lower() for t in tokens]
        hits = [i for i, t in enumerate(lowered) if t in all_forms]
        if not hits:
            continue
        embeddings = backend.token_embeddings(tokens)
        for i in hits:
            fallback.append(embeddings[i])
            keyword = next(kw for kw, forms in variants.items()
                           if lowered[i] in forms)
            preds = set(backend.top_predictions(tokens, i, k=top_k))
            if preds & variants[keyword]:
                kept.append(embeddings[i])
    if not fallback:
        raise ClassVectorError(
            f"{event_type}: no occurrence of keywords {keywords} in the corpus")
    if not kept:
        log.warning("%s: masked-prediction filter removed every occurrence; "
                    "falling back to the unfiltered mean", event_type)
        kept = fallback
    return ClassVector(event_type=event_type,
                       vector=np.mean(kept, axis=0),
                       support_count=len(kept))


def compute_projection(class_vectors: np.ndarray, references: np.ndarray,
                       lam: float) -> np.ndarray:
    """Orthonormal basis M of the null space of D^T, where column k of D
    is c_k - lam * normalize(phi_k).

    Full QR of D supplies the basis (last d-K columns of the orthogonal
    factor); when D is rank-deficient the basis of the full orthogonal
    complement is recovered via SVD instead, so M may have more than d-K
    columns.
    """
    C = np.atleast_2d(np.asarray(class_vectors, dtype=float))
    phi = np.atleast_2d(np.asarray(references, dtype=float))
    k, d = C.shape
    if k == 0:
        return np.eye(d)
    if d <= k:
        raise ValueError(f"embedding dim {d} must exceed class count {k}")
    norms = np.linalg.norm(phi, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    D = (C - lam * phi / norms).T  # d x K

    q, r = np.linalg.qr(D, mode="complete")
    tol = np.abs(r).max(initial=0.0) * max(D.shape) * np.finfo(float).eps
    rank = int((np.abs(np.diag(r)) > tol).sum())
    if rank == k:
        M = q[:, k:]
    else:
        log.warning("rank-deficient constraint matrix (rank %d < %d); "
                    "using the SVD complement", rank, k)
        u, s, _ = np.linalg.svd(D, full_matrices=True)
        rank = int((s > (s.max(initial=0.0) * max(D.shape)
                         * np.finfo(float).eps)).sum())
        M = u[:, rank:]
    residual = np.abs(M.T @ D).max(initial=0.0)
    scale = max(np.abs(D).max(initial=0.0), 1.0)
    if residual > NULLSPACE_TOL * scale:
        raise RuntimeError(f"projection residual {residual:.2e} too large")
    return M


class TapKeyModel:
    """CRF tagger over tags [O, I-type1, ..., I-typeK].

    Parameters: the reference matrix (one row per tag, row 0 is the O
    tag) and two diagonal transition matrices, stored at the full
    embedding dimension and applied on the leading projected coordinates,
    so the tag set can grow without reshaping.  The projection is a
    derived quantity; call :meth:`recompute_projection` after any change
    to the references or the class-vector set.
    """

    def __init__(self, class_vectors: list[ClassVector], dim: int,
                 lam: float = 0.5, alpha: float = 0.1):
        if dim <= len(class_vectors) + 1:
            raise ValueError(f"dim {dim} too small for "
                             f"{len(class_vectors)} classes")
        self.dim = dim
        self.lam = lam
        self.alpha = alpha
        self.class_vectors = list(class_vectors)
        # references initialized as a diagonal matrix: tag t <- basis e_t
        self.phi = torch.nn.Parameter(
            torch.eye(len(class_vectors) + 1, dim, dtype=torch.float64))
        self.w_diag = torch.nn.Parameter(torch.zeros(dim, dtype=torch.float64))
        self.wo_diag = torch.nn.Parameter(torch.zeros(dim, dtype=torch.float64))
        self.M = torch.eye(dim, dtype=torch.float64)
        self.recompute_projection()

    # -- structure ---------------------------------------------------------

    @property
    def n_classes(self) -> int:
        return len(self.class_vectors)

    @property
    def tags(self) -> list[str]:
        return [O_TAG] + [itag(cv.event_type) for cv in self.class_vectors]

    def tag_index(self, tag: str) -> int:
        return self.tags.index(tag)

    def parameters(self) -> list[torch.nn.Parameter]:
        return [self.phi, self.w_diag, self.wo_diag]

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        return {"phi": tuple(self.phi.shape),
                "w_diag": tuple(self.w_diag.shape),
                "wo_diag": tuple(self.wo_diag.shape)}

    def add_class(self, cv: ClassVector) -> None:
        """Register an unseen class: its reference vector continues the
        identity-block initialization pattern (the next unused basis
        vector), keeping every other parameter untouched."""
        index = self.phi.shape[0]
        if index >= self.dim:
            raise ValueError("embedding dimension exhausted; cannot add class")
        self.class_vectors.append(cv)
        basis = torch.zeros(1, self.dim, dtype=torch.float64)
        basis[0, index] = 1.0
        with torch.no_grad():
            self.phi = torch.nn.Parameter(torch.cat([self.phi.data, basis]))

    def recompute_projection(self) -> None:
        """Recompute M from the current references and class vectors; the
        O-tag reference is excluded from the constraints."""
        C = np.stack([cv.vector for cv in self.class_vectors])
        refs = self.phi.detach().numpy()[1:]
        self.M = torch.from_numpy(compute_projection(C, refs, self.lam))

    def nullspace_residual(self) -> float:
        C = np.stack([cv.vector for cv in self.class_vectors])
        refs = self.phi.detach().numpy()[1:]
        norms = np.linalg.norm(refs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        D = C - self.lam * refs / norms
        return float(np.abs(self.M.numpy().T @ D.T).max(initial=0.0))

    # -- scores ------------------------------------------------------------

    def _projected(self, H: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ph = H @ self.M                 # (n, m)
        pphi = self.phi @ self.M        # (T, m)
        return ph, pphi

    def emissions(self, H: torch.Tensor) -> torch.Tensor:
        """Log-softmax over tags of projected dot products, shape (n, T)."""
        ph, pphi = self._projected(H)
        return torch.log_softmax(ph @ pphi.T, dim=-1)

    def transitions(self, H: torch.Tensor) -> torch.Tensor:
        """Transition scores, shape (n, T, T); entry [i, l, k] scores
        y_i = k given y_{i-1} = l.  Same nonzero class: diagonal W form;
        entering or leaving O: diagonal W_o form; class switch: 0."""
        ph, pphi = self._projected(H)
        m = ph.shape[1]
        n, T = ph.shape[0], pphi.shape[0]
        same = ph @ (pphi * self.w_diag[:m]).T     # (n, T)
        other = ph @ (pphi * self.wo_diag[:m]).T   # (n, T)
        trans = torch.zeros(n, T, T, dtype=H.dtype)
        idx = torch.arange(1, T)
        trans[:, idx, idx] = same[:, 1:]
        trans[:, 0, :] = other                      # leaving O (l = 0)
        trans[:, :, 0] = other[:, :1]               # entering O (k = 0)
        return trans

    def sequence_score(self, H: torch.Tensor, tag_ids: list[int]) -> torch.Tensor:
        emis = self.emissions(H)
        trans = self.transitions(H)
        prev = 0  # virtual O predecessor
        score = torch.zeros((), dtype=H.dtype)
        for i, k in enumerate(tag_ids):
            score = score + emis[i, k] + trans[i, prev, k]
            prev = k
        return score

    def log_partition(self, H: torch.Tensor) -> torch.Tensor:
        emis = self.emissions(H)
        trans = self.transitions(H)
        alpha = emis[0] + trans[0, 0, :]
        for i in range(1, H.shape[0]):
            alpha = torch.logsumexp(alpha[:, None] + trans[i], dim=0) + emis[i]
        return torch.logsumexp(alpha, dim=0)

    def sequence_logprob(self, H: np.ndarray | torch.Tensor,
                         tags: list[str] | list[int]) -> torch.Tensor:
        H = _as_tensor(H)
        tag_ids = [t if isinstance(t, int) else self.tag_index(t) for t in tags]
        if len(tag_ids) != H.shape[0]:
            raise ValueError("tag sequence length != embedding count")
        return self.sequence_score(H, tag_ids) - self.log_partition(H)

    def viterbi(self, H: np.ndarray | torch.Tensor) -> list[str]:
        """MAP tag sequence; ties resolve toward O, then the lower class
        index (first argmax)."""
        H = _as_tensor(H)
        if H.shape[0] == 0:
            return []
        with torch.no_grad():
            emis = self.emissions(H).numpy()
            trans = self.transitions(H).numpy()
        n, T = emis.shape
        delta = emis[0] + trans[0, 0, :]
        back = np.zeros((n, T), dtype=int)
        for i in range(1, n):
            cand = delta[:, None] + trans[i]        # (prev, cur)
            back[i] = cand.argmax(axis=0)
            delta = cand.max(axis=0) + emis[i]
        path = [int(delta.argmax())]
        for i in range(n - 1, 0, -1):
            path.append(int(back[i, path[-1]]))
        path.reverse()
        tags = self.tags
        return [tags[t] for t in path]

    # -- training ----------------------------------------------------------

    def regularizer(self) -> torch.Tensor:
        """||Phi^T Phi - I||^2 over the full reference matrix (columns are
        the reference vectors); zero iff the references are orthonormal."""
        gram = self.phi @ self.phi.T
        eye = torch.eye(gram.shape[0], dtype=gram.dtype)
        return ((gram - eye) ** 2).sum()

    def loss(self, batch: list[tuple[np.ndarray, list[int]]],
             objective: str = "crf") -> torch.Tensor:
        """Eq.-style objective: mean sequence NLL (or mean per-token
        emission NLL with X positions excluded) plus the orthonormality
        regularizer weighted by alpha."""
        if objective == "crf":
            nll = torch.zeros((), dtype=torch.float64)
            for H, tag_ids in batch:
                if any(t < 0 for t in tag_ids):
                    raise ValueError("X tags are not allowed in the CRF loss")
                nll = nll - self.sequence_logprob(_as_tensor(H), tag_ids)
            nll = nll / len(batch)
        elif objective == "token":
            total = torch.zeros((), dtype=torch.float64)
            count = 0
            for H, tag_ids in batch:
                emis = self.emissions(_as_tensor(H))
                keep = [i for i, t in enumerate(tag_ids) if t >= 0]
                for i in keep:
                    total = total - emis[i, tag_ids[i]]
                count += len(keep)
            nll = total / max(count, 1)
        else:
            raise ValueError(f"unknown objective {objective!r}")
        return nll + self.alpha * self.regularizer()

    # -- persistence -------------------------------------------------------

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        np.savez(os.path.join(directory, "params.npz"),
                 phi=self.phi.detach().numpy(),
                 w_diag=self.w_diag.detach().numpy(),
                 wo_diag=self.wo_diag.detach().numpy(),
                 class_vectors=np.stack([cv.vector for cv in self.class_vectors]))
        meta = {
            "dim": self.dim, "lam": self.lam, "alpha": self.alpha,
            "classes": [{"event_type": cv.event_type,
                         "support_count": cv.support_count}
                        for cv in self.class_vectors],
        }
        with open(os.path.join(directory, "model.json"), "w") as f:
            json.dump(meta, f, indent=2)

    @classmethod
    def load(cls, directory: str) -> "TapKeyModel":
        with open(os.path.join(directory, "model.json")) as f:
            meta = json.load(f)
        arrays = np.load(os.path.join(directory, "params.npz"))
        cvs = [ClassVector(event_type=c["event_type"],
                           vector=arrays["class_vectors"][i],
                           support_count=c["support_count"])
               for i, c in enumerate(meta["classes"])]
        model = cls(cvs, dim=meta["dim"], lam=meta["lam"], alpha=meta["alpha"])
        with torch.no_grad():
            model.phi = torch.nn.Parameter(torch.from_numpy(arrays["phi"]))
            model.w_diag = torch.nn.Parameter(torch.from_numpy(arrays["w_diag"]))
            model.wo_diag = torch.nn.Parameter(torch.from_numpy(arrays["wo_diag"]))
        model.recompute_projection()
        return model


def _as_tensor(H) -> torch.Tensor:
    if isinstance(H, torch.Tensor):
        return H.to(torch.float64)
    return torch.from_numpy(np.asarray(H, dtype=float))


def pseudo_label(class_vectors: list[ClassVector],
                 backend: EmbeddingBackend, sentences: list[list[str]],
                 tau_i: float = 0.55, tau_o: float = 0.30) -> list[list[str]]:
    """Cosine-similarity pseudo-labels: confident I tags above tau_i,
    confident O at or below tau_o, X (unknown, excluded from training)
    in between."""
    C = np.stack([cv.vector for cv in class_vectors])
    norms = np.linalg.norm(C, axis=1)
    norms[norms == 0] = 1.0
    out = []
    for tokens in sentences:
        H = backend.token_embeddings(tokens)
        hnorm = np.linalg.norm(H, axis=1)
        hnorm[hnorm == 0] = 1.0
        cos = (H @ C.T) / hnorm[:, None] / norms[None, :]
        tags = []
        for i in range(len(tokens)):
            best = int(np.argmax(cos[i]))
            score = float(cos[i, best])
            if score >= tau_i:
                tags.append(itag(class_vectors[best].event_type))
            elif score <= tau_o:
                tags.append(O_TAG)
            else:
                tags.append(X_TAG)
        out.append(tags)
    return out


def train(model: TapKeyModel,
          data: list[tuple[np.ndarray, list[str]]],
          epochs: int = 30, learning_rate: float = 0.05,
          alpha: float | None = None, objective: str = "crf",
          batch_size: int = 16, seed: int = 0) -> list[float]:
    """Gradient training of {phi, W, W_o}; the projection is recomputed
    from the current references at the start of every epoch and held
    fixed within it.  Returns the per-epoch loss history."""
    if alpha is not None:
        model.alpha = alpha
    encoded = []
    for H, tags in data:
        ids = [-1 if t == X_TAG else model.tag_index(t) for t in tags]
        if len(ids) != len(H):
            raise ValueError("tag/embedding length mismatch")
        if len(ids):
            encoded.append((np.asarray(H, dtype=float), ids))
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    rng = np.random.default_rng(seed)
    history = []
    order = np.arange(len(encoded))
    for epoch in range(epochs):
        model.recompute_projection()
        rng.shuffle(order)
        total, nbatches = 0.0, 0
        for start in range(0, len(encoded), batch_size):
            batch = [encoded[i] for i in order[start:start + batch_size]]
            loss = model.loss(batch, objective=objective)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"loss diverged at epoch {epoch} "
                    f"(phi norm {float(model.phi.detach().norm()):.3g}, "
                    f"lr {learning_rate})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            nbatches += 1
        history.append(total / max(nbatches, 1))
        log.info("tapkey epoch %d: loss %.4f", epoch, history[-1])
    model.recompute_projection()
    return history


def tags_to_spans(tags: list[str], offset: int = 0) -> list[tuple[Span, str]]:
    """Maximal runs of identical I tags become (span, event_type)."""
    spans = []
    i = 0
    while i < len(tags):
        tag = tags[i]
        if tag == O_TAG or tag == X_TAG:
            i += 1
            continue
        j = i + 1
        while j < len(tags) and tags[j] == tag:
            j += 1
        spans.append(((offset + i, offset + j), tag[2:]))
        i = j
    return spans


def predict_triggers(model: TapKeyModel, backend: EmbeddingBackend,
                     doc: Document) -> list[tuple[Span, str, float]]:
    """Viterbi decoding per sentence; returns (span, event_type, score)
    triples with document-level offsets.  The projection must cover the
    full target type set, so it is recomputed first."""
    model.recompute_projection()
    out = []
    for s, e in doc.sentence_boundaries:
        tokens = doc.tokens[s:e]
        if not tokens:
            continue
        H = _as_tensor(backend.token_embeddings(tokens))
        tags = model.viterbi(H)
        with torch.no_grad():
            probs = torch.softmax(
                model.emissions(H), dim=-1).numpy()
        for (start, end), event_type in tags_to_spans(tags, offset=s):
            k = model.tag_index(itag(event_type))
            score = float(np.mean(probs[start - s:end - s, k]))
            out.append(((start, end), event_type, score))
    return out


def load_keywords(path) -> dict[str, list[str]]:
    """Keyword file: one ``event_type: kw1, kw2, ...`` line per type;
    blank lines and '#' comments are ignored."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'type: keywords'")
            event_type, rest = line.split(":", 1)
            out[event_type.strip()] = [k.strip() for k in rest.split(",")
                                       if k.strip()]
    return out
