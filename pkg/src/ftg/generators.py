"""Answer generators: test instruments, replay, the surrogate, and HTTP chat.

A generator maps an :class:`~ftg.instructions.InstructionSample` to an
ordered list of at most ``n_return`` answer strings.  Echo, oracle, replay,
and surrogate generators are deterministic given their seed; the oracle keys
its randomness on the sample id so results do not depend on evaluation order.
"""

from __future__ import annotations

import json
import os
import zlib

import numpy as np

from .adapter import SurrogateReranker, project
from .instructions import InstructionSample, render_prompt
from .kg import KnowledgeGraph
from .models import EmbeddingModel, relation_feature


class GeneratorError(ValueError):
    """Unknown generator spec or invalid generator configuration."""


class GeneratorTransportError(RuntimeError):
    """A transport-level failure the pipeline may retry."""


class Generator:
    name = "base"
    text_only = False  # text_only generators cannot consume graph_vec
    max_in_flight = 1

    def __init__(self, n_return: int = 10):
        self.n_return = n_return

    def generate(self, sample: InstructionSample) -> list[str]:
        raise NotImplementedError


class EchoTop1Generator(Generator):
    """Emit the highest-ranked candidate; reproduces the filter exactly."""

    name = "echo"

    def generate(self, sample):
        return [sample.candidates[0]] if sample.candidates else []


class OracleGenerator(Generator):
    """Emit the gold answer with probability p when it was recalled,
    otherwise a uniformly random non-gold candidate."""

    name = "oracle"

    def __init__(self, p: float = 1.0, seed: int = 0, n_return: int = 10):
        super().__init__(n_return)
        if not 0.0 <= p <= 1.0:
            raise GeneratorError(f"oracle probability must be in [0, 1], got {p}")
        self.p = p
        self.seed = seed

    def generate(self, sample):
        if not sample.candidates:
            return []
        rng = np.random.default_rng([self.seed, zlib.crc32(sample.id.encode("utf-8"))])
        gold = sample.gold_answer
        if gold and rng.random() < self.p:
            return [gold]
        others = [c for c in sample.candidates if c != gold]
        if not others:
            return [sample.candidates[0]]
        return [others[int(rng.integers(0, len(others)))]]


class ReplayGenerator(Generator):
    """Replay generator outputs recorded as JSONL ``{id, outputs}`` rows."""

    name = "replay"

    def __init__(self, path, n_return: int = 10):
        super().__init__(n_return)
        self.outputs: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self.outputs[rec["id"]] = list(rec["outputs"])

    def generate(self, sample):
        if sample.id not in self.outputs:
            raise GeneratorTransportError(f"replay file has no outputs for {sample.id}")
        return self.outputs[sample.id][: self.n_return]


class SurrogateGenerator(Generator):
    """Rank candidates with the trained reranker and emit the top names.

    Uses the sample's pooled graph vector; candidate embeddings come from the
    frozen filter model.
    """

    name = "surrogate"

    def __init__(
        self,
        reranker: SurrogateReranker,
        model: EmbeddingModel,
        kg: KnowledgeGraph,
        n_return: int = 10,
    ):
        super().__init__(n_return)
        self.reranker = reranker
        self.model = model
        self.kg = kg

    def generate(self, sample):
        if not sample.candidates:
            return []
        anchor = self.model.entity_matrix[sample.anchor_id].astype(np.float64)
        rel = relation_feature(self.model, sample.rel_id).astype(np.float64)
        if sample.graph_vec is not None:
            pooled = np.asarray(sample.graph_vec, dtype=np.float64)
        else:
            pooled = anchor  # empty context pools the anchor alone
        z = project(self.reranker, np.concatenate([anchor, rel, pooled]))
        cand = self.model.entity_matrix[sample.candidate_ids].astype(np.float64)
        logits = cand @ (self.reranker.W_c.T.astype(np.float64) @ z)
        order = np.lexsort((np.arange(len(logits)), -logits))
        return [sample.candidates[i] for i in order[: self.n_return]]


class HttpChatGenerator(Generator):
    """POST the rendered prompt to an OpenAI-compatible chat completions API.

    Endpoint and token come from ``FTG_LLM_URL`` / ``FTG_LLM_KEY`` unless
    passed explicitly.  The pooled graph vector cannot cross this text-only
    protocol and is ignored (the pipeline counts a warning).
    """

    name = "http_chat"
    text_only = True
    max_in_flight = 4

    def __init__(
        self,
        url: str | None = None,
        model_name: str = "default",
        temperature: float = 0.0,
        timeout: float = 60.0,
        api_key: str | None = None,
        n_return: int = 10,
    ):
        super().__init__(n_return)
        self.url = url or os.environ.get("FTG_LLM_URL")
        if not self.url:
            raise GeneratorError("http_chat needs a URL (argument or FTG_LLM_URL)")
        self.api_key = api_key if api_key is not None else os.environ.get("FTG_LLM_KEY")
        self.model_name = model_name
        self.temperature = temperature
        self.timeout = timeout

    def generate(self, sample):
        import requests

        payload = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": render_prompt(sample)}],
            "n": self.n_return,
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            choices = data["choices"]
            return [str(c["message"]["content"]) for c in choices][: self.n_return]
        except Exception as exc:  # noqa: BLE001 - transport failures become retries
            raise GeneratorTransportError(f"chat request failed: {exc}") from exc


def make_generator(
    spec: str,
    n_return: int = 10,
    seed: int = 0,
    reranker: SurrogateReranker | None = None,
    model: EmbeddingModel | None = None,
    kg: KnowledgeGraph | None = None,
) -> Generator:
    """Build a generator from a spec string.

    Specs: ``echo``, ``oracle`` or ``oracle:<p>``, ``replay:<path>``,
    ``surrogate``, ``http`` or ``http:<model name>``.
    """
    kind, _, arg = spec.partition(":")
    if kind == "echo":
        return EchoTop1Generator(n_return)
    if kind == "oracle":
        return OracleGenerator(float(arg) if arg else 1.0, seed, n_return)
    if kind == "replay":
        if not arg:
            raise GeneratorError("replay generator needs a path: replay:<path>")
        return ReplayGenerator(arg, n_return)
    if kind == "surrogate":
        if reranker is None or model is None or kg is None:
            raise GeneratorError("surrogate generator needs a reranker, model, and kg")
        return SurrogateGenerator(reranker, model, kg, n_return)
    if kind == "http":
        return HttpChatGenerator(model_name=arg or "default", n_return=n_return)
    raise GeneratorError(f"unknown generator spec {spec!r}")
