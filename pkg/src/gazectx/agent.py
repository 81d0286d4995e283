"""Answer backends: a deterministic rule oracle and an HTTP chat client.

The oracle stands in for a live model during experiments so attempt counts
measure context selection, not model temperament.  It grades a rendered
prompt purely on whether the grounding it needs is present:

1. the question's answer span is in the supplied context and no other
   question's span is -> answers correctly;
2. the span is present but so are competing spans -> answers correctly
   only when the message explicitly refers it to the supplied context;
3. the span is absent (or there is no context) -> answers correctly only
   when the query itself names the disambiguating entity.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from typing import Protocol

import httpx

from .prompting import ATTENTION_PREAMBLE, REPLY_CONSTRAINT, PromptBundle, Role

__all__ = [
    "AgentReply",
    "AgentBackend",
    "AgentError",
    "AgentTimeoutError",
    "AgentHttpError",
    "AgentProtocolError",
    "UnknownQuestionError",
    "QuestionSpec",
    "OracleSpec",
    "RuleOracle",
    "HttpAgent",
    "normalize",
    "split_rendered_context",
]


@dataclass(frozen=True)
class AgentReply:
    text: str
    latency_ms: float
    backend_id: str


class AgentBackend(Protocol):
    def complete(self, bundle: PromptBundle) -> AgentReply: ...


class AgentError(Exception):
    """Base class for backend failures."""


class AgentTimeoutError(AgentError):
    pass


class AgentHttpError(AgentError):
    def __init__(self, status_code: int, detail: str):
        super().__init__(f"backend returned HTTP {status_code}: {detail}")
        self.status_code = status_code


class AgentProtocolError(AgentError):
    """The backend answered, but not in the expected shape."""


class UnknownQuestionError(AgentError):
    """The oracle cannot match the query to any scripted question."""


_PUNCT = re.compile(r"[^\w\s]+", re.UNICODE)
_SPACE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return _SPACE.sub(" ", _PUNCT.sub("", text.lower())).strip()


@dataclass(frozen=True)
class QuestionSpec:
    """One scripted question with its grading material.

    answer_span is the verbatim sentence fragment that counts as the
    correct answer; entity_key is the explicit subject that unlocks an
    answer without context; topic_keys flavour the wrong-topic reply.
    """

    question_id: str
    question: str
    answer_span: str
    entity_key: str
    topic_keys: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("question_id", "question", "answer_span", "entity_key"):
            if not getattr(self, name):
                raise ValueError(f"question field {name} must be non-empty")
        if len(self.topic_keys) < 1:
            raise ValueError(f"question {self.question_id}: topic_keys must be non-empty")
        if normalize(self.entity_key) in normalize(self.question):
            raise ValueError(
                f"question {self.question_id}: entity_key may not appear in the question itself"
            )


@dataclass(frozen=True)
class OracleSpec:
    questions: tuple[QuestionSpec, ...]

    def __post_init__(self) -> None:
        ids = [q.question_id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate question_id in oracle spec")

    @classmethod
    def from_dict(cls, doc: dict) -> OracleSpec:
        qs = tuple(
            QuestionSpec(
                question_id=q["question_id"],
                question=q["question"],
                answer_span=q["answer_span"],
                entity_key=q["entity_key"],
                topic_keys=tuple(q["topic_keys"]),
            )
            for q in doc["questions"]
        )
        return cls(questions=qs)

    @classmethod
    def from_json(cls, data: bytes | str) -> OracleSpec:
        return cls.from_dict(json.loads(data))


def split_rendered_context(message: str) -> str | None:
    """Context section of a rendered prompt, or None for bare queries."""
    start = message.find(ATTENTION_PREAMBLE)
    if start < 0:
        return None
    start += len(ATTENTION_PREAMBLE)
    end = message.rfind(REPLY_CONSTRAINT)
    if end < 0:
        end = len(message)
    return message[start:end]


_REFERRAL_PHRASES = ("in this article", "in the context", "from the context")


class RuleOracle:
    """Deterministic grader over the scripted question set."""

    backend_id = "oracle"

    def __init__(self, spec: OracleSpec):
        self._spec = spec
        self._norm_spans = {q.question_id: normalize(q.answer_span) for q in spec.questions}

    def _match_question(self, query_line: str) -> QuestionSpec:
        nq = normalize(query_line)
        best: QuestionSpec | None = None
        for q in self._spec.questions:
            if normalize(q.question) in nq:
                if best is None or len(q.question) > len(best.question):
                    best = q
        if best is None:
            raise UnknownQuestionError(f"no scripted question matches {query_line!r}")
        return best

    def _distractor(self, q: QuestionSpec) -> str:
        topics = ", ".join(q.topic_keys)
        return (
            f"That touches on {topics}. Speaking generally, such systems follow "
            "broad principles, though I cannot tell which specific passage you mean."
        )

    def complete(self, bundle: PromptBundle) -> AgentReply:
        message = bundle.new_user_message
        query_line = message.split("\n", 1)[0]
        q = self._match_question(query_line)
        context = split_rendered_context(message)
        nctx = normalize(context) if context is not None else ""
        span = self._norm_spans[q.question_id]

        if context is not None and span in nctx:
            others = any(
                self._norm_spans[other.question_id] in nctx
                for other in self._spec.questions
                if other.question_id != q.question_id
            )
            if not others:
                text = q.answer_span
            elif any(p in normalize(message) for p in _REFERRAL_PHRASES):
                text = q.answer_span
            else:
                text = self._distractor(q)
        elif normalize(q.entity_key) in normalize(query_line):
            text = q.answer_span
        else:
            text = self._distractor(q)
        return AgentReply(text=text, latency_ms=0.0, backend_id=self.backend_id)


class HttpAgent:
    """Client for an OpenAI-style chat completion endpoint."""

    backend_id = "http"

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        model: str = "",
        timeout_s: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        self._url = url
        self._model = model
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout_s, transport=transport)

    @classmethod
    def from_env(cls, environ, **kwargs) -> HttpAgent:
        endpoint = environ.get("AGENT_ENDPOINT", "")
        if not endpoint:
            raise ValueError("AGENT_ENDPOINT is not set")
        return cls(
            endpoint=endpoint,
            api_key=environ.get("AGENT_API_KEY", ""),
            model=environ.get("AGENT_MODEL", ""),
            **kwargs,
        )

    def complete(self, bundle: PromptBundle) -> AgentReply:
        messages = [
            {"role": t.role.value, "content": t.message} for t in bundle.history
        ]
        messages.append({"role": Role.USER.value, "content": bundle.new_user_message})
        payload: dict = {"messages": messages}
        if self._model:
            payload["model"] = self._model
        started = time.perf_counter()
        try:
            resp = self._client.post(self._url, json=payload)
        except httpx.TimeoutException as e:
            raise AgentTimeoutError(f"backend timed out: {e}") from e
        except httpx.HTTPError as e:
            raise AgentProtocolError(f"transport failure: {e}") from e
        latency_ms = (time.perf_counter() - started) * 1000.0
        if resp.status_code != 200:
            raise AgentHttpError(resp.status_code, resp.text[:200])
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as e:
            raise AgentProtocolError(f"malformed completion body: {e}") from e
        if not isinstance(text, str):
            raise AgentProtocolError("completion content is not a string")
        return AgentReply(text=text, latency_ms=latency_ms, backend_id=self.backend_id)

    def close(self) -> None:
        self._client.close()
