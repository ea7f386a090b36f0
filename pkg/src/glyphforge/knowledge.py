"""Subject/surrounding prompt acquisition from a language-model backend."""
from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass
from enum import Enum

from glyphforge.errors import InvalidInput, MalformedResponse, TemplateError

log = logging.getLogger(__name__)

PLACEHOLDER = "<CONCEPT>"
SUBJECT_KEY = "subject prompt"
SURROUNDING_KEY = "surrounding prompt"
MAX_ATTEMPTS = 3

SYSTEM_TEXT = (
    "Suppose you are a creative and active explainer, dedicated to helping people understand "
    "abstract concepts and concrete them. Your task is to identify and elucidate the representative "
    "tangible objects within these abstract concepts, helping the audience better connect abstract "
    "thinking with real-world entities. All questions should follow a standardized format, such as: "
    "\"Please list the representative tangible objects in/of <CONCEPT>, along with the appropriate "
    "artistic font style.\" Your response must adhere to a strict JSON format, specifically: "
    "{\"subject prompt\": \"representative tangible object that can express the intrinsic semantic of "
    "input <CONCEPT>\", \"surrounding prompt\": \"appropriate artistic font style or texture that can "
    "enrich <CONCEPT>.\"} This format ensures clarity and consistency in responses, making the "
    "information easy to parse and understand. For example, suppose the question is: \"Please list the "
    "representative category or object name in/of 'cat', including in real-life, artist works, and "
    "film works, and select an appropriate artistic font style.\" Your response should be: "
    "{\"subject prompt\": \"cake and frosting, sprinkles, layers, with features like sweet, colorful, "
    "decadent, multi-tiered.\", \"surrounding prompt\": \"texture design is frosting, sprinkles, "
    "layers, with creamy, glossy, textured, and delightful details.\"}"
)
QUESTION_FORMAT = (
    "Please list the representative tangible objects in/of <CONCEPT>, "
    "along with the appropriate artistic font style."
)
REPAIR_INSTRUCTION = (
    "Your previous reply could not be parsed. Reply with only one JSON object containing the keys "
    '"subject prompt" and "surrounding prompt", both non-empty strings.'
)

_STOPWORDS = frozenset(
    "a an the and or of in on with for to by at as is are be from into like such features "
    "very more most some any this that these those its it".split()
)


class PromptSource(str, Enum):
    LLM = "llm"
    FIXTURE = "fixture"
    MANUAL = "manual"


@dataclass(frozen=True)
class PromptPair:
    subject_prompt: str
    surrounding_prompt: str
    source: PromptSource = PromptSource.MANUAL

    def __post_init__(self):
        if not self.subject_prompt.strip() or not self.surrounding_prompt.strip():
            raise InvalidInput("subject and surrounding prompts must be non-empty")
        object.__setattr__(self, "source", PromptSource(self.source))

    def to_json(self) -> str:
        return json.dumps({SUBJECT_KEY: self.subject_prompt, SURROUNDING_KEY: self.surrounding_prompt})


@dataclass(frozen=True)
class QueryTemplate:
    system_text: str = SYSTEM_TEXT
    question_format: str = QUESTION_FORMAT

    def __post_init__(self):
        n = self.question_format.count(PLACEHOLDER)
        if n != 1:
            raise TemplateError(f"question format must contain exactly one {PLACEHOLDER}, found {n}")

    @property
    def digest(self) -> str:
        return hashlib.sha256((self.system_text + "\0" + self.question_format).encode()).hexdigest()[:16]


def names_an_object(text: str) -> bool:
    """Heuristic: at least one content-word token (CJK characters always count)."""
    if re.search(r"[㐀-鿿豈-﫿]", text):
        return True
    words = re.findall(r"[^\W\d_]{2,}", text.lower())
    return any(w not in _STOPWORDS for w in words)


def build_query(char: str, template: QueryTemplate | None = None) -> str:
    template = template or QueryTemplate()
    if not char:
        raise InvalidInput("concept must be non-empty")
    if template.question_format.count(PLACEHOLDER) != 1:
        raise TemplateError("malformed question template")
    return template.question_format.replace(PLACEHOLDER, char, 1)


def first_json_object(text: str) -> str | None:
    """Return the first balanced ``{...}`` substring, honoring JSON string escapes."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    return candidate
        start = text.find("{", start + 1)
    return None


def parse_response(text: str, source: PromptSource = PromptSource.LLM) -> PromptPair:
    blob = first_json_object(text or "")
    if blob is None:
        raise MalformedResponse("no JSON object in response")
    obj = json.loads(blob)
    if not isinstance(obj, dict):
        raise MalformedResponse("response JSON is not an object")
    try:
        sub, surr = obj[SUBJECT_KEY], obj[SURROUNDING_KEY]
    except KeyError as exc:
        raise MalformedResponse(f"missing key {exc.args[0]!r}") from None
    if not isinstance(sub, str) or not isinstance(surr, str) or not sub.strip() or not surr.strip():
        raise MalformedResponse("prompt values must be non-empty strings")
    return PromptPair(sub.strip(), surr.strip(), source)


class _ResponseCache:
    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str], PromptPair] = {}

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def setdefault(self, key, value):
        with self._lock:
            return self._data.setdefault(key, value)


_cache = _ResponseCache()


def acquire_prompts(char: str, backend, template: QueryTemplate | None = None, use_cache: bool = True) -> PromptPair:
    """Ask ``backend`` for a prompt pair, retrying malformed replies with a repair note."""
    template = template or QueryTemplate()
    question = build_query(char, template)
    key = (char, template.digest + ":" + getattr(backend, "backend_id", type(backend).__name__))
    if use_cache and (hit := _cache.get(key)) is not None:
        return hit
    source = PromptSource(getattr(backend, "source", PromptSource.LLM))
    user_text = question
    last_error = None
    for attempt in range(MAX_ATTEMPTS):
        raw = backend.complete(template.system_text, user_text)
        try:
            pair = parse_response(raw, source)
            if not names_an_object(pair.subject_prompt):
                raise MalformedResponse("subject prompt names no object")
        except MalformedResponse as exc:
            last_error = exc
            log.warning("malformed reply for %r (attempt %d/%d): %s", char, attempt + 1, MAX_ATTEMPTS, exc)
            user_text = question + "\n\n" + REPAIR_INSTRUCTION
            continue
        return _cache.setdefault(key, pair) if use_cache else pair
    raise MalformedResponse(f"{MAX_ATTEMPTS} malformed responses for {char!r}: {last_error}")

