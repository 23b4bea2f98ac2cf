"""Forward/backward prompt construction and the context-window gate."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

from .backends import ModelProfile

SYSTEM_MESSAGE = "You are an expert programmer in all programming languages."

FORWARD_CHAT_PROMPT = (
    "Create a Javadoc for the Java function delimited by triple backquotes. "
    "Do not return generate the method again, return only the Javadoc. "
    "Java function: ```{code}```"
)

BACKWARD_CHAT_PROMPT = (
    "Given the signature of a Java function and its Javadoc delimited by triple backquotes, "
    "generate the body of the function. Do not generate any additional methods nor repeat "
    "the Javadoc nor give any explanations. Return only the completed function without any "
    "comments.```{description}```"
)

DESCRIPTION_TAG = "/* @description "
COMMENT_CLOSE = "\n*/\n"


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class IntermediateKind:
    """Natural language (``nl``) or programming language (``pl``) plus its name."""

    kind: str
    name: str

    def __post_init__(self):
        if self.kind not in ("nl", "pl"):
            raise PromptError(f"intermediate kind must be 'nl' or 'pl', got {self.kind!r}")
        if not self.name:
            raise PromptError("intermediate name must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "IntermediateKind":
        kind, sep, name = text.partition(":")
        if not sep:
            raise PromptError(f"expected nl:<name> or pl:<name>, got {text!r}")
        return cls(kind.strip().lower(), name.strip())

    def __str__(self):
        return f"{self.kind}:{self.name}"

    @property
    def is_nl(self) -> bool:
        return self.kind == "nl"


@dataclass(frozen=True)
class PromptPayload:
    style: str
    user_text: str
    system_message: Optional[str] = None
    infill_prefix: Optional[str] = None
    infill_suffix: Optional[str] = None
    approx_token_count: int = 0

    def __post_init__(self):
        has_infill = self.infill_prefix is not None or self.infill_suffix is not None
        if self.style == "chat" and (self.system_message is None or has_infill):
            raise PromptError("chat payloads need a system message and no infill fields")
        if self.style == "infill" and (self.infill_prefix is None or self.infill_suffix is None):
            raise PromptError("infill payloads need both prefix and suffix")
        if self.style == "seq2seq" and (self.system_message is not None or has_infill):
            raise PromptError("seq2seq payloads carry only user text")


TokenCounter = Callable[[str], int]


def approx_token_count(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


def _payload(style: str, user_text: str, counter: TokenCounter | None = None, **kw) -> PromptPayload:
    count = counter or approx_token_count
    tokens = count(user_text) + (count(kw["system_message"]) if kw.get("system_message") else 0)
    return PromptPayload(style=style, user_text=user_text, approx_token_count=tokens, **kw)


def preprocess_code(code: str, profile: ModelProfile) -> str:
    if profile.style == "seq2seq" and profile.strip_newlines:
        return re.sub(r"[ \t]*\r?\n[ \t]*", " ", code).strip()
    return code


def _unsupported(profile: ModelProfile, intermediate: IntermediateKind):
    if intermediate.kind == "pl" and profile.style != "seq2seq":
        raise PromptError(
            f"profile {profile.name!r} ({profile.style}) does not support a programming-language "
            "intermediate; use a seq2seq profile"
        )


def build_forward_prompt(bug, profile: ModelProfile, intermediate: IntermediateKind,
                         counter: TokenCounter | None = None) -> PromptPayload:
    if not bug.buggy_code:
        raise PromptError(f"bug {bug.id}: buggy_code is empty")
    _unsupported(profile, intermediate)
    code = preprocess_code(bug.buggy_code, profile)
    if profile.style == "chat":
        return _payload("chat", FORWARD_CHAT_PROMPT.format(code=code), counter, system_message=SYSTEM_MESSAGE)
    if profile.style == "infill":
        prefix = DESCRIPTION_TAG
        suffix = COMMENT_CLOSE + code
        return _payload(
            "infill", prefix + profile.infill_token + suffix, counter,
            infill_prefix=prefix, infill_suffix=suffix,
        )
    return _payload("seq2seq", code, counter)


def as_comment(description: str) -> str:
    text = description.strip()
    if text.startswith("/*"):
        return text
    body = "\n".join(f" * {line}".rstrip() for line in text.splitlines() or [""])
    return f"/**\n{body}\n */"


def build_backward_prompt(intermediate_text: str, bug, profile: ModelProfile,
                          intermediate: IntermediateKind,
                          counter: TokenCounter | None = None) -> PromptPayload:
    if not intermediate_text.strip():
        raise PromptError(f"bug {bug.id}: intermediate text is empty")
    _unsupported(profile, intermediate)
    signature = bug.function_signature
    if intermediate.kind == "pl":
        return _payload("seq2seq", preprocess_code(intermediate_text, profile), counter)
    if profile.style == "chat":
        description = f"{as_comment(intermediate_text)}\n{signature}"
        return _payload(
            "chat", BACKWARD_CHAT_PROMPT.format(description=description), counter,
            system_message=SYSTEM_MESSAGE,
        )
    if profile.style == "infill":
        text = f"{DESCRIPTION_TAG}{intermediate_text.strip()}{COMMENT_CLOSE}{signature}"
        if profile.file_header:
            text = f"{profile.file_header}\n{text}"
        return _payload("infill", text, counter, infill_prefix=text, infill_suffix="")
    text = preprocess_code(f"{intermediate_text.strip()}\n{signature}", profile)
    return _payload("seq2seq", text, counter)


def fits_context(profile: ModelProfile, payload: PromptPayload, reserve_output: int | None = None) -> bool:
    """True iff the prompt plus reserved output room fits the context window."""
    if reserve_output is None:
        reserve_output = profile.backward_params.max_new_tokens
    if reserve_output < 0:
        raise ValueError("reserve_output must be >= 0")
    return payload.approx_token_count + reserve_output <= profile.context_window
