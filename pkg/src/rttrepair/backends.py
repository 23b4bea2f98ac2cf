"""Generation backends.

Every backend exposes ``generate(profile, prompt, params) -> GenerationResult``.
Three are provided:

* :class:`ScriptedBackend` - deterministic responses from a script or callable.
* :class:`ToyBackend` - samples from a :class:`ToyChannelModel`, an explicit
  autoregressive conditional table small enough to enumerate exactly.
* :class:`OpenAIChatBackend` - an OpenAI-compatible ``/v1/chat/completions``
  client with transcript recording (replayable via :class:`ReplayBackend`).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import random
import re
import threading
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

EOS = "</s>"


class BackendError(Exception):
    pass


class BackendUnreachable(BackendError):
    """Transport failure; retrying may help."""


class ContextOverflow(BackendError):
    """The prompt does not fit the profile's context window."""


class MalformedResponse(BackendError):
    pass


class ToyModelError(ValueError):
    pass


class UnknownToken(ToyModelError):
    pass


class MissingContext(ToyModelError):
    pass


class EnumerationBoundExceeded(ToyModelError):
    pass


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    top_p: float = 1.0
    num_beams: int = 1
    num_samples: int = 1
    max_new_tokens: int = 256
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.num_beams < 1 or self.num_samples < 1 or self.max_new_tokens < 1:
            raise ValueError("num_beams, num_samples and max_new_tokens must be positive")
        if self.num_beams > 1 and self.num_samples > self.num_beams:
            raise ValueError(
                f"num_samples ({self.num_samples}) exceeds num_beams ({self.num_beams})"
            )
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SamplingParams":
        return SamplingParams(**{**asdict(self), **changes})


STYLES = ("chat", "infill", "seq2seq")


@dataclass(frozen=True)
class ModelProfile:
    name: str
    style: str
    context_window: int
    forward_params: SamplingParams = field(default_factory=SamplingParams)
    backward_params: SamplingParams = field(default_factory=SamplingParams)
    banned_words: tuple[str, ...] = ()
    seedable: bool = True
    file_header: Optional[str] = None
    strip_newlines: bool = False
    remote_model: Optional[str] = None
    infill_token: str = "<INFILL>"
    # word -> vendor token ids, used for logit_bias on remote endpoints
    banned_token_ids: Mapping[str, Sequence[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.context_window <= 0:
            raise ValueError("context_window must be positive")
        if any(not w for w in self.banned_words):
            raise ValueError("banned_words entries must be non-empty")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelProfile":
        data = dict(data)
        for leg in ("forward_params", "backward_params"):
            if leg in data:
                data[leg] = SamplingParams(**data[leg])
        data["banned_words"] = tuple(data.get("banned_words", ()))
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["banned_words"] = list(self.banned_words)
        out["banned_token_ids"] = {k: list(v) for k, v in self.banned_token_ids.items()}
        return out


PROFILE_DIR = Path(__file__).parent / "profiles"


def bundled_profiles() -> list[str]:
    return sorted(p.stem for p in PROFILE_DIR.glob("*.json"))


def load_profile(name_or_path: str | os.PathLike) -> ModelProfile:
    """Load a bundled profile by name, or any profile JSON file by path."""
    path = Path(name_or_path)
    if not path.exists() and str(name_or_path) in bundled_profiles():
        path = PROFILE_DIR / f"{name_or_path}.json"
    if not path.exists():
        raise FileNotFoundError(
            f"no model profile {name_or_path!r}; bundled: {', '.join(bundled_profiles())}"
        )
    return ModelProfile.from_dict(json.loads(path.read_text()))


@dataclass
class GenerationResult:
    samples: list[str]
    token_counts: list[int]
    backend_name: str


def _check_count(result: GenerationResult, params: SamplingParams) -> GenerationResult:
    if len(result.samples) != params.num_samples:
        raise MalformedResponse(
            f"{result.backend_name}: expected {params.num_samples} samples, "
            f"got {len(result.samples)}"
        )
    return result


def _approx_tokens(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


def _mask_banned(text: str, banned: Sequence[str]) -> str:
    for word in banned:
        text = re.sub(rf"\b{re.escape(word)}\b", "", text)
    return text


class Backend:
    name = "backend"

    def generate(self, profile: ModelProfile, prompt, params: SamplingParams) -> GenerationResult:
        raise NotImplementedError


# --------------------------------------------------------------------------
# Scripted backend


Responder = Callable[[Any, SamplingParams, int], Sequence[str]]


class ScriptedBackend(Backend):
    """Deterministic mock.

    ``script`` is either a constant string, a callable
    ``(prompt, params, call_index) -> list[str]`` returning exactly
    ``params.num_samples`` outputs, or a rule list as loaded by
    :meth:`from_file`.
    """

    name = "scripted"

    def __init__(self, script: str | Responder | Sequence[Mapping[str, Any]], default: str = ""):
        self._script = script
        self._default = default
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text())
        return cls(data["rules"], default=data.get("default", ""))

    def _from_rules(self, prompt, params: SamplingParams) -> list[str]:
        text = _prompt_text(prompt)
        for rule in self._script:
            if rule["match"] in text:
                outputs = list(rule["outputs"])
                break
        else:
            outputs = [self._default]
        return [outputs[i % len(outputs)] for i in range(params.num_samples)]

    def generate(self, profile, prompt, params):
        with self._lock:
            index = self.calls
            self.calls += 1
        if isinstance(self._script, str):
            samples = [self._script] * params.num_samples
        elif callable(self._script):
            samples = list(self._script(prompt, params, index))
        else:
            samples = self._from_rules(prompt, params)
        samples = [_mask_banned(s, profile.banned_words) for s in samples]
        result = GenerationResult(samples, [_approx_tokens(s) for s in samples], self.name)
        return _check_count(result, params)


def _prompt_text(prompt) -> str:
    if isinstance(prompt, str):
        return prompt
    parts = [prompt.system_message, prompt.user_text, prompt.infill_prefix, prompt.infill_suffix]
    return "\n".join(p for p in parts if p)


# --------------------------------------------------------------------------
# Toy channel model


Context = tuple[tuple[str, ...], tuple[str, ...]]


@dataclass
class ToyChannelModel:
    """Autoregressive translation model given as an explicit conditional table.

    ``conditional_table[(source, prefix)]`` is the next-token distribution
    after ``prefix`` when translating ``source``. Any ``Mapping`` works, so
    lazily computed tables (see :class:`ConstantTable`, :class:`CopyChannelTable`)
    can stand in for huge explicit ones. Generation stops at ``eos`` or
    after ``max_length`` tokens.
    """

    vocabulary: tuple[str, ...]
    conditional_table: Mapping[Context, Mapping[str, float]]
    max_length: int
    eos: str = EOS

    def __post_init__(self):
        self.vocabulary = tuple(self.vocabulary)
        if self.eos not in self.vocabulary:
            raise ToyModelError("vocabulary must contain the end-of-sequence token")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ToyModelError("vocabulary tokens must be unique")
        if self.max_length < 1:
            raise ToyModelError("max_length must be positive")
        if isinstance(self.conditional_table, dict):
            for key, dist in self.conditional_table.items():
                self._check_distribution(key, dist)

    def _check_distribution(self, key, dist: Mapping[str, float]) -> None:
        unknown = set(dist) - set(self.vocabulary)
        if unknown:
            raise UnknownToken(f"context {key}: tokens {sorted(unknown)} not in vocabulary")
        if any(p < 0 for p in dist.values()):
            raise ToyModelError(f"context {key}: negative probability")
        total = math.fsum(dist.values())
        if abs(total - 1.0) > 1e-12:
            raise ToyModelError(f"context {key}: distribution sums to {total!r}")

    def distribution(self, source: Sequence[str], prefix: Sequence[str]) -> dict[str, float]:
        key = (tuple(source), tuple(prefix))
        try:
            dist = self.conditional_table[key]
        except KeyError:
            raise MissingContext(f"no distribution for context {key}") from None
        if not isinstance(self.conditional_table, dict):
            self._check_distribution(key, dist)
        return dict(dist)

    def is_terminal(self, seq: Sequence[str]) -> bool:
        return (len(seq) > 0 and seq[-1] == self.eos) or len(seq) >= self.max_length

    def strip_eos(self, seq: Sequence[str]) -> tuple[str, ...]:
        seq = tuple(seq)
        return seq[:-1] if seq and seq[-1] == self.eos else seq


class ConstantTable(Mapping):
    """Same next-token distribution for every context."""

    def __init__(self, dist: Mapping[str, float]):
        self._dist = dict(dist)

    def __getitem__(self, key):
        return self._dist

    def __iter__(self):
        return iter(())

    def __len__(self):
        return 0


class CopyChannelTable(Mapping):
    """Noisy copy channel: reproduce the source token by token.

    At step ``i`` the source token is kept with probability ``1 - noise``;
    the remaining mass is split evenly over ``substitutions[token]``. Once
    the source is exhausted, EOS is emitted.
    """

    def __init__(self, substitutions: Mapping[str, Sequence[str]], noise: float, eos: str = EOS):
        self.substitutions = substitutions
        self.noise = noise
        self.eos = eos

    def __getitem__(self, key):
        source, prefix = key
        i = len(prefix)
        if i >= len(source):
            return {self.eos: 1.0}
        token = source[i]
        alts = [a for a in self.substitutions.get(token, ()) if a != token]
        if not alts or self.noise == 0:
            return {token: 1.0}
        dist = {token: 1.0 - self.noise}
        for alt in alts:
            dist[alt] = dist.get(alt, 0.0) + self.noise / len(alts)
        return dist

    def __iter__(self):
        return iter(())

    def __len__(self):
        return 0


def toy_sequence_probability(model: ToyChannelModel, source: Sequence[str], target: Sequence[str]) -> float:
    """Product of stepwise conditionals P(target_i | source, target_<i)."""
    target = tuple(target)
    vocab = set(model.vocabulary)
    for tok in itertools.chain(source, target):
        if tok not in vocab:
            raise UnknownToken(f"token {tok!r} not in vocabulary")
    if not model.is_terminal(target) or model.eos in target[:-1] or len(target) > model.max_length:
        raise ToyModelError(f"target {target} is not a terminated sequence")
    prob = 1.0
    for i, tok in enumerate(target):
        prob *= model.distribution(source, target[:i]).get(tok, 0.0)
        if prob == 0.0:
            return 0.0
    return prob


def toy_target_distribution(
    model: ToyChannelModel, source: Sequence[str], cap: int = 1_000_000
) -> dict[tuple[str, ...], float]:
    """All terminating targets with nonzero probability, by depth-first expansion."""
    out: dict[tuple[str, ...], float] = {}
    visited = 0
    stack: list[tuple[tuple[str, ...], float]] = [((), 1.0)]
    source = tuple(source)
    while stack:
        prefix, prob = stack.pop()
        visited += 1
        if visited > cap:
            raise EnumerationBoundExceeded(
                f"more than {cap} prefixes; shrink the vocabulary or max_length"
            )
        if model.is_terminal(prefix):
            out[prefix] = out.get(prefix, 0.0) + prob
            continue
        for tok, p in model.distribution(source, prefix).items():
            if p > 0:
                stack.append((prefix + (tok,), prob * p))
    return out


def toy_roundtrip_distribution(
    forward: ToyChannelModel,
    backward: ToyChannelModel,
    source: Sequence[str],
    cap: int = 1_000_000,
) -> dict[tuple[str, ...], float]:
    """P(candidate) = sum over intermediates r of P(candidate | r) * P(r).

    Intermediates are fed to the backward model without their EOS marker.
    """
    result: dict[tuple[str, ...], float] = {}
    for r, p_r in toy_target_distribution(forward, source, cap).items():
        for cand, p_c in toy_target_distribution(backward, forward.strip_eos(r), cap).items():
            result[cand] = result.get(cand, 0.0) + p_c * p_r
    return result


def _adjust(dist: Mapping[str, float], params: SamplingParams, banned: set[str], order: Sequence[str]):
    """Mask banned tokens, apply temperature and nucleus filtering.

    Returns ``(tokens, probs)`` in vocabulary order, or a single greedy
    token when temperature is 0.
    """
    items = [(t, dist.get(t, 0.0)) for t in order if dist.get(t, 0.0) > 0 and t not in banned]
    if not items:
        raise ToyModelError("all tokens masked at this step")
    if params.temperature == 0:
        best = max(p for _, p in items)
        return [min(t for t, p in items if p == best)], [1.0]
    if params.temperature != 1.0:
        logs = [math.log(p) / params.temperature for _, p in items]
        top = max(logs)
        weights = [math.exp(v - top) for v in logs]
    else:
        weights = [p for _, p in items]
    total = math.fsum(weights)
    items = [(t, w / total) for (t, _), w in zip(items, weights)]
    if params.top_p < 1.0:
        ranked = sorted(items, key=lambda tp: (-tp[1], tp[0]))
        kept, cum = [], 0.0
        for t, p in ranked:
            kept.append(t)
            cum += p
            if cum >= params.top_p - 1e-12:
                break
        keep = set(kept)
        items = [(t, p) for t, p in items if t in keep]
        total = math.fsum(p for _, p in items)
        items = [(t, p / total) for t, p in items]
    return [t for t, _ in items], [p for _, p in items]


def toy_sample(
    model: ToyChannelModel,
    source: Sequence[str],
    params: SamplingParams,
    banned: Sequence[str] = (),
) -> list[tuple[str, ...]]:
    """Draw ``num_samples`` targets (or beam-search when ``num_beams > 1``)."""
    banned_set = set(banned) - {model.eos}
    limit = min(model.max_length, params.max_new_tokens)
    if params.num_beams > 1:
        return _beam_search(model, source, params, banned_set, limit)
    rng = random.Random(params.seed)
    out = []
    for _ in range(params.num_samples):
        seq: tuple[str, ...] = ()
        while not model.is_terminal(seq) and len(seq) < limit:
            toks, probs = _adjust(model.distribution(source, seq), params, banned_set, model.vocabulary)
            u = rng.random()
            cum = 0.0
            choice = toks[-1]
            for t, p in zip(toks, probs):
                cum += p
                if u < cum:
                    choice = t
                    break
            seq += (choice,)
        out.append(seq)
    return out


def _beam_search(model, source, params, banned, limit) -> list[tuple[str, ...]]:
    greedy = params.replace(temperature=1.0, top_p=1.0)
    beams: list[tuple[tuple[str, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[str, ...], float]] = []

    def score(item):
        seq, logp = item
        return logp / max(len(seq), 1)

    while beams:
        expanded = []
        for seq, logp in beams:
            toks, probs = _adjust(model.distribution(source, seq), greedy, banned, model.vocabulary)
            for t, p in zip(toks, probs):
                expanded.append((seq + (t,), logp + math.log(p)))
        expanded.sort(key=lambda it: (-score(it), it[0]))
        beams = []
        for seq, logp in expanded[: params.num_beams]:
            if model.is_terminal(seq) or len(seq) >= limit:
                finished.append((seq, logp))
            else:
                beams.append((seq, logp))
        if len(finished) >= params.num_beams:
            break
    finished.sort(key=lambda it: (-score(it), it[0]))
    top = [seq for seq, _ in finished[: params.num_samples]]
    while len(top) < params.num_samples:
        top.append(top[len(top) % max(len(finished), 1)] if finished else ())
    return top


def _extract_source(prompt) -> str:
    text = _prompt_text(prompt) if not isinstance(prompt, str) else prompt
    fenced = re.findall(r"```(.*?)```", text, flags=re.S)
    if fenced:
        return fenced[-1]
    if not isinstance(prompt, str) and prompt.style == "infill" and prompt.infill_suffix:
        return prompt.infill_suffix
    return text


# Operator/literal confusions a code model might "correct" toward.
DEFAULT_SUBSTITUTIONS: dict[str, tuple[str, ...]] = {
    "<": ("<=",), "<=": ("<",), ">": (">=",), ">=": (">",),
    "+": ("-",), "-": ("+",), "0": ("1",), "1": ("0",),
    "==": ("!=",), "!=": ("==",), "&&": ("||",), "||": ("&&",),
}


class ToyBackend(Backend):
    """Seedable backend sampling a noisy copy channel over code tokens.

    The source is the fenced code block of the prompt (or the whole user
    text), tokenized with the metric lexer; samples are detokenized with
    single spaces.
    """

    name = "toy"

    def __init__(self, noise: float = 0.1, substitutions: Mapping[str, Sequence[str]] | None = None):
        self.noise = noise
        self.substitutions = dict(DEFAULT_SUBSTITUTIONS if substitutions is None else substitutions)
        self.calls = 0
        self._lock = threading.Lock()

    def model_for(self, source: Sequence[str]) -> ToyChannelModel:
        vocab = set(source) | {EOS}
        for tok in source:
            vocab.update(self.substitutions.get(tok, ()))
        return ToyChannelModel(
            vocabulary=tuple(sorted(vocab)),
            conditional_table=CopyChannelTable(self.substitutions, self.noise),
            max_length=len(source) + 1,
        )

    def generate(self, profile, prompt, params):
        from .metrics.tokenize import tokenize_code

        with self._lock:
            self.calls += 1
        source = tuple(tokenize_code(_extract_source(prompt)))
        model = self.model_for(source)
        seqs = toy_sample(model, source, params, profile.banned_words)
        samples = [" ".join(model.strip_eos(s)) for s in seqs]
        return _check_count(
            GenerationResult(samples, [len(model.strip_eos(s)) for s in seqs], self.name), params
        )


# --------------------------------------------------------------------------
# Remote OpenAI-compatible backend


def _payload_messages(prompt) -> list[dict[str, str]]:
    if prompt.style == "chat":
        return [
            {"role": "system", "content": prompt.system_message or ""},
            {"role": "user", "content": prompt.user_text},
        ]
    return [{"role": "user", "content": prompt.user_text}]


class TranscriptWriter:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def write(self, request: Mapping, response: Mapping) -> None:
        line = json.dumps({"request": request, "response": response}, sort_keys=True)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def request_key(request: Mapping) -> str:
    blob = json.dumps(request, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class OpenAIChatBackend(Backend):
    """Client for ``POST {base_url}/v1/chat/completions``.

    The API key comes from ``RTT_API_KEY``. At most ``max_in_flight``
    requests are outstanding at once. Every exchange is appended to the
    transcript file when one is configured.
    """

    name = "openai"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        transcript: str | os.PathLike | None = None,
        max_in_flight: int = 4,
        timeout: float = 120.0,
        retries: int = 0,
        transport=None,
    ):
        import httpx

        self.base_url = (base_url or os.environ.get("RTT_BASE_URL", "https://api.openai.com")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("RTT_API_KEY", "")
        self.transcript = TranscriptWriter(transcript) if transcript else None
        self.retries = retries
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self.calls = 0

    def build_request(self, profile: ModelProfile, prompt, params: SamplingParams) -> dict:
        if prompt.approx_token_count + params.max_new_tokens > profile.context_window:
            raise ContextOverflow(
                f"{profile.name}: prompt of ~{prompt.approx_token_count} tokens plus "
                f"{params.max_new_tokens} output tokens exceeds window {profile.context_window}"
            )
        body: dict[str, Any] = {
            "model": profile.remote_model or profile.name,
            "messages": _payload_messages(prompt),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": params.num_samples,
            "max_tokens": params.max_new_tokens,
        }
        bias = {
            str(tid): -100
            for word in profile.banned_words
            for tid in profile.banned_token_ids.get(word, ())
        }
        if bias:
            body["logit_bias"] = bias
        if profile.seedable and params.seed is not None:
            body["seed"] = params.seed
        return body

    def _post(self, body: dict) -> dict:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        url = f"{self.base_url}/v1/chat/completions"
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._sem:
                    resp = self._client.post(url, json=body, headers=headers)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(2**attempt)
            except ValueError as exc:
                raise MalformedResponse(f"response is not JSON: {exc}") from exc
        raise BackendUnreachable(f"{url}: {last}") from last

    def generate(self, profile, prompt, params):
        body = self.build_request(profile, prompt, params)
        self.calls += 1
        data = self._post(body)
        if self.transcript:
            self.transcript.write(body, data)
        return _parse_choices(data, params, self.name, profile.banned_words)


def _parse_choices(data: Mapping, params: SamplingParams, name: str, banned) -> GenerationResult:
    try:
        choices = data["choices"]
        samples = [c["message"]["content"] or "" for c in choices]
    except (KeyError, TypeError) as exc:
        raise MalformedResponse(f"payload missing choices: {exc!r}") from exc
    samples = [_mask_banned(s, banned) for s in samples]
    usage = data.get("usage") or {}
    counts = [_approx_tokens(s) for s in samples]
    if "completion_tokens" in usage and len(samples) == 1:
        counts = [int(usage["completion_tokens"])]
    return _check_count(GenerationResult(samples, counts, name), params)


class ReplayBackend(Backend):
    """Answer requests from a transcript recorded by :class:`OpenAIChatBackend`."""

    name = "replay"

    def __init__(self, transcript: str | os.PathLike, request_builder: OpenAIChatBackend | None = None):
        self._responses: dict[str, Mapping] = {}
        for line in Path(transcript).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                self._responses[request_key(rec["request"])] = rec["response"]
        self._builder = request_builder or OpenAIChatBackend(api_key="")
        self.calls = 0

    def generate(self, profile, prompt, params):
        body = self._builder.build_request(profile, prompt, params)
        self.calls += 1
        try:
            data = self._responses[request_key(body)]
        except KeyError:
            raise BackendUnreachable("request not present in transcript") from None
        return _parse_choices(data, params, self.name, profile.banned_words)
