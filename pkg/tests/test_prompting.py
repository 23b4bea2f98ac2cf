from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rttrepair.backends import ModelProfile, SamplingParams, load_profile
from rttrepair.prompting import (
    BACKWARD_CHAT_PROMPT,
    FORWARD_CHAT_PROMPT,
    SYSTEM_MESSAGE,
    IntermediateKind,
    PromptError,
    PromptPayload,
    approx_token_count,
    build_backward_prompt,
    build_forward_prompt,
    fits_context,
    preprocess_code,
)

NL = IntermediateKind.parse("nl:english")
PL = IntermediateKind.parse("pl:python")

JAVA_BUG = SimpleNamespace(
    id="bitcount",
    buggy_code="public static int bitcount(int n) {\n    int count = 0;\n    while (n != 0) {\n        n = (n ^ (n - 1));\n        count++;\n    }\n    return count;\n}",
    function_signature="public static int bitcount(int n)",
)

GOLDEN_SYSTEM = "You are an expert programmer in all programming languages."
GOLDEN_FORWARD = (
    "Create a Javadoc for the Java function delimited by triple backquotes. Do not return generate the "
    "method again, return only the Javadoc. Java function: ```{code}```"
)
GOLDEN_BACKWARD = (
    "Given the signature of a Java function and its Javadoc delimited by triple backquotes, generate the "
    "body of the function. Do not generate any additional methods nor repeat the Javadoc nor give any "
    "explanations. Return only the completed function without any comments.```{description}```"
)


def test_golden_templates():
    assert SYSTEM_MESSAGE == GOLDEN_SYSTEM
    assert FORWARD_CHAT_PROMPT == GOLDEN_FORWARD
    assert BACKWARD_CHAT_PROMPT == GOLDEN_BACKWARD


def test_chat_forward_byte_exact():
    p = build_forward_prompt(JAVA_BUG, load_profile("gpt-4"), NL)
    assert p.system_message == GOLDEN_SYSTEM
    assert p.user_text == GOLDEN_FORWARD.replace("{code}", JAVA_BUG.buggy_code)
    assert p.infill_prefix is None and p.infill_suffix is None
    assert p.approx_token_count == approx_token_count(p.user_text) + approx_token_count(GOLDEN_SYSTEM)


def test_chat_backward_byte_exact():
    p = build_backward_prompt("Counts set bits.", JAVA_BUG, load_profile("gpt-4"), NL)
    description = "/**\n * Counts set bits.\n */\npublic static int bitcount(int n)"
    assert p.user_text == GOLDEN_BACKWARD.replace("{description}", description)
    assert p.system_message == GOLDEN_SYSTEM


def test_chat_backward_keeps_existing_javadoc():
    javadoc = "/**\n * Counts set bits.\n * @param n value\n */"
    p = build_backward_prompt(javadoc, JAVA_BUG, load_profile("gpt-3.5"), NL)
    assert f"```{javadoc}\n{JAVA_BUG.function_signature}```" in p.user_text


def test_infill_forward():
    prof = load_profile("santacoder")
    p = build_forward_prompt(JAVA_BUG, prof, NL)
    assert p.infill_prefix == "/* @description "
    assert "@description" in p.infill_prefix
    assert p.infill_suffix == "\n*/\n" + JAVA_BUG.buggy_code
    assert p.infill_suffix.endswith(JAVA_BUG.buggy_code)
    assert p.user_text == "/* @description " + prof.infill_token + "\n*/\n" + JAVA_BUG.buggy_code


def test_infill_backward_with_file_header():
    p = build_backward_prompt("counts the set bits", JAVA_BUG, load_profile("incoder-1b"), NL)
    expected = "<| file ext=.java |>\n/* @description counts the set bits\n*/\npublic static int bitcount(int n)"
    assert p.user_text == expected
    assert p.user_text.splitlines()[0] == "<| file ext=.java |>"
    assert p.infill_prefix == expected and p.infill_suffix == ""


def test_infill_backward_without_header():
    p = build_backward_prompt("counts bits", JAVA_BUG, load_profile("starcoderbase"), NL)
    assert p.user_text.startswith("/* @description counts bits")


@pytest.mark.parametrize("profile", ["gpt-4", "santacoder", "incoder-6b", "plbart"])
def test_nl_backward_signature_trails_exactly_once(profile):
    bug = SimpleNamespace(id="f", buggy_code="int f(int x) { return x; }", function_signature="int f(int x)")
    p = build_backward_prompt("returns x", bug, load_profile(profile), NL)
    text = p.user_text.removesuffix("```")
    assert text.count("int f(int x)") == 1
    assert text.endswith("int f(int x)")


def test_pl_route_passthrough_and_style_gate():
    prof = load_profile("transcoder")
    code = "def bitcount(n): return bin(n).count('1')"
    p = build_backward_prompt(code, JAVA_BUG, prof, PL)
    assert p.user_text == code and p.style == "seq2seq"
    with pytest.raises(PromptError):
        build_forward_prompt(JAVA_BUG, load_profile("gpt-4"), PL)
    with pytest.raises(PromptError):
        build_forward_prompt(JAVA_BUG, load_profile("santacoder"), PL)


def test_seq2seq_forward_strips_newlines():
    prof = load_profile("plbart")
    assert preprocess_code("a\nb", prof) == "a b"
    p = build_forward_prompt(JAVA_BUG, prof, NL)
    assert "\n" not in p.user_text and p.system_message is None
    assert preprocess_code("a\nb", load_profile("gpt-4")) == "a\nb"


def test_empty_inputs_rejected():
    empty = SimpleNamespace(id="e", buggy_code="", function_signature="")
    with pytest.raises(PromptError):
        build_forward_prompt(empty, load_profile("gpt-4"), NL)
    with pytest.raises(PromptError):
        build_backward_prompt("  ", JAVA_BUG, load_profile("gpt-4"), NL)


def test_payload_style_invariants():
    with pytest.raises(PromptError):
        PromptPayload("chat", "x")
    with pytest.raises(PromptError):
        PromptPayload("infill", "x", infill_prefix="a")
    with pytest.raises(PromptError):
        PromptPayload("seq2seq", "x", system_message="s")


def test_intermediate_kind_parse():
    assert IntermediateKind.parse("pl:c#").name == "c#"
    assert str(NL) == "nl:english"
    for bad in ("english", "xx:yy", "nl:"):
        with pytest.raises(PromptError):
            IntermediateKind.parse(bad)


def payload(tokens):
    return PromptPayload("seq2seq", "x", approx_token_count=tokens)


def test_fits_context_examples():
    prof = ModelProfile("m", "seq2seq", 100)
    assert fits_context(prof, payload(40), 50)
    assert not fits_context(prof, payload(80), 50)
    assert fits_context(prof, payload(50), 50)
    with pytest.raises(ValueError):
        fits_context(prof, payload(1), -1)


def test_fits_context_default_reserve_is_backward_budget():
    prof = ModelProfile("m", "seq2seq", 100, backward_params=SamplingParams(max_new_tokens=60))
    assert fits_context(prof, payload(40)) and not fits_context(prof, payload(41))


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 300))
def test_skip_monotonicity(tokens, extra, reserve):
    prof = ModelProfile("m", "seq2seq", 400)
    if not fits_context(prof, payload(tokens), reserve):
        assert not fits_context(prof, payload(tokens + extra + 1), reserve)


@given(st.text(max_size=200))
def test_prompt_idempotent(code):
    bug = SimpleNamespace(id="b", buggy_code=code or "x", function_signature="x")
    for name in ("gpt-4", "santacoder", "plbart"):
        prof = load_profile(name)
        assert build_forward_prompt(bug, prof, NL) == build_forward_prompt(bug, prof, NL)
