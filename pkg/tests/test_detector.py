"""Pattern detector: verdicts, spans, category disambiguation."""

import pytest

from promptgate.detector import (
    Entity,
    PatternDetector,
    Safety,
    Verdict,
    detect,
    entity_slice,
)
from promptgate.errors import SpanMismatch, UnsupportedCategory
from promptgate.policy import Category, PolicyCatalog, default_taxonomy

TABLE_MESSAGE = (
    "Summarize this contract: Contract with Company A ... Fund value $150,000 "
    "... contact the customer at customer@gmail.com"
)


@pytest.fixture(scope="module")
def det():
    return PatternDetector(default_taxonomy())


def test_contract_message(det):
    v = det.detect(TABLE_MESSAGE)
    assert v.safety is Safety.UNSAFE
    assert v.categories == {"T1", "T6"}
    assert v.entity_texts() == ["150,000", "customer@gmail.com"]


def test_safe_message(det):
    v = det.detect("Summarize the quarterly report structure.")
    assert v.safety is Safety.SAFE
    assert not v.categories and not v.entities


def test_phone(det):
    v = det.detect("call +853-3406-2802")
    assert v.categories == {"T3"}
    assert v.entity_texts() == ["+853-3406-2802"]


def test_fax_cue_wins_over_phone(det):
    v = det.detect("send it by fax (853) 3406-2802 today")
    assert v.categories == {"T4"}
    v2 = det.detect("call me at (853) 3406-2802 today")
    assert v2.categories == {"T3"}


def test_match_category_fax(det):
    matches = det.match_category("fax (853) 3406-2802", "T4")
    assert [m.text for m in matches] == ["(853) 3406-2802"]


def test_match_category_empty(det):
    assert det.match_category("no numbers here", "T3") == []


def test_match_category_iban(det):
    matches = det.match_category("IBAN DE89370400440532013000", "T5")
    assert [m.text for m in matches] == ["DE89370400440532013000"]


def test_account_cue_digit_run(det):
    v = det.detect("Payroll account 94827163550 needs review.")
    assert v.categories == {"T5"}
    assert v.entity_texts() == ["94827163550"]


def test_bare_digit_run_without_cue_is_not_bank(det):
    v = det.detect("Reference 94827163550 was archived.")
    assert "T5" not in v.categories


def test_personal_id_spaced_and_hyphenated(det):
    assert det.detect("ID reads B 987 654 3 here").categories == {"T2"}
    assert det.detect("case 983-4012-949CN closed").categories == {"T2"}


def test_rft_example_combined(det):
    v = det.detect("Record 983-4012-949CN, dial +853-3406-2844, totals 875,500 and 124,500.")
    assert v.categories == {"T2", "T3", "T6"}
    assert v.entity_texts() == ["983-4012-949CN", "+853-3406-2844", "875,500", "124,500"]


def test_longer_span_wins(det):
    # the trailing letters extend the ID span past the phone-shaped prefix
    v = det.detect("ref 983-4012-949CN noted")
    assert v.categories == {"T2"}
    assert v.entity_texts() == ["983-4012-949CN"]


def test_spans_are_byte_offsets(det):
    prompt = "fondo € 1,452,500 disponible"
    v = det.detect(prompt)
    assert v.entity_texts() == ["1,452,500"]
    e = v.entities[0]
    raw = prompt.encode("utf-8")
    assert raw[e.start:e.end].decode("utf-8") == "1,452,500"
    assert entity_slice(raw, e) == "1,452,500"


def test_entity_slice_mismatch_raises():
    with pytest.raises(SpanMismatch):
        entity_slice(b"abcdef", Entity("T1", "zz", 0, 2))


def test_unsupported_category():
    catalog = PolicyCatalog(
        categories=(Category("T9", "Custom Thing", "No pattern for this."),)
    )
    with pytest.raises(UnsupportedCategory):
        detect("anything", catalog)


def test_custom_pattern_override():
    catalog = PolicyCatalog(
        categories=(
            Category("T9", "Ticket ID", "Internal ticket identifiers.", pattern=r"TCK-\d{4}"),
        )
    )
    v = detect("escalate TCK-5521 now", catalog)
    assert v.categories == {"T9"}
    assert v.entity_texts() == ["TCK-5521"]


def test_verdict_invariants_enforced():
    with pytest.raises(SpanMismatch):
        Verdict(Safety.SAFE, frozenset({"T1"}), ())
    with pytest.raises(SpanMismatch):
        Verdict(Safety.UNSAFE, frozenset(), ())
    with pytest.raises(SpanMismatch):
        Verdict(
            Safety.UNSAFE,
            frozenset({"T1"}),
            (Entity("T1", "a@b.co", 0, 6), Entity("T1", "b.co", 2, 6)),
        )


def test_detect_deterministic(det):
    a = det.detect(TABLE_MESSAGE)
    b = det.detect(TABLE_MESSAGE)
    assert a == b


def test_injection_soundness(det):
    # any generated entity dropped into a clean carrier at a token boundary
    # must be detected with its exact string and category
    import random

    from promptgate.dataset import SAFE_TEMPLATES, _make_entity

    rng = random.Random(606)
    for _ in range(500):
        code = rng.choice(["T1", "T2", "T3", "T5", "T6"])
        entity, group = _make_entity(rng, code)
        # digit-run bank accounts are only sensitive next to their cue word
        token = f"account {entity}" if group == "T5-digits" else entity
        base = rng.choice(SAFE_TEMPLATES)
        words = base.split(" ")
        cut = rng.randint(0, len(words))
        prompt = " ".join(words[:cut] + [token] + words[cut:])
        verdict = det.detect(prompt)
        assert verdict.safety is Safety.UNSAFE, prompt
        assert code in verdict.categories, (prompt, verdict)
        assert entity in verdict.entity_texts(), (prompt, verdict)


def test_injection_soundness_fax_cue(det):
    import random

    from promptgate.dataset import _make_entity

    rng = random.Random(707)
    for _ in range(200):
        entity, _ = _make_entity(rng, "T4")
        prompt = f"Please send it by fax {entity} soon."
        verdict = det.detect(prompt)
        assert verdict.categories == {"T4"}
        assert verdict.entity_texts() == [entity]
