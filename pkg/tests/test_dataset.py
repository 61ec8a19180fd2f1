"""Sample validation, RFT conversion, and the synthetic corpus closed loop."""

import json

import pytest

from promptgate.dataset import (
    SftSample,
    convert_sft_to_rft,
    default_counts,
    generate_synthetic_corpus,
    load_sft_dataset,
    save_sft_dataset,
)
from promptgate.detector import PatternDetector
from promptgate.dlms_client import PromptTemplate, TemplateKind
from promptgate.errors import EntityNotInMessage, SchemaError, UnsupportedCategory
from promptgate.policy import default_taxonomy

TABLE_SAMPLE = {
    "message": (
        "Summarize this contract: Contract with Company A ... Fund value $150,000 "
        "... contact the customer at customer@gmail.com"
    ),
    "label": "unsafe",
    "violated_category_codes": ["T1", "T6"],
    "explanation": "customer@gmail.com; 150,000",
}


@pytest.fixture(scope="module")
def catalog():
    return default_taxonomy()


def test_load_table_sample(tmp_path, catalog):
    path = tmp_path / "sft.jsonl"
    path.write_text(json.dumps(TABLE_SAMPLE) + "\n")
    samples = load_sft_dataset(path)
    assert len(samples) == 1
    sample = samples[0]
    assert sample.violated_category_codes == ("T1", "T6")
    assert sample.entities == ["customer@gmail.com", "150,000"]


def test_safe_sample_with_codes_rejected(tmp_path):
    bad = {"message": "m", "label": "safe", "violated_category_codes": ["T1"], "explanation": ""}
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(SchemaError) as err:
        load_sft_dataset(path)
    assert "line 1" in str(err.value)


def test_entity_not_in_message_rejected(tmp_path):
    bad = {
        "message": "no entities here",
        "label": "unsafe",
        "violated_category_codes": ["T1"],
        "explanation": "ghost@nowhere.org",
    }
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(EntityNotInMessage) as err:
        load_sft_dataset(path)
    assert "line 1" in str(err.value)


def test_empty_file_gives_empty_list(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_sft_dataset(path) == []


def test_explanation_canonicalized_on_read():
    sample = SftSample.from_json(
        {
            "message": "pay 150,000 to a@b.co",
            "label": "unsafe",
            "violated_category_codes": ["T1", "T6"],
            "explanation": "a@b.co;150,000 ",
        }
    )
    assert sample.explanation == "a@b.co; 150,000"


def test_save_load_round_trip(tmp_path, catalog):
    corpus = generate_synthetic_corpus(catalog, default_counts(40, catalog), seed=3)
    path = tmp_path / "corpus.jsonl"
    save_sft_dataset(corpus, path)
    assert load_sft_dataset(path) == corpus


def test_convert_sft_to_rft(catalog):
    sample = SftSample.from_json(TABLE_SAMPLE)
    safe = SftSample(message="Summarize the quarterly report structure.", label="safe")
    out = convert_sft_to_rft(
        [sample, safe], catalog, PromptTemplate(TemplateKind.RFT_FEW_SHOT)
    )
    assert len(out) == 2
    first = out[0]
    assert first.ability == "privacy_risk_analysis"
    assert first.reward_model["style"] == "rule"
    truth = first.reward_model["ground_truth"]
    assert truth["safety"] == "unsafe"
    assert truth["categories"] == ["T1", "T6"]
    assert truth["entities"] == "customer@gmail.com; 150,000"
    assert [e.strip() for e in truth["entities"].split(";")] == [
        "customer@gmail.com",
        "150,000",
    ]
    assert sample.message in first.prompt
    assert first.extra_info == {"split": "train", "index": 0}

    second = out[1]
    assert second.reward_model["ground_truth"] == {
        "safety": "safe",
        "categories": [],
        "entities": "",
    }
    assert second.extra_info["index"] == 1


def test_convert_deterministic(catalog):
    samples = generate_synthetic_corpus(catalog, default_counts(20, catalog), seed=1)
    a = convert_sft_to_rft(samples, catalog, PromptTemplate(TemplateKind.RFT_ZERO_SHOT))
    b = convert_sft_to_rft(samples, catalog, PromptTemplate(TemplateKind.RFT_ZERO_SHOT))
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


def test_generate_corpus_counts(catalog):
    counts = {"safe": 670, "T1": 476, "T2": 205, "T3": 214, "T4": 194, "T5": 208, "T6": 344}
    assert sum(counts.values()) == 2311
    corpus = generate_synthetic_corpus(catalog, counts, seed=7)
    assert len(corpus) == 2311
    assert sum(1 for s in corpus if s.label == "safe") == 670
    assert sum(1 for s in corpus if s.label == "unsafe") == 1641


def test_generate_corpus_deterministic(catalog):
    counts = default_counts(100, catalog)
    assert generate_synthetic_corpus(catalog, counts, seed=5) == generate_synthetic_corpus(
        catalog, counts, seed=5
    )
    assert generate_synthetic_corpus(catalog, counts, seed=5) != generate_synthetic_corpus(
        catalog, counts, seed=6
    )


def test_generate_corpus_unknown_category(catalog):
    with pytest.raises(UnsupportedCategory):
        generate_synthetic_corpus(catalog, {"safe": 1, "T99": 5}, seed=1)


def test_default_counts_proportions(catalog):
    counts = default_counts(1000, catalog)
    assert sum(counts.values()) == 1000
    assert counts["safe"] == 290


def test_multi_label_rate(catalog):
    corpus = generate_synthetic_corpus(catalog, default_counts(2000, catalog), seed=11)
    unsafe = [s for s in corpus if s.label == "unsafe"]
    multi = [s for s in unsafe if len(s.violated_category_codes) >= 2]
    rate = len(multi) / len(unsafe)
    assert 0.09 <= rate <= 0.17


def test_entities_verbatim_in_generated_messages(catalog):
    corpus = generate_synthetic_corpus(catalog, default_counts(300, catalog), seed=13)
    for sample in corpus:
        for entity in sample.entities:
            assert entity in sample.message


def test_closed_loop_detector_agreement(catalog):
    det = PatternDetector(catalog)
    corpus = generate_synthetic_corpus(catalog, default_counts(1000, catalog), seed=21)
    disagreements = []
    for sample in corpus:
        verdict = det.detect(sample.message)
        truth = (
            sample.label,
            set(sample.violated_category_codes),
            set(sample.entities),
        )
        got = (
            verdict.safety.value,
            set(verdict.categories),
            set(verdict.entity_texts()),
        )
        if truth != got:
            disagreements.append((sample, verdict))
    # disagreements are emitted for pattern audit before the rate gate
    for sample, verdict in disagreements[:5]:
        print("disagreement:", sample.message, verdict)
    assert len(disagreements) / len(corpus) <= 0.01
