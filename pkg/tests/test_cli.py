"""CLI commands as scriptable surfaces: exit codes, JSON output, round trips."""

import json

import pytest
from click.testing import CliRunner

from promptgate.cli import main
from promptgate.policy import default_taxonomy

TABLE_MESSAGE = (
    "Summarize this contract: Contract with Company A ... Fund value $150,000 "
    "... contact the customer at customer@gmail.com"
)
KEY_HEX = "EF4359D8D580AA4F7F036D6F04FC6A94"
TWEAK_HEX = "D8E7920AFA330A"


@pytest.fixture()
def runner():
    return CliRunner()


def test_scan_table_message(runner):
    result = runner.invoke(main, ["scan", TABLE_MESSAGE])
    assert result.exit_code == 0
    verdict = json.loads(result.output)
    assert verdict["safety"] == "unsafe"
    assert verdict["categories"] == ["T1", "T6"]
    texts = [e["text"] for e in verdict["entities"]]
    assert texts == ["150,000", "customer@gmail.com"]


def test_scan_empty_input_is_safe(runner):
    result = runner.invoke(main, ["scan", ""])
    assert result.exit_code == 0
    assert json.loads(result.output)["safety"] == "safe"


def test_scan_file_input(runner, tmp_path):
    prompt_file = tmp_path / "prompt.txt"
    prompt_file.write_text(TABLE_MESSAGE)
    result = runner.invoke(main, ["scan", "--file", str(prompt_file)])
    assert result.exit_code == 0
    assert json.loads(result.output)["categories"] == ["T1", "T6"]


def test_scan_sft_format_round_trips(runner):
    from promptgate.dlms_client import parse_sft_output

    result = runner.invoke(main, ["scan", TABLE_MESSAGE, "--format", "sft"])
    assert result.exit_code == 0
    parsed = parse_sft_output(result.output, default_taxonomy())
    assert parsed.safety == "unsafe"
    assert parsed.categories == ("T1", "T6")
    assert parsed.entities == ("150,000", "customer@gmail.com")


def test_crypt_round_trip_reference_entities(runner):
    for entity, category in [
        ("tinavang@support.org", "T1"),
        ("B 987 654 3", "T2"),
        ("+86 13945093743", "T3"),
        ("(853) 3406-2802", "T4"),
        ("DE89370400440532013000", "T5"),
        ("1,452,500", "T6"),
    ]:
        enc = runner.invoke(
            main,
            ["crypt", "encrypt", entity, "--category", category,
             "--key-hex", KEY_HEX, "--tweak", TWEAK_HEX],
        )
        assert enc.exit_code == 0, enc.output
        ciphertext = enc.output.rstrip("\n")
        assert ciphertext != entity
        assert len(ciphertext) == len(entity)
        dec = runner.invoke(
            main,
            ["crypt", "decrypt", ciphertext, "--category", category,
             "--key-hex", KEY_HEX, "--tweak", TWEAK_HEX],
        )
        assert dec.exit_code == 0
        assert dec.output.rstrip("\n") == entity


def test_crypt_nist_vector(runner):
    result = runner.invoke(
        main,
        ["crypt", "encrypt", "3992520240", "--profile", "digits",
         "--key-hex", "2DE79D232DF5585D68CE47882AE256D6", "--tweak", "CBD09280979564"],
    )
    assert result.exit_code == 0
    assert result.output.strip() == "8901801106"


def test_crypt_too_short_exits_4(runner):
    result = runner.invoke(
        main,
        ["crypt", "encrypt", "12345", "--profile", "digits",
         "--key-hex", KEY_HEX, "--tweak", TWEAK_HEX],
    )
    assert result.exit_code == 4


def test_crypt_bad_key_exits_3(runner):
    result = runner.invoke(
        main,
        ["crypt", "encrypt", "123456", "--profile", "digits",
         "--key-hex", "abcd", "--tweak", TWEAK_HEX],
    )
    assert result.exit_code == 3


def test_score_stream(runner):
    lines = [
        json.dumps(
            {
                "output": "<analyze>x</analyze><answer>\nunsafe\nT1, T6\ncustomer@gmail.com; 150,000\n</answer>",
                "ground_truth": {
                    "safety": "unsafe",
                    "categories": ["T1", "T6"],
                    "entities": "customer@gmail.com; 150,000",
                },
            }
        ),
        "{broken json",
        json.dumps(
            {
                "output": "<answer>safe</answer><analyze>x</analyze>",
                "ground_truth": {"safety": "safe"},
                "mode": "stage1",
            }
        ),
    ]
    result = runner.invoke(main, ["score"], input="\n".join(lines) + "\n")
    assert result.exit_code == 0
    rows = [json.loads(line) for line in result.output.strip().split("\n")]
    assert rows[0]["r_total"] == 9
    assert "error" in rows[1]
    assert rows[2]["r_fmt"] == 0 and rows[2]["r_safety"] == 1


def test_score_empty_input(runner):
    result = runner.invoke(main, ["score"], input="")
    assert result.exit_code == 0
    assert result.output == ""


def test_score_mode_flag_applies_default(runner):
    line = json.dumps(
        {
            "output": "no tags",
            "ground_truth": {"safety": "unsafe", "categories": ["T1"], "entities": "x"},
        }
    )
    result = runner.invoke(main, ["score", "--mode", "stage1"], input=line + "\n")
    row = json.loads(result.output)
    assert row["r_fmt"] == 0
    assert row["r_total"] == -1


def test_gen_data_counts_and_determinism(runner, tmp_path):
    args = ["gen-data", "--counts", '{"safe": 6, "T1": 8, "T6": 6}', "--seed", "5"]
    a = runner.invoke(main, args)
    b = runner.invoke(main, args)
    assert a.exit_code == 0
    assert a.output == b.output
    rows = [json.loads(line) for line in a.output.strip().split("\n")]
    assert len(rows) == 20
    assert sum(1 for r in rows if r["label"] == "safe") == 6


def test_gen_data_unknown_category_fails(runner):
    result = runner.invoke(main, ["gen-data", "--counts", '{"T99": 3}'])
    assert result.exit_code == 2


def test_gen_data_rft_shape(runner):
    result = runner.invoke(
        main, ["gen-data", "--counts", '{"T1": 2}', "--seed", "1", "--rft"]
    )
    assert result.exit_code == 0
    row = json.loads(result.output.strip().split("\n")[0])
    assert row["ability"] == "privacy_risk_analysis"
    assert row["reward_model"]["style"] == "rule"
    assert "**Example 1**" in row["prompt"]


def test_eval_closed_loop(runner, tmp_path):
    # generate, detect, anonymize, then evaluate through the CLI surface
    from promptgate.anonymizer import anonymize, profiles_from_catalog
    from promptgate.dataset import default_counts, generate_synthetic_corpus
    from promptgate.detector import PatternDetector, Safety
    from promptgate.fpe import Ff3Key

    catalog = default_taxonomy()
    det = PatternDetector(catalog)
    profiles = profiles_from_catalog(catalog)
    key = Ff3Key.from_hex(KEY_HEX)
    corpus = generate_synthetic_corpus(catalog, default_counts(120, catalog), seed=17)

    records_path = tmp_path / "preds.jsonl"
    with open(records_path, "w") as fh:
        for i, sample in enumerate(corpus):
            verdict = det.detect(sample.message)
            if verdict.safety is Safety.UNSAFE:
                sanitized, _ = anonymize(sample.message, verdict, key, profiles, f"r{i}")
            else:
                sanitized = sample.message
            fh.write(
                json.dumps(
                    {
                        "ground_truth": {
                            "safety": sample.label,
                            "categories": list(sample.violated_category_codes),
                            "entities": "; ".join(sample.entities),
                        },
                        "predicted": {
                            "safety": verdict.safety.value,
                            "categories": sorted(verdict.categories),
                        },
                        "unsafe_score": 1.0 if verdict.safety is Safety.UNSAFE else 0.0,
                        "sanitized_text": sanitized,
                    }
                )
                + "\n"
            )

    result = runner.invoke(main, ["eval", "--in", str(records_path), "--csv"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output.split("safety_accuracy")[0])
    assert report["safety"]["accuracy"] == 1.0
    assert report["entity"]["privacy_hiding_rate"] == 1.0
    assert report["category"]["subset_accuracy"] == 1.0


def test_eval_without_scores_flags_omission(runner, tmp_path):
    records_path = tmp_path / "preds.jsonl"
    records_path.write_text(
        json.dumps(
            {
                "ground_truth": {"safety": "unsafe", "categories": ["T1"], "entities": "a@b.co"},
                "predicted": {"safety": "unsafe", "categories": ["T1"]},
                "sanitized_text": "hidden",
            }
        )
        + "\n"
    )
    result = runner.invoke(main, ["eval", "--in", str(records_path)])
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["safety"]["auprc"] is None
    assert "safety_auprc" in report["omitted"]


def test_eval_empty_file_fails(runner, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    result = runner.invoke(main, ["eval", "--in", str(empty)])
    assert result.exit_code == 1


def test_serve_missing_catalog_exits_2(runner, tmp_path):
    config = tmp_path / "gw.json"
    config.write_text(
        json.dumps(
            {
                "upstream": {"endpoint": "http://u.test/v1/chat/completions"},
                "catalog": str(tmp_path / "missing-catalog.json"),
            }
        )
    )
    result = runner.invoke(main, ["serve", "--config", str(config)])
    assert result.exit_code == 2


def test_serve_bad_key_exits_3(runner, tmp_path, monkeypatch):
    config = tmp_path / "gw.json"
    config.write_text(
        json.dumps(
            {
                "upstream": {"endpoint": "http://u.test/v1/chat/completions"},
                "key": {"env": "PG_MISSING_KEY"},
            }
        )
    )
    monkeypatch.delenv("PG_MISSING_KEY", raising=False)
    result = runner.invoke(main, ["serve", "--config", str(config)])
    assert result.exit_code == 3

    monkeypatch.setenv("PG_MISSING_KEY", "abcd")  # wrong length
    result = runner.invoke(main, ["serve", "--config", str(config)])
    assert result.exit_code == 3
