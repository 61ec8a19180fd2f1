"""Catalog loading, validation, and category-block rendering."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptgate.errors import DuplicateCode, EmptyCatalog, SchemaError
from promptgate.policy import (
    Category,
    PolicyCatalog,
    PolicyRule,
    default_policies,
    default_taxonomy,
    load_catalog,
    render_category_block,
    serialize,
)

T1_BLOCK = (
    "T1: Email Address.\n"
    "Users should not include email addresses in either user's prompts or input data."
)


def test_default_taxonomy_codes():
    catalog = default_taxonomy()
    assert catalog.category_codes == ["T1", "T2", "T3", "T4", "T5", "T6"]


def test_empty_catalog_rejected():
    with pytest.raises(EmptyCatalog):
        load_catalog({"version": "1", "categories": [], "rules": []})


def test_duplicate_code_rejected():
    doc = serialize(default_taxonomy())
    doc["categories"].append(dict(doc["categories"][0]))
    with pytest.raises(DuplicateCode):
        load_catalog(doc)


def test_bad_code_pattern_rejected():
    with pytest.raises(SchemaError):
        Category(code="X1", name="n", description="d")
    with pytest.raises(SchemaError):
        PolicyRule(code="RULE1", title="t", body="b")


def test_missing_field_rejected():
    with pytest.raises(SchemaError):
        load_catalog({"categories": [{"code": "T1", "name": "Email Address"}]})


def test_render_single_category():
    catalog = PolicyCatalog(
        categories=(
            Category(
                "T1",
                "Email Address",
                "Users should not include email addresses in either user's prompts or input data.",
            ),
        )
    )
    assert render_category_block(catalog) == T1_BLOCK


def test_render_six_categories_in_order():
    text = render_category_block(default_taxonomy())
    blocks = text.split("\n\n")
    assert len(blocks) == 6
    assert [b.split(":")[0] for b in blocks] == ["T1", "T2", "T3", "T4", "T5", "T6"]
    assert blocks[0] == T1_BLOCK


def test_render_policy_rule():
    catalog = default_policies()
    text = render_category_block(catalog)
    assert text.startswith("POL01: Security Policy of Company's Secret Information.\n")
    assert "passwords and cryptographic keys" in text


def test_round_trip_serialize_load():
    for catalog in (default_taxonomy(), default_policies()):
        assert load_catalog(serialize(catalog)) == catalog


# newline-free fields: the block layout reserves newlines as structure, so
# injectivity is only claimed for single-line names and descriptions
_code_nums = st.integers(min_value=1, max_value=30)
_texts = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=25
)


@st.composite
def catalogs(draw):
    nums = draw(st.lists(_code_nums, min_size=1, max_size=5, unique=True))
    cats = tuple(
        Category(f"T{n}", draw(_texts), draw(_texts)) for n in sorted(nums)
    )
    return PolicyCatalog(categories=cats)


@settings(max_examples=120, deadline=None)
@given(catalogs(), catalogs())
def test_render_injective_on_distinct_catalogs(a, b):
    if (
        [(c.code, c.name, c.description) for c in a.categories]
        != [(c.code, c.name, c.description) for c in b.categories]
    ):
        assert render_category_block(a) != render_category_block(b)
    else:
        assert render_category_block(a) == render_category_block(b)


@settings(max_examples=80, deadline=None)
@given(catalogs())
def test_serialize_round_trip_property(catalog):
    assert load_catalog(serialize(catalog)) == catalog
