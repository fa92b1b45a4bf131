import string

import pytest
from hypothesis import given, strategies as st

from hsportal.dab import RenderError, decode_dab, render_template

from helpers import make_dab_doc, set_in


def template_from(doc):
    return decode_dab(doc).template


BINDINGS = {
    "credential": "cred-abc",
    "date_start": "2024-01-01T00:00:00Z",
    "date_end": "2024-01-31T23:59:59Z",
}


def test_render_binds_and_encodes_url():
    template = template_from(make_dab_doc())
    request = render_template(template, BINDINGS)
    assert request.method == "GET"
    assert request.url == (
        "http://fitsim.sim/export"
        "?from=2024-01-01T00%3A00%3A00Z&to=2024-01-31T23%3A59%3A59Z"
    )
    assert request.headers == {"Authorization": "Bearer cred-abc"}
    assert request.body is None


def test_url_values_percent_encode_reserved_characters():
    doc = make_dab_doc()
    doc = set_in(
        doc,
        "/template/parameters",
        [
            {"name": "credential", "kind": "credential"},
            {"name": "date_start", "kind": "date_start"},
            {"name": "date_end", "kind": "date_end"},
            {"name": "label", "kind": "public"},
        ],
    )
    doc = set_in(
        doc,
        "/template/instruction/url_template",
        "http://fitsim.sim/export?from={date_start}&to={date_end}&label={label}",
    )
    request = render_template(template_from(doc), {**BINDINGS, "label": "a b&c"})
    assert request.url.endswith("label=a%20b%26c")


def test_header_substitution_is_verbatim():
    doc = set_in(
        make_dab_doc(), "/template/instruction/headers", {"X-Auth": "key {credential}/x"}
    )
    request = render_template(template_from(doc), BINDINGS)
    assert request.headers["X-Auth"] == "key cred-abc/x"


def test_body_substitution_is_single_pass():
    doc = make_dab_doc()
    doc = set_in(doc, "/template/instruction/method", "POST")
    doc = set_in(
        doc,
        "/template/parameters",
        [
            {"name": "credential", "kind": "credential"},
            {"name": "date_start", "kind": "date_start"},
            {"name": "date_end", "kind": "date_end"},
            {"name": "note", "kind": "public"},
        ],
    )
    doc = set_in(doc, "/template/instruction/body_template", '{"note": "{note}"}')
    template = template_from(doc)
    # a bound value that itself looks like a placeholder stays inert
    request = render_template(template, {**BINDINGS, "note": "{credential}"})
    assert request.body == '{"note": "{credential}"}'
    assert "cred-abc" not in request.body


def test_missing_binding():
    template = template_from(make_dab_doc())
    with pytest.raises(RenderError) as err:
        render_template(template, {"credential": "c", "date_start": BINDINGS["date_start"]})
    assert err.value.code == "missing-binding"


def test_extra_binding():
    template = template_from(make_dab_doc())
    with pytest.raises(RenderError) as err:
        render_template(template, {**BINDINGS, "surprise": "x"})
    assert err.value.code == "extra-binding"


def test_date_binding_must_be_utc_instant():
    template = template_from(make_dab_doc())
    with pytest.raises(RenderError) as err:
        render_template(template, {**BINDINGS, "date_start": "last tuesday"})
    assert err.value.code == "type-mismatch"


def test_non_string_binding_rejected():
    template = template_from(make_dab_doc())
    with pytest.raises(RenderError) as err:
        render_template(template, {**BINDINGS, "credential": 7})
    assert err.value.code == "type-mismatch"


def test_descriptive_template_cannot_render():
    doc = make_dab_doc(phase=1, mapping=None)
    doc["template"] = {"description": "ask support for an export"}
    with pytest.raises(RenderError) as err:
        render_template(template_from(doc), {})
    assert err.value.code == "not-executable"


@given(
    credential=st.text(
        alphabet=string.ascii_letters + string.digits + " &?#/{}%=+", min_size=1, max_size=40
    )
)
def test_render_is_total_for_any_credential_value(credential):
    template = template_from(
        set_in(
            make_dab_doc(),
            "/template/instruction/url_template",
            "http://fitsim.sim/export?from={date_start}&to={date_end}&tok={credential}",
        )
    )
    request = render_template(template, {**BINDINGS, "credential": credential})
    # no declared placeholder survives in the URL
    for name in ("credential", "date_start", "date_end"):
        assert "{" + name + "}" not in request.url
    assert request.url.startswith("http://fitsim.sim/export?")
