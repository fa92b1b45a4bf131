"""Planning, fan-out, phase semantics, and failure isolation."""

import json

import pytest

from hsportal.access import fetch_records
from hsportal.dab import decode_dab
from hsportal.errors import ConsentDenied, NoDesignation
from hsportal.federation import FederatedQuery, FederationConfig
from hsportal.schema import CanonicalRecord, default_catalog, merge_sorted
from hsportal.silo.profiles import PROFILES, build_dab_doc
from hsportal.timeutil import format_utc, parse_utc

from helpers import (
    WINDOW_END,
    WINDOW_START,
    build_world,
    explain_mismatch,
    oracle_records,
    records_equal,
)

JAN_10 = parse_utc("2024-01-10T00:00:00Z")
JAN_20 = parse_utc("2024-01-20T00:00:00Z")


def health_query(world, **overrides):
    kwargs = dict(
        pseudonym=world.pseudonym,
        domain="health",
        metrics=(),
        start=JAN_10,
        end=JAN_20,
    )
    kwargs.update(overrides)
    return FederatedQuery(**kwargs)


def records_from(result: dict) -> list[CanonicalRecord]:
    return [CanonicalRecord.from_doc(doc) for doc in result["records"]]


def silo_codes(result: dict) -> dict:
    return {
        entry["source_app"]: entry.get("error", {}).get("code", "ok")
        for entry in result["per_silo"]
    }


# -- planning ---------------------------------------------------------------


def test_plan_covers_designated_credentialed_silos():
    world = build_world()
    plan = world.engine.plan("coach-app", health_query(world))
    assert [item.source_app for item in plan.items] == ["fitsim", "healthkitsim", "ourasim"]
    assert all(item.effective_phase == 3 for item in plan.items)
    assert plan.skipped == ()
    assert plan.user_id == "u-alice"


def test_plan_defaults_range_to_grant_bounds():
    world = build_world()
    plan = world.engine.plan("coach-app", health_query(world, start=None, end=None))
    assert plan.start == parse_utc(WINDOW_START)
    assert plan.end == parse_utc(WINDOW_END)


def test_unknown_pseudonym_is_denied():
    world = build_world()
    with pytest.raises(ConsentDenied):
        world.engine.plan("coach-app", health_query(world, pseudonym="f" * 32))


def test_other_apps_pseudonym_looks_unknown():
    world = build_world()
    world.consent.onboard_hsapp("rival-app", "Rival")
    foreign = world.consent.pseudonym_for("u-alice", "rival-app")
    with pytest.raises(ConsentDenied) as err:
        world.engine.plan("coach-app", health_query(world, pseudonym=foreign))
    assert "unknown" in str(err.value)


def test_never_designated_domain_is_distinct_from_denied():
    world = build_world()
    world.consent.create_user("u-bob")
    world.consent.grant_access("u-bob", "coach-app", "health")
    pseudonym = world.consent.pseudonym_for("u-bob", "coach-app")
    with pytest.raises(NoDesignation):
        world.engine.plan("coach-app", health_query(world, pseudonym=pseudonym))


def test_revoked_grant_denies_plan():
    world = build_world()
    world.consent.revoke_grant("u-alice", world.grants["health"].grant_id)
    with pytest.raises(ConsentDenied):
        world.engine.plan("coach-app", health_query(world))


def test_range_outside_grant_bounds_is_denied():
    world = build_world()
    with pytest.raises(ConsentDenied):
        world.engine.plan(
            "coach-app", health_query(world, end=parse_utc("2024-03-01T00:00:00Z"))
        )


def test_wrong_domain_designation_lands_in_diagnostics():
    world = build_world()
    world.consent.designate_sources(
        "u-alice", "health", ["fitsim", "banksim"], known_apps=lambda a: True
    )
    plan = world.engine.plan("coach-app", health_query(world))
    assert [item.source_app for item in plan.items] == ["fitsim"]
    assert silo_codes({"per_silo": list(plan.skipped), "records": []})["banksim"] == (
        "domain-mismatch"
    )


def test_undabbed_silo_lands_in_diagnostics():
    world = build_world()
    world.consent.designate_sources("u-alice", "health", ["fitsim", "ghostapp"])
    plan = world.engine.plan("coach-app", health_query(world))
    codes = {entry["source_app"]: entry["error"]["code"] for entry in plan.skipped}
    assert codes == {"ghostapp": "no-dab"}


def test_missing_credential_lands_in_diagnostics():
    world = build_world(credentials_for=("fitsim", "healthkitsim"))
    plan = world.engine.plan("coach-app", health_query(world))
    assert [item.source_app for item in plan.items] == ["fitsim", "healthkitsim"]
    codes = {entry["source_app"]: entry["error"]["code"] for entry in plan.skipped}
    assert codes == {"ourasim": "no-credential"}


def test_metric_filter_prunes_nonoffering_silos():
    world = build_world()
    plan = world.engine.plan("coach-app", health_query(world, metrics=("caloric_intake",)))
    assert [item.source_app for item in plan.items] == ["healthkitsim"]
    codes = {entry["source_app"]: entry["error"]["code"] for entry in plan.skipped}
    assert codes == {"fitsim": "no-matching-metrics", "ourasim": "no-matching-metrics"}


# -- phase-3 execution ------------------------------------------------------


def test_phase3_matches_generator_oracle():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world))
    got = records_from(result)
    expected = merge_sorted(
        r
        for app in ("fitsim", "ourasim", "healthkitsim")
        for r in oracle_records(app, 7, world.pseudonym, JAN_10, JAN_20)
    )
    assert records_equal(got, expected), explain_mismatch(got, expected)
    assert silo_codes(result) == {"fitsim": "ok", "healthkitsim": "ok", "ourasim": "ok"}


def test_merged_records_are_sorted_and_pseudonymous():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world))
    got = records_from(result)
    keys = [(r.timestamp, r.source_app, r.metric) for r in got]
    assert keys == sorted(keys)
    assert got, "window should not be empty"
    assert {r.pseudonym for r in got} == {world.pseudonym}
    assert "u-alice" not in json.dumps(result)


def test_metric_filter_applies_to_records():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, metrics=("heart_rate",)))
    got = records_from(result)
    assert {r.metric for r in got} == {"heart_rate"}
    assert {r.source_app for r in got} == {"fitsim", "ourasim"}
    assert silo_codes(result)["healthkitsim"] == "no-matching-metrics"


def test_narrower_range_is_submultiset():
    world = build_world()
    wide = records_from(world.engine.query("coach-app", health_query(world)))
    narrow = records_from(
        world.engine.query(
            "coach-app",
            health_query(world, start=parse_utc("2024-01-12T00:00:00Z"), end=JAN_20),
        )
    )
    wide_ids = {r.identity() for r in wide}
    assert all(r.identity() in wide_ids for r in narrow)
    assert len(narrow) < len(wide)


def test_fee_gated_silo_fails_without_waiver():
    world = build_world()
    result = world.engine.query(
        "coach-app", health_query(world, domain="messages", start=None, end=None)
    )
    codes = silo_codes(result)
    assert codes["slacksim"] == "fee-required"
    assert codes["whatsim"] == "ok"
    assert {r.source_app for r in records_from(result)} == {"whatsim"}


def test_fee_waiver_unlocks_the_gated_silo():
    world = build_world(fee_waivers={"slacksim": "research-grant-7"})
    result = world.engine.query(
        "coach-app", health_query(world, domain="messages", start=None, end=None)
    )
    assert silo_codes(result) == {"slacksim": "ok", "whatsim": "ok"}
    expected = merge_sorted(
        r
        for app in ("slacksim", "whatsim")
        for r in oracle_records(app, 7, world.pseudonym)
    )
    got = records_from(result)
    assert records_equal(got, expected), explain_mismatch(got, expected)


def test_down_silo_isolates_its_failure():
    baseline = build_world()
    clean = baseline.engine.query("coach-app", health_query(baseline))

    world = build_world()
    world.fleet["ourasim"].down = True
    broken = world.engine.query("coach-app", health_query(world))

    codes = silo_codes(broken)
    assert codes["ourasim"] == "silo-unreachable"
    by_app_clean = {e["source_app"]: e for e in clean["per_silo"]}
    by_app_broken = {e["source_app"]: e for e in broken["per_silo"]}
    for app in ("fitsim", "healthkitsim"):
        assert json.dumps(by_app_clean[app], sort_keys=True) == json.dumps(
            by_app_broken[app], sort_keys=True
        )
    survivors = {r.source_app for r in records_from(broken)}
    assert survivors == {"fitsim", "healthkitsim"}


# -- hand-off phases --------------------------------------------------------


def test_phase1_returns_metadata_and_token_without_silo_calls():
    world = build_world()
    for server in world.fleet.values():
        server.down = True  # phase 1 must not touch the network
    result = world.engine.query("coach-app", health_query(world, phase=1))
    assert result["records"] == []
    assert len(result["per_silo"]) == 3
    for entry in result["per_silo"]:
        assert entry["phase"] == 1
        dab = decode_dab(entry["dab"])
        assert dab.phase == 1
        assert dab.template.description
        assert entry["token"]


def test_phase1_dab_plus_token_executes_to_the_same_records():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, phase=1))
    schema = default_catalog().get("health", 1)
    collected = []
    for entry in result["per_silo"]:
        dab = decode_dab(entry["dab"])
        bindings = {"credential": entry["token"]}
        if any(p.kind == "date_start" for p in dab.template.parameters):
            bindings["date_start"] = format_utc(JAN_10)
            bindings["date_end"] = format_utc(JAN_20)
        collected.extend(
            fetch_records(world.transport, dab, bindings, schema, world.pseudonym)
        )
    phase3 = records_from(world.engine.query("coach-app", health_query(world)))
    assert records_equal(merge_sorted(collected), phase3), explain_mismatch(
        merge_sorted(collected), phase3
    )


def test_phase2_bindings_carry_token_not_vault_credential():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, phase=2))
    for entry in result["per_silo"]:
        assert entry["phase"] == 2
        assert entry["bindings"]["credential"] != f"secret-{entry['source_app']}"
        assert "secret-" not in json.dumps(entry)


def test_phase2_execution_matches_phase3():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, phase=2))
    schema = default_catalog().get("health", 1)
    collected = []
    for entry in result["per_silo"]:
        dab = decode_dab(entry["dab"])
        collected.extend(
            fetch_records(world.transport, dab, entry["bindings"], schema, world.pseudonym)
        )
    phase3 = records_from(world.engine.query("coach-app", health_query(world)))
    assert records_equal(merge_sorted(collected), phase3), explain_mismatch(
        merge_sorted(collected), phase3
    )


def test_expired_phase2_token_is_refused_by_the_silo():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, phase=2))
    entry = result["per_silo"][0]
    dab = decode_dab(entry["dab"])
    world.clock.advance(660)  # 11 min > 10 min lifetime
    schema = default_catalog().get("health", 1)
    from hsportal.access import AccessError

    with pytest.raises(AccessError) as err:
        fetch_records(world.transport, dab, entry["bindings"], schema, world.pseudonym)
    assert err.value.code == "token-expired"


def test_phase2_token_scope_cannot_be_widened():
    world = build_world()
    result = world.engine.query("coach-app", health_query(world, phase=2))
    entry = next(e for e in result["per_silo"] if e["source_app"] == "fitsim")
    dab = decode_dab(entry["dab"])
    bindings = dict(entry["bindings"])
    bindings["date_end"] = "2024-02-15T00:00:00Z"  # outside granted window
    schema = default_catalog().get("health", 1)
    from hsportal.access import AccessError

    with pytest.raises(AccessError) as err:
        fetch_records(world.transport, dab, bindings, schema, world.pseudonym)
    assert err.value.code == "scope-violation"


def test_phase2_tokens_waive_fees_when_configured():
    world = build_world(fee_waivers={"slacksim": "research-grant-7"})
    result = world.engine.query(
        "coach-app", health_query(world, domain="messages", start=None, end=None, phase=2)
    )
    entry = next(e for e in result["per_silo"] if e["source_app"] == "slacksim")
    schema = default_catalog().get("messages", 1)
    records = fetch_records(
        world.transport, decode_dab(entry["dab"]), entry["bindings"], schema, world.pseudonym
    )
    assert records


def test_server_side_execution_of_phase2_dabs_is_configurable():
    strict = FederationConfig(execute_phase2_server_side=False)
    world = build_world(config=strict)
    doc = build_dab_doc(
        PROFILES["fitsim"],
        world.fleet["fitsim"].earliest(),
        world.fleet["fitsim"].latest(),
        phase=2,
    )
    world.registry.register_dab("fitcorp", doc)
    result = world.engine.query("coach-app", health_query(world))
    by_app = {e["source_app"]: e for e in result["per_silo"]}
    assert by_app["fitsim"]["phase"] == 2  # controller never blessed portal execution
    assert by_app["ourasim"]["phase"] == 3

    lenient = build_world()
    lenient.registry.register_dab(
        "fitcorp",
        build_dab_doc(
            PROFILES["fitsim"],
            lenient.fleet["fitsim"].earliest(),
            lenient.fleet["fitsim"].latest(),
            phase=2,
        ),
    )
    result = lenient.engine.query("coach-app", health_query(lenient))
    by_app = {e["source_app"]: e for e in result["per_silo"]}
    assert by_app["fitsim"]["phase"] == 3


def test_descriptive_dab_cannot_serve_data():
    world = build_world()
    doc = build_dab_doc(
        PROFILES["fitsim"],
        world.fleet["fitsim"].earliest(),
        world.fleet["fitsim"].latest(),
        phase=1,
        description="fitsim offers a manual csv download from its website",
    )
    del doc["mapping"]
    doc["template"] = {"description": doc["template"]["description"]}
    world.registry.register_dab("fitcorp", doc)

    result = world.engine.query("coach-app", health_query(world))
    assert silo_codes(result)["fitsim"] == "unsupported-phase"
    # but the metadata phase still lists it
    listed = world.engine.query("coach-app", health_query(world, phase=1))
    entry = next(e for e in listed["per_silo"] if e["source_app"] == "fitsim")
    assert entry["phase"] == 1
    assert "manual csv download" in entry["dab"]["template"]["description"]


# -- bookkeeping ------------------------------------------------------------


def test_queries_are_audited_with_per_silo_outcomes():
    world = build_world()
    world.engine.query("coach-app", health_query(world))
    events = [e for e in world.audit.events("u-alice") if e.kind == "query_executed"]
    assert len(events) == 1
    assert events[0].actor == "coach-app"
    assert events[0].details["silos"] == {
        "fitsim": "ok",
        "healthkitsim": "ok",
        "ourasim": "ok",
    }
    resolved = [e for e in world.audit.events("u-alice") if e.kind == "credential_resolved"]
    assert len(resolved) == 3
    assert {e.details["purpose"] for e in resolved} == {events[0].details["query_id"]}


def test_denied_queries_are_audited():
    world = build_world()
    world.consent.revoke_grant("u-alice", world.grants["health"].grant_id)
    with pytest.raises(ConsentDenied):
        world.engine.query("coach-app", health_query(world))
    kinds = [e.kind for e in world.audit.events("u-alice")]
    assert kinds.count("query_denied") == 1
    assert kinds.count("query_executed") == 0


def test_query_ids_are_sequential():
    world = build_world()
    first = world.engine.query("coach-app", health_query(world))
    second = world.engine.query("coach-app", health_query(world))
    assert first["query_id"] == "q-000001"
    assert second["query_id"] == "q-000002"
