import pytest

from hsportal.timeutil import SimClock, parse_utc
from hsportal.tokens import (
    TokenError,
    TokenMinter,
    check_token,
    decode_token,
    encode_token,
)

KEY = b"k" * 32
OTHER_KEY = b"q" * 32


def make_minter(clock=None):
    return TokenMinter(KEY, clock or SimClock(current=parse_utc("2025-01-01T00:00:00Z")))


WINDOW = (parse_utc("2024-01-01T00:00:00Z"), parse_utc("2024-06-30T23:59:59Z"))


def test_round_trip():
    text = make_minter().mint("fitsim", "health", *WINDOW)
    token = decode_token(text, KEY)
    assert token.source_app == "fitsim"
    assert token.domain == "health"
    assert (token.start, token.end) == WINDOW
    assert not token.fee_waived
    assert encode_token(token, KEY) == text


def test_tampered_payload_rejected():
    text = make_minter().mint("fitsim", "health", *WINDOW)
    payload, signature = text.split(".")
    flipped = ("A" if payload[0] != "A" else "B") + payload[1:]
    with pytest.raises(TokenError) as err:
        decode_token(f"{flipped}.{signature}", KEY)
    assert err.value.code == "invalid-token"


def test_wrong_key_rejected():
    text = make_minter().mint("fitsim", "health", *WINDOW)
    with pytest.raises(TokenError):
        decode_token(text, OTHER_KEY)


def test_vault_credential_is_not_a_token():
    with pytest.raises(TokenError):
        decode_token("cred-fitsim-secret", KEY)


def test_expiry_is_clock_driven():
    clock = SimClock(current=parse_utc("2025-01-01T00:00:00Z"))
    text = make_minter(clock).mint("fitsim", "health", *WINDOW)
    token = decode_token(text, KEY)
    clock.advance(599)
    check_token(token, clock.now(), "fitsim", "health")
    clock.advance(2)
    with pytest.raises(TokenError) as err:
        check_token(token, clock.now(), "fitsim", "health")
    assert err.value.code == "token-expired"


def test_scope_pins_silo_and_domain():
    token = decode_token(make_minter().mint("fitsim", "health", *WINDOW), KEY)
    now = parse_utc("2025-01-01T00:01:00Z")
    with pytest.raises(TokenError) as err:
        check_token(token, now, "slacksim", "health")
    assert err.value.code == "scope-violation"
    with pytest.raises(TokenError):
        check_token(token, now, "fitsim", "messages")


def test_scope_pins_window():
    token = decode_token(make_minter().mint("fitsim", "health", *WINDOW), KEY)
    now = parse_utc("2025-01-01T00:01:00Z")
    check_token(
        token, now, "fitsim", "health",
        start=parse_utc("2024-02-01T00:00:00Z"), end=parse_utc("2024-03-01T00:00:00Z"),
    )
    with pytest.raises(TokenError) as err:
        check_token(
            token, now, "fitsim", "health",
            start=parse_utc("2023-12-31T00:00:00Z"), end=parse_utc("2024-03-01T00:00:00Z"),
        )
    assert err.value.code == "scope-violation"
    with pytest.raises(TokenError):
        check_token(
            token, now, "fitsim", "health",
            start=parse_utc("2024-02-01T00:00:00Z"), end=parse_utc("2024-07-01T00:00:00Z"),
        )


def test_fee_waived_flag_round_trips():
    text = make_minter().mint("slacksim", "messages", *WINDOW, fee_waived=True)
    assert decode_token(text, KEY).fee_waived
