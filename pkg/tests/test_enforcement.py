import hashlib
import math

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from roadsentinel.enforcement import (
    MAX_MESSAGE_CHARS,
    DeliveryState,
    GatewayConfig,
    GatewayRejected,
    NotFound,
    Registry,
    RegistryEntry,
    RegistryError,
    SmsRequest,
    TicketIssuer,
    TicketLog,
    TransportFailed,
    deliver_ticket,
    detect_violation,
    lookup_owner,
    make_ticket,
    send_sms,
)
from roadsentinel.enforcement.mock_gateway import MockGateway
from roadsentinel.plates import normalize_plate

T0 = 1_700_000_000_000.0  # ms
MINUTE = 60_000.0
NO_SLEEP = {"sleep": lambda s: None}


@pytest.mark.parametrize("speed, margin, expected", [(49, 0, False), (61, 10, True), (60, 10, False), (50.01, 0, True)])
def test_detect_violation(calibration, speed, margin, expected):
    assert calibration.speed_limit == 50
    assert detect_violation(speed, calibration, margin) is expected


def test_detect_violation_rejects_negative(calibration):
    with pytest.raises(ValueError):
        detect_violation(-1, calibration)
    with pytest.raises(ValueError):
        detect_violation(math.nan, calibration)


# --- registry -----------------------------------------------------------------


def test_lookup_owner(registry_csv):
    reg = Registry.load(registry_csv)
    entry = lookup_owner("ABC123A", reg)
    assert entry.owner_name == "User A"
    assert entry.vehicle_details == "Vehicle X, white Toyota Premio"
    assert lookup_owner(normalize_plate("abc123a"), reg) == entry
    with pytest.raises(NotFound):
        lookup_owner("ZZZ999Z", reg)
    assert reg.get("ZZZ999Z") is None


def test_registry_round_trip(tmp_path, registry_csv):
    reg = Registry.load(registry_csv)
    reg.save(tmp_path / "copy.csv")
    again = Registry.load(tmp_path / "copy.csv")
    assert sorted(e.to_dict().items() for e in reg) == sorted(e.to_dict().items() for e in again)


fields = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=20)


@given(st.lists(st.tuples(st.from_regex(r"[A-Z]{3}[0-9]{3}[A-Z]", fullmatch=True), fields, fields, fields),
                max_size=6, unique_by=lambda t: t[0]))
def test_registry_round_trip_arbitrary_text(tmp_path_factory, rows):
    entries = [RegistryEntry(p, name, "+2567" + str(i).zfill(8), email, details) for i, (p, name, email, details) in enumerate(rows)]
    path = tmp_path_factory.mktemp("reg") / "r.csv"
    Registry(entries).save(path)
    assert sorted(e.to_dict().items() for e in Registry.load(path)) == sorted(e.to_dict().items() for e in entries)


def test_registry_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("plate,name\nABC123A,x\n")
    with pytest.raises(RegistryError):
        Registry.load(bad)
    dup = tmp_path / "dup.csv"
    dup.write_text("plate,owner_name,phone,email,vehicle_details\nABC123A,a,1,,\nabc123a,b,2,,\n")
    with pytest.raises(RegistryError):
        Registry.load(dup)
    nophone = tmp_path / "nophone.csv"
    nophone.write_text("plate,owner_name,phone,email,vehicle_details\nABC123A,a,,,\n")
    with pytest.raises(RegistryError):
        Registry.load(nophone)


def test_registry_reload(tmp_path, registry_csv):
    reg = Registry.load(registry_csv)
    with open(registry_csv, "a") as fh:
        fh.write("UAX001K,New Owner,+256700000009,,\n")
    assert reg.get("UAX001K") is None
    reg.reload()
    assert reg.get("UAX001K").owner_name == "New Owner"


# --- tickets ------------------------------------------------------------------


def owner():
    return RegistryEntry("ABC123A", "User A", "+256700000001")


def ticket(cal, plate="ABC123A", ts=T0, track=1, speed=72.0, **kw):
    return make_ticket(plate=plate, track_id=track, estimated_speed=speed, cal=cal, timestamp_ms=ts, owner=kw.pop("owner", owner()), **kw)


def test_ticket_id_is_pure_and_hash_based(calibration):
    a, b = ticket(calibration), ticket(calibration)
    assert a == b and a.ticket_id == b.ticket_id
    bucket = math.floor(T0 / 1000 / 600)
    expected = hashlib.sha256(f"ABC123A|{calibration.camera_id}|{bucket}".encode()).hexdigest()[:16].upper()
    assert a.ticket_id == expected


def test_cooldown_suppresses_repeat(calibration):
    issuer = TicketIssuer()
    start = math.floor(T0 / 600_000) * 600_000.0  # start of a bucket
    first = issuer.issue(ticket(calibration, ts=start))
    second = issuer.issue(ticket(calibration, ts=start + 3 * MINUTE, track=2))
    assert first.delivery_state is DeliveryState.PENDING
    assert second.delivery_state is DeliveryState.SUPPRESSED and second.duplicate
    third = issuer.issue(ticket(calibration, ts=start + 15 * MINUTE, track=3))
    assert third.delivery_state is DeliveryState.PENDING
    assert third.ticket_id != first.ticket_id


def test_distinct_plates_same_second(calibration):
    assert ticket(calibration, "ABC123A").ticket_id != ticket(calibration, "UBA123C").ticket_id


def test_ticket_without_owner_is_suppressed(calibration):
    t = ticket(calibration, owner=None)
    assert t.delivery_state is DeliveryState.SUPPRESSED and not t.duplicate


def test_message_fits_and_truncates_location(calibration):
    t = ticket(calibration)
    msg = t.message()
    assert msg.startswith(f"TRAFFIC TICKET {t.ticket_id}: Vehicle ABC123A recorded at 72 km/h in a 50 km/h zone at ")
    assert calibration.location in msg and msg.endswith("2023-11-14T22:13:20Z. ")
    long = t.with_state(t.delivery_state, location="X" * 1000)
    assert len(long.message()) == MAX_MESSAGE_CHARS


def test_ticket_log_fold(tmp_path, calibration):
    log = TicketLog(tmp_path / "tickets.jsonl")
    t = ticket(calibration)
    log.append(t)
    log.append(t.with_state(DeliveryState.SUPPRESSED, duplicate=True))
    log.append(t.with_state(DeliveryState.SENT, message_id="m1"))
    assert len(list(log.records())) == 3
    (cur,) = log.current().values()
    assert cur.delivery_state is DeliveryState.SENT and cur.message_id == "m1"
    assert cur.owner == owner()
    assert t.ticket_id in log.issuer().seen


# --- sms ------------------------------------------------------------------------


def config_for(gw, **kw):
    return GatewayConfig(url=gw.url, username="sandbox", api_key="test-key", **kw)


def test_send_success(gateway):
    req = SmsRequest("+256700000001", "hello", "K1")
    result = send_sms(req, config_for(gateway))
    assert result.status == "Success" and result.attempts == 1
    assert result.message_id.startswith("ATXid_")
    (sent,) = gateway.requests
    assert sent.form == {"username": "sandbox", "to": "+256700000001", "message": "hello"}
    assert sent.headers["apiKey"] == "test-key"


def test_deliver_ticket_sent(gateway, calibration):
    out = deliver_ticket(ticket(calibration), config_for(gateway))
    assert out.delivery_state is DeliveryState.SENT
    assert out.message_id.startswith("ATXid_")
    assert gateway.delivered[0]["to"] == "+256700000001"


def test_retry_after_server_errors(calibration):
    sleeps = []
    with MockGateway(script=[500, 500, "Success"]) as gw:
        out = deliver_ticket(ticket(calibration), config_for(gw, backoff_base=0.5), sleep=sleeps.append)
        assert out.delivery_state is DeliveryState.SENT
        assert len(gw.requests) == 3
        assert {r.headers["Idempotency-Key"] for r in gw.requests} == {out.ticket_id}
    assert sleeps == [0.5, 1.0]


def test_invalid_phone_fails_without_retry(calibration):
    with MockGateway(script=["InvalidPhoneNumber"]) as gw:
        out = deliver_ticket(ticket(calibration), config_for(gw), **NO_SLEEP)
        assert out.delivery_state is DeliveryState.FAILED
        assert "InvalidPhoneNumber" in out.detail
        assert len(gw.requests) == 1 and gw.delivered == []


def test_client_error_not_retried(calibration):
    with MockGateway(script=[400]) as gw:
        with pytest.raises(GatewayRejected):
            send_sms(SmsRequest("+1", "x", "k"), config_for(gw), **NO_SLEEP)
        assert len(gw.requests) == 1


def test_exhausted_retries_fail(calibration):
    with MockGateway(default=503) as gw:
        with pytest.raises(TransportFailed) as info:
            send_sms(SmsRequest("+1", "x", "k"), config_for(gw, attempts=4), **NO_SLEEP)
        assert info.value.attempts == 4 and len(gw.requests) == 4


def test_unreachable_gateway_fails(calibration):
    cfg = GatewayConfig(url="http://127.0.0.1:9/version1/messaging", username="u", api_key="k", attempts=2, timeout=0.5)
    out = deliver_ticket(ticket(calibration), cfg, **NO_SLEEP)
    assert out.delivery_state is DeliveryState.FAILED


def test_transport_exception_is_retried():
    calls = []

    def flaky(url, **kw):
        calls.append(url)
        if len(calls) == 1:
            raise requests.ConnectionError("reset")
        resp = requests.Response()
        resp.status_code = 201
        resp._content = b'{"SMSMessageData": {"Recipients": [{"status": "Success", "messageId": "m", "cost": "0"}]}}'
        return resp

    cfg = GatewayConfig(url="http://x", username="u", api_key="k")
    assert send_sms(SmsRequest("+1", "x", "k"), cfg, post=flaky, **NO_SLEEP).attempts == 2


@pytest.mark.parametrize("state", [DeliveryState.SUPPRESSED, DeliveryState.SENT, DeliveryState.FAILED])
def test_non_pending_never_transmitted(gateway, calibration, state):
    t = ticket(calibration).with_state(state)
    assert deliver_ticket(t, config_for(gateway)) == t
    assert gateway.requests == []


def test_replayed_idempotency_key_not_delivered_twice(gateway, calibration):
    t = ticket(calibration)
    first = deliver_ticket(t, config_for(gateway))
    second = deliver_ticket(t, config_for(gateway))
    assert first.message_id == second.message_id
    assert len(gateway.delivered) == 1


def test_gateway_config_from_env():
    env = {"SENTINEL_SMS_URL": "http://gw", "SENTINEL_SMS_KEY": "secret"}
    cfg = GatewayConfig.from_env(env, attempts=5)
    assert (cfg.url, cfg.username, cfg.api_key, cfg.attempts) == ("http://gw", "sandbox", "secret", 5)


def test_sms_request_validation():
    with pytest.raises(ValueError):
        SmsRequest(" ", "x", "k")
    with pytest.raises(ValueError):
        SmsRequest("+1", "x" * (MAX_MESSAGE_CHARS + 1), "k")
