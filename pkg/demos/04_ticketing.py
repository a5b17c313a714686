"""
Tickets over SMS
================

A 70 km/h car in a 50 zone, a registry with its owner, and a local
gateway that speaks the SMS provider's wire format.
"""

from pathlib import Path

from roadsentinel import load_config, run_stream
from roadsentinel.enforcement import GatewayConfig, TicketLog
from roadsentinel.enforcement.mock_gateway import MockGateway
from roadsentinel.engine import send_pending
from roadsentinel.sim import generate_scenario, load_scenario

here = Path(__file__).parent
spec = load_scenario(here / "data" / "speeder.json")
frames, _ = generate_scenario(spec)
out = here / "out" / "tickets"
(out / "tickets.jsonl").unlink(missing_ok=True)

# first two attempts hit a server error, the third goes through
with MockGateway(script=[500, 500]) as gw:
    config = load_config(here / "data" / "config.json", env={"SENTINEL_SMS_URL": gw.url, "SENTINEL_SMS_KEY": "demo"})
    result = run_stream(frames, config, out, sms_kwargs={"sleep": lambda s: None})
    (ticket,) = result.tickets
    print(ticket.delivery_state.value, ticket.message_id, "after", len(gw.requests), "requests")
    print(ticket.message())

    # nothing is Pending any more, so a resend is a no-op
    again = send_pending(TicketLog(out / "tickets.jsonl"), GatewayConfig(gw.url, "sandbox", "demo"))
    print("resend delivered", len(again), "tickets; gateway saw", len(gw.delivered), "delivery")

# the log keeps every state change
for t in TicketLog(out / "tickets.jsonl").records():
    print(t.ticket_id, t.delivery_state.value, t.detail)
