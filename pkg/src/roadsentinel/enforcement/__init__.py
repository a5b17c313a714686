from .registry import NotFound, Registry, RegistryEntry, RegistryError, canonical_plate, lookup_owner
from .sms import (
    GatewayConfig,
    GatewayRejected,
    SmsError,
    SmsRequest,
    SmsResult,
    TransportFailed,
    deliver_ticket,
    send_sms,
)
from .tickets import (
    DEFAULT_COOLDOWN_S,
    DEFAULT_MARGIN_KMH,
    MAX_MESSAGE_CHARS,
    DeliveryState,
    TicketIssuer,
    TicketLog,
    ViolationTicket,
    detect_violation,
    make_ticket,
    ticket_id_for,
)

__all__ = [
    "DEFAULT_COOLDOWN_S",
    "DEFAULT_MARGIN_KMH",
    "DeliveryState",
    "MAX_MESSAGE_CHARS",
    "GatewayConfig",
    "GatewayRejected",
    "NotFound",
    "Registry",
    "RegistryEntry",
    "RegistryError",
    "SmsError",
    "SmsRequest",
    "SmsResult",
    "TicketIssuer",
    "TicketLog",
    "TransportFailed",
    "ViolationTicket",
    "canonical_plate",
    "deliver_ticket",
    "detect_violation",
    "lookup_owner",
    "make_ticket",
    "send_sms",
    "ticket_id_for",
]
