"""Client for an Africa's Talking style bulk SMS endpoint.

Wire format: form-encoded POST with ``username``, ``to`` and ``message``;
``apiKey`` and ``Accept: application/json`` headers. The JSON reply carries a
``SMSMessageData.Recipients`` list whose ``status`` is ``"Success"`` on
delivery to the carrier.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Callable

import requests

from .tickets import MAX_MESSAGE_CHARS, DeliveryState, ViolationTicket

log = logging.getLogger(__name__)

ENV_URL = "SENTINEL_SMS_URL"
ENV_USER = "SENTINEL_SMS_USER"
ENV_KEY = "SENTINEL_SMS_KEY"
IDEMPOTENCY_HEADER = "Idempotency-Key"


class SmsError(RuntimeError):
    pass


class GatewayRejected(SmsError):
    def __init__(self, status: str):
        super().__init__(f"gateway rejected message: {status}")
        self.status = status


class TransportFailed(SmsError):
    def __init__(self, reason: str, attempts: int):
        super().__init__(f"transport failed after {attempts} attempt(s): {reason}")
        self.reason = reason
        self.attempts = attempts


@dataclass(frozen=True)
class GatewayConfig:
    url: str
    username: str
    api_key: str
    attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 10.0

    @classmethod
    def from_env(cls, env=None, **overrides) -> "GatewayConfig":
        env = os.environ if env is None else env
        values = {
            "url": env.get(ENV_URL),
            "username": env.get(ENV_USER, "sandbox"),
            "api_key": env.get(ENV_KEY, ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        if not values["url"]:
            raise SmsError(f"no gateway URL: set {ENV_URL}")
        return cls(**values)


@dataclass(frozen=True)
class SmsRequest:
    phone: str
    message: str
    idempotency_key: str

    def __post_init__(self):
        if not self.phone.strip():
            raise ValueError("recipient phone is empty")
        if not self.message or len(self.message) > MAX_MESSAGE_CHARS:
            raise ValueError(f"message must be 1..{MAX_MESSAGE_CHARS} characters")


@dataclass(frozen=True)
class SmsResult:
    message_id: str
    status: str
    cost: str
    attempts: int


def _retryable_status(code: int) -> bool:
    return code >= 500 or code == 429


def send_sms(
    req: SmsRequest,
    config: GatewayConfig,
    *,
    post: Callable[..., requests.Response] = requests.post,
    sleep: Callable[[float], None] = time.sleep,
) -> SmsResult:
    """POST one message, retrying transport failures with exponential backoff.

    Every attempt carries the same idempotency key so a gateway that saw an
    earlier attempt does not deliver twice.
    """
    headers = {
        "apiKey": config.api_key,
        "Accept": "application/json",
        IDEMPOTENCY_HEADER: req.idempotency_key,
    }
    body = {"username": config.username, "to": req.phone, "message": req.message}
    reason = "no attempt made"
    for attempt in range(1, config.attempts + 1):
        try:
            resp = post(config.url, data=body, headers=headers, timeout=config.timeout)
        except requests.RequestException as exc:
            reason = f"{type(exc).__name__}: {exc}"
        else:
            if _retryable_status(resp.status_code):
                reason = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise GatewayRejected(f"HTTP {resp.status_code}")
            else:
                return _parse_reply(resp, attempt)
        log.warning("sms attempt %d/%d for %s failed: %s", attempt, config.attempts, req.idempotency_key, reason)
        if attempt < config.attempts:
            sleep(config.backoff_base * 2 ** (attempt - 1))
    raise TransportFailed(reason, config.attempts)


def _parse_reply(resp: requests.Response, attempt: int) -> SmsResult:
    try:
        recipients = resp.json()["SMSMessageData"]["Recipients"]
        first = recipients[0]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise GatewayRejected(f"malformed reply: {exc!r}") from None
    status = str(first.get("status", ""))
    if status != "Success":
        raise GatewayRejected(status or "unknown status")
    return SmsResult(
        message_id=str(first.get("messageId", "")),
        status=status,
        cost=str(first.get("cost", "")),
        attempts=attempt,
    )


def deliver_ticket(ticket: ViolationTicket, config: GatewayConfig, **kwargs) -> ViolationTicket:
    """Send a Pending ticket to its owner and return it with the resulting state.

    Suppressed and already-Sent tickets are returned untouched.
    """
    if ticket.delivery_state is not DeliveryState.PENDING:
        return ticket
    if ticket.owner is None:
        return ticket.with_state(DeliveryState.SUPPRESSED, detail="no owner on record")
    req = SmsRequest(ticket.owner.phone, ticket.message(), ticket.ticket_id)
    try:
        result = send_sms(req, config, **kwargs)
    except GatewayRejected as exc:
        return ticket.with_state(DeliveryState.FAILED, detail=f"rejected: {exc.status}")
    except TransportFailed as exc:
        return ticket.with_state(DeliveryState.FAILED, detail=str(exc))
    return ticket.with_state(DeliveryState.SENT, message_id=result.message_id, detail=f"cost {result.cost}")
