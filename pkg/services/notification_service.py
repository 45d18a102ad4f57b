"""
Slack run summaries.

A finished run is posted to an incoming webhook as Block Kit sections:
status fields, the artifacts written, then the skipped points and failures
(first five of each). Enable with SLACK_ENABLED=true and SLACK_WEBHOOK_URL in
.env, or pass --slack.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import httpx

logger = logging.getLogger(__name__)

LIST_PREVIEW = 5
ARTIFACT_PREVIEW = 10


@dataclass
class ArtifactSummary:
    path: str
    rows: int


class SlackNotifier:
    """Webhook client for run summaries. Delivery problems are logged, never raised."""

    STATUS_EMOJI = {
        "ok": ":large_green_circle:",
        "skipped": ":white_circle:",
        "failed": ":red_circle:",
    }

    def __init__(self, webhook_url: str):
        if not webhook_url:
            raise ValueError("SLACK_WEBHOOK_URL is not set")
        self.webhook_url = webhook_url

    def send_run_summary(
        self,
        subcommand: str,
        elapsed: float,
        artifacts: List[ArtifactSummary],
        skipped: List[str],
        failures: List[str],
    ) -> bool:
        """Post the summary; True when Slack accepted it."""
        status = "failed" if failures else "skipped" if skipped else "ok"
        headline = f"{subcommand} run complete"
        blocks = [
            {"type": "header", "text": {"type": "plain_text", "text": f":triangular_ruler: {headline}", "emoji": True}},
            {
                "type": "section",
                "fields": [
                    _mrkdwn(f"*Status:* {self.STATUS_EMOJI[status]} {status}"),
                    _mrkdwn(f"*Elapsed:* {elapsed:.1f}s"),
                    _mrkdwn(f"*Artifacts:* {len(artifacts)}"),
                    _mrkdwn(f"*Skipped points:* {len(skipped)}"),
                ],
            },
        ]
        if artifacts:
            listing = "\n".join(f"`{a.path}` ({a.rows} rows)" for a in artifacts[:ARTIFACT_PREVIEW])
            blocks += _titled_section("Artifacts", listing)
        if skipped:
            blocks += _titled_section("Skipped (outside convergence domain)", _bullets(skipped))
        if failures:
            blocks += _titled_section(":x: Failures", _bullets(failures))

        return self._deliver({"text": f"{headline}: {status}", "blocks": blocks})

    def _deliver(self, payload: Dict[str, Any]) -> bool:
        try:
            response = httpx.post(self.webhook_url, json=payload, timeout=10)
            response.raise_for_status()
        except httpx.HTTPStatusError as e:
            logger.warning("Slack rejected the run summary (HTTP %s): %s", e.response.status_code, e.response.text)
            return False
        except httpx.HTTPError as e:
            logger.warning("Could not reach Slack: %s", e)
            return False
        logger.info("Run summary posted to Slack")
        return True


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _mrkdwn(text: str) -> Dict[str, str]:
    return {"type": "mrkdwn", "text": text}


def _titled_section(title: str, body: str) -> List[Dict[str, Any]]:
    return [{"type": "divider"}, {"type": "section", "text": _mrkdwn(f"*{title}*\n{body}")}]


def _bullets(items: List[str]) -> str:
    text = "\n".join(f"• {item}" for item in items[:LIST_PREVIEW])
    if len(items) > LIST_PREVIEW:
        text += f"\n_...and {len(items) - LIST_PREVIEW} more_"
    return text
