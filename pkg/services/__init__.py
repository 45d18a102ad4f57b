"""
Services module for run artifacts and notifications.
"""

from .artifact_service import ArtifactService, load_run_state
from .notification_service import ArtifactSummary, SlackNotifier

__all__ = ["ArtifactService", "load_run_state", "ArtifactSummary", "SlackNotifier"]
