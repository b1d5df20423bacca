"""HTTP control plane for collectors.

The service starts and supervises campaign collectors; the data plane
(the 21-byte frames) still flows over each campaign's own datagram
endpoint, because measurement ingest has no business being HTTP.
"""

from .app import app, create_app
from .manager import CampaignManager

__all__ = ["app", "create_app", "CampaignManager"]
