"""Campaign lifecycle: one collector engine per campaign, each driven
on its own daemon thread."""

import logging
import tempfile
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from ..collector import CampaignConfig, CollectorEngine

log = logging.getLogger("lscov.service")

RUNNING = "running"
FINISHED = "finished"
STOPPED = "stopped"
FAILED = "failed"


class UnknownCampaignError(KeyError):
    pass


@dataclass
class CampaignHandle:
    id: str
    name: str
    config: CampaignConfig
    engine: CollectorEngine
    stop_event: threading.Event
    thread: Optional[threading.Thread] = None
    state: str = RUNNING
    error: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class CampaignManager:
    """Registry of campaigns plus the threads that drive them."""

    def __init__(self, socket_dir: Optional[str] = None):
        self._campaigns: "dict[str, CampaignHandle]" = {}
        self._lock = threading.Lock()
        self._socket_dir = socket_dir or tempfile.mkdtemp(prefix="lscov-")

    @property
    def socket_dir(self) -> str:
        return self._socket_dir

    def create(self, config: CampaignConfig,
               name: Optional[str] = None) -> CampaignHandle:
        """Build the engine, allocate an endpoint for live campaigns,
        and start the drive thread. Raises ValueError on bad config.
        """
        cid = uuid.uuid4().hex[:12]
        if not config.replay and not config.endpoint:
            config.endpoint = f"unix:{self._socket_dir}/{cid}.sock"
        engine = CollectorEngine(config)
        handle = CampaignHandle(
            id=cid, name=name or cid, config=config, engine=engine,
            stop_event=threading.Event())

        def drive():
            try:
                if config.replay:
                    engine.run_replay()
                    end_state = FINISHED
                else:
                    engine.run(handle.stop_event)
                    end_state = (STOPPED if handle.stop_event.is_set()
                                 else FINISHED)
                with handle.lock:
                    handle.state = end_state
            except Exception as exc:
                log.exception("campaign %s failed", cid)
                with handle.lock:
                    handle.state = FAILED
                    handle.error = str(exc)

        thread = threading.Thread(
            target=drive, name=f"lscov-campaign-{cid}", daemon=True)
        handle.thread = thread
        with self._lock:
            self._campaigns[cid] = handle
        thread.start()
        return handle

    def get(self, cid: str) -> CampaignHandle:
        with self._lock:
            try:
                return self._campaigns[cid]
            except KeyError:
                raise UnknownCampaignError(cid) from None

    def list(self) -> "list[CampaignHandle]":
        with self._lock:
            return list(self._campaigns.values())

    def stop(self, cid: str, timeout: float = 10.0) -> CampaignHandle:
        handle = self.get(cid)
        handle.stop_event.set()
        if handle.thread is not None:
            handle.thread.join(timeout)
            if handle.thread.is_alive():
                raise TimeoutError(f"campaign {cid} did not stop in time")
        return handle

    def delete(self, cid: str) -> None:
        handle = self.get(cid)
        if handle.state == RUNNING:
            self.stop(cid)
        with self._lock:
            self._campaigns.pop(cid, None)

    def stop_all(self) -> None:
        for handle in self.list():
            if handle.state == RUNNING:
                try:
                    self.stop(handle.id)
                except TimeoutError:
                    log.error("campaign %s ignored shutdown", handle.id)
