"""
Platform wiring: one object holding the configured store, backends,
artifact database, prediction cache, GMLaaS client and KGMeta governor.

The server keeps one on ``app.state.platform``; each CLI invocation builds
its own and saves the embedded store on exit.
"""

import logging
from pathlib import Path

from diskcache import Cache

from db import make_session_factory
from schemas.planschema import CostModelParams
from services.cost_model_service import load_profiles
from services.gmlaas_client_service import EmbeddedGmlaasClient, GmlaasHttpClient
from services.kgmeta_service import KGMetaGovernor
from services.rdf_store_service import StoreBackend, TripleStore
from services.sparql_client_service import SparqlEndpoint
from utils.settings import PlatformConfig

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[1]


def resolve_path(value: str) -> Path:
    """Relative paths are taken from the working directory, else the project root."""
    path = Path(value)
    if path.is_absolute() or path.exists():
        return path
    return PROJECT_ROOT / path


class Platform:
    """
    Everything a request or CLI command needs.

    Args:
        config (PlatformConfig): effective configuration.
        gmlaas: GMLaaS client replacing the configured one (tests use
            TestClient-backed or counting clients).
        data_session: requests-compatible session for the SPARQL
            endpoints (a TestClient in loopback tests).
        persist (bool): restore the embedded store from ``store_dir``.
    """

    def __init__(self, config: PlatformConfig, gmlaas=None, data_session=None, persist: bool = True):
        self.config = config
        self.persist = persist
        self.store = TripleStore()
        if persist and (self.embedded_data or self.embedded_kgmeta):
            restored = self.store.restore(resolve_path(config.store_dir))
            if restored:
                logger.info("restored %d triples from %s", restored, config.store_dir)

        if config.data_endpoint:
            self.data_backend = SparqlEndpoint(config.data_endpoint, config.data_graph,
                                               config.request_timeout, data_session)
        else:
            self.data_backend = StoreBackend(self.store, config.data_graph)
        if config.kgmeta_endpoint:
            self.kgmeta_backend = SparqlEndpoint(config.kgmeta_endpoint, config.kgmeta_graph,
                                                 config.request_timeout, data_session)
        else:
            self.kgmeta_backend = StoreBackend(self.store, config.kgmeta_graph)

        self.session_factory = make_session_factory(config.db_url)
        self.cache = Cache(str(resolve_path(config.cache_dir)))
        self.profiles = load_profiles(resolve_path(config.method_profiles_path))

        if gmlaas is not None:
            self.gmlaas = gmlaas
        elif config.gmlaas_url:
            self.gmlaas = GmlaasHttpClient(config.gmlaas_url, timeout=config.request_timeout)
        else:
            self.gmlaas = EmbeddedGmlaasClient(self.session_factory, self.profiles, self.cache)

        self.governor = KGMetaGovernor(self.kgmeta_backend, config.kgmeta_graph, self.gmlaas)
        self.cost_params = CostModelParams(c_call_ms=config.c_call_ms, c_item_ms=config.c_item_ms)
        self.package_dir = resolve_path(config.package_dir)

    @property
    def embedded_data(self) -> bool:
        return not self.config.data_endpoint

    @property
    def embedded_kgmeta(self) -> bool:
        return not self.config.kgmeta_endpoint

    def save(self) -> None:
        """Write the embedded store back to ``store_dir``."""
        if self.persist and (self.embedded_data or self.embedded_kgmeta):
            self.store.save(resolve_path(self.config.store_dir))

    def close(self) -> None:
        self.save()
        self.cache.close()


def build_platform(config: PlatformConfig, gmlaas=None, data_session=None,
                   persist: bool = True) -> Platform:
    """Construct a platform and log where each component lives."""
    platform = Platform(config, gmlaas=gmlaas, data_session=data_session, persist=persist)
    logger.info("data: %s; KGMeta: %s; GMLaaS: %s", platform.data_backend.name, platform.kgmeta_backend.name,
                config.gmlaas_url or "embedded")
    return platform
