"""
FastAPI application entry point.

``create_app`` builds the app for a service role on a platform (built
from the configuration when not given), configures CORS, registers the
domain error handler and mounts the role's routers. ``app`` is the
all-in-one server for ``uvicorn main:app``.
"""

import logging
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app import route
from services.platform_service import Platform, build_platform
from utils.enums import ServiceRole
from utils.errors import KGNetError
from utils.logging_config import configure_logging
from utils.settings import PlatformConfig, load_config

logger = logging.getLogger(__name__)


def create_app(role: ServiceRole = ServiceRole.all, platform: Optional[Platform] = None,
               config: Optional[PlatformConfig] = None) -> FastAPI:
    """
    Build the application.

    Args:
        role (ServiceRole): ``all``, ``sparqlml`` or ``gmlaas``.
        platform (Platform): platform to serve; built lazily from
            ``config`` at startup when omitted.
        config (PlatformConfig): configuration; loaded from file and
            environment when omitted.

    Returns:
        FastAPI: the configured application.
    """
    role = ServiceRole(role)

    @asynccontextmanager
    async def lifespan(application: FastAPI):
        owned = application.state.platform is None
        if owned:
            effective = config or load_config()
            configure_logging(effective.log_level)
            application.state.platform = build_platform(effective)
        logger.info("serving role %s", role.value)
        yield
        if owned:
            application.state.platform.close()

    application = FastAPI(title="KGNet", lifespan=lifespan)
    application.state.platform = platform
    application.state.role = role

    application.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @application.exception_handler(KGNetError)
    async def kgnet_error_handler(_request: Request, exc: KGNetError):
        level = logging.ERROR if exc.status_code >= 500 else logging.INFO
        logger.log(level, "%s: %s", type(exc).__name__, exc.message)
        content = jsonable_encoder({"detail": exc.detail}, custom_encoder={BaseException: str})
        return JSONResponse(status_code=exc.status_code, content=content)

    for router in route.routers_for(role):
        application.include_router(router)

    @application.get("/")
    def greet():
        """
        Welcome endpoint.

        Returns:
            str: Welcome message indicating the API is running.
        """
        return "Welcome to KGNet!"

    @application.get("/health")
    def health():
        """Liveness check with the served role."""
        return {"status": "ok", "role": role.value}

    return application


app = create_app()
