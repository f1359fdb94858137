"""
Platform dependency utilities.

Routers receive the running ``Platform`` (and pieces of it) through these
FastAPI dependencies instead of module globals, so tests can mount apps
on temporary platforms.
"""

from fastapi import Depends, Request

from services.platform_service import Platform
from utils.errors import ConfigError


def get_platform(request: Request) -> Platform:
    """
    Retrieve the platform attached to the application.

    Args:
        request (Request): incoming request.

    Returns:
        Platform: the application's platform.

    Raises:
        ConfigError: the app was created without a platform.
    """
    platform = getattr(request.app.state, "platform", None)
    if platform is None:
        raise ConfigError("the application has no platform configured")
    return platform


def get_profiles(platform: Platform = Depends(get_platform)):
    """Method profiles of the running GMLaaS."""
    return platform.profiles


def get_cache(platform: Platform = Depends(get_platform)):
    """Prediction cache of the running GMLaaS."""
    return platform.cache
