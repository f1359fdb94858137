"""
Database configuration and session management.

This module creates SQLAlchemy engines and session factories for the
GMLaaS artifact registry and provides the database dependency FastAPI
routes use to acquire and release sessions.
"""

from fastapi import Request
from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()


def create_db_engine(url: str):
    """Engine for ``url``; SQLite connections may be shared across threads."""
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def make_session_factory(url: str) -> sessionmaker:
    """
    Create the tables if needed and return a session factory.

    Args:
        url (str): SQLAlchemy database URL.

    Returns:
        sessionmaker: factory bound to a fresh engine.
    """
    import models.models  # noqa: F401  # pylint: disable=import-outside-toplevel,unused-import

    engine = create_db_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db(request: Request):
    """
    Provide a database session dependency.

    Yields:
        Session: SQLAlchemy database session of the running platform.

    Ensures the session is properly closed after use.
    """
    db = request.app.state.platform.session_factory()
    try:
        yield db
    finally:
        db.close()
