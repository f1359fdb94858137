"""
Database ORM models.

This module defines the SQLAlchemy tables of the GMLaaS artifact
registry: trained models with their serialized state and metrics, and
the embedding entries of node-similarity models.
"""

# pylint: disable=too-few-public-methods,not-callable
from datetime import datetime, timezone

from sqlalchemy import JSON, Column, DateTime, ForeignKey, Integer, String, Text, UniqueConstraint
from sqlalchemy.orm import relationship

from db import Base


def _utcnow():
    return datetime.now(timezone.utc)


# TRAINED MODELS TABLE
class TrainedModels(Base):
    """One trained model artifact."""
    __tablename__ = "trained_models"

    id = Column(Integer, primary_key=True, index=True)
    artifact_ref = Column(String(64), unique=True, nullable=False, index=True)
    name = Column(String(255), nullable=False)
    task_type = Column(String(32), nullable=False)
    method_name = Column(String(64), nullable=False)
    target_type = Column(Text, nullable=False)
    state = Column(JSON, nullable=False)
    metrics = Column(JSON, nullable=False)
    dataset_digest = Column(String(64), nullable=False)
    created_at = Column(DateTime(timezone=True), default=_utcnow, nullable=False)

    embeddings = relationship("EmbeddingEntries", back_populates="model", cascade="all, delete-orphan")


# EMBEDDING ENTRIES TABLE
class EmbeddingEntries(Base):
    """Node vectors of a similarity model."""
    __tablename__ = "embedding_entries"

    id = Column(Integer, primary_key=True, index=True)
    model_id = Column(Integer, ForeignKey("trained_models.id", ondelete="CASCADE"), nullable=False, index=True)
    node_iri = Column(Text, nullable=False)
    vector = Column(JSON, nullable=False)

    model = relationship("TrainedModels", back_populates="embeddings")

    __table_args__ = (
        UniqueConstraint("model_id", "node_iri", name="uix_embedding_node"),
    )
