"""
API router aggregation module.

The SPARQL^ML service (loopback endpoint, KG ingestion, SPARQL^ML
queries, KGMeta) and GMLaaS are aggregated separately so a process can
serve either or both.
"""

from fastapi import APIRouter

from app.routers import gml_routes, kg_routes, kgmeta_routes, sparql_routes, sparqlml_routes
from utils.enums import ServiceRole

sparqlml_router = APIRouter()

sparqlml_router.include_router(sparql_routes.router, tags=["SPARQL endpoint"])
sparqlml_router.include_router(kg_routes.router, tags=["Knowledge graph"])
sparqlml_router.include_router(sparqlml_routes.router, tags=["SPARQL-ML"])
sparqlml_router.include_router(kgmeta_routes.router, tags=["KGMeta"])

gmlaas_router = APIRouter()

gmlaas_router.include_router(gml_routes.router, tags=["GMLaaS"])


def routers_for(role: ServiceRole) -> list[APIRouter]:
    """Routers mounted by a process of the given role."""
    if role == ServiceRole.sparqlml:
        return [sparqlml_router]
    if role == ServiceRole.gmlaas:
        return [gmlaas_router]
    return [sparqlml_router, gmlaas_router]
