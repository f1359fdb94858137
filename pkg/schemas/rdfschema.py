"""
RDF data carriers.

Terms are rdflib terms (``URIRef``, ``Literal``, ``BNode``, ``Variable``);
a triple is a plain 3-tuple of them and a triple pattern is a triple whose
positions may hold ``Variable`` terms.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

from rdflib.term import Node

Triple = Tuple[Node, Node, Node]
TriplePattern = Tuple[Node, Node, Node]


@dataclass
class BindingTable:
    """SPARQL solution sequence; ``None`` marks an explicitly unbound cell."""

    variables: list[str]
    rows: list[dict[str, Optional[Node]]] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list[Optional[Node]]:
        """Values of one variable, row order preserved."""
        return [row.get(name) for row in self.rows]

    def project(self, variables: list[str]) -> "BindingTable":
        """Keep only ``variables``, in that order."""
        return BindingTable(list(variables),
                            [{v: row.get(v) for v in variables} for row in self.rows])
