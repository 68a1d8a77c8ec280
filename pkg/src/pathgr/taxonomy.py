"""Category hierarchy ingestion and path linearization.

A taxonomy is held as a name-keyed graph (a category may sit under several
parents), cut off ``max_depth`` levels below the root.  Every root-to-node
chain becomes one :class:`CategoryPath`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

DELIMITER = ">"
JOINER = " > "
DEFAULT_ROOT = "Main topic classifications"
DEFAULT_MAX_DEPTH = 4


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy input."""

    def __init__(self, message: str, node: str | None = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True, order=True)
class CategoryPath:
    segments: tuple[str, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise TaxonomyError("category path must have at least one segment")
        for s in segs:
            if not s or not s.strip():
                raise TaxonomyError("empty segment in category path")
            if DELIMITER in s:
                raise TaxonomyError(f"segment contains delimiter: {s!r}", node=s)
        object.__setattr__(self, "segments", segs)

    def __len__(self) -> int:
        return len(self.segments)

    def __str__(self) -> str:
        return linearize(self)

    def is_prefix_of(self, other: "CategoryPath") -> bool:
        n = len(self.segments)
        return n <= len(other.segments) and other.segments[:n] == self.segments


def linearize(p: CategoryPath) -> str:
    return JOINER.join(p.segments)


def parse_path(s: str) -> CategoryPath:
    """Inverse of :func:`linearize`; segments are whitespace-trimmed."""
    if not s or not s.strip():
        raise TaxonomyError("empty path string")
    parts = [part.strip() for part in s.split(DELIMITER)]
    if any(not part for part in parts):
        raise TaxonomyError(f"empty segment in path {s!r}")
    return CategoryPath(tuple(parts))


def normalize_name(name: str) -> str:
    # ">" inside a name would break the linearized form
    return " ".join(name.replace(DELIMITER, "-").split())


@dataclass(frozen=True)
class Taxonomy:
    root_name: str
    edges: dict[str, tuple[str, ...]] = field(default_factory=dict)
    max_depth: int = DEFAULT_MAX_DEPTH

    def children(self, name: str) -> tuple[str, ...]:
        return self.edges.get(name, ())

    def nodes(self) -> set[str]:
        out = {self.root_name}
        for parent, kids in self.edges.items():
            out.add(parent)
            out.update(kids)
        return out

    def paths(self) -> list[CategoryPath]:
        return enumerate_paths(self, self.max_depth)


def _walk(t: Taxonomy, max_depth: int) -> Iterator[tuple[str, ...]]:
    stack: list[tuple[str, ...]] = [(c,) for c in reversed(t.children(t.root_name))]
    while stack:
        chain = stack.pop()
        yield chain
        if len(chain) < max_depth:
            for c in reversed(t.children(chain[-1])):
                stack.append(chain + (c,))


def _check_acyclic(root: str, edges: dict[str, list[str]], max_depth: int) -> None:
    # depth-limited DFS carrying the ancestor chain
    stack: list[tuple[str, tuple[str, ...]]] = [(root, ())]
    while stack:
        node, ancestors = stack.pop()
        chain = ancestors + (node,)
        if len(chain) - 1 >= max_depth:
            continue
        for c in edges.get(node, ()):
            if c in chain:
                raise TaxonomyError(f"cycle within depth limit at {c!r}", node=c)
            stack.append((c, chain))


def build_taxonomy(
    pairs: Iterable[tuple[str, str]],
    root_name: str = DEFAULT_ROOT,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Taxonomy:
    """Build a depth-limited taxonomy from (parent, child) pairs.

    Names are whitespace-normalized.  Child order follows first appearance.
    Nodes unreachable from the root within ``max_depth`` are dropped.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    edges: dict[str, list[str]] = {}
    for parent, child in pairs:
        parent, child = normalize_name(parent), normalize_name(child)
        if not parent or not child:
            raise TaxonomyError("empty category name")
        kids = edges.setdefault(parent, [])
        if child not in kids:
            kids.append(child)
    if not edges:
        raise TaxonomyError("taxonomy is empty")
    for parent, kids in edges.items():
        if parent in kids:
            raise TaxonomyError(f"cycle: self-loop at {parent!r}", node=parent)
    root_name = normalize_name(root_name)
    if root_name not in edges:
        children = {c for kids in edges.values() for c in kids}
        roots = [p for p in edges if p not in children]
        if len(roots) != 1:
            raise TaxonomyError(
                f"root {root_name!r} not found and no unique parentless node"
            )
        logger.info("root %r absent; using %r", root_name, roots[0])
        root_name = roots[0]
    _check_acyclic(root_name, edges, max_depth)

    reachable: dict[str, tuple[str, ...]] = {}
    frontier = [root_name]
    for _ in range(max_depth):
        nxt = []
        for node in frontier:
            if node in reachable or node not in edges:
                continue
            reachable[node] = tuple(edges[node])
            nxt.extend(edges[node])
        frontier = nxt
    dropped = len(edges) - len(reachable)
    if dropped:
        logger.debug("kept %d of %d parent nodes within depth", len(reachable), len(edges))
    return Taxonomy(root_name=root_name, edges=reachable, max_depth=max_depth)


def load_taxonomy(
    source: str | Path,
    root_name: str = DEFAULT_ROOT,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Taxonomy:
    """Load a taxonomy file.

    ``*.json`` files hold an array of ``{"parent": ..., "child": ...}``
    edges; anything else is read as one linearized path per line.
    """
    source = Path(source)
    text = source.read_text(encoding="utf-8")
    if not text.strip():
        raise TaxonomyError(f"{source}: empty taxonomy file")
    if source.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TaxonomyError(f"{source}: invalid JSON: {exc}") from exc
        if not isinstance(data, list):
            raise TaxonomyError(f"{source}: expected a JSON array of edges")
        pairs = []
        for i, item in enumerate(data):
            try:
                pairs.append((str(item["parent"]), str(item["child"])))
            except (KeyError, TypeError) as exc:
                raise TaxonomyError(f"{source}: edge {i} lacks parent/child") from exc
        return build_taxonomy(pairs, root_name=root_name, max_depth=max_depth)
    return taxonomy_from_paths(text.splitlines(), root_name=root_name, max_depth=max_depth)


def taxonomy_from_paths(
    lines: Iterable[str],
    root_name: str = DEFAULT_ROOT,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Taxonomy:
    root = normalize_name(root_name)
    pairs = []
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            segs = list(parse_path(line).segments)
        except TaxonomyError as exc:
            raise TaxonomyError(f"line {n}: {exc}") from exc
        segs = [normalize_name(s) for s in segs]
        if segs[0] == root and len(segs) > 1:
            segs = segs[1:]
        chain = [root] + segs[:max_depth]
        pairs.extend(zip(chain, chain[1:]))
    if not pairs:
        raise TaxonomyError("taxonomy is empty")
    return build_taxonomy(pairs, root_name=root, max_depth=max_depth)


def enumerate_paths(t: Taxonomy, max_depth: int | None = None) -> list[CategoryPath]:
    """All root-to-node paths up to ``max_depth`` segments, root excluded.

    Ordered by depth, then segment-wise lexicographically; exact duplicates
    are removed.
    """
    depth = t.max_depth if max_depth is None else max_depth
    if depth < 1:
        raise ValueError("max_depth must be >= 1")
    seen = set(_walk(t, depth))
    return [CategoryPath(c) for c in sorted(seen, key=lambda c: (len(c), c))]


def write_paths(paths: Iterable[CategoryPath], dest: str | Path) -> None:
    Path(dest).write_text("".join(linearize(p) + "\n" for p in paths), encoding="utf-8")
